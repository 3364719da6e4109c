#include "pointkan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pointkan {

namespace {

double dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

bool lex_less(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  if (a[0] != b[0]) return a[0] < b[0];
  if (a[1] != b[1]) return a[1] < b[1];
  return a[2] < b[2];
}

}  // namespace

PointCloud centroid_normalize(const PointCloud& cloud) {
  check_arg(cloud.size() >= 1, "centroid_normalize: empty cloud");
  for (const auto& p : cloud.points)
    for (double c : p)
      check_arg(std::isfinite(c), "centroid_normalize: non-finite coordinate");

  const std::size_t n = cloud.size();
  std::array<double, 3> centroid{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points) {
    centroid[0] += p[0];
    centroid[1] += p[1];
    centroid[2] += p[2];
  }
  for (double& c : centroid) c /= static_cast<double>(n);

  PointCloud out;
  out.label = cloud.label;
  out.points.resize(n);
  double max_norm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) out.points[i][d] = cloud.points[i][d] - centroid[d];
    max_norm2 = std::max(max_norm2, dist2(out.points[i], {0.0, 0.0, 0.0}));
  }
  const double scale = std::sqrt(max_norm2);
  if (scale == 0.0) return out;  // degenerate: all points identical
  for (auto& p : out.points)
    for (double& c : p) c /= scale;
  return out;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t count) {
  const std::size_t n = cloud.size();
  check_arg(count >= 1 && count <= n,
            "farthest_point_sample: count must be in [1, N], got " + std::to_string(count) +
                " for N=" + std::to_string(n));

  std::array<double, 3> centroid{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points) {
    centroid[0] += p[0];
    centroid[1] += p[1];
    centroid[2] += p[2];
  }
  for (double& c : centroid) c /= static_cast<double>(n);

  // Candidate `a` beats `b` when it is strictly farther, or equally far and
  // lexicographically smaller (then lower-indexed).
  auto better = [&](double da, std::size_t ia, double db, std::size_t ib) {
    if (da != db) return da > db;
    if (lex_less(cloud.points[ia], cloud.points[ib])) return true;
    if (lex_less(cloud.points[ib], cloud.points[ia])) return false;
    return ia < ib;
  };

  std::vector<std::size_t> picked;
  picked.reserve(count);

  std::size_t seed = 0;
  double seed_d = dist2(cloud.points[0], centroid);
  for (std::size_t i = 1; i < n; ++i) {
    const double d = dist2(cloud.points[i], centroid);
    if (better(d, i, seed_d, seed)) {
      seed = i;
      seed_d = d;
    }
  }
  picked.push_back(seed);

  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[seed] = 1;
  std::size_t last = seed;

  while (picked.size() < count) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_d[i] = std::min(min_d[i], dist2(cloud.points[i], cloud.points[last]));
      if (best == n || better(min_d[i], i, best_d, best)) {
        best = i;
        best_d = min_d[i];
      }
    }
    picked.push_back(best);
    taken[best] = 1;
    last = best;
  }
  return picked;
}

Grouping knn_group(const PointCloud& cloud, const std::vector<std::size_t>& centers,
                   std::size_t k) {
  const std::size_t n = cloud.size();
  check_arg(k >= 1 && k <= n, "knn_group: K must be in [1, N], got " + std::to_string(k) +
                                  " for N=" + std::to_string(n));
  for (std::size_t c : centers)
    check_arg(c < n, "knn_group: center index " + std::to_string(c) + " out of range");

  Grouping out;
  out.group_count = centers.size();
  out.group_size = k;
  out.center_indices = centers;
  out.neighbor_indices.resize(centers.size() * k);
  out.neighbor_dists.resize(centers.size() * k);

  std::vector<std::size_t> order(n);
  std::vector<double> d2(n);
  for (std::size_t g = 0; g < centers.size(); ++g) {
    const std::size_t c = centers[g];
    for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(cloud.points[i], cloud.points[c]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
      if (d2[a] != d2[b]) return d2[a] < d2[b];
      if (a == c) return true;  // the center is always the first neighbor
      if (b == c) return false;
      if (lex_less(cloud.points[a], cloud.points[b])) return true;
      if (lex_less(cloud.points[b], cloud.points[a])) return false;
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end(), before);
    for (std::size_t j = 0; j < k; ++j) {
      out.neighbor_indices[g * k + j] = order[j];
      out.neighbor_dists[g * k + j] = std::sqrt(d2[order[j]]);
    }
  }
  return out;
}

}  // namespace pointkan
