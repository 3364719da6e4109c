#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "pointkan/common.hpp"

namespace pointkan {

/// A set of N 3-D points with an optional class label.
struct PointCloud {
  std::vector<std::array<double, 3>> points;
  int label = -1;

  std::size_t size() const { return points.size(); }
};

/// G sampled centers plus a G x K neighbor table. Rows of `neighbor_dists`
/// are nondecreasing Euclidean distances; `neighbor_indices` follows the
/// same ordering (this positional contract is what the depthwise
/// convolution along the neighbor axis relies on).
struct Grouping {
  std::size_t group_count = 0;  // G
  std::size_t group_size = 0;   // K
  std::vector<std::size_t> center_indices;    // G
  std::vector<std::size_t> neighbor_indices;  // G*K, row-major
  std::vector<double> neighbor_dists;         // G*K, row-major

  std::size_t neighbor(std::size_t g, std::size_t k) const {
    return neighbor_indices[g * group_size + k];
  }
  double dist(std::size_t g, std::size_t k) const {
    return neighbor_dists[g * group_size + k];
  }
};

/// Subtracts the centroid and rescales so the farthest point sits on the
/// unit sphere. An all-identical cloud maps to all zeros. Throws
/// std::invalid_argument on empty or non-finite input.
PointCloud centroid_normalize(const PointCloud& cloud);

/// Greedy farthest point sampling. The seed is the point farthest from the
/// centroid; every later pick maximizes the minimum distance to the points
/// already chosen. Ties break on the lexicographically smallest coordinate
/// triple, then the smallest index, so the selection is deterministic and
/// (up to exact duplicates) permutation invariant.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t count);

/// K nearest neighbors for each center, sorted ascending by distance. The
/// center itself is always the first neighbor (distance 0); remaining ties
/// break lexicographically, then by index.
Grouping knn_group(const PointCloud& cloud, const std::vector<std::size_t>& centers,
                   std::size_t k);

}  // namespace pointkan
