#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "pointkan/geometry.hpp"

using namespace pointkan;

namespace {

std::array<double, 3> centroid_of(const PointCloud& c) {
  std::array<double, 3> m{0, 0, 0};
  for (const auto& p : c.points)
    for (int d = 0; d < 3; ++d) m[d] += p[d];
  for (int d = 0; d < 3; ++d) m[d] /= static_cast<double>(c.size());
  return m;
}

double max_norm(const PointCloud& c) {
  double best = 0.0;
  for (const auto& p : c.points)
    best = std::max(best, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  return best;
}

std::multiset<std::array<double, 3>> coord_multiset(const PointCloud& c,
                                                    const std::vector<std::size_t>& idx) {
  std::multiset<std::array<double, 3>> s;
  for (std::size_t i : idx) s.insert(c.points[i]);
  return s;
}

}  // namespace

TEST_CASE("centroid_normalize: single point collapses to origin") {
  PointCloud c;
  c.points = {{5.0, 5.0, 5.0}};
  auto out = centroid_normalize(c);
  CHECK(out.points[0] == std::array<double, 3>{0.0, 0.0, 0.0});
}

TEST_CASE("centroid_normalize: already normalized pair is unchanged") {
  PointCloud c;
  c.points = {{-1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
  auto out = centroid_normalize(c);
  CHECK(out.points[0] == std::array<double, 3>{-1.0, 0.0, 0.0});
  CHECK(out.points[1] == std::array<double, 3>{1.0, 0.0, 0.0});
}

TEST_CASE("centroid_normalize: axis pair centers and scales") {
  PointCloud c;
  c.points = {{0.0, 0.0, 0.0}, {0.0, 0.0, 4.0}};
  auto out = centroid_normalize(c);
  CHECK(out.points[0][2] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(out.points[1][2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(out.points[0][0] == 0.0);
  CHECK(out.points[1][1] == 0.0);
}

TEST_CASE("centroid_normalize: postconditions and idempotence on random clouds") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto c = oracle::random_cloud(33, seed, 7.0);
    auto out = centroid_normalize(c);
    auto m = centroid_of(out);
    for (int d = 0; d < 3; ++d) CHECK(std::abs(m[d]) <= 1e-12);
    CHECK(max_norm(out) == doctest::Approx(1.0).epsilon(1e-12));

    auto twice = centroid_normalize(out);
    for (std::size_t i = 0; i < out.size(); ++i)
      for (int d = 0; d < 3; ++d)
        CHECK(std::abs(twice.points[i][d] - out.points[i][d]) <= 1e-12);
  }
}

TEST_CASE("centroid_normalize: degenerate identical cloud maps to zeros") {
  PointCloud c;
  c.points = {{2.0, 3.0, 4.0}, {2.0, 3.0, 4.0}, {2.0, 3.0, 4.0}};
  auto out = centroid_normalize(c);
  for (const auto& p : out.points)
    for (double v : p) CHECK(v == 0.0);
}

TEST_CASE("centroid_normalize: rejects non-finite input") {
  PointCloud c;
  c.points = {{0.0, 0.0, std::numeric_limits<double>::quiet_NaN()}};
  CHECK_THROWS_AS(centroid_normalize(c), std::invalid_argument);
  c.points = {{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  CHECK_THROWS_AS(centroid_normalize(c), std::invalid_argument);
  c.points.clear();
  CHECK_THROWS_AS(centroid_normalize(c), std::invalid_argument);
}

TEST_CASE("farthest_point_sample: G=N returns a permutation") {
  auto c = oracle::random_cloud(17, 3);
  auto idx = farthest_point_sample(c, 17);
  std::set<std::size_t> uniq(idx.begin(), idx.end());
  CHECK(uniq.size() == 17);
}

TEST_CASE("farthest_point_sample: unit square corners pick lexicographic seed") {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  auto idx = farthest_point_sample(c, 2);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] == 0);  // all corners equidistant from the centroid
  CHECK(idx[1] == 3);  // (1,1,0) is farthest from (0,0,0)
}

TEST_CASE("farthest_point_sample: matches the brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = oracle::random_cloud(8 + seed % 11, 100 + seed);
    const std::size_t g = 1 + seed % c.size();
    CHECK(farthest_point_sample(c, g) == oracle::fps_bruteforce(c, g));
  }
}

TEST_CASE("farthest_point_sample: greedy optimality at every step") {
  auto c = oracle::random_cloud(40, 77);
  auto idx = farthest_point_sample(c, 12);
  std::vector<char> in(c.size(), 0);
  in[idx[0]] = 1;
  for (std::size_t step = 1; step < idx.size(); ++step) {
    auto mind = [&](std::size_t p) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < c.size(); ++i)
        if (in[i]) best = std::min(best, oracle::euclid2(c.points[p], c.points[i]));
      return best;
    };
    const double chosen = mind(idx[step]);
    for (std::size_t p = 0; p < c.size(); ++p)
      if (!in[p]) CHECK(chosen >= mind(p));
    in[idx[step]] = 1;
  }
}

TEST_CASE("farthest_point_sample: permutation invariance of selected points") {
  auto c = oracle::random_cloud(48, 5);
  auto idx = farthest_point_sample(c, 16);

  std::mt19937_64 rng(9);
  std::vector<std::size_t> perm(c.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  PointCloud shuffled;
  shuffled.points.resize(c.size());
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.points[perm[i]] = c.points[i];

  auto idx2 = farthest_point_sample(shuffled, 16);
  CHECK(coord_multiset(c, idx) == coord_multiset(shuffled, idx2));
  // Same geometric order, not just the same set.
  for (std::size_t j = 0; j < idx.size(); ++j)
    CHECK(c.points[idx[j]] == shuffled.points[idx2[j]]);
}

TEST_CASE("farthest_point_sample: argument validation") {
  auto c = oracle::random_cloud(4, 1);
  CHECK_THROWS_AS(farthest_point_sample(c, 0), std::invalid_argument);
  CHECK_THROWS_AS(farthest_point_sample(c, 5), std::invalid_argument);
}

TEST_CASE("knn_group: K=1 returns the center itself") {
  auto c = oracle::random_cloud(9, 2);
  auto g = knn_group(c, {4}, 1);
  CHECK(g.neighbor(0, 0) == 4);
  CHECK(g.dist(0, 0) == 0.0);
}

TEST_CASE("knn_group: K=N rows are distance-sorted permutations") {
  auto c = oracle::random_cloud(12, 8);
  auto g = knn_group(c, {0, 5, 11}, 12);
  for (std::size_t row = 0; row < 3; ++row) {
    std::set<std::size_t> uniq;
    for (std::size_t j = 0; j < 12; ++j) {
      uniq.insert(g.neighbor(row, j));
      if (j > 0) CHECK(g.dist(row, j) >= g.dist(row, j - 1));
    }
    CHECK(uniq.size() == 12);
  }
}

TEST_CASE("knn_group: matches the brute-force sort oracle") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto c = oracle::random_cloud(16, 300 + seed);
    std::vector<std::size_t> centers = {0, 3, 7, 15};
    auto g = knn_group(c, centers, 5);
    auto ref = oracle::knn_bruteforce(c, centers, 5);
    for (std::size_t row = 0; row < centers.size(); ++row)
      for (std::size_t j = 0; j < 5; ++j) CHECK(g.neighbor(row, j) == ref[row][j]);
  }
}

TEST_CASE("knn_group: neighbor point sets are permutation invariant") {
  auto c = oracle::random_cloud(24, 41);
  auto centers = farthest_point_sample(c, 6);
  auto g = knn_group(c, centers, 7);

  std::mt19937_64 rng(13);
  std::vector<std::size_t> perm(c.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  PointCloud shuffled;
  shuffled.points.resize(c.size());
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.points[perm[i]] = c.points[i];
  auto centers2 = farthest_point_sample(shuffled, 6);
  auto g2 = knn_group(shuffled, centers2, 7);

  for (std::size_t row = 0; row < 6; ++row) {
    std::vector<std::size_t> a, b;
    for (std::size_t j = 0; j < 7; ++j) {
      a.push_back(g.neighbor(row, j));
      b.push_back(g2.neighbor(row, j));
    }
    CHECK(coord_multiset(c, a) == coord_multiset(shuffled, b));
  }
}

TEST_CASE("knn_group: argument validation") {
  auto c = oracle::random_cloud(6, 1);
  CHECK_THROWS_AS(knn_group(c, {0}, 7), std::invalid_argument);
  CHECK_THROWS_AS(knn_group(c, {0}, 0), std::invalid_argument);
  CHECK_THROWS_AS(knn_group(c, {6}, 2), std::invalid_argument);
}
