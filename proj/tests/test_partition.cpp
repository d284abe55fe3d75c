#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "specaug/errors.hpp"
#include "specaug/partition.hpp"
#include "specaug/rng.hpp"
#include "specaug/textio.hpp"
#include "tmpdir.hpp"

using namespace specaug;

namespace {

LabelPartition from_ids(const std::vector<std::size_t>& ids) {
  const std::size_t k = *std::max_element(ids.begin(), ids.end()) + 1;
  return partition_from_assignments(ids, k, Provenance::planted);
}

std::vector<std::size_t> round_robin(std::size_t c, std::size_t g) {
  std::vector<std::size_t> ids(c);
  for (std::size_t i = 0; i < c; ++i) ids[i] = i % g;
  return ids;
}

}  // namespace

TEST_CASE("validate_partition rejects overlaps, gaps, empties") {
  CHECK_NOTHROW(validate_partition({3, {{0, 2}, {1}}, Provenance::spectral}));
  CHECK_THROWS_AS(validate_partition({3, {{0, 1}, {1, 2}}, Provenance::spectral}), ValidationError);
  CHECK_THROWS_AS(validate_partition({3, {{0, 1}}, Provenance::spectral}), ValidationError);
  CHECK_THROWS_AS(validate_partition({3, {{0, 1, 2}, {}}, Provenance::spectral}), ValidationError);
  CHECK_THROWS_AS(validate_partition({3, {{0, 1, 3}}, Provenance::spectral}), ValidationError);
}

TEST_CASE("spectral_cluster: two all-ones blocks") {
  DenseMatrix b(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) b(i, j) = (i / 2 == j / 2) ? 1.0 : 0.0;
  const auto p = spectral_cluster(b, {2, 0, 1e-12});
  CHECK(p.clusters == std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}});
  CHECK(p.provenance == Provenance::spectral);
}

TEST_CASE("spectral_cluster: G = 1 is one cluster") {
  Rng rng(51);
  const auto b = oracle::block_affinity(round_robin(9, 3), 0.2, rng);
  const auto p = spectral_cluster(b, {1, 0, 1e-12});
  REQUIRE(p.num_clusters() == 1);
  CHECK(p.clusters[0].size() == 9);
}

TEST_CASE("spectral_cluster: noisy planted blocks are recovered") {
  Rng rng(52);
  const auto planted = round_robin(12, 3);
  const auto b = oracle::block_affinity(planted, 0.02, rng);
  const auto p = spectral_cluster(b, {3, 7, 1e-12});
  CHECK(adjusted_rand_index(p, from_ids(planted)) == 1.0);
}

TEST_CASE("spectral_cluster: exact components are found for every k-means seed") {
  Rng rng(53);
  const auto planted = round_robin(15, 5);
  const auto b = oracle::block_affinity(planted, 0.0, rng);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto p = spectral_cluster(b, {5, seed, 1e-12});
    CHECK_NOTHROW(validate_partition(p));
    CHECK(adjusted_rand_index(p, from_ids(planted)) == 1.0);
  }
}

TEST_CASE("spectral_cluster: deterministic and ordered by smallest label") {
  Rng rng(54);
  const auto b = oracle::block_affinity(round_robin(18, 6), 0.05, rng);
  const auto p = spectral_cluster(b, {6, 3, 1e-12});
  CHECK(p == spectral_cluster(b, {6, 3, 1e-12}));
  for (std::size_t h = 1; h < p.num_clusters(); ++h) CHECK(p.clusters[h - 1][0] < p.clusters[h][0]);
}

TEST_CASE("spectral_cluster: isolated labels survive through degree_epsilon") {
  DenseMatrix b(5, 5);
  b(0, 1) = b(1, 0) = 1.0;
  b(2, 3) = b(3, 2) = 1.0;  // label 4 has no similarity to anything
  const auto p = spectral_cluster(b, {3, 0, 1e-12});
  CHECK_NOTHROW(validate_partition(p));
  CHECK(p.num_clusters() == 3);
}

TEST_CASE("spectral_cluster: argument errors") {
  DenseMatrix ok(4, 4, 0.5);
  CHECK_THROWS_AS(spectral_cluster(ok, {5, 0, 1e-12}), InvalidArgument);
  CHECK_THROWS_AS(spectral_cluster(ok, {0, 0, 1e-12}), InvalidArgument);
  DenseMatrix neg = ok;
  neg(0, 1) = neg(1, 0) = -0.1;
  CHECK_THROWS_AS(spectral_cluster(neg, {2, 0, 1e-12}), InvalidArgument);
  try {
    spectral_cluster(DenseMatrix::identity(4), {2, 0, 1e-12});
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("degree_epsilon") != std::string::npos);
  }
}

TEST_CASE("randomized_control: sizes preserved, provenance set, valid partition") {
  const LabelPartition p{6, {{0, 1, 2}, {3, 4}, {5}}, Provenance::spectral};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = randomized_control(p, seed);
    CHECK(r.cluster_sizes() == std::vector<std::size_t>{3, 2, 1});
    CHECK(r.provenance == Provenance::randomized);
    CHECK_NOTHROW(validate_partition(r));
  }
  CHECK(randomized_control(p, 9) == randomized_control(p, 9));
}

TEST_CASE("randomized_control: empirical role frequencies match the exact permutation distribution") {
  const LabelPartition p{6, {{0, 1, 2}, {3, 4}, {5}}, Provenance::spectral};
  // Exact distribution: apply all 6! relabelings and count where each label lands.
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<double>> exact(6, std::vector<double>(3, 0.0));
  double count = 0;
  do {
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t l : p.clusters[h]) exact[perm[l]][h] += 1.0;
    count += 1;
  } while (std::next_permutation(perm.begin(), perm.end()));

  std::vector<std::vector<double>> seen(6, std::vector<double>(3, 0.0));
  const int trials = 1000;
  for (int s = 0; s < trials; ++s) {
    const auto r = randomized_control(p, 1000 + s);
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t l : r.clusters[h]) seen[l][h] += 1.0;
  }
  for (std::size_t l = 0; l < 6; ++l)
    for (std::size_t h = 0; h < 3; ++h) CHECK(std::abs(seen[l][h] / trials - exact[l][h] / count) < 0.05);
}

TEST_CASE("adjusted_rand_index: identity, hand value, relabeling, pair-count oracle") {
  const auto a = from_ids({0, 0, 1, 1, 2, 2});
  CHECK(adjusted_rand_index(a, a) == 1.0);

  const auto singletons = from_ids({0, 1, 2, 3});
  const auto one = from_ids({0, 0, 0, 0});
  CHECK(adjusted_rand_index(singletons, one) == doctest::Approx(0.0));

  CHECK(adjusted_rand_index(from_ids({0, 0, 1, 1, 2, 2}), from_ids({2, 2, 0, 0, 1, 1})) == 1.0);

  // {0,0,0,1,1,1} vs {0,0,1,1,2,2}: contingency rows (2,1,0), (0,1,2);
  // sum C(n_ij,2) = 2, row pairs 6, column pairs 3, C(6,2) = 15, expected 6*3/15 = 1.2
  // ARI = (2 - 1.2) / ((6 + 3) / 2 - 1.2) = 0.8 / 3.3
  CHECK(adjusted_rand_index(from_ids({0, 0, 0, 1, 1, 1}), from_ids({0, 0, 1, 1, 2, 2})) ==
        doctest::Approx(0.8 / 3.3).epsilon(1e-12));

  Rng rng(55);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> x(10), y(10);
    for (auto& v : x) v = rng.index(3);
    for (auto& v : y) v = rng.index(4);
    // compact ids so every cluster index is used
    auto compact = [](std::vector<std::size_t> ids) {
      std::vector<std::size_t> seen;
      for (auto& v : ids) {
        auto it = std::find(seen.begin(), seen.end(), v);
        if (it == seen.end()) {
          seen.push_back(v);
          v = seen.size() - 1;
        } else {
          v = static_cast<std::size_t>(it - seen.begin());
        }
      }
      return ids;
    };
    x = compact(x);
    y = compact(y);
    CHECK(adjusted_rand_index(from_ids(x), from_ids(y)) == doctest::Approx(oracle::pair_count_ari(x, y)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(adjusted_rand_index(from_ids({0, 1}), from_ids({0, 1, 1})), InvalidArgument);
}

TEST_CASE("partition files round-trip; malformed files fail with a line number") {
  TempDir dir("partition");
  const LabelPartition p{7, {{0, 3, 6}, {1, 4}, {2, 5}}, Provenance::randomized};
  save_partition(dir.path() / "p.txt", p);
  CHECK(load_partition(dir.path() / "p.txt") == p);

  std::stringstream bad("7 2 spectral\n0 1 2 3\n4 5 x\n");
  textio::LineReader reader(bad, "bad");
  try {
    read_partition(reader);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }

  std::stringstream overlapping("3 2 spectral\n0 1\n1 2\n");
  textio::LineReader reader2(overlapping, "overlap");
  CHECK_THROWS_AS(read_partition(reader2), ValidationError);
  CHECK(provenance_from_string("planted") == Provenance::planted);
}
