#include <algorithm>
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "oracles.hpp"
#include "specaug/augment.hpp"
#include "specaug/errors.hpp"
#include "specaug/evaluate.hpp"
#include "specaug/rng.hpp"

using namespace specaug;

namespace {

DenseMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  DenseMatrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

// Standard AP over every example ranked by score (no truncation).
double untruncated_ap(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<std::size_t>>& truth,
                      std::size_t label) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a][label] > scores[b][label] || (scores[a][label] == scores[b][label] && a < b);
  });
  double hits = 0, sum = 0, positives = 0;
  for (const auto& t : truth) positives += oracle::contains(t, label);
  for (std::size_t r = 0; r < order.size(); ++r)
    if (oracle::contains(truth[order[r]], label)) {
      hits += 1;
      sum += hits / static_cast<double>(r + 1);
    }
  return sum / positives;
}

EvalReport report(std::string id, double map, std::uint64_t madds, std::size_t k = 50, std::size_t n = 100) {
  MapResult m;
  m.map_at_k = map;
  m.k_eval = k;
  return make_report(std::move(id), m, madds, n);
}

}  // namespace

TEST_CASE("map_at_top_k: perfect single-label ranking") {
  const std::vector<std::vector<std::size_t>> truth{{0}, {1}, {2}, {1}};
  const DenseMatrix s = to_matrix({{0.9, 0.1, 0.0}, {0.2, 0.8, 0.1}, {0.1, 0.3, 0.7}, {0.0, 0.6, 0.5}});
  const auto r = map_at_top_k(s, truth, 1);
  CHECK(r.map_at_k == 1.0);
  CHECK(r.excluded_classes.empty());
}

TEST_CASE("map_at_top_k: hand-built four-example case") {
  const std::vector<std::vector<double>> scores{
      {0.9, 0.2, 0.4}, {0.8, 0.7, 0.1}, {0.3, 0.6, 0.5}, {0.7, 0.1, 0.2}};
  const std::vector<std::vector<std::size_t>> truth{{0}, {1, 2}, {1, 2}, {2}};
  // top-2 detections: x0 {0,2}, x1 {0,1}, x2 {1,2}, x3 {0,2}
  // class 0: ranking x0, x1, x3; one positive (x0) at rank 1 -> AP 1
  // class 1: ranking x1, x2; both positive -> AP 1
  // class 2: ranking x2 (0.5), x0 (0.4), x3 (0.2); hits at ranks 1 and 3; x1 is a
  //          positive never detected -> AP (1 + 2/3) / 3 = 5/9
  const auto r = map_at_top_k(to_matrix(scores), truth, 2);
  CHECK(*r.per_class_ap[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*r.per_class_ap[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*r.per_class_ap[2] == doctest::Approx(5.0 / 9.0).epsilon(1e-15));
  CHECK(r.map_at_k == doctest::Approx(23.0 / 27.0).epsilon(1e-15));
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(*r.per_class_ap[c] - oracle::brute_ap(scores, truth, c, 2)) < 1e-15);
}

TEST_CASE("map_at_top_k: constant scores follow the example-index tie order") {
  const std::size_t n = 7, c = 4;
  const std::vector<std::vector<double>> scores(n, std::vector<double>(c, 0.5));
  const std::vector<std::vector<std::size_t>> truth{{1}, {0, 1}, {3}, {1}, {0}, {2}, {1, 3}};
  const auto r = map_at_top_k(to_matrix(scores), truth, 2);
  // only labels 0 and 1 are ever detected; 2 and 3 have positives but no detections
  CHECK(*r.per_class_ap[2] == 0.0);
  CHECK(*r.per_class_ap[3] == 0.0);
  // label 1: positives at examples 0, 1, 3, 6 -> precisions 1, 1, 3/4, 4/7
  CHECK(*r.per_class_ap[1] == doctest::Approx((1.0 + 1.0 + 0.75 + 4.0 / 7.0) / 4.0).epsilon(1e-15));
  for (std::size_t k = 0; k < c; ++k) CHECK(*r.per_class_ap[k] == doctest::Approx(oracle::brute_ap(scores, truth, k, 2)));
  // when every detecting example is positive the AP is the positive rate, 1
  const std::vector<std::vector<std::size_t>> all_one(n, std::vector<std::size_t>{1});
  CHECK(*map_at_top_k(to_matrix(scores), all_one, 2).per_class_ap[1] == 1.0);
}

TEST_CASE("map_at_top_k: random cases against the brute-force oracle; mean of defined APs") {
  Rng rng(71);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 3 + rng.index(10), c = 2 + rng.index(6);
    std::vector<std::vector<double>> scores(n, std::vector<double>(c));
    for (auto& row : scores)
      for (double& v : row) v = std::round(rng.uniform() * 8) / 8;  // coarse values force ties
    std::vector<std::vector<std::size_t>> truth(n);
    for (auto& tl : truth) {
      std::set<std::size_t> s;
      const std::size_t k = 1 + rng.index(2);
      while (s.size() < std::min(k, c)) s.insert(rng.index(c));
      tl.assign(s.begin(), s.end());
    }
    const std::size_t k_eval = 1 + rng.index(c);
    const auto r = map_at_top_k(to_matrix(scores), truth, k_eval);
    double sum = 0, defined = 0;
    for (std::size_t label = 0; label < c; ++label) {
      bool any = false;
      for (const auto& tl : truth) any |= oracle::contains(tl, label);
      CHECK(r.per_class_ap[label].has_value() == any);
      if (!any) {
        CHECK(std::find(r.excluded_classes.begin(), r.excluded_classes.end(), label) != r.excluded_classes.end());
        continue;
      }
      const double ap = *r.per_class_ap[label];
      CHECK(ap >= 0.0);
      CHECK(ap <= 1.0);
      CHECK(std::abs(ap - oracle::brute_ap(scores, truth, label, k_eval)) < 1e-12);
      sum += ap;
      defined += 1;
    }
    CHECK(std::abs(r.map_at_k - sum / defined) < 1e-12);
  }
}

TEST_CASE("map_at_top_k: k_eval = C reduces to untruncated AP on single-label data") {
  Rng rng(72);
  const std::size_t n = 12, c = 5;
  std::vector<std::vector<double>> scores(n, std::vector<double>(c));
  std::vector<std::vector<std::size_t>> truth(n);
  for (std::size_t x = 0; x < n; ++x) {
    for (double& v : scores[x]) v = rng.uniform();
    truth[x] = {x % c};
  }
  const auto r = map_at_top_k(to_matrix(scores), truth, c);
  for (std::size_t label = 0; label < c; ++label)
    CHECK(std::abs(*r.per_class_ap[label] - untruncated_ap(scores, truth, label)) < 1e-12);
}

TEST_CASE("map_at_top_k: argument errors") {
  const DenseMatrix s(2, 3, 0.5);
  CHECK_THROWS_AS(map_at_top_k(s, std::vector<std::vector<std::size_t>>{}, 1), InvalidArgument);
  CHECK_THROWS_AS(map_at_top_k(s, std::vector<std::vector<std::size_t>>{{0}, {1}}, 4), InvalidArgument);
  CHECK_THROWS_AS(map_at_top_k(s, std::vector<std::vector<std::size_t>>{{0}, {1}}, 0), InvalidArgument);
  CHECK_THROWS_AS(map_at_top_k(s, std::vector<std::vector<std::size_t>>{{0}}, 1), InvalidArgument);
  CHECK(default_k_eval(60) == 50);
  CHECK(default_k_eval(20) == 20);
}

TEST_CASE("count_multiply_adds: single layer and desk architectures in closed form") {
  const NetworkParams one = init_network(std::vector<LayerSpec>{{10, 20, Activation::logistic}}, 1);
  CHECK(count_multiply_adds(one) == 200);

  const std::vector<std::size_t> trunk{1024, 256}, gen{128, 128};
  const auto base = init_network(classifier_specs(32, trunk, gen, 60), 1, 2);
  const std::uint64_t base_cost = 32 * 1024 + 1024 * 256 + 256 * 128 + 128 * 128 + 128 * 60;
  CHECK(count_multiply_adds(base) == base_cost);

  std::vector<std::vector<std::size_t>> clusters(6);
  for (std::size_t l = 0; l < 60; ++l) clusters[l % 6].push_back(l);
  const LabelPartition p{60, clusters, Provenance::spectral};
  const auto aug = augment(base, {p, {8, 8}, 3, AttachPoint::trunk});
  const std::uint64_t head_cost = 6 * (256 * 8 + 8 * 8 + 8 * 10);
  CHECK(count_multiply_adds(aug) == base_cost + head_cost);
}

TEST_CASE("compare: self comparison, row order, ratios, mismatches") {
  const auto a = report("base", 0.5, 1000);
  const std::vector<EvalReport> self{a, a};
  const auto t = compare(self);
  CHECK(t.rows[1].overhead_ratio == 1.0);
  CHECK(t.rows[1].map_delta == 0.0);
  CHECK(render_text(t).find("1.000x") != std::string::npos);

  const std::vector<EvalReport> triple{report("base", 0.5, 351744), report("spectral", 0.56, 364896),
                                       report("randomized", 0.55, 364896)};
  const auto t3 = compare(triple);
  REQUIRE(t3.rows.size() == 3);
  CHECK(t3.rows[0].model_id == "base");
  CHECK(t3.rows[1].model_id == "spectral");
  CHECK(t3.rows[2].model_id == "randomized");
  // 364896 / 351744 = 1.03739..., rendered to three decimals
  CHECK(std::abs(t3.rows[1].overhead_ratio - 364896.0 / 351744.0) < 1e-15);
  CHECK(render_text(t3).find("1.037x") != std::string::npos);
  CHECK(t3.rows[1].map_delta == doctest::Approx(0.06));

  const std::vector<EvalReport> mixed_k{report("a", 0.5, 10, 50), report("b", 0.5, 10, 20)};
  CHECK_THROWS_AS(compare(mixed_k), InvalidArgument);
  const std::vector<EvalReport> mixed_n{report("a", 0.5, 10, 50, 100), report("b", 0.5, 10, 50, 99)};
  CHECK_THROWS_AS(compare(mixed_n), InvalidArgument);
  CHECK_THROWS_AS(compare(std::vector<EvalReport>{a}), InvalidArgument);
  CHECK_THROWS_AS(report("zero", 0.5, 0), InvalidArgument);
}

TEST_CASE("comparison csv parses back to the same values") {
  const std::vector<EvalReport> triple{report("base", 0.123456789012345678, 351744),
                                       report("spectral", 1.0 / 3.0, 364896), report("randomized", 0.3, 364896)};
  const auto t = compare(triple);
  const auto rows = parse_csv(render_csv(t));
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rows[i].model_id == t.rows[i].model_id);
    CHECK(rows[i].map_at_k == t.rows[i].map_at_k);
    CHECK(rows[i].multiply_adds == t.rows[i].multiply_adds);
    CHECK(rows[i].overhead_ratio == t.rows[i].overhead_ratio);
    CHECK(rows[i].map_delta == t.rows[i].map_delta);
  }
  CHECK(render_csv(t).rfind("model,map_at_k,multiply_adds,overhead_ratio\n", 0) == 0);
}
