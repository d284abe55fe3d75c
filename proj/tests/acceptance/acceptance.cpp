// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "specaug/augment.hpp"
#include "specaug/confusion.hpp"
#include "specaug/evaluate.hpp"
#include "specaug/linalg.hpp"
#include "specaug/partition.hpp"
#include "specaug/pipeline.hpp"
#include "specaug/rng.hpp"
#include "tmpdir.hpp"

using namespace specaug;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::vector<std::size_t>> labels_of(const Dataset& d) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& e : d.examples) out.push_back(e.labels);
  return out;
}

LabelPartition round_robin_partition(std::size_t c, std::size_t g) {
  std::vector<std::vector<std::size_t>> clusters(g);
  for (std::size_t l = 0; l < c; ++l) clusters[l % g].push_back(l);
  return {c, clusters, Provenance::spectral};
}

Outcome gradient_correctness() {
  const auto start = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  std::size_t checked = 0;

  struct Shape {
    std::size_t dim, c;
    std::vector<std::size_t> trunk, gen;
  };
  const std::vector<Shape> base_shapes{{4, 3, {}, {5}}, {5, 6, {7}, {4}}, {3, 5, {6, 5}, {4, 3}}};
  for (const auto& s : base_shapes) {
    const Dataset d = oracle::random_dataset(6, s.dim, s.c, rng);
    auto net = init_network(classifier_specs(s.dim, s.trunk, s.gen, s.c), rng.next_u64(), s.trunk.size());
    gradcheck::jitter_biases(net, rng);
    const auto r = gradcheck::check(net, feature_matrix(d), labels_of(d));
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
  }

  bool masked_zero = true;
  for (AttachPoint attach : {AttachPoint::trunk, AttachPoint::after_generalist}) {
    const std::vector<std::size_t> trunk{6}, gen{5};
    const auto base = init_network(classifier_specs(4, trunk, gen, 6), rng.next_u64(), 1);
    auto aug = augment(base, {round_robin_partition(6, 3), {3, 2}, rng.next_u64(), attach});
    gradcheck::jitter_biases(aug, rng);
    const Dataset d = oracle::random_dataset(6, 4, 6, rng);
    const auto x = feature_matrix(d);
    const auto r = gradcheck::check(aug, x, labels_of(d));
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
    masked_zero = masked_zero && gradcheck::masked_gradients_zero(aug, x, labels_of(d));
  }
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << "5 shapes (2 augmented), " << checked << " parameters, max relative error " << worst << ", "
         << elapsed << " s";
  return {worst < 1e-5 && masked_zero && elapsed < 10.0, detail.str()};
}

Outcome confusion_oracle() {
  const auto start = Clock::now();
  Rng rng(202);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t c = 2 + rng.index(9);
    const std::size_t n = 1 + rng.index(25);
    const std::size_t dim = 1 + rng.index(5);
    const std::size_t k = 1 + rng.index(c);
    const Dataset d = oracle::random_dataset(n, dim, c, rng);
    const std::vector<std::size_t> trunk{1 + rng.index(6)}, gen{1 + rng.index(6)};
    const auto net = init_network(classifier_specs(dim, trunk, gen, c), rng.next_u64(), 1);
    const auto p = top_k(net, d, k);
    std::vector<std::vector<std::size_t>> detected;
    for (std::size_t x = 0; x < n; ++x) {
      std::vector<double> scores(forward(net, d.examples[x].features).scores);
      detected.push_back(oracle::sort_top_k(scores, k));
    }
    worst = std::max(worst, max_abs_diff(confusion_matrix(p, d).a, oracle::brute_matrix(detected, labels_of(d), c)));
    worst = std::max(worst, max_abs_diff(codetection_matrix(p).a, oracle::brute_matrix(detected, detected, c)));
  }
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << "20 triples, max abs error " << worst << ", " << elapsed << " s";
  return {worst < 1e-12 && elapsed < 5.0, detail.str()};
}

Outcome spectral_recovery() {
  const auto start = Clock::now();
  Rng rng(303);
  const std::vector<std::size_t> groups{2, 3, 6};
  int perfect = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t g = groups[t % 3];
    const std::size_t c = g * (2 + rng.index(5));
    std::vector<std::size_t> block_of(c);
    for (std::size_t i = 0; i < c; ++i) block_of[i] = i % g;
    for (std::size_t i = c; i > 1; --i) std::swap(block_of[i - 1], block_of[rng.index(i)]);
    const auto b = oracle::block_affinity(block_of, 0.05, rng);
    const auto p = spectral_cluster(b, {g, rng.next_u64(), 1e-12});
    perfect += adjusted_rand_index(p, partition_from_assignments(block_of, g, Provenance::planted)) == 1.0;
  }
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << perfect << "/100 trials with ARI = 1, " << elapsed << " s";
  return {perfect >= 95 && elapsed < 30.0, detail.str()};
}

std::vector<double> flat_values(const std::vector<Layer>& layers) {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weights.entries().begin(), l.weights.entries().end());
    out.insert(out.end(), l.biases.begin(), l.biases.end());
  }
  return out;
}

bool same_bytes(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Outcome freeze_and_mask() {
  SyntheticSpec spec;
  spec.num_labels = 12;
  spec.groups = 3;
  spec.feature_dim = 8;
  spec.examples_per_label = 30;
  spec.seed = 404;
  const Dataset d = generate_synthetic(spec);
  const std::vector<std::size_t> trunk{16}, gen{12};
  const auto base = sgd_train(init_network(classifier_specs(8, trunk, gen, 12), 405, 1), d, {0.05, 0.9, 16, 2, 406}).params;

  bool ok = true;
  std::size_t masked_entries = 0;
  for (AttachPoint attach : {AttachPoint::trunk, AttachPoint::after_generalist}) {
    const auto before = augment(base, {round_robin_partition(12, 3), {6, 6}, 407, attach});
    const auto trunk_bytes = flat_values(before.trunk);
    const auto gen_bytes = flat_values(before.generalist);
    const auto after = train_augmented(before, d, {0.05, 0.9, 16, 5, 408}).network;
    ok = ok && same_bytes(trunk_bytes, flat_values(after.trunk)) && same_bytes(gen_bytes, flat_values(after.generalist));
    ok = ok && !(after.classifier.weights == before.classifier.weights);
    for (std::size_t o = 0; o < after.num_labels(); ++o)
      for (std::size_t i = 0; i < after.classifier.spec.input_dim; ++i)
        if (!after.mask(o, i)) {
          ++masked_entries;
          const double v = after.classifier.weights(o, i);
          ok = ok && v == 0.0 && !std::signbit(v);
        }
  }
  std::ostringstream detail;
  detail << "5 epochs at both attach points, frozen bytes identical and " << masked_entries
         << " masked entries exactly 0.0: " << (ok ? "yes" : "no");
  return {ok, detail.str()};
}

Outcome multiply_adds() {
  const PipelineConfig cfg;  // desk architecture: D 32, trunk 1024-256, generalist 128-128, heads 8-8
  const std::size_t dim = 32, c = 60;
  const auto base = init_network(classifier_specs(dim, cfg.trunk_dims, cfg.generalist_dims, c), 1, cfg.trunk_dims.size());
  std::vector<std::size_t> widths{dim};
  widths.insert(widths.end(), cfg.trunk_dims.begin(), cfg.trunk_dims.end());
  widths.insert(widths.end(), cfg.generalist_dims.begin(), cfg.generalist_dims.end());
  widths.push_back(c);
  const std::uint64_t base_closed = oracle::chain_cost(widths);

  // uneven clusters so the ragged classifier term matters
  const std::vector<std::size_t> sizes{5, 7, 9, 11, 13, 15};
  std::vector<std::vector<std::size_t>> clusters;
  std::size_t next = 0;
  for (std::size_t s : sizes) {
    clusters.emplace_back();
    for (std::size_t i = 0; i < s; ++i) clusters.back().push_back(next++);
  }
  const auto aug = augment(base, {{c, clusters, Provenance::spectral}, cfg.head_dims, 2, cfg.attach});
  std::uint64_t aug_closed = base_closed;
  for (std::size_t s : sizes) {
    std::vector<std::size_t> head{cfg.trunk_dims.back()};
    head.insert(head.end(), cfg.head_dims.begin(), cfg.head_dims.end());
    aug_closed += oracle::chain_cost(head) + s * cfg.head_dims.back();
  }
  const std::uint64_t base_count = count_multiply_adds(base);
  const std::uint64_t aug_count = count_multiply_adds(aug);
  const double ratio = static_cast<double>(aug_count) / static_cast<double>(base_count);
  char buf[256];
  std::snprintf(buf, sizeof buf, "base %llu (closed form %llu), augmented %llu (closed form %llu), overhead %.3fx",
                static_cast<unsigned long long>(base_count), static_cast<unsigned long long>(base_closed),
                static_cast<unsigned long long>(aug_count), static_cast<unsigned long long>(aug_closed), ratio);
  const double rounded = std::round(ratio * 1000.0) / 1000.0;
  return {base_count == base_closed && aug_count == aug_closed && rounded >= 1.01 && rounded <= 1.06, buf};
}

struct SeedRun {
  std::uint64_t seed;
  std::map<std::string, std::vector<ComparisonRow>> rows;  // mode -> base, spectral, randomized
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<SeedRun> headline_runs(double& elapsed) {
  const auto start = Clock::now();
  TempDir dir("acceptance-headline");
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : {1, 2, 3}) {
    PipelineConfig cfg;  // C 60, G 6, confusability 0.7, D 32, 200 examples per label
    cfg.master_seed = seed;
    cfg.out_dir = dir.path() / ("seed" + std::to_string(seed));
    cmd_run_all(cfg);
    SeedRun run{seed, {}};
    const ArtifactPaths paths{cfg.out_dir};
    for (MatrixMode mode : cfg.modes) {
      const std::string m(to_string(mode));
      run.rows[m] = parse_csv(slurp(paths.eval_csv(m)));
    }
    runs.push_back(std::move(run));
    std::cout << "  seed " << seed << " done at " << seconds_since(start) << " s" << std::endl;
  }
  elapsed = seconds_since(start);
  return runs;
}

Outcome headline(const std::vector<SeedRun>& runs, double elapsed, const std::string& mode, bool require_base) {
  if (runs.size() < 3) return {false, "fewer than 3 seeds"};
  double base = 0, spectral = 0, randomized = 0;
  bool every_seed = true;
  std::ostringstream detail;
  detail.setf(std::ios::fixed);
  detail.precision(4);
  for (const auto& run : runs) {
    const auto& rows = run.rows.at(mode);
    if (rows.size() != 3) return {false, "unexpected comparison table"};
    base += rows[0].map_at_k;
    spectral += rows[1].map_at_k;
    randomized += rows[2].map_at_k;
    const double gap = rows[1].map_at_k - rows[2].map_at_k;
    every_seed = every_seed && gap > 0.0;
    detail << "seed " << run.seed << " base " << rows[0].map_at_k << " spectral " << rows[1].map_at_k
           << " randomized " << rows[2].map_at_k << "; ";
  }
  const double n = static_cast<double>(runs.size());
  base /= n;
  spectral /= n;
  randomized /= n;
  detail << "mean base " << base << " spectral " << spectral << " randomized " << randomized;
  detail.precision(1);
  detail << ", " << elapsed << " s for all runs";
  bool pass = spectral > randomized && every_seed;
  if (require_base) pass = pass && spectral > base && elapsed < 900.0;
  return {pass, detail.str()};
}

Outcome determinism() {
  TempDir dir("acceptance-determinism");
  PipelineConfig cfg;
  cfg.data.num_labels = 18;
  cfg.data.groups = 3;
  cfg.data.feature_dim = 12;
  cfg.data.examples_per_label = 60;
  cfg.trunk_dims = {48};
  cfg.generalist_dims = {24};
  cfg.head_dims = {6};
  cfg.base_train.epochs = 4;
  cfg.augmented_train.epochs = 4;
  cfg.spectral_clusters = 3;
  cfg.master_seed = 808;
  cfg.out_dir = dir.path() / "first";
  cmd_run_all(cfg);
  const std::string first = slurp(ArtifactPaths{cfg.out_dir}.summary());
  cfg.out_dir = dir.path() / "second";
  cmd_run_all(cfg);
  const std::string second = slurp(ArtifactPaths{cfg.out_dir}.summary());
  std::ostringstream detail;
  detail << "two run-all summaries of " << first.size() << " and " << second.size() << " bytes, "
         << (first == second ? "identical" : "different");
  return {!first.empty() && first == second, detail.str()};
}

Outcome eigen_and_kmeans() {
  Rng rng(909);
  double recon = 0, ortho = 0, trace_err = 0;
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng.index(20);
    const DenseMatrix m = oracle::random_symmetric(n, rng);
    const auto e = symmetric_eigen(m);
    DenseMatrix vl(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) vl(i, j) = e.vectors(i, j) * e.values[j];
    recon = std::max(recon, max_abs_diff(oracle::naive_matmul(vl, transpose(e.vectors)), m));
    ortho = std::max(ortho, max_abs_diff(oracle::naive_matmul(transpose(e.vectors), e.vectors), DenseMatrix::identity(n)));
    trace_err = std::max(trace_err, std::abs(trace(m) - std::accumulate(e.values.begin(), e.values.end(), 0.0)));
  }

  bool monotone = true;
  for (int t = 0; t < 20; ++t) {
    const DenseMatrix pts = oracle::random_matrix(30, 3, rng);
    auto r = kmeans(pts, 4, rng.next_u64(), 1);
    for (int step = 0; step < 10; ++step) {
      const auto next = lloyd_step(pts, r);
      monotone = monotone && next.inertia <= r.inertia + 1e-12;
      r = next;
    }
  }

  bool optimal = true;
  int instances = 0;
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 3 + rng.index(4);
    const std::size_t k = 1 + rng.index(std::min<std::size_t>(3, n));
    const DenseMatrix pts = oracle::random_matrix(n, 2, rng);
    const auto r = kmeans(pts, k, rng.next_u64());
    const double best = oracle::best_inertia(pts, k);
    // Lloyd finds a local optimum; best of several seeds must reach the global one.
    double found = r.inertia;
    for (std::uint64_t s = 0; s < 10; ++s) found = std::min(found, kmeans(pts, k, s).inertia);
    optimal = optimal && std::abs(found - best) < 1e-9 && r.inertia >= best - 1e-12;
    ++instances;
  }
  std::ostringstream detail;
  detail << "reconstruction " << recon << ", orthonormality " << ortho << ", trace " << trace_err
         << ", inertia monotone " << (monotone ? "yes" : "no") << ", brute-force optimum on " << instances
         << " instances " << (optimal ? "reached" : "missed");
  return {recon < 1e-8 && ortho < 1e-8 && trace_err < 1e-8 && monotone && optimal, detail.str()};
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << std::endl;
    failures += !o.pass;
  };

  report(1, "gradient correctness", guarded(gradient_correctness));
  report(2, "confusion oracle", guarded(confusion_oracle));
  report(3, "spectral recovery", guarded(spectral_recovery));
  report(4, "freeze and mask invariants", guarded(freeze_and_mask));
  report(5, "multiply-add accounting", guarded(multiply_adds));

  double elapsed = 0.0;
  std::vector<SeedRun> runs;
  std::string run_error;
  try {
    runs = headline_runs(elapsed);
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  if (!run_error.empty()) {
    report(6, "headline ordering, confusion", {false, "exception: " + run_error});
    report(7, "co-detection vs its control", {false, "exception: " + run_error});
  } else {
    report(6, "headline ordering, confusion", headline(runs, elapsed, "confusion", true));
    report(7, "co-detection vs its control", headline(runs, elapsed, "codetection", false));
  }

  report(8, "run-all determinism", guarded(determinism));
  report(9, "eigensolver and k-means suites", guarded(eigen_and_kmeans));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
