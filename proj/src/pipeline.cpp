#include "specaug/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "specaug/errors.hpp"
#include "specaug/rng.hpp"
#include "specaug/textio.hpp"

namespace specaug {

std::size_t PipelineConfig::effective_top_k() const { return top_k ? top_k : default_top_k(data.num_labels); }

std::size_t PipelineConfig::effective_k_eval() const { return k_eval ? k_eval : default_k_eval(data.num_labels); }

std::uint64_t PipelineConfig::seed_for(std::string_view stage) const { return stage_seed(master_seed, stage); }

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "': invalid value '" + value + "'");
  }
  return v;
}

std::vector<std::string> split_commas(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<std::size_t> parse_dims(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  if (trim(value).empty()) return out;
  for (const auto& item : split_commas(value)) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(dims[i]);
  }
  return out;
}

void log(const std::string& line) { std::cerr << "[specaug] " << line << '\n'; }

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::string& source) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto size = [&] { return parse_number<std::size_t>(key, value); };
    auto real = [&] { return parse_number<double>(key, value); };
    try {
      if (key == "num_labels") cfg.data.num_labels = size();
      else if (key == "planted_groups") cfg.data.groups = size();
      else if (key == "feature_dim") cfg.data.feature_dim = size();
      else if (key == "examples_per_label") cfg.data.examples_per_label = size();
      else if (key == "confusability") cfg.data.confusability = real();
      else if (key == "train_fraction") cfg.train_fraction = real();
      else if (key == "holdout_fraction") cfg.holdout_fraction = real();
      else if (key == "test_fraction") cfg.test_fraction = real();
      else if (key == "trunk_dims") cfg.trunk_dims = parse_dims(key, value);
      else if (key == "generalist_dims") cfg.generalist_dims = parse_dims(key, value);
      else if (key == "base_learning_rate") cfg.base_train.learning_rate = real();
      else if (key == "base_momentum") cfg.base_train.momentum = real();
      else if (key == "base_batch_size") cfg.base_train.batch_size = size();
      else if (key == "base_epochs") cfg.base_train.epochs = size();
      else if (key == "augmented_learning_rate") cfg.augmented_train.learning_rate = real();
      else if (key == "augmented_momentum") cfg.augmented_train.momentum = real();
      else if (key == "augmented_batch_size") cfg.augmented_train.batch_size = size();
      else if (key == "augmented_epochs") cfg.augmented_train.epochs = size();
      else if (key == "modes") {
        cfg.modes.clear();
        for (const auto& m : split_commas(value)) cfg.modes.push_back(matrix_mode_from_string(m));
      } else if (key == "top_k") cfg.top_k = size();
      else if (key == "spectral_clusters") cfg.spectral_clusters = size();
      else if (key == "degree_epsilon") cfg.degree_epsilon = real();
      else if (key == "head_dims") cfg.head_dims = parse_dims(key, value);
      else if (key == "attach") cfg.attach = attach_point_from_string(value);
      else if (key == "k_eval") cfg.k_eval = size();
      else if (key == "seed") cfg.master_seed = parse_number<std::uint64_t>(key, value);
      else if (key == "out") cfg.out_dir = value;
      else throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
    } catch (const InvalidArgument& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  validate_config(cfg);
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void validate_config(const PipelineConfig& cfg) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("config key '") + name + "' must be positive");
  };
  positive(cfg.data.num_labels, "num_labels");
  positive(cfg.data.groups, "planted_groups");
  positive(cfg.data.feature_dim, "feature_dim");
  positive(cfg.data.examples_per_label, "examples_per_label");
  positive(cfg.spectral_clusters, "spectral_clusters");
  positive(cfg.base_train.batch_size, "base_batch_size");
  positive(cfg.augmented_train.batch_size, "augmented_batch_size");
  if (cfg.data.groups > cfg.data.num_labels) throw ConfigError("config key 'planted_groups' exceeds num_labels");
  if (!(cfg.data.confusability >= 0.0 && cfg.data.confusability <= 1.0)) {
    throw ConfigError("config key 'confusability' must lie in [0, 1]");
  }
  const struct {
    double v;
    const char* name;
  } fractions[] = {{cfg.train_fraction, "train_fraction"},
                   {cfg.holdout_fraction, "holdout_fraction"},
                   {cfg.test_fraction, "test_fraction"}};
  for (const auto& f : fractions)
    if (!(f.v > 0.0)) throw ConfigError(std::string("config key '") + f.name + "' must be positive");
  const double sum = cfg.train_fraction + cfg.holdout_fraction + cfg.test_fraction;
  if (std::abs(sum - 1.0) > 1e-12) {
    throw ConfigError("config key 'test_fraction': train_fraction + holdout_fraction + test_fraction = " +
                      textio::format_double(sum) + ", must be 1");
  }
  for (std::size_t d : cfg.trunk_dims) positive(d, "trunk_dims");
  for (std::size_t d : cfg.generalist_dims) positive(d, "generalist_dims");
  if (cfg.head_dims.empty()) throw ConfigError("config key 'head_dims' must list at least one width");
  for (std::size_t d : cfg.head_dims) positive(d, "head_dims");
  if (cfg.modes.empty()) throw ConfigError("config key 'modes' must name at least one mode");
  if (cfg.effective_top_k() > cfg.data.num_labels) throw ConfigError("config key 'top_k' exceeds num_labels");
  if (cfg.effective_k_eval() > cfg.data.num_labels) throw ConfigError("config key 'k_eval' exceeds num_labels");
  if (cfg.spectral_clusters > cfg.data.num_labels) {
    throw ConfigError("config key 'spectral_clusters' exceeds num_labels");
  }
  if (!(cfg.degree_epsilon > 0.0)) throw ConfigError("config key 'degree_epsilon' must be positive");
  for (const auto* t : {&cfg.base_train, &cfg.augmented_train}) {
    if (!(t->learning_rate >= 0.0)) throw ConfigError("config: learning rates must be nonnegative");
    if (!(t->momentum >= 0.0 && t->momentum < 1.0)) throw ConfigError("config: momentum must lie in [0, 1)");
  }
}

std::string render_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  auto real = [](double v) { return textio::format_double(v); };
  out << "num_labels = " << cfg.data.num_labels << '\n'
      << "planted_groups = " << cfg.data.groups << '\n'
      << "feature_dim = " << cfg.data.feature_dim << '\n'
      << "examples_per_label = " << cfg.data.examples_per_label << '\n'
      << "confusability = " << real(cfg.data.confusability) << '\n'
      << "train_fraction = " << real(cfg.train_fraction) << '\n'
      << "holdout_fraction = " << real(cfg.holdout_fraction) << '\n'
      << "test_fraction = " << real(cfg.test_fraction) << '\n'
      << "trunk_dims = " << join_dims(cfg.trunk_dims) << '\n'
      << "generalist_dims = " << join_dims(cfg.generalist_dims) << '\n'
      << "base_learning_rate = " << real(cfg.base_train.learning_rate) << '\n'
      << "base_momentum = " << real(cfg.base_train.momentum) << '\n'
      << "base_batch_size = " << cfg.base_train.batch_size << '\n'
      << "base_epochs = " << cfg.base_train.epochs << '\n'
      << "augmented_learning_rate = " << real(cfg.augmented_train.learning_rate) << '\n'
      << "augmented_momentum = " << real(cfg.augmented_train.momentum) << '\n'
      << "augmented_batch_size = " << cfg.augmented_train.batch_size << '\n'
      << "augmented_epochs = " << cfg.augmented_train.epochs << '\n'
      << "modes = ";
  for (std::size_t i = 0; i < cfg.modes.size(); ++i) out << (i ? "," : "") << to_string(cfg.modes[i]);
  out << '\n'
      << "top_k = " << cfg.top_k << '\n'
      << "spectral_clusters = " << cfg.spectral_clusters << '\n'
      << "degree_epsilon = " << real(cfg.degree_epsilon) << '\n'
      << "head_dims = " << join_dims(cfg.head_dims) << '\n'
      << "attach = " << to_string(cfg.attach) << '\n'
      << "k_eval = " << cfg.k_eval << '\n'
      << "seed = " << cfg.master_seed << '\n'
      << "out = " << cfg.out_dir.string() << '\n';
  return out.str();
}

std::filesystem::path ArtifactPaths::confusion(MatrixMode m) const {
  return root / "confusion" / (std::string(to_string(m)) + ".txt");
}

std::filesystem::path ArtifactPaths::spectral_partition(MatrixMode m) const {
  return root / "partitions" / (std::string(to_string(m)) + "_spectral.txt");
}

std::filesystem::path ArtifactPaths::randomized_partition(MatrixMode m) const {
  return root / "partitions" / (std::string(to_string(m)) + "_randomized.txt");
}

std::filesystem::path ArtifactPaths::augmented_dir(const std::filesystem::path& partition) const {
  return root / "augmented" / partition.stem();
}

void cmd_generate(const PipelineConfig& cfg) {
  validate_config(cfg);
  const ArtifactPaths paths{cfg.out_dir};
  SyntheticSpec spec = cfg.data;
  spec.seed = cfg.seed_for("generate");
  const Dataset all = generate_synthetic(spec);
  const DatasetSplits parts =
      split(all, {cfg.train_fraction, cfg.holdout_fraction, cfg.test_fraction, cfg.seed_for("split")});
  save_dataset(paths.train(), parts.train);
  save_dataset(paths.holdout(), parts.holdout);
  save_dataset(paths.test(), parts.test);
  save_partition(paths.planted(), *all.planted_partition);
  log("generate: " + std::to_string(parts.train.size()) + " train, " + std::to_string(parts.holdout.size()) +
      " holdout, " + std::to_string(parts.test.size()) + " test examples");
}

void cmd_train_base(const PipelineConfig& cfg) {
  validate_config(cfg);
  const ArtifactPaths paths{cfg.out_dir};
  const Dataset train = load_dataset(paths.train());
  if (train.num_labels != cfg.data.num_labels || train.feature_dim != cfg.data.feature_dim) {
    throw ConfigError("train-base: dataset at " + paths.train().string() + " does not match the configured C and D");
  }
  const auto specs = classifier_specs(cfg.data.feature_dim, cfg.trunk_dims, cfg.generalist_dims, cfg.data.num_labels);
  NetworkParams net = init_network(specs, cfg.seed_for("init-base"), cfg.trunk_dims.size());
  TrainConfig tc = cfg.base_train;
  tc.seed = cfg.seed_for("train-base");
  TrainResult result = sgd_train(std::move(net), train, tc);
  save_network(paths.base_model(), result.params);
  auto out = textio::open_output(paths.base_loss());
  textio::write_tag(out, "loss-trace");
  for (double v : result.loss_trace) out << textio::format_double(v) << '\n';
  log("train-base: " + std::to_string(tc.epochs) + " epochs, final epoch loss " +
      (result.loss_trace.empty() ? std::string("n/a") : textio::format_double(result.loss_trace.back())));
}

void cmd_confusions(const PipelineConfig& cfg, MatrixMode mode) {
  validate_config(cfg);
  const ArtifactPaths paths{cfg.out_dir};
  const NetworkParams net = load_network(paths.base_model());
  const Dataset holdout = load_dataset(paths.holdout());
  const std::size_t k = cfg.effective_top_k();
  if (k > net.num_labels()) throw ConfigError("config key 'top_k': K exceeds C");
  const TopKPredictions preds = top_k(net, holdout, k);
  const ConfusionMatrix m = mode == MatrixMode::confusion ? confusion_matrix(preds, holdout) : codetection_matrix(preds);
  save_confusion(paths.confusion(mode), m);
  log("confusions: " + std::string(to_string(mode)) + " matrix with K = " + std::to_string(k) + " over " +
      std::to_string(holdout.size()) + " holdout examples");
}

ClusterOutcome cmd_cluster(const PipelineConfig& cfg, MatrixMode mode, std::optional<std::uint64_t> randomize_seed) {
  validate_config(cfg);
  const ArtifactPaths paths{cfg.out_dir};
  const ConfusionMatrix a = load_confusion(paths.confusion(mode));
  const SimilarityMatrix b = symmetrize(a);
  SpectralConfig sc{cfg.spectral_clusters, cfg.seed_for("kmeans-" + std::string(to_string(mode))), cfg.degree_epsilon};
  ClusterOutcome outcome{spectral_cluster(b.b, sc), std::nullopt, std::nullopt, std::nullopt};
  save_partition(paths.spectral_partition(mode), outcome.spectral);

  std::optional<LabelPartition> planted;
  if (std::filesystem::exists(paths.planted())) planted = load_partition(paths.planted());
  if (planted) {
    outcome.spectral_ari = adjusted_rand_index(outcome.spectral, *planted);
    log("cluster: " + std::string(to_string(mode)) + " spectral ARI vs planted " +
        textio::format_double(*outcome.spectral_ari));
  }
  if (randomize_seed) {
    outcome.randomized = randomized_control(outcome.spectral, *randomize_seed);
    save_partition(paths.randomized_partition(mode), *outcome.randomized);
    if (planted) outcome.randomized_ari = adjusted_rand_index(*outcome.randomized, *planted);
  }
  return outcome;
}

std::filesystem::path cmd_augment_train(const PipelineConfig& cfg, const std::filesystem::path& partition_path) {
  validate_config(cfg);
  const ArtifactPaths paths{cfg.out_dir};
  const NetworkParams base = load_network(paths.base_model());
  const Dataset train = load_dataset(paths.train());
  const LabelPartition partition = load_partition(partition_path);
  AugmentationSpec spec{partition, cfg.head_dims, cfg.seed_for("heads"), cfg.attach};
  AugmentedNetwork net = augment(base, spec);
  TrainConfig tc = cfg.augmented_train;
  tc.seed = cfg.seed_for("train-augmented");
  AugmentedTrainResult result = train_augmented(std::move(net), train, tc);

  const auto dir = paths.augmented_dir(partition_path);
  const auto manifest = dir / "model.manifest";
  save_augmented(manifest, result.network);
  auto out = textio::open_output(dir / "loss_trace.txt");
  textio::write_tag(out, "loss-trace");
  for (double v : result.loss_trace) out << textio::format_double(v) << '\n';
  log("augment-train: " + partition_path.stem().string() + ", " + std::to_string(partition.num_clusters()) +
      " heads, final epoch loss " +
      (result.loss_trace.empty() ? std::string("n/a") : textio::format_double(result.loss_trace.back())));
  return manifest;
}

namespace {

std::string model_id_for(const std::filesystem::path& manifest) {
  const auto parent = manifest.parent_path().filename().string();
  return parent.empty() ? manifest.stem().string() : parent;
}

}  // namespace

ComparisonTable cmd_eval(const PipelineConfig& cfg, const std::vector<std::filesystem::path>& manifests,
                         const std::string& name) {
  validate_config(cfg);
  const ArtifactPaths paths{cfg.out_dir};
  const Dataset test = load_dataset(paths.test());
  std::vector<std::vector<std::size_t>> truth;
  truth.reserve(test.size());
  for (const auto& e : test.examples) truth.push_back(e.labels);
  const std::size_t k_eval = cfg.effective_k_eval();

  std::vector<EvalReport> reports;
  for (const auto& manifest : manifests) {
    const std::string kind = textio::peek_kind(manifest);
    DenseMatrix scores;
    std::uint64_t madds = 0;
    if (kind == "model") {
      const NetworkParams net = load_network(manifest);
      scores = predict_scores(net, test);
      madds = count_multiply_adds(net);
    } else if (kind == "augmented") {
      const AugmentedNetwork net = load_augmented(manifest);
      scores = predict_scores(net, test);
      madds = count_multiply_adds(net);
    } else {
      throw ValidationError(manifest.string() + ": not a model manifest");
    }
    reports.push_back(make_report(model_id_for(manifest), map_at_top_k(scores, truth, k_eval), madds, test.size()));
  }
  const ComparisonTable table = compare(reports);
  auto text = textio::open_output(paths.eval_text(name));
  text << render_text(table);
  auto csv = textio::open_output(paths.eval_csv(name));
  csv << render_csv(table);
  return table;
}

std::string cmd_run_all(const PipelineConfig& cfg) {
  validate_config(cfg);
  const ArtifactPaths paths{cfg.out_dir};
  cmd_generate(cfg);
  cmd_train_base(cfg);

  const Dataset train = load_dataset(paths.train());
  const Dataset holdout = load_dataset(paths.holdout());
  const Dataset test = load_dataset(paths.test());
  const NetworkParams base = load_network(paths.base_model());

  std::ostringstream summary;
  textio::write_tag(summary, "summary");
  summary << "master_seed " << cfg.master_seed << '\n'
          << "dataset C " << cfg.data.num_labels << " planted_groups " << cfg.data.groups << " D "
          << cfg.data.feature_dim << " confusability " << textio::format_double(cfg.data.confusability) << '\n'
          << "splits train " << train.size() << " holdout " << holdout.size() << " test " << test.size() << '\n'
          << "base_train_loss " << textio::format_double(mean_loss(base, train)) << '\n'
          << "top_k " << cfg.effective_top_k() << " spectral_clusters " << cfg.spectral_clusters << " k_eval "
          << cfg.effective_k_eval() << '\n';

  for (MatrixMode mode : cfg.modes) {
    const std::string m(to_string(mode));
    cmd_confusions(cfg, mode);
    const ClusterOutcome clusters = cmd_cluster(cfg, mode, cfg.seed_for("randomize-" + m));
    const auto spectral_manifest = cmd_augment_train(cfg, paths.spectral_partition(mode));
    const auto randomized_manifest = cmd_augment_train(cfg, paths.randomized_partition(mode));
    const ComparisonTable table = cmd_eval(cfg, {paths.base_model(), spectral_manifest, randomized_manifest}, m);

    summary << "\n[" << m << "]\n";
    summary << "cluster_sizes";
    for (std::size_t s : clusters.spectral.cluster_sizes()) summary << ' ' << s;
    summary << '\n';
    if (clusters.spectral_ari) summary << "spectral_ari_vs_planted " << textio::format_double(*clusters.spectral_ari) << '\n';
    if (clusters.randomized_ari) {
      summary << "randomized_ari_vs_planted " << textio::format_double(*clusters.randomized_ari) << '\n';
    }
    summary << render_text(table) << render_csv(table);
  }
  const std::string text = summary.str();
  auto out = textio::open_output(paths.summary());
  out << text;
  return text;
}

}  // namespace specaug
