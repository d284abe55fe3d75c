#include "specaug/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "specaug/errors.hpp"
#include "specaug/rng.hpp"
#include "specaug/textio.hpp"

namespace specaug {

void validate_dataset(const Dataset& d) {
  if (d.num_labels == 0) throw ValidationError("dataset: num_labels must be positive");
  if (d.feature_dim == 0) throw ValidationError("dataset: feature_dim must be positive");
  if (d.examples.empty()) throw ValidationError("dataset: no examples");
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    const Example& e = d.examples[i];
    if (e.features.size() != d.feature_dim) {
      throw ValidationError("dataset: example " + std::to_string(i) + " has " + std::to_string(e.features.size()) +
                            " features, expected " + std::to_string(d.feature_dim));
    }
    if (e.labels.empty()) throw ValidationError("dataset: example " + std::to_string(i) + " has no labels");
    for (std::size_t j = 0; j < e.labels.size(); ++j) {
      if (e.labels[j] >= d.num_labels) {
        throw ValidationError("dataset: example " + std::to_string(i) + " has label " +
                              std::to_string(e.labels[j]) + " >= C = " + std::to_string(d.num_labels));
      }
      if (j > 0 && e.labels[j] <= e.labels[j - 1]) {
        throw ValidationError("dataset: example " + std::to_string(i) + " labels not ascending and distinct");
      }
    }
  }
  if (d.planted_partition) {
    validate_partition(*d.planted_partition);
    if (d.planted_partition->num_labels != d.num_labels) {
      throw ValidationError("dataset: planted partition covers a different label count");
    }
  }
}

DenseMatrix feature_matrix(const Dataset& d) {
  DenseMatrix m(d.examples.size(), d.feature_dim);
  for (std::size_t i = 0; i < d.examples.size(); ++i)
    std::copy(d.examples[i].features.begin(), d.examples[i].features.end(), m.row(i).begin());
  return m;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  const std::size_t c = spec.num_labels;
  const std::size_t g = spec.groups;
  const std::size_t dim = spec.feature_dim;
  if (c == 0 || g == 0 || dim == 0 || spec.examples_per_label == 0) {
    throw InvalidArgument("generate_synthetic: counts must be positive");
  }
  if (g > c) {
    throw InvalidArgument("generate_synthetic: groups (" + std::to_string(g) + ") exceeds num_labels (" +
                          std::to_string(c) + ")");
  }
  if (!(spec.confusability >= 0.0 && spec.confusability <= 1.0)) {
    throw InvalidArgument("generate_synthetic: confusability must lie in [0, 1]");
  }

  Rng rng(spec.seed);
  std::vector<std::vector<double>> prototypes(c, std::vector<double>(dim));
  for (auto& p : prototypes)
    for (double& x : p) x = rng.normal();
  std::vector<std::vector<double>> directions(g, std::vector<double>(dim));
  for (auto& u : directions)
    for (double& x : u) x = rng.normal();

  std::vector<std::vector<double>> means(c, std::vector<double>(dim));
  std::vector<std::vector<std::size_t>> members(g);
  for (std::size_t label = 0; label < c; ++label) {
    const std::size_t group = label % g;
    members[group].push_back(label);
    for (std::size_t k = 0; k < dim; ++k) {
      means[label][k] =
          (1.0 - spec.confusability) * prototypes[label][k] + spec.confusability * directions[group][k];
    }
  }

  Dataset d{c, dim, {}, LabelPartition{c, members, Provenance::planted}};
  d.examples.reserve(c * spec.examples_per_label);
  const std::size_t max_labels = std::min<std::size_t>(3, c);

  for (std::size_t primary = 0; primary < c; ++primary) {
    const std::size_t group = primary % g;
    for (std::size_t n = 0; n < spec.examples_per_label; ++n) {
      std::vector<std::size_t> labels{primary};
      const std::size_t count = 1 + rng.index(max_labels);
      while (labels.size() < count) {
        std::vector<std::size_t> pool;
        if (rng.uniform() < kSameGroupCooccurrence) {
          for (std::size_t l : members[group])
            if (std::find(labels.begin(), labels.end(), l) == labels.end()) pool.push_back(l);
        }
        if (pool.empty()) {
          for (std::size_t l = 0; l < c; ++l)
            if (std::find(labels.begin(), labels.end(), l) == labels.end()) pool.push_back(l);
        }
        labels.push_back(pool[rng.index(pool.size())]);
      }

      Example e{std::vector<double>(dim, 0.0), labels};
      const double share = 1.0 / static_cast<double>(labels.size());
      for (std::size_t l : labels)
        for (std::size_t k = 0; k < dim; ++k) e.features[k] += share * means[l][k];
      for (double& x : e.features) x += kSyntheticNoise * rng.normal();
      std::sort(e.labels.begin(), e.labels.end());
      d.examples.push_back(std::move(e));
    }
  }
  return d;
}

void validate_split_spec(const SplitSpec& s) {
  if (!(s.train_fraction > 0.0) || !(s.holdout_fraction > 0.0) || !(s.test_fraction > 0.0)) {
    throw InvalidArgument("split: every fraction must be positive");
  }
  const double sum = s.train_fraction + s.holdout_fraction + s.test_fraction;
  if (std::abs(sum - 1.0) > 1e-12) {
    throw InvalidArgument("split: fractions sum to " + textio::format_double(sum) + ", not 1");
  }
}

std::vector<std::size_t> split_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

DatasetSplits split(const Dataset& d, const SplitSpec& s) {
  validate_split_spec(s);
  const std::size_t n = d.examples.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * s.train_fraction));
  const auto n_holdout = static_cast<std::size_t>(std::llround(static_cast<double>(n) * s.holdout_fraction));
  if (n_train == 0 || n_holdout == 0 || n_train + n_holdout >= n) {
    throw InvalidArgument("split: " + std::to_string(n) + " examples leave an empty split (train " +
                          std::to_string(n_train) + ", holdout " + std::to_string(n_holdout) + ")");
  }
  const auto order = split_order(n, s.seed);
  auto slice = [&](std::size_t begin, std::size_t end) {
    Dataset part{d.num_labels, d.feature_dim, {}, d.planted_partition};
    part.examples.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) part.examples.push_back(d.examples[order[i]]);
    return part;
  };
  return {slice(0, n_train), slice(n_train, n_train + n_holdout), slice(n_train + n_holdout, n)};
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  validate_dataset(d);
  auto out = textio::open_output(path);
  textio::write_tag(out, "dataset");
  out << d.num_labels << ' ' << d.feature_dim << ' ' << d.examples.size() << '\n';
  std::string line;
  for (const Example& e : d.examples) {
    line.clear();
    line += std::to_string(e.labels.size());
    for (std::size_t l : e.labels) {
      line += ' ';
      line += std::to_string(l);
    }
    line += " :";
    for (double f : e.features) {
      line += ' ';
      line += textio::format_double(f);
    }
    line += '\n';
    out << line;
  }
  if (d.planted_partition) {
    out << "planted\n";
    write_partition(out, *d.planted_partition);
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto in = textio::open_input(path);
  textio::LineReader reader(in, path.string());
  textio::expect_tag(reader, "dataset");
  const auto header = textio::split_ws(reader.next("dataset header `C D N`"));
  if (header.size() != 3) reader.fail("dataset header must be `C D N`");
  Dataset d;
  d.num_labels = reader.to_count(header[0]);
  d.feature_dim = reader.to_count(header[1]);
  const std::size_t n = reader.to_count(header[2]);
  d.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string line = reader.next("example " + std::to_string(i));
    const auto tokens = textio::split_ws(line);
    if (tokens.empty()) reader.fail("empty example line");
    const std::size_t k = reader.to_count(tokens[0]);
    if (tokens.size() != 1 + k + 1 + d.feature_dim) {
      reader.fail("example line has " + std::to_string(tokens.size()) + " fields, expected " +
                  std::to_string(1 + k + 1 + d.feature_dim));
    }
    if (tokens[1 + k] != ":") reader.fail("expected ':' between labels and features");
    Example e;
    for (std::size_t j = 0; j < k; ++j) e.labels.push_back(reader.to_count(tokens[1 + j]));
    e.features.reserve(d.feature_dim);
    for (std::size_t j = 0; j < d.feature_dim; ++j) e.features.push_back(reader.to_double(tokens[2 + k + j]));
    d.examples.push_back(std::move(e));
  }
  std::string line;
  while (reader.try_next(line)) {
    if (textio::split_ws(line).empty()) continue;
    if (line != "planted") reader.fail("unexpected trailing content '" + line + "'");
    d.planted_partition = read_partition(reader);
  }
  validate_dataset(d);
  return d;
}

}  // namespace specaug
