#include "specaug/augment.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "specaug/errors.hpp"
#include "specaug/rng.hpp"
#include "specaug/textio.hpp"

namespace specaug {

std::string_view to_string(AttachPoint a) { return a == AttachPoint::trunk ? "trunk" : "after_generalist"; }

AttachPoint attach_point_from_string(std::string_view s) {
  if (s == "trunk") return AttachPoint::trunk;
  if (s == "after_generalist") return AttachPoint::after_generalist;
  throw InvalidArgument("unknown attach point '" + std::string(s) + "' (expected trunk or after_generalist)");
}

std::size_t AugmentedNetwork::input_dim() const {
  if (!trunk.empty()) return trunk.front().spec.input_dim;
  if (!generalist.empty()) return generalist.front().spec.input_dim;
  return classifier.spec.input_dim;
}

std::size_t AugmentedNetwork::trunk_width() const {
  return trunk.empty() ? input_dim() : trunk.back().spec.output_dim;
}

std::size_t AugmentedNetwork::generalist_width() const {
  return generalist.empty() ? trunk_width() : generalist.back().spec.output_dim;
}

std::size_t AugmentedNetwork::attach_width() const {
  return attach == AttachPoint::trunk ? trunk_width() : generalist_width();
}

std::size_t AugmentedNetwork::head_offset(std::size_t h) const {
  std::size_t offset = generalist_width();
  for (std::size_t i = 0; i < h; ++i) offset += heads[i].back().spec.output_dim;
  return offset;
}

void AugmentedNetwork::rebuild_mask() {
  const std::size_t c = classifier.spec.output_dim;
  const std::size_t cols = classifier.spec.input_dim;
  mask_.assign(c * cols, 0);
  const std::size_t gw = generalist_width();
  const auto cluster_of = partition.cluster_of();
  for (std::size_t label = 0; label < c; ++label) {
    for (std::size_t col = 0; col < gw; ++col) mask_[label * cols + col] = 1;
    const std::size_t h = cluster_of[label];
    const std::size_t begin = head_offset(h);
    const std::size_t end = begin + heads[h].back().spec.output_dim;
    for (std::size_t col = begin; col < end; ++col) mask_[label * cols + col] = 1;
  }
}

namespace {

void check_chain(std::span<const Layer> layers, std::size_t input, const std::string& what) {
  std::size_t width = input;
  for (const Layer& l : layers) {
    if (l.spec.input_dim != width) throw InvalidArgument(what + ": layer dimensions do not chain");
    if (l.weights.rows() != l.spec.output_dim || l.weights.cols() != l.spec.input_dim ||
        l.biases.size() != l.spec.output_dim) {
      throw InvalidArgument(what + ": parameter shapes disagree with the layer spec");
    }
    width = l.spec.output_dim;
  }
}

}  // namespace

void validate_augmented(const AugmentedNetwork& net) {
  validate_partition(net.partition);
  if (net.heads.size() != net.partition.num_clusters()) {
    throw InvalidArgument("augmented network: " + std::to_string(net.heads.size()) + " heads for " +
                          std::to_string(net.partition.num_clusters()) + " clusters");
  }
  if (net.partition.num_labels != net.num_labels()) {
    throw InvalidArgument("augmented network: partition label count differs from the classifier");
  }
  check_chain(net.trunk, net.input_dim(), "trunk");
  check_chain(net.generalist, net.trunk_width(), "generalist");
  std::size_t columns = net.generalist_width();
  for (std::size_t h = 0; h < net.heads.size(); ++h) {
    if (net.heads[h].empty()) throw InvalidArgument("augmented network: head " + std::to_string(h) + " has no layers");
    check_chain(net.heads[h], net.attach_width(), "head " + std::to_string(h));
    columns += net.heads[h].back().spec.output_dim;
  }
  check_chain(std::span<const Layer>(&net.classifier, 1), columns, "classifier");
  for (std::size_t r = 0; r < net.num_labels(); ++r)
    for (std::size_t c = 0; c < columns; ++c)
      if (!net.mask(r, c) && net.classifier.weights(r, c) != 0.0) {
        throw ValidationError("augmented network: masked classifier weight (" + std::to_string(r) + ", " +
                              std::to_string(c) + ") is nonzero");
      }
}

std::vector<std::size_t> default_head_dims(std::size_t generalist_width) {
  const std::size_t w = std::max<std::size_t>(1, generalist_width / 2);
  return {w, w};
}

AugmentedNetwork augment(const NetworkParams& base, const AugmentationSpec& spec) {
  validate_network(base);
  validate_partition(spec.partition);
  if (spec.partition.num_labels != base.num_labels()) {
    throw InvalidArgument("augment: partition covers " + std::to_string(spec.partition.num_labels) +
                          " labels but the base network has " + std::to_string(base.num_labels()));
  }
  if (spec.head_layer_dims.empty() ||
      std::any_of(spec.head_layer_dims.begin(), spec.head_layer_dims.end(), [](std::size_t d) { return d == 0; })) {
    throw InvalidArgument("augment: head layer dims must be nonempty and positive");
  }

  AugmentedNetwork net;
  net.attach = spec.attach;
  net.partition = spec.partition;
  const std::size_t depth = base.layers.size();
  for (std::size_t i = 0; i + 1 < depth; ++i) {
    Layer copy = base.layers[i];
    copy.frozen = true;
    (i < base.trunk_depth ? net.trunk : net.generalist).push_back(std::move(copy));
  }
  // The classifier placeholder lets the width accessors work before it is built.
  net.classifier.spec.input_dim = base.layers.back().spec.input_dim;

  Rng rng(spec.head_seed);
  const std::size_t attach_width = net.attach_width();
  std::size_t columns = net.generalist_width();
  for (std::size_t h = 0; h < spec.partition.num_clusters(); ++h) {
    std::vector<Layer> head;
    std::size_t width = attach_width;
    for (std::size_t d : spec.head_layer_dims) {
      head.push_back(init_layer({width, d, Activation::rectifier}, rng));
      width = d;
    }
    columns += width;
    net.heads.push_back(std::move(head));
  }
  net.classifier = init_layer({columns, base.num_labels(), Activation::logistic}, rng);
  net.rebuild_mask();
  for (std::size_t r = 0; r < net.num_labels(); ++r)
    for (std::size_t c = 0; c < columns; ++c)
      if (!net.mask(r, c)) net.classifier.weights(r, c) = 0.0;
  validate_augmented(net);
  return net;
}

namespace {

DenseMatrix classifier_pre(const Layer& classifier, const DenseMatrix& features) {
  DenseMatrix z = matmul_nt(features, classifier.weights);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += classifier.biases[c];
  }
  return z;
}

DenseMatrix logistic_of(const DenseMatrix& z) {
  DenseMatrix s = z;
  for (double& v : s.entries()) v = logistic(v);
  return s;
}

// [generalist | head 0 | head 1 | ...] for a batch.
DenseMatrix concat_features(const DenseMatrix& generalist_out, std::span<const StackTrace> heads) {
  std::size_t cols = generalist_out.cols();
  for (const auto& h : heads) cols += h.post.back().cols();
  DenseMatrix out(generalist_out.rows(), cols);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r).begin();
    dst = std::copy(generalist_out.row(r).begin(), generalist_out.row(r).end(), dst);
    for (const auto& h : heads) dst = std::copy(h.post.back().row(r).begin(), h.post.back().row(r).end(), dst);
  }
  return out;
}

DenseMatrix column_block(const DenseMatrix& m, std::size_t begin, std::size_t width) {
  DenseMatrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r)
    std::copy(m.row(r).begin() + static_cast<std::ptrdiff_t>(begin),
              m.row(r).begin() + static_cast<std::ptrdiff_t>(begin + width), out.row(r).begin());
  return out;
}

void add_into(DenseMatrix& dst, const DenseMatrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.entries()[i] += src.entries()[i];
}

void apply_mask(const AugmentedNetwork& net, DenseMatrix& weight_gradient) {
  for (std::size_t r = 0; r < weight_gradient.rows(); ++r)
    for (std::size_t c = 0; c < weight_gradient.cols(); ++c)
      if (!net.mask(r, c)) weight_gradient(r, c) = 0.0;
}

LayerGradient classifier_gradient(const AugmentedNetwork& net, const DenseMatrix& d_pre, const DenseMatrix& features) {
  LayerGradient g{matmul_tn(d_pre, features), std::vector<double>(net.num_labels(), 0.0), net.classifier.frozen};
  apply_mask(net, g.weights);
  for (std::size_t r = 0; r < d_pre.rows(); ++r)
    for (std::size_t c = 0; c < d_pre.cols(); ++c) g.biases[c] += d_pre(r, c);
  return g;
}

void check_features(const AugmentedNetwork& net, std::size_t dim) {
  if (dim != net.input_dim()) {
    throw InvalidArgument("augmented network expects " + std::to_string(net.input_dim()) + " features, got " +
                          std::to_string(dim));
  }
}

}  // namespace

AugmentedTrace forward_augmented_batch(const AugmentedNetwork& net, const DenseMatrix& input) {
  check_features(net, input.cols());
  AugmentedTrace t;
  t.trunk = forward_stack(net.trunk, input);
  const DenseMatrix& trunk_out = net.trunk.empty() ? input : t.trunk.post.back();
  t.generalist = forward_stack(net.generalist, trunk_out);
  const DenseMatrix& generalist_out = net.generalist.empty() ? trunk_out : t.generalist.post.back();
  const DenseMatrix& attach_in = net.attach == AttachPoint::trunk ? trunk_out : generalist_out;
  for (const auto& head : net.heads) t.heads.push_back(forward_stack(head, attach_in));
  t.features = concat_features(generalist_out, t.heads);
  t.classifier_pre = classifier_pre(net.classifier, t.features);
  t.scores = logistic_of(t.classifier_pre);
  return t;
}

std::vector<double> forward_augmented(const AugmentedNetwork& net, std::span<const double> features) {
  const DenseMatrix x(1, features.size(), std::vector<double>(features.begin(), features.end()));
  const AugmentedTrace t = forward_augmented_batch(net, x);
  return {t.scores.row(0).begin(), t.scores.row(0).end()};
}

DenseMatrix predict_scores(const AugmentedNetwork& net, const Dataset& data) {
  check_features(net, data.feature_dim);
  constexpr std::size_t kChunk = 256;
  DenseMatrix out(data.size(), net.num_labels());
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t end = std::min(data.size(), begin + kChunk);
    DenseMatrix x(end - begin, data.feature_dim);
    for (std::size_t i = begin; i < end; ++i)
      std::copy(data.examples[i].features.begin(), data.examples[i].features.end(), x.row(i - begin).begin());
    const AugmentedTrace t = forward_augmented_batch(net, x);
    for (std::size_t i = begin; i < end; ++i)
      std::copy(t.scores.row(i - begin).begin(), t.scores.row(i - begin).end(), out.row(i).begin());
  }
  return out;
}

AugmentedGradients backward_augmented(const AugmentedNetwork& net, const DenseMatrix& features,
                                      std::span<const std::vector<std::size_t>> labels) {
  const AugmentedTrace t = forward_augmented_batch(net, features);
  AugmentedGradients g;
  for (std::size_t r = 0; r < t.scores.rows(); ++r) g.loss += loss(t.scores.row(r), labels[r]);

  const DenseMatrix d_pre = loss_gradient(t.scores, labels);
  g.classifier = classifier_gradient(net, d_pre, t.features);
  const DenseMatrix d_features = matmul(d_pre, net.classifier.weights);

  const DenseMatrix& trunk_out = net.trunk.empty() ? features : t.trunk.post.back();
  const DenseMatrix& generalist_out = net.generalist.empty() ? trunk_out : t.generalist.post.back();
  const DenseMatrix& attach_in = net.attach == AttachPoint::trunk ? trunk_out : generalist_out;

  DenseMatrix d_attach(attach_in.rows(), attach_in.cols());
  for (std::size_t h = 0; h < net.heads.size(); ++h) {
    const auto& head = net.heads[h];
    const auto& trace = t.heads[h];
    const DenseMatrix d_out = column_block(d_features, net.head_offset(h), head.back().spec.output_dim);
    StackGradient sg = backward_stack(
        head, attach_in, trace,
        activation_backward(head.back().spec.activation, trace.pre.back(), trace.post.back(), d_out), true);
    add_into(d_attach, sg.input);
    g.heads.push_back(std::move(sg.layers));
  }

  DenseMatrix d_generalist_out = column_block(d_features, 0, net.generalist_width());
  if (net.attach == AttachPoint::after_generalist) add_into(d_generalist_out, d_attach);

  DenseMatrix d_trunk_out = d_generalist_out;
  if (!net.generalist.empty()) {
    const auto& last = net.generalist.back();
    StackGradient sg = backward_stack(
        net.generalist, trunk_out, t.generalist,
        activation_backward(last.spec.activation, t.generalist.pre.back(), t.generalist.post.back(), d_generalist_out),
        true);
    g.generalist = std::move(sg.layers);
    d_trunk_out = std::move(sg.input);
  }
  if (net.attach == AttachPoint::trunk) add_into(d_trunk_out, d_attach);

  if (!net.trunk.empty()) {
    const auto& last = net.trunk.back();
    g.trunk = backward_stack(net.trunk, features, t.trunk,
                             activation_backward(last.spec.activation, t.trunk.pre.back(), t.trunk.post.back(),
                                                 d_trunk_out),
                             false)
                  .layers;
  }
  return g;
}

double mean_loss(const AugmentedNetwork& net, const Dataset& data) {
  const DenseMatrix scores = predict_scores(net, data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += loss(scores.row(i), data.examples[i].labels);
  return total / static_cast<double>(data.size());
}

AugmentedTrainResult train_augmented(AugmentedNetwork net, const Dataset& data, const TrainConfig& cfg) {
  validate_train_config(cfg);
  validate_augmented(net);
  check_features(net, data.feature_dim);
  if (data.num_labels != net.num_labels()) throw InvalidArgument("train_augmented: label count mismatch");

  // Frozen path, evaluated once for the whole dataset.
  const DenseMatrix x = feature_matrix(data);
  const StackTrace trunk_trace = forward_stack(net.trunk, x);
  const DenseMatrix trunk_out = net.trunk.empty() ? x : trunk_trace.post.back();
  const StackTrace generalist_trace = forward_stack(net.generalist, trunk_out);
  const DenseMatrix generalist_out = net.generalist.empty() ? trunk_out : generalist_trace.post.back();
  const DenseMatrix& attach_all = net.attach == AttachPoint::trunk ? trunk_out : generalist_out;

  MomentumSgd opt(cfg.learning_rate, cfg.momentum);
  std::vector<std::vector<std::size_t>> head_slots;
  for (const auto& head : net.heads) {
    std::vector<std::size_t> slots;
    for (const Layer& l : head) {
      slots.push_back(opt.add(l.weights.size()));
      opt.add(l.biases.size());
    }
    head_slots.push_back(std::move(slots));
  }
  const std::size_t classifier_slot = opt.add(net.classifier.weights.size());
  opt.add(net.classifier.biases.size());

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  AugmentedTrainResult result;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::size_t rows = end - begin;
      DenseMatrix attach_in(rows, attach_all.cols());
      DenseMatrix gen_out(rows, generalist_out.cols());
      std::vector<std::vector<std::size_t>> labels;
      labels.reserve(rows);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t e = order[i];
        std::copy(attach_all.row(e).begin(), attach_all.row(e).end(), attach_in.row(i - begin).begin());
        std::copy(generalist_out.row(e).begin(), generalist_out.row(e).end(), gen_out.row(i - begin).begin());
        labels.push_back(data.examples[e].labels);
      }

      std::vector<StackTrace> head_traces;
      head_traces.reserve(net.heads.size());
      for (const auto& head : net.heads) head_traces.push_back(forward_stack(head, attach_in));
      const DenseMatrix features = concat_features(gen_out, head_traces);
      const DenseMatrix scores = logistic_of(classifier_pre(net.classifier, features));
      for (std::size_t r = 0; r < rows; ++r) epoch_loss += loss(scores.row(r), labels[r]);

      const DenseMatrix d_pre = loss_gradient(scores, labels);
      const double scale = 1.0 / static_cast<double>(rows);
      const DenseMatrix d_features = matmul(d_pre, net.classifier.weights);
      for (std::size_t h = 0; h < net.heads.size(); ++h) {
        auto& head = net.heads[h];
        std::size_t first = 0;
        while (first < head.size() && head[first].frozen) ++first;
        if (first == head.size()) continue;
        const auto& trace = head_traces[h];
        const DenseMatrix d_out = column_block(d_features, net.head_offset(h), head.back().spec.output_dim);
        const StackGradient sg = backward_stack(
            head, attach_in, trace,
            activation_backward(head.back().spec.activation, trace.pre.back(), trace.post.back(), d_out), false,
            first);
        for (std::size_t l = first; l < head.size(); ++l) {
          if (head[l].frozen) continue;
          opt.step(head_slots[h][l], head[l].weights.entries(), sg.layers[l].weights.entries(), scale);
          opt.step(head_slots[h][l] + 1, head[l].biases, sg.layers[l].biases, scale);
        }
      }
      if (!net.classifier.frozen) {
        const LayerGradient cg = classifier_gradient(net, d_pre, features);
        opt.step(classifier_slot, net.classifier.weights.entries(), cg.weights.entries(), scale);
        opt.step(classifier_slot + 1, net.classifier.biases, cg.biases, scale);
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  result.network = std::move(net);
  return result;
}

void save_augmented(const std::filesystem::path& manifest, const AugmentedNetwork& net) {
  validate_augmented(net);
  const std::string stem = manifest.stem().string();
  const std::string partition_file = stem + ".partition.txt";
  save_partition(manifest.parent_path() / partition_file, net.partition);

  auto out = textio::open_output(manifest);
  textio::write_tag(out, "augmented");
  out << "attach " << to_string(net.attach) << '\n';
  out << "partition " << partition_file << '\n';
  out << "trunk " << net.trunk.size() << '\n';
  for (std::size_t i = 0; i < net.trunk.size(); ++i)
    write_layer_line(out, manifest, stem + ".trunk" + std::to_string(i), net.trunk[i]);
  out << "generalist " << net.generalist.size() << '\n';
  for (std::size_t i = 0; i < net.generalist.size(); ++i)
    write_layer_line(out, manifest, stem + ".generalist" + std::to_string(i), net.generalist[i]);
  out << "heads " << net.heads.size() << '\n';
  for (std::size_t h = 0; h < net.heads.size(); ++h) {
    out << "head " << net.heads[h].size() << '\n';
    for (std::size_t i = 0; i < net.heads[h].size(); ++i)
      write_layer_line(out, manifest, stem + ".head" + std::to_string(h) + "_" + std::to_string(i), net.heads[h][i]);
  }
  out << "classifier\n";
  write_layer_line(out, manifest, stem + ".classifier", net.classifier);
}

namespace {

std::size_t read_keyed_count(textio::LineReader& reader, std::string_view key) {
  const std::string line = reader.next("`" + std::string(key) + " N`");
  const auto tokens = textio::split_ws(line);
  if (tokens.size() != 2 || tokens[0] != key) reader.fail("expected `" + std::string(key) + " N`");
  return reader.to_count(tokens[1]);
}

std::vector<Layer> read_layers(textio::LineReader& reader, const std::filesystem::path& manifest, std::size_t n) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < n; ++i) layers.push_back(read_layer_line(reader, manifest, reader.next("layer line")));
  return layers;
}

}  // namespace

AugmentedNetwork load_augmented(const std::filesystem::path& manifest) {
  auto in = textio::open_input(manifest);
  textio::LineReader reader(in, manifest.string());
  textio::expect_tag(reader, "augmented");
  AugmentedNetwork net;

  auto attach = textio::split_ws(reader.next("`attach POINT`"));
  if (attach.size() != 2 || attach[0] != "attach") reader.fail("expected `attach trunk|after_generalist`");
  try {
    net.attach = attach_point_from_string(attach[1]);
  } catch (const InvalidArgument& e) {
    reader.fail(e.what());
  }
  auto part = textio::split_ws(reader.next("`partition FILE`"));
  if (part.size() != 2 || part[0] != "partition") reader.fail("expected `partition FILE`");
  net.partition = load_partition(manifest.parent_path() / std::string(part[1]));

  net.trunk = read_layers(reader, manifest, read_keyed_count(reader, "trunk"));
  net.generalist = read_layers(reader, manifest, read_keyed_count(reader, "generalist"));
  const std::size_t g = read_keyed_count(reader, "heads");
  for (std::size_t h = 0; h < g; ++h) net.heads.push_back(read_layers(reader, manifest, read_keyed_count(reader, "head")));
  if (reader.next("`classifier`") != "classifier") reader.fail("expected `classifier`");
  net.classifier = read_layer_line(reader, manifest, reader.next("classifier layer line"));
  try {
    if (net.heads.size() != net.partition.num_clusters()) throw InvalidArgument("head count differs from cluster count");
    if (net.partition.num_labels != net.num_labels()) throw InvalidArgument("partition label count differs from C");
    for (const auto& head : net.heads)
      if (head.empty()) throw InvalidArgument("a head has no layers");
    net.rebuild_mask();
    validate_augmented(net);
  } catch (const InvalidArgument& e) {
    throw ValidationError(manifest.string() + ": " + e.what());
  }
  return net;
}

}  // namespace specaug
