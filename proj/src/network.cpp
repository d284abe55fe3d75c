#include "specaug/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "specaug/errors.hpp"

namespace specaug {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::rectifier:
      return "rectifier";
    case Activation::logistic:
      return "logistic";
    case Activation::identity:
      return "identity";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view s) {
  if (s == "rectifier" || s == "relu") return Activation::rectifier;
  if (s == "logistic") return Activation::logistic;
  if (s == "identity") return Activation::identity;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::rectifier:
      return z > 0.0 ? z : 0.0;
    case Activation::logistic:
      return logistic(z);
    case Activation::identity:
      return z;
  }
  return z;
}

void validate_network(const NetworkParams& net) {
  if (net.layers.empty()) throw InvalidArgument("network: no layers");
  if (net.trunk_depth >= net.layers.size()) throw InvalidArgument("network: trunk_depth leaves no classifier layer");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (l.spec.input_dim == 0 || l.spec.output_dim == 0) {
      throw InvalidArgument("network: layer " + std::to_string(i) + " has a zero dimension");
    }
    if (l.weights.rows() != l.spec.output_dim || l.weights.cols() != l.spec.input_dim ||
        l.biases.size() != l.spec.output_dim) {
      throw InvalidArgument("network: layer " + std::to_string(i) + " parameter shapes disagree with its spec");
    }
    if (i > 0 && net.layers[i - 1].spec.output_dim != l.spec.input_dim) {
      throw InvalidArgument("network: layer " + std::to_string(i - 1) + " outputs " +
                            std::to_string(net.layers[i - 1].spec.output_dim) + " but layer " + std::to_string(i) +
                            " expects " + std::to_string(l.spec.input_dim));
    }
  }
}

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0)) throw InvalidArgument("train config: learning_rate must be nonnegative");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw InvalidArgument("train config: momentum must be in [0, 1)");
  if (cfg.batch_size == 0) throw InvalidArgument("train config: batch_size must be positive");
}

Layer init_layer(const LayerSpec& spec, Rng& rng) {
  if (spec.input_dim == 0 || spec.output_dim == 0) throw InvalidArgument("init_layer: zero dimension");
  const double limit = std::sqrt(6.0 / static_cast<double>(spec.input_dim + spec.output_dim));
  Layer layer{spec, DenseMatrix(spec.output_dim, spec.input_dim), std::vector<double>(spec.output_dim, 0.0), false};
  for (double& w : layer.weights.entries()) w = rng.uniform(-limit, limit);
  return layer;
}

NetworkParams init_network(std::span<const LayerSpec> specs, std::uint64_t seed, std::size_t trunk_depth) {
  if (specs.empty()) throw InvalidArgument("init_network: no layer specs");
  for (std::size_t i = 1; i < specs.size(); ++i) {
    if (specs[i - 1].output_dim != specs[i].input_dim) {
      throw InvalidArgument("init_network: layer " + std::to_string(i - 1) + " outputs " +
                            std::to_string(specs[i - 1].output_dim) + " but layer " + std::to_string(i) +
                            " expects " + std::to_string(specs[i].input_dim));
    }
  }
  Rng rng(seed);
  NetworkParams net;
  net.trunk_depth = trunk_depth;
  for (const LayerSpec& spec : specs) net.layers.push_back(init_layer(spec, rng));
  validate_network(net);
  return net;
}

std::vector<LayerSpec> classifier_specs(std::size_t input_dim, std::span<const std::size_t> trunk_dims,
                                        std::span<const std::size_t> generalist_dims, std::size_t num_labels) {
  std::vector<LayerSpec> specs;
  std::size_t width = input_dim;
  for (std::size_t d : trunk_dims) {
    specs.push_back({width, d, Activation::rectifier});
    width = d;
  }
  for (std::size_t d : generalist_dims) {
    specs.push_back({width, d, Activation::rectifier});
    width = d;
  }
  specs.push_back({width, num_labels, Activation::logistic});
  return specs;
}

StackTrace forward_stack(std::span<const Layer> layers, const DenseMatrix& input) {
  StackTrace trace;
  trace.pre.reserve(layers.size());
  trace.post.reserve(layers.size());
  const DenseMatrix* x = &input;
  for (const Layer& layer : layers) {
    if (x->cols() != layer.spec.input_dim) {
      throw InvalidArgument("forward: input has " + std::to_string(x->cols()) + " features, layer expects " +
                            std::to_string(layer.spec.input_dim));
    }
    DenseMatrix z = matmul_nt(*x, layer.weights);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.biases[c];
    }
    DenseMatrix a = z;
    if (layer.spec.activation != Activation::identity)
      for (double& v : a.entries()) v = activate(layer.spec.activation, v);
    trace.pre.push_back(std::move(z));
    trace.post.push_back(std::move(a));
    x = &trace.post.back();
  }
  return trace;
}

DenseMatrix activation_backward(Activation a, const DenseMatrix& pre, const DenseMatrix& post,
                                const DenseMatrix& d_post) {
  DenseMatrix d_pre = d_post;
  auto out = d_pre.entries();
  switch (a) {
    case Activation::rectifier: {
      auto z = pre.entries();
      for (std::size_t i = 0; i < out.size(); ++i)
        if (!(z[i] > 0.0)) out[i] = 0.0;
      break;
    }
    case Activation::logistic: {
      auto s = post.entries();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s[i] * (1.0 - s[i]);
      break;
    }
    case Activation::identity:
      break;
  }
  return d_pre;
}

StackGradient backward_stack(std::span<const Layer> layers, const DenseMatrix& input, const StackTrace& trace,
                             DenseMatrix d_pre_last, bool want_input_gradient, std::size_t first_layer) {
  const std::size_t n = layers.size();
  StackGradient out{std::vector<LayerGradient>(n), DenseMatrix(1, 1)};
  for (std::size_t i = 0; i < first_layer && i < n; ++i) {
    out.layers[i] = {DenseMatrix(layers[i].weights.rows(), layers[i].weights.cols()),
                     std::vector<double>(layers[i].spec.output_dim, 0.0), layers[i].frozen};
  }
  DenseMatrix d_pre = std::move(d_pre_last);
  for (std::size_t i = n; i-- > first_layer;) {
    const DenseMatrix& layer_input = i == 0 ? input : trace.post[i - 1];
    LayerGradient g{matmul_tn(d_pre, layer_input), std::vector<double>(layers[i].spec.output_dim, 0.0),
                    layers[i].frozen};
    for (std::size_t r = 0; r < d_pre.rows(); ++r) {
      auto row = d_pre.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) g.biases[c] += row[c];
    }
    out.layers[i] = std::move(g);
    if (i == first_layer && !(i == 0 && want_input_gradient)) break;
    DenseMatrix d_in = matmul(d_pre, layers[i].weights);
    if (i == 0) {
      out.input = std::move(d_in);
      break;
    }
    d_pre = activation_backward(layers[i - 1].spec.activation, trace.pre[i - 1], trace.post[i - 1], d_in);
  }
  return out;
}

namespace {

DenseMatrix scores_from(const DenseMatrix& final_pre) {
  DenseMatrix s = final_pre;
  for (double& v : s.entries()) v = logistic(v);
  return s;
}

DenseMatrix single_row(std::span<const double> features) {
  return DenseMatrix(1, features.size(), std::vector<double>(features.begin(), features.end()));
}

void check_input(const NetworkParams& net, std::size_t dim) {
  validate_network(net);
  if (dim != net.input_dim()) {
    throw InvalidArgument("network expects " + std::to_string(net.input_dim()) + " features, got " +
                          std::to_string(dim));
  }
}

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

ForwardResult forward(const NetworkParams& net, std::span<const double> features) {
  check_input(net, features.size());
  const StackTrace trace = forward_stack(net.layers, single_row(features));
  ForwardResult out;
  for (std::size_t i = 0; i < trace.pre.size(); ++i) {
    out.pre.push_back(to_vector(trace.pre[i].row(0)));
    out.hidden.push_back(to_vector(trace.post[i].row(0)));
  }
  out.scores = to_vector(scores_from(trace.pre.back()).row(0));
  return out;
}

DenseMatrix predict_scores(const NetworkParams& net, const Dataset& data) {
  check_input(net, data.feature_dim);
  constexpr std::size_t kChunk = 256;
  DenseMatrix out(data.size(), net.num_labels());
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t end = std::min(data.size(), begin + kChunk);
    DenseMatrix x(end - begin, data.feature_dim);
    for (std::size_t i = begin; i < end; ++i)
      std::copy(data.examples[i].features.begin(), data.examples[i].features.end(), x.row(i - begin).begin());
    const DenseMatrix s = scores_from(forward_stack(net.layers, x).pre.back());
    for (std::size_t i = begin; i < end; ++i) std::copy(s.row(i - begin).begin(), s.row(i - begin).end(), out.row(i).begin());
  }
  return out;
}

double loss(std::span<const double> scores, std::span<const std::size_t> labels) {
  std::vector<bool> target(scores.size(), false);
  for (std::size_t l : labels) {
    if (l >= scores.size()) throw InvalidArgument("loss: label " + std::to_string(l) + " out of range");
    target[l] = true;
  }
  double total = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const double s = scores[c];
    total -= target[c] ? std::log(std::max(s, kScoreClamp)) : std::log1p(-std::min(s, 1.0 - kScoreClamp));
  }
  return total;
}

DenseMatrix loss_gradient(const DenseMatrix& scores, std::span<const std::vector<std::size_t>> labels) {
  if (labels.size() != scores.rows()) throw InvalidArgument("loss_gradient: label list count differs from batch size");
  DenseMatrix g(scores.rows(), scores.cols());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto s = scores.row(r);
    auto out = g.row(r);
    for (std::size_t c = 0; c < s.size(); ++c) out[c] = s[c] > 1.0 - kScoreClamp ? 0.0 : s[c];
    for (std::size_t l : labels[r]) out[l] = s[l] < kScoreClamp ? 0.0 : s[l] - 1.0;
  }
  return g;
}

Gradients backward_batch(const NetworkParams& net, const DenseMatrix& features,
                         std::span<const std::vector<std::size_t>> labels) {
  check_input(net, features.cols());
  const StackTrace trace = forward_stack(net.layers, features);
  const DenseMatrix scores = scores_from(trace.pre.back());
  Gradients out;
  for (std::size_t r = 0; r < scores.rows(); ++r) out.loss += loss(scores.row(r), labels[r]);
  out.layers = backward_stack(net.layers, features, trace, loss_gradient(scores, labels), false).layers;
  return out;
}

Gradients backward(const NetworkParams& net, std::span<const double> features, std::span<const std::size_t> labels) {
  const std::vector<std::vector<std::size_t>> batch_labels{{labels.begin(), labels.end()}};
  return backward_batch(net, single_row(features), batch_labels);
}

double mean_loss(const NetworkParams& net, const Dataset& data) {
  const DenseMatrix scores = predict_scores(net, data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += loss(scores.row(i), data.examples[i].labels);
  return total / static_cast<double>(data.size());
}

std::size_t MomentumSgd::add(std::size_t size) {
  velocity_.emplace_back(size, 0.0);
  return velocity_.size() - 1;
}

void MomentumSgd::step(std::size_t slot, std::span<double> params, std::span<const double> gradient, double scale) {
  auto& v = velocity_.at(slot);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = momentum_ * v[i] - lr_ * scale * gradient[i];
    params[i] += v[i];
  }
}

TrainResult sgd_train(NetworkParams net, const Dataset& data, const TrainConfig& cfg) {
  validate_train_config(cfg);
  check_input(net, data.feature_dim);
  if (data.num_labels != net.num_labels()) throw InvalidArgument("sgd_train: dataset and network label counts differ");

  MomentumSgd opt(cfg.learning_rate, cfg.momentum);
  std::vector<std::size_t> slots;
  for (const Layer& l : net.layers) {
    slots.push_back(opt.add(l.weights.size()));
    opt.add(l.biases.size());
  }
  std::size_t first_trainable = 0;
  while (first_trainable < net.layers.size() && net.layers[first_trainable].frozen) ++first_trainable;

  const DenseMatrix features = feature_matrix(data);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  TrainResult result;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      DenseMatrix x(end - begin, data.feature_dim);
      std::vector<std::vector<std::size_t>> labels;
      labels.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        std::copy(features.row(order[i]).begin(), features.row(order[i]).end(), x.row(i - begin).begin());
        labels.push_back(data.examples[order[i]].labels);
      }
      const StackTrace trace = forward_stack(net.layers, x);
      const DenseMatrix scores = scores_from(trace.pre.back());
      for (std::size_t r = 0; r < scores.rows(); ++r) epoch_loss += loss(scores.row(r), labels[r]);
      if (first_trainable == net.layers.size()) continue;

      const StackGradient grads =
          backward_stack(net.layers, x, trace, loss_gradient(scores, labels), false, first_trainable);
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (std::size_t l = first_trainable; l < net.layers.size(); ++l) {
        if (net.layers[l].frozen) continue;
        opt.step(slots[l], net.layers[l].weights.entries(), grads.layers[l].weights.entries(), scale);
        opt.step(slots[l] + 1, net.layers[l].biases, grads.layers[l].biases, scale);
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  result.params = std::move(net);
  return result;
}

std::uint64_t parameter_digest(std::span<const Layer> layers) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::span<const double> values) {
    for (double v : values) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  for (const Layer& l : layers) {
    mix(l.weights.entries());
    mix(l.biases);
  }
  return h;
}

void write_layer_line(std::ostream& out, const std::filesystem::path& manifest, const std::string& stem,
                      const Layer& layer) {
  const std::string weight_file = stem + ".weights.txt";
  const std::string bias_file = stem + ".biases.txt";
  const auto dir = manifest.parent_path();
  save_matrix(dir / weight_file, layer.weights);
  save_matrix(dir / bias_file, DenseMatrix(layer.biases.size(), 1, layer.biases));
  out << layer.spec.input_dim << ' ' << layer.spec.output_dim << ' ' << to_string(layer.spec.activation) << ' '
      << (layer.frozen ? 1 : 0) << ' ' << weight_file << ' ' << bias_file << '\n';
}

Layer read_layer_line(textio::LineReader& reader, const std::filesystem::path& manifest, std::string_view line) {
  const auto tokens = textio::split_ws(line);
  if (tokens.size() != 6) {
    reader.fail("layer line must be `input_dim output_dim activation frozen weight_file bias_file`");
  }
  Layer layer;
  layer.spec.input_dim = reader.to_count(tokens[0]);
  layer.spec.output_dim = reader.to_count(tokens[1]);
  try {
    layer.spec.activation = activation_from_string(tokens[2]);
  } catch (const InvalidArgument& e) {
    reader.fail(e.what());
  }
  if (tokens[3] != "0" && tokens[3] != "1") reader.fail("frozen flag must be 0 or 1");
  layer.frozen = tokens[3] == "1";
  const auto dir = manifest.parent_path();
  layer.weights = load_matrix(dir / std::string(tokens[4]));
  const DenseMatrix b = load_matrix(dir / std::string(tokens[5]));
  if (b.cols() != 1) reader.fail("bias file must hold a single column");
  layer.biases.assign(b.entries().begin(), b.entries().end());
  if (layer.weights.rows() != layer.spec.output_dim || layer.weights.cols() != layer.spec.input_dim ||
      layer.biases.size() != layer.spec.output_dim) {
    reader.fail("layer files disagree with the declared dimensions");
  }
  return layer;
}

void save_network(const std::filesystem::path& manifest, const NetworkParams& net) {
  validate_network(net);
  auto out = textio::open_output(manifest);
  textio::write_tag(out, "model");
  out << "layers " << net.layers.size() << " trunk_depth " << net.trunk_depth << '\n';
  const std::string stem = manifest.stem().string();
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    write_layer_line(out, manifest, stem + ".layer" + std::to_string(i), net.layers[i]);
}

NetworkParams load_network(const std::filesystem::path& manifest) {
  auto in = textio::open_input(manifest);
  textio::LineReader reader(in, manifest.string());
  textio::expect_tag(reader, "model");
  const auto header = textio::split_ws(reader.next("`layers N trunk_depth T`"));
  if (header.size() != 4 || header[0] != "layers" || header[2] != "trunk_depth") {
    reader.fail("expected `layers N trunk_depth T`");
  }
  const std::size_t n = reader.to_count(header[1]);
  NetworkParams net;
  net.trunk_depth = reader.to_count(header[3]);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string line = reader.next("layer " + std::to_string(i));
    net.layers.push_back(read_layer_line(reader, manifest, line));
  }
  try {
    validate_network(net);
  } catch (const InvalidArgument& e) {
    throw ValidationError(manifest.string() + ": " + e.what());
  }
  return net;
}

}  // namespace specaug
