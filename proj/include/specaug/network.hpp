#pragma once

// Dense multi-label classifier: trunk layers, a generalist fully connected
// stack and a logistic classifier layer, trained by mini-batch SGD with
// momentum. Layers can be frozen individually.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specaug/dataset.hpp"
#include "specaug/linalg.hpp"
#include "specaug/rng.hpp"
#include "specaug/textio.hpp"

namespace specaug {

enum class Activation { rectifier, logistic, identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

struct LayerSpec {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  Activation activation = Activation::rectifier;

  bool operator==(const LayerSpec&) const = default;
};

struct Layer {
  LayerSpec spec;
  DenseMatrix weights;          // output_dim x input_dim
  std::vector<double> biases;   // output_dim
  bool frozen = false;

  bool operator==(const Layer&) const = default;
};

struct NetworkParams {
  std::vector<Layer> layers;
  // The first trunk_depth layers form the trunk; the last layer is the
  // classifier; everything between is the generalist stack.
  std::size_t trunk_depth = 0;

  std::size_t input_dim() const { return layers.front().spec.input_dim; }
  std::size_t num_labels() const { return layers.back().spec.output_dim; }

  bool operator==(const NetworkParams&) const = default;
};

// Throws InvalidArgument if layer dimensions do not chain or shapes are off.
void validate_network(const NetworkParams& net);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases,
// nothing frozen.
Layer init_layer(const LayerSpec& spec, Rng& rng);
NetworkParams init_network(std::span<const LayerSpec> specs, std::uint64_t seed, std::size_t trunk_depth = 0);

// Layer specs for trunk -> generalist -> classifier. Hidden layers use
// rectifiers; the classifier is logistic.
std::vector<LayerSpec> classifier_specs(std::size_t input_dim, std::span<const std::size_t> trunk_dims,
                                        std::span<const std::size_t> generalist_dims, std::size_t num_labels);

double activate(Activation a, double z);
double logistic(double z);

// Activations of one stack of layers over a batch (one example per row).
struct StackTrace {
  std::vector<DenseMatrix> pre;   // pre-activations per layer
  std::vector<DenseMatrix> post;  // activations per layer
};

StackTrace forward_stack(std::span<const Layer> layers, const DenseMatrix& input);

struct LayerGradient {
  DenseMatrix weights;
  std::vector<double> biases;
  bool frozen = false;  // copied from the layer; the gradient is still exact
};

struct StackGradient {
  std::vector<LayerGradient> layers;
  DenseMatrix input;  // d loss / d input; 1x1 zero when not requested
};

// Backpropagates d_pre_last (gradient w.r.t. the last layer's pre-activation)
// through the stack. Gradients are summed over the batch rows. Layers below
// first_layer are skipped and get zero gradients; the input gradient is only
// available when first_layer is 0.
StackGradient backward_stack(std::span<const Layer> layers, const DenseMatrix& input, const StackTrace& trace,
                             DenseMatrix d_pre_last, bool want_input_gradient, std::size_t first_layer = 0);

// d loss / d pre-activation given d loss / d activation.
DenseMatrix activation_backward(Activation a, const DenseMatrix& pre, const DenseMatrix& post,
                                const DenseMatrix& d_post);

struct ForwardResult {
  std::vector<double> scores;               // logistic of the final pre-activation
  std::vector<std::vector<double>> hidden;  // post-activation of every layer
  std::vector<std::vector<double>> pre;     // pre-activation of every layer
};

ForwardResult forward(const NetworkParams& net, std::span<const double> features);

// Scores for a whole dataset, one row per example.
DenseMatrix predict_scores(const NetworkParams& net, const Dataset& data);

inline constexpr double kScoreClamp = 1e-7;

// Sum over classes of binary cross-entropy. The argument of each logarithm
// (s for a present label, 1 - s for an absent one) is floored at 1e-7, so a
// perfect prediction costs exactly 0.
double loss(std::span<const double> scores, std::span<const std::size_t> labels);

// d loss / d final pre-activation for a batch of scores. Zero where the floor
// is active, since the floored loss is flat there.
DenseMatrix loss_gradient(const DenseMatrix& scores, std::span<const std::vector<std::size_t>> labels);

struct Gradients {
  std::vector<LayerGradient> layers;
  double loss = 0.0;  // summed over the examples
};

Gradients backward(const NetworkParams& net, std::span<const double> features, std::span<const std::size_t> labels);
// Summed over a batch (rows of features).
Gradients backward_batch(const NetworkParams& net, const DenseMatrix& features,
                         std::span<const std::vector<std::size_t>> labels);

double mean_loss(const NetworkParams& net, const Dataset& data);

// Classical momentum: v <- momentum * v - lr * g; w <- w + v.
class MomentumSgd {
 public:
  MomentumSgd(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}
  // Registers a parameter block; returns its slot.
  std::size_t add(std::size_t size);
  void step(std::size_t slot, std::span<double> params, std::span<const double> gradient, double scale);

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

struct TrainResult {
  NetworkParams params;
  std::vector<double> loss_trace;  // mean per-example loss in each epoch
};

// Mini-batch SGD over the whole network; frozen layers are left untouched.
TrainResult sgd_train(NetworkParams net, const Dataset& data, const TrainConfig& cfg);

// FNV-1a over the raw bytes of weights and biases.
std::uint64_t parameter_digest(std::span<const Layer> layers);

// Manifest: format tag, `layers N trunk_depth T`, then one line per layer
// `input_dim output_dim activation frozen weight_file bias_file`. Layer
// files are written next to the manifest, named after its stem.
void save_network(const std::filesystem::path& manifest, const NetworkParams& net);
NetworkParams load_network(const std::filesystem::path& manifest);

// Helpers shared with the augmented manifest.
void write_layer_line(std::ostream& out, const std::filesystem::path& manifest, const std::string& stem,
                      const Layer& layer);
Layer read_layer_line(textio::LineReader& reader, const std::filesystem::path& manifest, std::string_view line);

}  // namespace specaug
