#pragma once

// Specialist augmentation of a trained classifier. Each label cluster gets its
// own freshly initialized stack of hidden layers running in parallel with the
// generalist stack; the rebuilt classifier sees the generalist features for
// every label and head h's features only for labels in cluster h. Trunk and
// generalist stay frozen; heads and classifier train.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "specaug/dataset.hpp"
#include "specaug/linalg.hpp"
#include "specaug/network.hpp"
#include "specaug/partition.hpp"

namespace specaug {

enum class AttachPoint { trunk, after_generalist };

std::string_view to_string(AttachPoint a);
AttachPoint attach_point_from_string(std::string_view s);

struct AugmentationSpec {
  LabelPartition partition;
  std::vector<std::size_t> head_layer_dims;  // rectifier layers, input side first
  std::uint64_t head_seed = 0;
  AttachPoint attach = AttachPoint::trunk;
};

class AugmentedNetwork {
 public:
  std::vector<Layer> trunk;
  std::vector<Layer> generalist;
  std::vector<std::vector<Layer>> heads;  // heads[h] serves partition.clusters[h]
  Layer classifier;                       // C x (generalist width + sum of head widths)
  LabelPartition partition;
  AttachPoint attach = AttachPoint::trunk;

  std::size_t input_dim() const;
  std::size_t num_labels() const { return classifier.spec.output_dim; }
  std::size_t trunk_width() const;
  std::size_t generalist_width() const;
  std::size_t attach_width() const;
  // First classifier input column fed by head h.
  std::size_t head_offset(std::size_t h) const;

  // True where the classifier may hold a nonzero weight.
  bool mask(std::size_t label, std::size_t column) const { return mask_[label * classifier.spec.input_dim + column]; }
  // Rebuilds the connectivity mask from the partition and head widths.
  void rebuild_mask();

 private:
  std::vector<unsigned char> mask_;
};

// Throws InvalidArgument on shape problems, ValidationError if a masked
// classifier weight is nonzero.
void validate_augmented(const AugmentedNetwork& net);

// Head width default: half the generalist width, two layers.
std::vector<std::size_t> default_head_dims(std::size_t generalist_width);

AugmentedNetwork augment(const NetworkParams& base, const AugmentationSpec& spec);

struct AugmentedTrace {
  StackTrace trunk;
  StackTrace generalist;
  std::vector<StackTrace> heads;
  DenseMatrix features;        // classifier input: [generalist | head 0 | head 1 | ...]
  DenseMatrix classifier_pre;
  DenseMatrix scores;
};

AugmentedTrace forward_augmented_batch(const AugmentedNetwork& net, const DenseMatrix& input);
std::vector<double> forward_augmented(const AugmentedNetwork& net, std::span<const double> features);
DenseMatrix predict_scores(const AugmentedNetwork& net, const Dataset& data);

struct AugmentedGradients {
  std::vector<LayerGradient> trunk;       // exact, flagged frozen
  std::vector<LayerGradient> generalist;  // exact, flagged frozen
  std::vector<std::vector<LayerGradient>> heads;
  LayerGradient classifier;  // masked entries are exactly zero
  double loss = 0.0;
};

// Summed over the batch rows.
AugmentedGradients backward_augmented(const AugmentedNetwork& net, const DenseMatrix& features,
                                      std::span<const std::vector<std::size_t>> labels);

double mean_loss(const AugmentedNetwork& net, const Dataset& data);

struct AugmentedTrainResult {
  AugmentedNetwork network;
  std::vector<double> loss_trace;
};

// SGD over heads and classifier only. Trunk and generalist outputs are
// computed once, since those layers never change here.
AugmentedTrainResult train_augmented(AugmentedNetwork net, const Dataset& data, const TrainConfig& cfg);

// Manifest: format tag, `attach`, `partition <file>`, then `trunk N`,
// `generalist N`, `heads G` with `head L` blocks, and `classifier`, each
// followed by layer lines in the model-manifest layout.
void save_augmented(const std::filesystem::path& manifest, const AugmentedNetwork& net);
AugmentedNetwork load_augmented(const std::filesystem::path& manifest);

}  // namespace specaug
