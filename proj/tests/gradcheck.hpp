#pragma once

// Central finite-difference checks of the analytic gradients.
//
// Relative error per parameter is |analytic - numeric| / max(|analytic|,
// |numeric|, kGradFloor); below the floor the comparison is effectively
// absolute, where round-off in the loss dominates the quotient.

#include <algorithm>
#include <cmath>
#include <vector>

#include "specaug/augment.hpp"
#include "specaug/network.hpp"
#include "specaug/rng.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kGradFloor = 1e-4;

struct Result {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / scale;
}

inline double batch_loss(const specaug::NetworkParams& net, const specaug::DenseMatrix& x,
                         const std::vector<std::vector<std::size_t>>& labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) total += specaug::loss(specaug::forward(net, x.row(r)).scores, labels[r]);
  return total;
}

inline double batch_loss(const specaug::AugmentedNetwork& net, const specaug::DenseMatrix& x,
                         const std::vector<std::vector<std::size_t>>& labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) total += specaug::loss(specaug::forward_augmented(net, x.row(r)), labels[r]);
  return total;
}

// Perturbs one parameter in place and returns the central difference.
template <typename Net>
double numeric(Net& net, double& param, const specaug::DenseMatrix& x,
               const std::vector<std::vector<std::size_t>>& labels) {
  const double saved = param;
  param = saved + kStep;
  const double up = batch_loss(net, x, labels);
  param = saved - kStep;
  const double down = batch_loss(net, x, labels);
  param = saved;
  return (up - down) / (2.0 * kStep);
}

template <typename Net>
void check_layer(Net& net, specaug::Layer& layer, const specaug::LayerGradient& g, const specaug::DenseMatrix& x,
                 const std::vector<std::vector<std::size_t>>& labels, Result& out,
                 const specaug::AugmentedNetwork* masked = nullptr) {
  for (std::size_t o = 0; o < layer.spec.output_dim; ++o) {
    for (std::size_t i = 0; i < layer.spec.input_dim; ++i) {
      if (masked && !masked->mask(o, i)) continue;
      const double n = numeric(net, layer.weights(o, i), x, labels);
      out.max_relative_error = std::max(out.max_relative_error, relative_error(g.weights(o, i), n));
      ++out.checked;
    }
    const double n = numeric(net, layer.biases[o], x, labels);
    out.max_relative_error = std::max(out.max_relative_error, relative_error(g.biases[o], n));
    ++out.checked;
  }
}

inline Result check(specaug::NetworkParams net, const specaug::DenseMatrix& x,
                    const std::vector<std::vector<std::size_t>>& labels) {
  const auto grads = specaug::backward_batch(net, x, labels);
  Result out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) check_layer(net, net.layers[l], grads.layers[l], x, labels, out);
  return out;
}

// Every parameter of every part, including the frozen trunk and generalist
// whose gradients are still reported exactly. Masked classifier entries are
// skipped here; they are reported as exact zeros instead.
inline Result check(specaug::AugmentedNetwork net, const specaug::DenseMatrix& x,
                    const std::vector<std::vector<std::size_t>>& labels) {
  const auto grads = specaug::backward_augmented(net, x, labels);
  Result out;
  for (std::size_t l = 0; l < net.trunk.size(); ++l) check_layer(net, net.trunk[l], grads.trunk[l], x, labels, out);
  for (std::size_t l = 0; l < net.generalist.size(); ++l)
    check_layer(net, net.generalist[l], grads.generalist[l], x, labels, out);
  for (std::size_t h = 0; h < net.heads.size(); ++h)
    for (std::size_t l = 0; l < net.heads[h].size(); ++l)
      check_layer(net, net.heads[h][l], grads.heads[h][l], x, labels, out);
  const specaug::AugmentedNetwork mask_source = net;
  check_layer(net, net.classifier, grads.classifier, x, labels, out, &mask_source);
  return out;
}

// Fresh layers have zero biases, so a dead input row puts pre-activations
// exactly on the rectifier kink where no derivative exists. Random biases
// move the check point off it.
inline void jitter_biases(std::vector<specaug::Layer>& layers, specaug::Rng& rng) {
  for (auto& l : layers)
    for (double& b : l.biases) b = rng.uniform(-0.5, 0.5);
}

inline void jitter_biases(specaug::NetworkParams& net, specaug::Rng& rng) { jitter_biases(net.layers, rng); }

inline void jitter_biases(specaug::AugmentedNetwork& net, specaug::Rng& rng) {
  jitter_biases(net.trunk, rng);
  jitter_biases(net.generalist, rng);
  for (auto& h : net.heads) jitter_biases(h, rng);
  for (double& b : net.classifier.biases) b = rng.uniform(-0.5, 0.5);
}

inline bool masked_gradients_zero(const specaug::AugmentedNetwork& net, const specaug::DenseMatrix& x,
                                  const std::vector<std::vector<std::size_t>>& labels) {
  const auto grads = specaug::backward_augmented(net, x, labels);
  for (std::size_t o = 0; o < net.num_labels(); ++o)
    for (std::size_t i = 0; i < net.classifier.spec.input_dim; ++i)
      if (!net.mask(o, i) && grads.classifier.weights(o, i) != 0.0) return false;
  return true;
}

}  // namespace gradcheck
