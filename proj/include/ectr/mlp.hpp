#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ectr/matrix.hpp"
#include "ectr/rng.hpp"

namespace ectr {

enum class Activation { tanh, relu, identity };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

/// Affine map y = x·weight + bias; weight is (in × out).
struct DenseLayer {
  Matrix weight;
  Vector bias;
};

/// Feed-forward network. The activation is applied after every layer except the last.
///
/// Used for the predictor Φ and, with a scalar or E-way head, for the tail-score and
/// environment-inference adversaries. `probe_w` is the fixed scalar stationarity probe;
/// it is not part of the flattened parameter vector, so no optimizer can move it.
struct PredictorParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::tanh;
  double probe_w = 1.0;

  /// widths = {input, hidden..., output}. Glorot-uniform weights scaled by `gain`, zero biases.
  static PredictorParams glorot(std::span<const std::size_t> widths, Activation activation,
                                Rng& rng, double gain = 1.0);
  static PredictorParams zeros(std::span<const std::size_t> widths, Activation activation);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t num_params() const;

  /// Layer by layer: weight (row-major), then bias.
  Vector flatten() const;
  void assign(std::span<const double> flat);
};

/// Per-layer inputs and pre-activations retained for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preact;
};

struct ForwardResult {
  Matrix logits;
  ForwardCache cache;
};

ForwardResult forward(const PredictorParams& params, const Matrix& x);
/// Forward pass without retaining the cache.
Matrix predict(const PredictorParams& params, const Matrix& x);

struct PredictorGrads {
  std::vector<DenseLayer> layers;
  /// Same layout as PredictorParams::flatten.
  Vector flatten() const;
};

/// Reverse-mode pass: gradient of Σ_ij upstream(i,j)·logits(i,j) with respect to every
/// weight and bias.
PredictorGrads backprop(const PredictorParams& params, const ForwardCache& cache,
                        const Matrix& upstream);

}  // namespace ectr
