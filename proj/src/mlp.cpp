#include "ectr/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ectr/error.hpp"

namespace ectr {

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected tanh, relu, identity)");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::identity: return x;
  }
  return x;
}

// Derivative expressed through the pre-activation.
double activate_prime(Activation a, double pre) {
  switch (a) {
    case Activation::tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

void check_widths(std::span<const std::size_t> widths) {
  if (widths.size() < 2) throw InputError("network needs at least input and output widths");
  for (auto w : widths)
    if (w == 0) throw InputError("network widths must be positive");
}

}  // namespace

PredictorParams PredictorParams::glorot(std::span<const std::size_t> widths,
                                        Activation activation, Rng& rng, double gain) {
  check_widths(widths);
  PredictorParams p;
  p.activation = activation;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto fan_in = widths[l];
    const auto fan_out = widths[l + 1];
    const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_in, fan_out), Vector(fan_out, 0.0)};
    for (double& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

PredictorParams PredictorParams::zeros(std::span<const std::size_t> widths, Activation activation) {
  check_widths(widths);
  PredictorParams p;
  p.activation = activation;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    p.layers.push_back({Matrix(widths[l], widths[l + 1]), Vector(widths[l + 1], 0.0)});
  return p;
}

std::size_t PredictorParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.rows();
}

std::size_t PredictorParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.cols();
}

std::size_t PredictorParams::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Vector PredictorParams::flatten() const {
  Vector flat;
  flat.reserve(num_params());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void PredictorParams::assign(std::span<const double> flat) {
  if (flat.size() != num_params())
    throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                     std::to_string(num_params()));
  auto it = flat.begin();
  for (auto& l : layers) {
    std::copy_n(it, l.weight.size(), l.weight.data().begin());
    it += static_cast<std::ptrdiff_t>(l.weight.size());
    std::copy_n(it, l.bias.size(), l.bias.begin());
    it += static_cast<std::ptrdiff_t>(l.bias.size());
  }
}

Vector PredictorGrads::flatten() const {
  Vector flat;
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

ForwardResult forward(const PredictorParams& params, const Matrix& x) {
  if (params.layers.empty()) throw ShapeError("network has no layers");
  if (x.cols() != params.input_dim())
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(params.input_dim()));
  ForwardResult out;
  Matrix h = x;
  const std::size_t depth = params.layers.size();
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = params.layers[l];
    Matrix z = matmul(h, layer.weight);
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += layer.bias[j];
    out.cache.inputs.push_back(std::move(h));
    if (l + 1 < depth) {
      h = z;
      for (double& v : h.data()) v = activate(params.activation, v);
    } else {
      out.logits = z;
    }
    out.cache.preact.push_back(std::move(z));
  }
  return out;
}

Matrix predict(const PredictorParams& params, const Matrix& x) {
  return forward(params, x).logits;
}

PredictorGrads backprop(const PredictorParams& params, const ForwardCache& cache,
                        const Matrix& upstream) {
  const std::size_t depth = params.layers.size();
  if (cache.inputs.size() != depth || cache.preact.size() != depth)
    throw ShapeError("forward cache does not belong to this network");
  const Matrix& logits = cache.preact.back();
  if (upstream.rows() != logits.rows() || upstream.cols() != logits.cols())
    throw ShapeError("upstream gradient shape does not match logits");

  PredictorGrads grads;
  grads.layers.resize(depth);
  Matrix delta = upstream;
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = params.layers[l];
    auto& g = grads.layers[l];
    g.weight = matmul_tn(cache.inputs[l], delta);
    g.bias.assign(layer.bias.size(), 0.0);
    for (std::size_t i = 0; i < delta.rows(); ++i)
      for (std::size_t j = 0; j < delta.cols(); ++j) g.bias[j] += delta(i, j);
    if (l == 0) break;
    Matrix prev = matmul_nt(delta, layer.weight);
    const Matrix& pre = cache.preact[l - 1];
    for (std::size_t k = 0; k < prev.size(); ++k)
      prev.data()[k] *= activate_prime(params.activation, pre.data()[k]);
    delta = std::move(prev);
  }
  return grads;
}

}  // namespace ectr
