#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "asfv/common.hpp"

namespace asfv {

/// Row-major batch x features.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

enum class Activation { Tanh, Linear };

/// y = act(x W^T + b), W stored out x in.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
  Activation act = Activation::Tanh;
  std::uint64_t version = 0;  // bumped on every parameter write
};

/// Dense network split at a cut: layers [0, cut) run on the vehicle, the
/// rest on the EC. cut = 0 puts everything on the EC.
struct SplitModel {
  std::vector<DenseLayer> layers;

  std::size_t depth() const { return layers.size(); }
  std::size_t input_dim() const { return layers.front().in; }
  std::size_t num_classes() const { return layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Flat layout: layer 0 weights, layer 0 bias, layer 1 weights, ...
  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (const auto& l : layers) {
      p.insert(p.end(), l.weight.begin(), l.weight.end());
      p.insert(p.end(), l.bias.begin(), l.bias.end());
    }
    return p;
  }

  /// Vehicle-side parameters (layers before the cut).
  std::vector<double> vehicle_parameters(std::size_t cut) const {
    std::vector<double> p;
    for (std::size_t l = 0; l < cut && l < layers.size(); ++l) {
      p.insert(p.end(), layers[l].weight.begin(), layers[l].weight.end());
      p.insert(p.end(), layers[l].bias.begin(), layers[l].bias.end());
    }
    return p;
  }

  std::vector<double> server_parameters(std::size_t cut) const {
    std::vector<double> p;
    for (std::size_t l = cut; l < layers.size(); ++l) {
      p.insert(p.end(), layers[l].weight.begin(), layers[l].weight.end());
      p.insert(p.end(), layers[l].bias.begin(), layers[l].bias.end());
    }
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) throw DomainError("parameter vector has the wrong length");
    std::size_t k = 0;
    for (auto& l : layers) {
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(k), l.weight.size(), l.weight.begin());
      k += l.weight.size();
      std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(k), l.bias.size(), l.bias.begin());
      k += l.bias.size();
      ++l.version;
    }
  }
};

/// dims = {input, hidden..., classes}. Tanh between layers, linear logits.
/// Glorot-uniform weights, zero biases.
inline SplitModel make_model(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw DomainError("model needs at least an input and an output size");
  SplitModel m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer d;
    d.in = dims[l];
    d.out = dims[l + 1];
    if (d.in == 0 || d.out == 0) throw DomainError("zero-width layer");
    const double a = std::sqrt(6.0 / static_cast<double>(d.in + d.out));
    std::uniform_real_distribution<double> u(-a, a);
    d.weight.resize(d.in * d.out);
    for (double& w : d.weight) w = u(rng);
    d.bias.assign(d.out, 0.0);
    d.act = l + 2 == dims.size() ? Activation::Linear : Activation::Tanh;
    m.layers.push_back(std::move(d));
  }
  return m;
}

struct LayerGrad {
  std::vector<double> weight;
  std::vector<double> bias;
};

/// Activations kept between a forward and its backward.
struct ForwardCache {
  std::size_t first = 0;            // first layer of the range
  std::vector<Matrix> inputs;       // input of each layer in the range
  std::vector<Matrix> outputs;      // post-activation output of each layer
  std::vector<std::uint64_t> versions;
  const SplitModel* model = nullptr;
  bool live = false;
};

namespace detail {

inline Matrix dense_forward(const DenseLayer& l, const Matrix& x) {
  if (x.cols != l.in) throw DomainError("input width " + std::to_string(x.cols) + " != layer width " + std::to_string(l.in));
  Matrix y(x.rows, l.out);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* xi = &x.v[i * x.cols];
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* w = &l.weight[o * l.in];
      double z = l.bias[o];
      for (std::size_t k = 0; k < l.in; ++k) z += w[k] * xi[k];
      y(i, o) = l.act == Activation::Tanh ? std::tanh(z) : z;
    }
  }
  return y;
}

// Given dL/d(output), returns dL/d(input) and fills the parameter gradients.
inline Matrix dense_backward(const DenseLayer& l, const Matrix& input, const Matrix& output, const Matrix& d_out,
                             LayerGrad& g) {
  Matrix dz = d_out;
  if (l.act == Activation::Tanh) {
    for (std::size_t k = 0; k < dz.v.size(); ++k) dz.v[k] *= 1.0 - output.v[k] * output.v[k];
  }
  g.weight.assign(l.weight.size(), 0.0);
  g.bias.assign(l.out, 0.0);
  Matrix d_in(input.rows, l.in);
  for (std::size_t i = 0; i < input.rows; ++i) {
    const double* xi = &input.v[i * input.cols];
    double* di = &d_in.v[i * l.in];
    for (std::size_t o = 0; o < l.out; ++o) {
      const double dzo = dz(i, o);
      if (dzo == 0.0) continue;
      double* gw = &g.weight[o * l.in];
      const double* w = &l.weight[o * l.in];
      for (std::size_t k = 0; k < l.in; ++k) {
        gw[k] += dzo * xi[k];
        di[k] += dzo * w[k];
      }
      g.bias[o] += dzo;
    }
  }
  return d_in;
}

inline void sgd_apply(DenseLayer& l, const LayerGrad& g, double lr) {
  if (lr == 0.0) return;
  for (std::size_t k = 0; k < l.weight.size(); ++k) l.weight[k] -= lr * g.weight[k];
  for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias[k] -= lr * g.bias[k];
  ++l.version;
}

inline Matrix forward_range(const SplitModel& m, std::size_t first, std::size_t last, const Matrix& x,
                            ForwardCache* cache) {
  Matrix a = x;
  if (cache) {
    cache->first = first;
    cache->inputs.clear();
    cache->outputs.clear();
    cache->versions.clear();
    cache->model = &m;
    cache->live = true;
  }
  for (std::size_t l = first; l < last; ++l) {
    Matrix y = dense_forward(m.layers[l], a);
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->outputs.push_back(y);
      cache->versions.push_back(m.layers[l].version);
    }
    a = std::move(y);
  }
  return a;
}

inline Matrix backward_range(const SplitModel& m, const ForwardCache& cache, Matrix d_out,
                             std::vector<LayerGrad>& grads) {
  const std::size_t n = cache.inputs.size();
  grads.assign(n, {});
  for (std::size_t r = n; r-- > 0;) {
    d_out = dense_backward(m.layers[cache.first + r], cache.inputs[r], cache.outputs[r], d_out, grads[r]);
  }
  return d_out;
}

}  // namespace detail

/// Mean cross-entropy of softmax(logits) and its gradient w.r.t. the logits.
inline double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* d_logits) {
  if (labels.size() != logits.rows) throw DomainError("label count does not match batch size");
  const double inv_b = 1.0 / static_cast<double>(logits.rows);
  double loss = 0.0;
  if (d_logits) *d_logits = Matrix(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols) {
      throw DomainError("label " + std::to_string(y) + " out of range");
    }
    const double* z = &logits.v[i * logits.cols];
    const double zmax = *std::max_element(z, z + logits.cols);
    double s = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) s += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(s);
    loss += lse - z[y];
    if (d_logits) {
      for (std::size_t c = 0; c < logits.cols; ++c) {
        const double p = std::exp(z[c] - lse);
        (*d_logits)(i, c) = (p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_b;
      }
    }
  }
  return loss * inv_b;
}

inline void check_cut(const SplitModel& m, std::size_t cut) {
  if (cut > m.depth()) throw DomainError("cut " + std::to_string(cut) + " beyond the last layer");
}

/// Smashed activations A at the cut; cut = 0 returns the batch itself.
inline Matrix vehicle_forward(const SplitModel& vehicle, std::size_t cut, const Matrix& batch, ForwardCache& cache) {
  check_cut(vehicle, cut);
  if (batch.cols != vehicle.input_dim()) throw DomainError("batch width does not match the input layer");
  return detail::forward_range(vehicle, 0, cut, batch, &cache);
}

struct ServerStep {
  double loss = 0.0;
  Matrix grad_smashed;                 // dL/dA
  std::vector<LayerGrad> grads;        // server-side layers, in order
};

/// EC forward and backward on the smashed batch; applies the server-side SGD
/// step after all gradients are taken at the pre-step parameters.
inline ServerStep server_forward_backward(SplitModel& server, std::size_t cut, const Matrix& smashed,
                                          std::span<const int> labels, double lr) {
  check_cut(server, cut);
  const std::size_t width = cut == 0 ? server.input_dim() : server.layers[cut - 1].out;
  if (smashed.cols != width) throw DomainError("smashed data width does not match the cut layer");
  ForwardCache cache;
  const Matrix logits = detail::forward_range(server, cut, server.depth(), smashed, &cache);
  Matrix d_logits;
  ServerStep out;
  out.loss = softmax_cross_entropy(logits, labels, &d_logits);
  out.grad_smashed = detail::backward_range(server, cache, std::move(d_logits), out.grads);
  for (std::size_t r = 0; r < out.grads.size(); ++r) detail::sgd_apply(server.layers[cut + r], out.grads[r], lr);
  return out;
}

/// Chains grad_A through the vehicle-side layers and applies the SGD step.
/// Returns the vehicle-side gradients.
inline std::vector<LayerGrad> vehicle_backward(SplitModel& vehicle, std::size_t cut, const Matrix& grad_smashed,
                                               ForwardCache& cache, double lr) {
  if (!cache.live || cache.model != &vehicle) throw DomainError("no forward pass cached for this model");
  if (cache.inputs.size() != cut || cache.first != 0) throw DomainError("cached forward used a different cut");
  for (std::size_t l = 0; l < cut; ++l) {
    if (vehicle.layers[l].version != cache.versions[l]) {
      throw DomainError("stale activation cache: vehicle-side layer " + std::to_string(l) + " changed since forward");
    }
  }
  const std::size_t width = cut == 0 ? vehicle.input_dim() : vehicle.layers[cut - 1].out;
  if (grad_smashed.cols != width || (cut > 0 && grad_smashed.rows != cache.outputs.back().rows)) {
    throw DomainError("smashed gradient shape does not match the cached forward");
  }
  std::vector<LayerGrad> grads;
  detail::backward_range(vehicle, cache, grad_smashed, grads);
  for (std::size_t l = 0; l < cut; ++l) detail::sgd_apply(vehicle.layers[l], grads[l], lr);
  cache.live = false;
  return grads;
}

/// One SGD step through the split pipeline. `vehicle` and `server` may be
/// the same object (their layer ranges are disjoint).
inline double split_sgd_step(SplitModel& vehicle, SplitModel& server, std::size_t cut, const Matrix& x,
                             std::span<const int> y, double lr) {
  ForwardCache cache;
  const Matrix a = vehicle_forward(vehicle, cut, x, cache);
  const ServerStep s = server_forward_backward(server, cut, a, y, lr);
  vehicle_backward(vehicle, cut, s.grad_smashed, cache, lr);
  return s.loss;
}

/// Loss and full gradient (flat, parameters() layout) via the split pipeline
/// with a zero step.
inline double split_loss_and_gradient(const SplitModel& model, std::size_t cut, const Matrix& x, std::span<const int> y,
                                      std::vector<double>& grad) {
  SplitModel m = model;
  ForwardCache cache;
  const Matrix a = vehicle_forward(m, cut, x, cache);
  const ServerStep s = server_forward_backward(m, cut, a, y, 0.0);
  const std::vector<LayerGrad> vg = vehicle_backward(m, cut, s.grad_smashed, cache, 0.0);
  grad.clear();
  for (const auto* part : {&vg, &s.grads}) {
    for (const auto& g : *part) {
      grad.insert(grad.end(), g.weight.begin(), g.weight.end());
      grad.insert(grad.end(), g.bias.begin(), g.bias.end());
    }
  }
  return s.loss;
}

inline Matrix predict_logits(const SplitModel& m, const Matrix& x) {
  return detail::forward_range(m, 0, m.depth(), x, nullptr);
}

/// Aggregation: omega + sum_n p_n (omega^n - omega), evaluated as
/// (1 - sum p) omega + sum p_n omega^n so that p = (1) returns omega^1 exactly.
inline std::vector<double> aggregate(const std::vector<std::vector<double>>& models, std::span<const double> p,
                                     std::span<const double> previous) {
  if (models.size() != p.size()) throw DomainError("one probability per model required");
  double psum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw DomainError("negative aggregation weight");
    psum += x;
  }
  std::vector<double> out(previous.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - psum) * previous[k];
  for (std::size_t n = 0; n < models.size(); ++n) {
    if (models[n].size() != previous.size()) throw DomainError("model " + std::to_string(n) + " has the wrong length");
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += p[n] * models[n][k];
  }
  return out;
}

}  // namespace asfv
