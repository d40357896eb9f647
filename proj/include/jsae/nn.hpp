#pragma once

// Small dense networks with tanh activations, exact reverse-mode gradients,
// Adam, and the probability primitives used by the losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "jsae/errors.hpp"
#include "jsae/rng.hpp"

namespace jsae {

enum class Activation { identity, tanh };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out
  Activation activation = Activation::tanh;
};

struct Mlp {
  std::vector<Dense> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Same shape, every parameter zero. Used as a gradient accumulator.
  Mlp zeros_like() const {
    Mlp z = *this;
    z.set_zero();
    return z;
  }

  void set_zero() {
    for (auto& l : layers) {
      std::fill(l.weight.begin(), l.weight.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }

  void scale(double s) {
    for (auto& l : layers) {
      for (double& w : l.weight) w *= s;
      for (double& b : l.bias) b *= s;
    }
  }

  bool same_shape(const Mlp& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (layers[k].in != other.layers[k].in || layers[k].out != other.layers[k].out) return false;
    }
    return true;
  }

  // Throws ConfigError if layer dimensions do not chain or values are non-finite.
  void validate() const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.weight.size() != l.in * l.out || l.bias.size() != l.out) {
        throw ConfigError("layer " + std::to_string(k) + " storage does not match its shape");
      }
      if (k > 0 && layers[k - 1].out != l.in) {
        throw ConfigError("layer " + std::to_string(k) + " input " + std::to_string(l.in) +
                          " does not match previous output " + std::to_string(layers[k - 1].out));
      }
      for (double v : l.weight) {
        if (!std::isfinite(v)) throw ConfigError("non-finite weight in layer " + std::to_string(k));
      }
      for (double v : l.bias) {
        if (!std::isfinite(v)) throw ConfigError("non-finite bias in layer " + std::to_string(k));
      }
    }
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
      if (a.layers[k].weight != b.layers[k].weight || a.layers[k].bias != b.layers[k].bias ||
          a.layers[k].activation != b.layers[k].activation) {
        return false;
      }
    }
    return true;
  }
};

/// Builds an MLP `in -> hidden... -> out`. Hidden layers use tanh; the output
/// layer uses `output_activation`. Weights are Glorot-uniform, biases zero.
inline Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                    Activation output_activation, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("network input and output dims must be positive");
  Mlp net;
  std::size_t prev = in;
  auto add = [&](std::size_t width, Activation act) {
    if (width == 0) throw ConfigError("hidden layer width must be positive");
    Dense l;
    l.in = prev;
    l.out = width;
    l.activation = act;
    l.weight.resize(prev * width);
    l.bias.assign(width, 0.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(prev + width));
    for (double& w : l.weight) w = rng.uniform(-limit, limit);
    net.layers.push_back(std::move(l));
    prev = width;
  };
  for (std::size_t h : hidden) add(h, Activation::tanh);
  add(out, output_activation);
  return net;
}

// activations[0] is the input, activations[k + 1] the post-activation output
// of layer k.
struct ForwardCache {
  std::vector<std::vector<double>> activations;
};

namespace detail {

// Indices of non-zero entries when the vector is sparse enough to be worth it
// (one-hot observations); empty result means "use the dense path".
inline bool sparse_support(std::span<const double> x, std::vector<std::size_t>& nz) {
  nz.clear();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) {
      nz.push_back(i);
      if (nz.size() * 4 > x.size()) return false;
    }
  }
  return true;
}

inline void dense_forward(const Dense& l, std::span<const double> x, std::vector<double>& y,
                          std::vector<std::size_t>& nz) {
  y.assign(l.bias.begin(), l.bias.end());
  if (sparse_support(x, nz)) {
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* row = l.weight.data() + o * l.in;
      double acc = 0.0;
      for (std::size_t i : nz) acc += row[i] * x[i];
      y[o] += acc;
    }
  } else {
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* row = l.weight.data() + o * l.in;
      double acc = 0.0;
      for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * x[i];
      y[o] += acc;
    }
  }
  if (l.activation == Activation::tanh) {
    for (double& v : y) v = std::tanh(v);
  }
}

}  // namespace detail

/// Forward pass. Fills `cache` (if non-null) with everything the backward
/// pass needs.
inline std::vector<double> mlp_forward(const Mlp& net, std::span<const double> input,
                                       ForwardCache* cache = nullptr) {
  if (net.layers.empty()) throw ConfigError("empty network");
  if (input.size() != net.input_dim()) {
    throw ConfigError("input length " + std::to_string(input.size()) +
                      " does not match network input dim " + std::to_string(net.input_dim()));
  }
  std::vector<std::size_t> nz;
  if (cache) {
    auto& acts = cache->activations;
    acts.resize(net.layers.size() + 1);
    acts[0].assign(input.begin(), input.end());
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      detail::dense_forward(net.layers[k], acts[k], acts[k + 1], nz);
    }
    return acts.back();
  }
  std::vector<double> cur(input.begin(), input.end());
  std::vector<double> next;
  for (const auto& l : net.layers) {
    detail::dense_forward(l, cur, next, nz);
    cur.swap(next);
  }
  return cur;
}

/// Reverse-mode pass for the scalar `output . output_grad`. Parameter
/// gradients are ADDED into `grads` (same shape as `net`), so a batch can be
/// accumulated with repeated calls. Returns d/d(input) when `want_input_grad`.
inline std::vector<double> mlp_backward(const Mlp& net, const ForwardCache& cache,
                                        std::span<const double> output_grad, Mlp& grads,
                                        bool want_input_grad = true) {
  const auto& acts = cache.activations;
  if (acts.size() != net.layers.size() + 1 || output_grad.size() != net.output_dim() ||
      !grads.same_shape(net)) {
    throw std::logic_error("mlp_backward: cache or gradient shape does not match network");
  }
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    if (acts[k].size() != net.layers[k].in || acts[k + 1].size() != net.layers[k].out) {
      throw std::logic_error("mlp_backward: stale forward cache");
    }
  }
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  std::vector<double> prev_delta;
  std::vector<std::size_t> nz;
  for (std::size_t kk = net.layers.size(); kk-- > 0;) {
    const Dense& l = net.layers[kk];
    Dense& g = grads.layers[kk];
    const auto& x = acts[kk];
    const auto& y = acts[kk + 1];
    if (l.activation == Activation::tanh) {
      for (std::size_t o = 0; o < l.out; ++o) delta[o] *= 1.0 - y[o] * y[o];
    }
    for (std::size_t o = 0; o < l.out; ++o) g.bias[o] += delta[o];
    const bool sparse = detail::sparse_support(x, nz);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      double* grow = g.weight.data() + o * l.in;
      if (sparse) {
        for (std::size_t i : nz) grow[i] += d * x[i];
      } else {
        for (std::size_t i = 0; i < l.in; ++i) grow[i] += d * x[i];
      }
    }
    if (kk == 0 && !want_input_grad) return {};
    prev_delta.assign(l.in, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = l.weight.data() + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) prev_delta[i] += d * row[i];
    }
    delta.swap(prev_delta);
  }
  return delta;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over a list of parameter blocks. The block
/// layout is fixed at construction (one block per weight matrix and bias
/// vector of an Mlp, or a single block for a plain vector).
class Adam {
 public:
  Adam() = default;

  Adam(const Mlp& shape, AdamConfig config) : config_(config) {
    for (const auto& l : shape.layers) {
      add_block(l.weight.size());
      add_block(l.bias.size());
    }
  }

  Adam(std::size_t size, AdamConfig config) : config_(config) { add_block(size); }

  void step(Mlp& params, const Mlp& grads) {
    if (!params.same_shape(grads) || m_.size() != params.layers.size() * 2) {
      throw ConfigError("adam: parameter/gradient/state shapes disagree");
    }
    for (std::size_t k = 0; k < grads.layers.size(); ++k) {
      check_finite(grads.layers[k].weight, k, "weight");
      check_finite(grads.layers[k].bias, k, "bias");
    }
    ++step_;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      update(params.layers[k].weight, grads.layers[k].weight, 2 * k);
      update(params.layers[k].bias, grads.layers[k].bias, 2 * k + 1);
    }
  }

  void step(std::span<double> params, std::span<const double> grads) {
    if (m_.size() != 1 || params.size() != grads.size() || params.size() != m_[0].size()) {
      throw ConfigError("adam: parameter/gradient/state shapes disagree");
    }
    check_finite(grads, 0, "vector");
    ++step_;
    update(params, grads, 0);
  }

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  void add_block(std::size_t n) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }

  static void check_finite(std::span<const double> g, std::size_t block, const char* what) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        std::ostringstream os;
        os << "adam: non-finite gradient (" << g[i] << ") in " << what << " block " << block
           << " at index " << i;
        throw NumericalError(os.str());
      }
    }
  }

  void update(std::span<double> p, std::span<const double> g, std::size_t block) {
    auto& m = m_[block];
    auto& v = v_[block];
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    const double lr = config_.learning_rate;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }

  AdamConfig config_{};
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Losses and densities

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ConfigError("softmax of empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

inline double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw ConfigError("log-sum-exp of empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return mx + std::log(z);
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// -ln softmax(logits)[target] and its gradient softmax - one_hot(target).
inline LossAndGrad softmax_nll(std::span<const double> logits, std::size_t target) {
  if (logits.empty()) throw ConfigError("softmax_nll: empty logits");
  if (target >= logits.size()) {
    throw ConfigError("softmax_nll: target " + std::to_string(target) + " out of range " +
                      std::to_string(logits.size()));
  }
  LossAndGrad r;
  const double lse = log_sum_exp(logits);
  r.loss = std::max(0.0, lse - logits[target]);
  r.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) r.grad[i] = std::exp(logits[i] - lse);
  r.grad[target] -= 1.0;
  return r;
}

/// Mean over components of (prediction - target)^2.
inline LossAndGrad mse_loss(std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size() || prediction.empty()) {
    throw ConfigError("mse_loss: length mismatch");
  }
  LossAndGrad r;
  const double n = static_cast<double>(prediction.size());
  r.grad.resize(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double diff = prediction[i] - target[i];
    r.loss += diff * diff / n;
    r.grad[i] = 2.0 * diff / n;
  }
  return r;
}

struct GaussianLogProb {
  double logp = 0.0;
  std::vector<double> d_mean;
  std::vector<double> d_log_std;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Log density of a diagonal Gaussian and its exact gradients.
inline GaussianLogProb gaussian_logprob(std::span<const double> mean, std::span<const double> log_std,
                                        std::span<const double> sample) {
  if (mean.size() != log_std.size() || mean.size() != sample.size()) {
    throw ConfigError("gaussian_logprob: length mismatch");
  }
  GaussianLogProb r;
  r.d_mean.resize(mean.size());
  r.d_log_std.resize(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) {
    if (!std::isfinite(mean[j]) || !std::isfinite(log_std[j]) || !std::isfinite(sample[j])) {
      throw NumericalError("gaussian_logprob: non-finite input at component " + std::to_string(j));
    }
    const double inv_std = std::exp(-log_std[j]);
    const double z = (sample[j] - mean[j]) * inv_std;
    r.logp += -0.5 * z * z - log_std[j] - 0.5 * kLog2Pi;
    r.d_mean[j] = z * inv_std;
    r.d_log_std[j] = z * z - 1.0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Gradient checking

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t block = 0;  // offending coordinate
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double epsilon = 0.0;
  std::size_t checked = 0;
};

inline std::vector<std::span<double>> parameter_blocks(Mlp& net) {
  std::vector<std::span<double>> blocks;
  for (auto& l : net.layers) {
    blocks.emplace_back(l.weight);
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

inline std::vector<std::span<const double>> parameter_blocks(const Mlp& net) {
  std::vector<std::span<const double>> blocks;
  for (const auto& l : net.layers) {
    blocks.emplace_back(l.weight);
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

/// Central differences of `loss` w.r.t. every coordinate in `params`,
/// compared against `analytic` (same block layout). When `max_coordinates`
/// is non-zero and smaller than the parameter count, a seeded random subset
/// of max(max_coordinates, 200) coordinates is checked instead.
inline GradCheckReport finite_diff_check(const std::vector<std::span<double>>& params,
                                         const std::vector<std::span<const double>>& analytic,
                                         const std::function<double()>& loss, double epsilon = 1e-5,
                                         std::size_t max_coordinates = 0, std::uint64_t seed = 0) {
  if (params.size() != analytic.size()) throw ConfigError("finite_diff_check: block count mismatch");
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != analytic[b].size()) {
      throw ConfigError("finite_diff_check: block size mismatch");
    }
    for (std::size_t i = 0; i < params[b].size(); ++i) coords.emplace_back(b, i);
  }
  if (max_coordinates != 0) {
    const std::size_t budget = std::max<std::size_t>(max_coordinates, 200);
    if (budget < coords.size()) {
      Rng rng(seed);
      shuffle(coords, rng);
      coords.resize(budget);
    }
  }
  GradCheckReport report;
  report.epsilon = epsilon;
  for (auto [b, i] : coords) {
    double& p = params[b][i];
    const double saved = p;
    p = saved + epsilon;
    const double up = loss();
    p = saved - epsilon;
    const double down = loss();
    p = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = relative_error(analytic[b][i], numeric);
    if (report.checked == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.block = b;
      report.index = i;
      report.analytic = analytic[b][i];
      report.numeric = numeric;
    }
    ++report.checked;
  }
  return report;
}

}  // namespace jsae
