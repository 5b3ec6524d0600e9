#pragma once

#include <cstddef>
#include <vector>

#include "groupdp/common.hpp"

namespace groupdp {

enum class Arch { kSoftmaxRegression, kMlp1Hidden };

// One labeled point with its group id.
struct Example {
  Vec features;
  int label = 0;
  int group = 0;
};

// Flat parameter vector plus the shape metadata needed to interpret it.
// Softmax regression: [W (c x d, row-major), b (c)].
// One-hidden-layer MLP with rectified-linear units:
// [W1 (h x d), b1 (h), W2 (c x h), b2 (c)].
struct ModelParams {
  Arch arch = Arch::kSoftmaxRegression;
  std::size_t d = 0;  // input dimension
  std::size_t c = 0;  // classes
  std::size_t h = 0;  // hidden width (MLP only)
  Vec theta;

  std::size_t expected_size() const {
    if (arch == Arch::kSoftmaxRegression) return c * d + c;
    return h * d + h + c * h + c;
  }

  void validate() const {
    if (d == 0 || c < 2) throw std::invalid_argument("invalid model dimensions");
    if (arch == Arch::kMlp1Hidden && h == 0)
      throw std::invalid_argument("mlp requires a hidden width");
    if (theta.size() != expected_size())
      throw std::invalid_argument("parameter vector length does not match architecture");
    for (double t : theta)
      if (!std::isfinite(t)) throw std::invalid_argument("parameters must be finite");
  }
};

// Zero-initialized parameter block of the right shape.
inline ModelParams make_params(Arch arch, std::size_t d, std::size_t c,
                               std::size_t h = 32) {
  ModelParams p;
  p.arch = arch;
  p.d = d;
  p.c = c;
  p.h = arch == Arch::kMlp1Hidden ? h : 0;
  p.theta.assign(p.expected_size(), 0.0);
  p.validate();
  return p;
}

namespace detail {

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline void init_block(Vec& theta, std::size_t offset, std::size_t count,
                       std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < count; ++i)
    theta[offset + i] = bound * (2.0 * uniform01(rng) - 1.0);
}

// Stable log-softmax in place: logits -> log-probabilities.
inline void log_softmax(Vec& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - m);
  const double lse = m + std::log(s);
  for (double& l : logits) l -= lse;
}

inline Vec logits_softmax(const ModelParams& p, const Vec& x) {
  Vec z(p.c);
  for (std::size_t k = 0; k < p.c; ++k) {
    double acc = p.theta[p.c * p.d + k];  // bias
    for (std::size_t i = 0; i < p.d; ++i) acc += p.theta[k * p.d + i] * x[i];
    z[k] = acc;
  }
  return z;
}

struct MlpForward {
  Vec hidden_pre;   // W1 x + b1
  Vec hidden;       // relu
  Vec logits;
};

inline MlpForward mlp_forward(const ModelParams& p, const Vec& x) {
  const std::size_t w1 = 0, b1 = p.h * p.d, w2 = b1 + p.h, b2 = w2 + p.c * p.h;
  MlpForward f;
  f.hidden_pre.resize(p.h);
  f.hidden.resize(p.h);
  for (std::size_t j = 0; j < p.h; ++j) {
    double acc = p.theta[b1 + j];
    for (std::size_t i = 0; i < p.d; ++i) acc += p.theta[w1 + j * p.d + i] * x[i];
    f.hidden_pre[j] = acc;
    f.hidden[j] = acc > 0.0 ? acc : 0.0;
  }
  f.logits.resize(p.c);
  for (std::size_t k = 0; k < p.c; ++k) {
    double acc = p.theta[b2 + k];
    for (std::size_t j = 0; j < p.h; ++j) acc += p.theta[w2 + k * p.h + j] * f.hidden[j];
    f.logits[k] = acc;
  }
  return f;
}

inline void check_shapes(const ModelParams& p, const Example& ex) {
  p.validate();
  if (ex.features.size() != p.d) throw std::invalid_argument("feature dimension mismatch");
  if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= p.c)
    throw std::invalid_argument("label out of range");
}

}  // namespace detail

inline ModelParams init_params(Arch arch, std::size_t d, std::size_t c, Rng& rng,
                               std::size_t h = 32) {
  ModelParams p = make_params(arch, d, c, h);
  if (arch == Arch::kSoftmaxRegression) {
    detail::init_block(p.theta, 0, p.c * p.d + p.c, p.d, rng);
  } else {
    const std::size_t b1 = p.h * p.d, w2 = b1 + p.h;
    detail::init_block(p.theta, 0, p.h * p.d + p.h, p.d, rng);
    detail::init_block(p.theta, w2, p.c * p.h + p.c, p.h, rng);
  }
  return p;
}

inline Vec class_logits(const ModelParams& p, const Vec& x) {
  if (p.arch == Arch::kSoftmaxRegression) return detail::logits_softmax(p, x);
  return detail::mlp_forward(p, x).logits;
}

// Cross-entropy of the softmax outputs.
inline double loss(const ModelParams& p, const Example& ex) {
  detail::check_shapes(p, ex);
  Vec z = class_logits(p, ex.features);
  detail::log_softmax(z);
  return -z[static_cast<std::size_t>(ex.label)];
}

// Analytic gradient of loss() with respect to the flat parameter vector.
inline Vec per_example_grad(const ModelParams& p, const Example& ex) {
  detail::check_shapes(p, ex);
  Vec grad(p.theta.size(), 0.0);
  const Vec& x = ex.features;
  const auto y = static_cast<std::size_t>(ex.label);
  if (p.arch == Arch::kSoftmaxRegression) {
    Vec z = detail::logits_softmax(p, x);
    detail::log_softmax(z);
    for (std::size_t k = 0; k < p.c; ++k) {
      const double delta = std::exp(z[k]) - (k == y ? 1.0 : 0.0);
      for (std::size_t i = 0; i < p.d; ++i) grad[k * p.d + i] = delta * x[i];
      grad[p.c * p.d + k] = delta;
    }
    return grad;
  }
  const std::size_t w1 = 0, b1 = p.h * p.d, w2 = b1 + p.h, b2 = w2 + p.c * p.h;
  detail::MlpForward f = detail::mlp_forward(p, x);
  Vec z = f.logits;
  detail::log_softmax(z);
  Vec dlogit(p.c);
  for (std::size_t k = 0; k < p.c; ++k) dlogit[k] = std::exp(z[k]) - (k == y ? 1.0 : 0.0);
  Vec dhidden(p.h, 0.0);
  for (std::size_t k = 0; k < p.c; ++k) {
    for (std::size_t j = 0; j < p.h; ++j) {
      grad[w2 + k * p.h + j] = dlogit[k] * f.hidden[j];
      dhidden[j] += dlogit[k] * p.theta[w2 + k * p.h + j];
    }
    grad[b2 + k] = dlogit[k];
  }
  for (std::size_t j = 0; j < p.h; ++j) {
    const double dpre = f.hidden_pre[j] > 0.0 ? dhidden[j] : 0.0;
    for (std::size_t i = 0; i < p.d; ++i) grad[w1 + j * p.d + i] = dpre * x[i];
    grad[b1 + j] = dpre;
  }
  return grad;
}

// Central-difference gradient, coordinate by coordinate; test oracle.
inline Vec finite_diff_grad(const ModelParams& p, const Example& ex, double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("step must be positive");
  detail::check_shapes(p, ex);
  ModelParams q = p;
  Vec grad(p.theta.size());
  for (std::size_t i = 0; i < p.theta.size(); ++i) {
    const double orig = q.theta[i];
    q.theta[i] = orig + h;
    const double lp = loss(q, ex);
    q.theta[i] = orig - h;
    const double lm = loss(q, ex);
    q.theta[i] = orig;
    grad[i] = (lp - lm) / (2.0 * h);
  }
  return grad;
}

// Argmax class with ties broken toward the lowest index.
inline int predict(const ModelParams& p, const Vec& x) {
  const Vec z = class_logits(p, x);
  std::size_t best = 0;
  for (std::size_t k = 1; k < z.size(); ++k)
    if (z[k] > z[best]) best = k;
  return static_cast<int>(best);
}

}  // namespace groupdp
