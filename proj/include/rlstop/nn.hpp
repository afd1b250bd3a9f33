#pragma once

// Small tanh MLPs for the actor and critic, with hand-derived backprop and Adam.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rlstop/error.hpp"

namespace rlstop::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Architecture {
  std::size_t input = 0;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t output = 0;

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(output);
    return w;
  }
  bool operator==(const Architecture&) const = default;
};

inline Architecture actor_architecture(std::size_t batches) { return {batches, {64, 64}, 2}; }
inline Architecture critic_architecture(std::size_t batches) { return {batches, {64, 64}, 1}; }

/// Weights are (out × in); hidden layers use tanh, the last layer is affine.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  std::size_t layers() const noexcept { return weights.size(); }
  std::size_t input_width() const { return static_cast<std::size_t>(weights.front().cols()); }
  std::size_t output_width() const { return static_cast<std::size_t>(weights.back().rows()); }

  Architecture architecture() const {
    Architecture a;
    a.input = input_width();
    a.hidden.clear();
    for (std::size_t l = 0; l + 1 < layers(); ++l) a.hidden.push_back(static_cast<std::size_t>(weights[l].rows()));
    a.output = output_width();
    return a;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  bool finite() const {
    for (std::size_t l = 0; l < layers(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }
};

/// Same-shaped parameters, all zero.
inline MlpParams zeros(const Architecture& arch) {
  const auto w = arch.widths();
  MlpParams p;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    p.weights.push_back(Matrix::Zero(static_cast<Eigen::Index>(w[l + 1]), static_cast<Eigen::Index>(w[l])));
    p.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(w[l + 1])));
  }
  return p;
}

inline MlpParams zeros_like(const MlpParams& p) { return zeros(p.architecture()); }

/// Random (rows × cols) matrix with orthonormal rows or columns, scaled by gain.
inline Matrix orthogonal(Eigen::Index rows, Eigen::Index cols, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index tall = std::max(rows, cols);
  const Eigen::Index thin = std::min(rows, cols);
  Matrix a(tall, thin);
  for (Eigen::Index j = 0; j < thin; ++j) {
    for (Eigen::Index i = 0; i < tall; ++i) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(tall, thin);
  const Matrix r = qr.matrixQR().topRows(thin).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < thin; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  q *= gain;
  if (rows >= cols) return q;
  return q.transpose();
}

/// Orthogonal weights (gain sqrt(2) on hidden layers, `output_gain` on the
/// last layer) and zero biases.
inline MlpParams init_params(const Architecture& arch, double output_gain, std::mt19937_64& rng) {
  MlpParams p = zeros(arch);
  for (std::size_t l = 0; l < p.layers(); ++l) {
    const double gain = l + 1 == p.layers() ? output_gain : std::sqrt(2.0);
    p.weights[l] = orthogonal(p.weights[l].rows(), p.weights[l].cols(), gain, rng);
  }
  return p;
}

inline MlpParams init_params(const Architecture& arch, double output_gain, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_params(arch, output_gain, rng);
}

inline constexpr double kActorOutputGain = 0.01;
inline constexpr double kCriticOutputGain = 1.0;

struct ForwardCache {
  std::vector<Matrix> activations;  // [0] = input, [l] = tanh output of hidden layer l
  Matrix output;
};

/// Batched forward pass; each column of `input` is one observation.
inline ForwardCache forward(const MlpParams& p, const Eigen::Ref<const Matrix>& input) {
  if (static_cast<std::size_t>(input.rows()) != p.input_width()) {
    throw UsageError("input has " + std::to_string(input.rows()) + " rows, network expects " +
                     std::to_string(p.input_width()));
  }
  if (!input.allFinite()) throw UsageError("non-finite network input");
  ForwardCache c;
  c.activations.reserve(p.layers());
  c.activations.emplace_back(input);
  for (std::size_t l = 0; l + 1 < p.layers(); ++l) {
    Matrix z = p.weights[l] * c.activations.back();
    z.colwise() += p.biases[l];
    c.activations.emplace_back(z.array().tanh().matrix());
  }
  c.output = p.weights.back() * c.activations.back();
  c.output.colwise() += p.biases.back();
  return c;
}

/// Gradients of sum_j <upstream[:, j], output[:, j]> with respect to all parameters.
inline MlpParams backward(const MlpParams& p, const ForwardCache& c, const Eigen::Ref<const Matrix>& upstream) {
  if (upstream.rows() != c.output.rows() || upstream.cols() != c.output.cols()) {
    throw UsageError("upstream gradient shape does not match forward output");
  }
  if (c.activations.size() != p.layers()) throw UsageError("cache does not match network depth");
  MlpParams g;
  g.weights.resize(p.layers());
  g.biases.resize(p.layers());
  Matrix delta = upstream;
  for (std::size_t l = p.layers(); l-- > 0;) {
    g.weights[l].noalias() = delta * c.activations[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = p.weights[l].transpose() * delta;
      delta = back.array() * (1.0 - c.activations[l].array().square());
    }
  }
  return g;
}

/// Numerically stable log-softmax over one logit vector.
inline Vector log_softmax(const Eigen::Ref<const Vector>& logits) {
  Eigen::Index top = 0;
  const double m = logits.maxCoeff(&top);
  // The max term contributes exactly 1; log1p keeps the rest accurate.
  double rest = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (k != top) rest += std::exp(logits(k) - m);
  }
  return ((logits.array() - m) - std::log1p(rest)).matrix();
}

inline Vector softmax(const Eigen::Ref<const Vector>& logits) { return log_softmax(logits).array().exp().matrix(); }

struct LogProbEntropy {
  double log_prob = 0.0;
  double entropy = 0.0;
};

inline LogProbEntropy log_prob_and_entropy(const Eigen::Ref<const Vector>& logits, std::size_t action) {
  const Vector lp = log_softmax(logits);
  const Vector p = lp.array().exp();
  return {lp(static_cast<Eigen::Index>(action)), -(p.array() * lp.array()).sum()};
}

// Parameter-wise arithmetic on same-shaped MlpParams.

inline double squared_norm(const MlpParams& p) {
  double s = 0.0;
  for (std::size_t l = 0; l < p.layers(); ++l) s += p.weights[l].squaredNorm() + p.biases[l].squaredNorm();
  return s;
}

inline void scale(MlpParams& p, double factor) {
  for (std::size_t l = 0; l < p.layers(); ++l) {
    p.weights[l] *= factor;
    p.biases[l] *= factor;
  }
}

inline std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  out.reserve(p.parameter_count());
  for (std::size_t l = 0; l < p.layers(); ++l) {
    // Row-major weights, matching the checkpoint layout.
    for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j) out.push_back(p.weights[l](i, j));
    }
    out.insert(out.end(), p.biases[l].data(), p.biases[l].data() + p.biases[l].size());
  }
  return out;
}

inline void unflatten(std::span<const double> flat, MlpParams& p) {
  if (flat.size() != p.parameter_count()) throw UsageError("flat parameter vector has the wrong length");
  std::size_t k = 0;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j) p.weights[l](i, j) = flat[k++];
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = flat[k++];
  }
}

struct AdamState {
  MlpParams m;
  MlpParams v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const MlpParams& p) { return {zeros_like(p), zeros_like(p)}; }
};

/// Bias-corrected Adam update in place.
inline void adam_step(MlpParams& p, const MlpParams& grad, AdamState& s, double lr) {
  if (grad.layers() != p.layers() || s.m.layers() != p.layers()) throw UsageError("Adam shape mismatch");
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
  };
  for (std::size_t l = 0; l < p.layers(); ++l) {
    update(p.weights[l], grad.weights[l], s.m.weights[l], s.v.weights[l]);
    update(p.biases[l], grad.biases[l], s.m.biases[l], s.v.biases[l]);
  }
}

}  // namespace rlstop::nn
