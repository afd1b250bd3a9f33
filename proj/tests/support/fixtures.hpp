#pragma once

#include <random>

#include "rlstop/nn.hpp"
#include "rlstop/ppo.hpp"

namespace rlstop::testing {

/// Random minibatch whose old log-probs sit near the current policy so that
/// the ratios straddle the clip range.
inline ppo::Minibatch random_minibatch(const nn::MlpParams& actor, std::size_t width, std::size_t m,
                                       std::mt19937_64& rng, double spread = 0.3) {
  std::uniform_real_distribution<double> feat(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> revealed(1, width);
  std::normal_distribution<double> noise(0.0, spread);
  std::normal_distribution<double> adv(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  ppo::Minibatch mb;
  mb.observations = nn::Matrix::Constant(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(m), -1.0);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t k = revealed(rng);
    for (std::size_t r = 0; r < k; ++r) mb.observations(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = feat(rng);
  }
  const auto logits = nn::forward(actor, mb.observations).output;
  for (std::size_t j = 0; j < m; ++j) {
    const std::uint8_t a = coin(rng) ? 1 : 0;
    const auto lp = nn::log_softmax(logits.col(static_cast<Eigen::Index>(j)));
    mb.actions.push_back(a);
    mb.old_log_probs.push_back(lp(a) + noise(rng));
    mb.advantages.push_back(adv(rng));
    mb.returns.push_back(adv(rng));
  }
  return mb;
}

/// Perturbs every parameter so that gradients are not dominated by the
/// near-zero actor output layer of a fresh initialization.
inline void jitter(nn::MlpParams& p, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (std::size_t l = 0; l < p.layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) p.weights[l].data()[i] += n(rng);
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) += n(rng);
  }
}

}  // namespace rlstop::testing
