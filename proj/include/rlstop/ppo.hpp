#pragma once

// PPO training of the stopping policy: vectorized rollouts, GAE, and
// clipped-surrogate updates of separate actor and critic networks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rlstop/corpus.hpp"
#include "rlstop/csv.hpp"
#include "rlstop/env.hpp"
#include "rlstop/error.hpp"
#include "rlstop/nn.hpp"
#include "rlstop/stop_result.hpp"

namespace rlstop::ppo {

using nn::Matrix;
using nn::Vector;

struct Hyperparams {
  std::size_t total_timesteps = 100000;
  std::size_t n_steps = 100;
  std::size_t minibatch_size = 100;
  double learning_rate = 1e-4;
  std::size_t n_epochs = 8;
  double entropy_coef = 0.1;
  double gamma = 0.99;
  double clip_range = 0.2;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  std::size_t n_envs = 8;
  double max_grad_norm = 0.0;  // 0 disables global-norm clipping
  bool normalize_advantage = true;
  std::uint64_t seed = 0;

  void validate() const {
    auto positive = [](auto v, const char* name) {
      if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(total_timesteps, "total_timesteps");
    positive(n_steps, "n_steps");
    positive(minibatch_size, "minibatch_size");
    positive(learning_rate, "learning_rate");
    positive(n_epochs, "n_epochs");
    positive(n_envs, "n_envs");
    if (!(entropy_coef >= 0.0)) throw ConfigError("entropy_coef must be non-negative");
    if (!(value_coef >= 0.0)) throw ConfigError("value_coef must be non-negative");
    if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be non-negative");
    if (!(clip_range > 0.0 && clip_range < 1.0)) throw ConfigError("clip_range must lie in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in (0, 1]");
  }

  bool operator==(const Hyperparams&) const = default;

  std::size_t iterations() const {
    const std::size_t per = n_steps * n_envs;
    return (total_timesteps + per - 1) / per;
  }
};

/// Actor and critic weights with their optimizer state.
struct Policy {
  nn::MlpParams actor;
  nn::MlpParams critic;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;

  std::size_t width() const { return actor.input_width(); }
};

/// Independent RNG stream per purpose, derived from one user seed.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}

enum Stream : std::uint32_t { kInitStream = 1, kEnvStream = 2, kActionStream = 3, kShuffleStream = 4 };

inline Policy make_policy(std::size_t batches, std::uint64_t seed) {
  auto rng = stream(seed, kInitStream);
  Policy p;
  p.actor = nn::init_params(nn::actor_architecture(batches), nn::kActorOutputGain, rng);
  p.critic = nn::init_params(nn::critic_architecture(batches), nn::kCriticOutputGain, rng);
  p.actor_opt = nn::AdamState::for_params(p.actor);
  p.critic_opt = nn::AdamState::for_params(p.critic);
  return p;
}

/// Transitions laid out step-major: slot (t, e) lives at index t * n_envs + e.
struct RolloutBuffer {
  std::size_t n_steps = 0;
  std::size_t n_envs = 0;
  Matrix observations;  // width × (n_steps·n_envs), one column per transition
  std::vector<std::uint8_t> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;  // episode ended with this transition
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<double> bootstrap_values;  // critic value of each slot after the last step

  RolloutBuffer() = default;
  RolloutBuffer(std::size_t steps, std::size_t envs, std::size_t width)
      : n_steps(steps),
        n_envs(envs),
        observations(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(steps * envs)),
        actions(steps * envs),
        log_probs(steps * envs),
        rewards(steps * envs),
        values(steps * envs),
        dones(steps * envs),
        advantages(steps * envs),
        returns(steps * envs),
        bootstrap_values(envs) {}

  std::size_t size() const noexcept { return n_steps * n_envs; }
  std::size_t index(std::size_t t, std::size_t e) const noexcept { return t * n_envs + e; }
};

struct Rollout {
  RolloutBuffer buffer;
  std::vector<env::EpisodeInfo> episodes;
};

/// Runs the current policy for n_steps in every slot of `venv`.
inline Rollout collect_rollout(const Policy& policy, env::VecEnv& venv, std::size_t n_steps, std::mt19937_64& rng) {
  if (policy.width() != venv.width()) throw UsageError("policy width does not match environment width");
  const std::size_t n_envs = venv.size();
  const std::size_t width = venv.width();
  Rollout out{RolloutBuffer(n_steps, n_envs, width), {}};
  auto& buf = out.buffer;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix obs(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(n_envs));
  std::vector<env::Action> actions(n_envs);

  for (std::size_t t = 0; t < n_steps; ++t) {
    venv.observations(std::span<double>(obs.data(), static_cast<std::size_t>(obs.size())));
    const auto logits = nn::forward(policy.actor, obs).output;
    const auto values = nn::forward(policy.critic, obs).output;
    for (std::size_t e = 0; e < n_envs; ++e) {
      const auto col = static_cast<Eigen::Index>(e);
      const Vector lp = nn::log_softmax(logits.col(col));
      const std::size_t a = unit(rng) < std::exp(lp(0)) ? 0 : 1;
      actions[e] = static_cast<env::Action>(a);
      const std::size_t k = buf.index(t, e);
      buf.observations.col(static_cast<Eigen::Index>(k)) = obs.col(col);
      buf.actions[k] = static_cast<std::uint8_t>(a);
      buf.log_probs[k] = lp(static_cast<Eigen::Index>(a));
      buf.values[k] = values(0, col);
    }
    auto step = venv.step(actions);
    for (std::size_t e = 0; e < n_envs; ++e) {
      buf.rewards[buf.index(t, e)] = step.rewards[e];
      buf.dones[buf.index(t, e)] = step.dones[e];
    }
    out.episodes.insert(out.episodes.end(), step.finished.begin(), step.finished.end());
  }
  venv.observations(std::span<double>(obs.data(), static_cast<std::size_t>(obs.size())));
  const auto last = nn::forward(policy.critic, obs).output;
  for (std::size_t e = 0; e < n_envs; ++e) buf.bootstrap_values[e] = last(0, static_cast<Eigen::Index>(e));
  return out;
}

/// Generalized advantage estimation per slot, cut at episode boundaries and
/// bootstrapped from `bootstrap_values` where the rollout ends mid-episode.
inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  for (std::size_t e = 0; e < buf.n_envs; ++e) {
    double next_value = buf.bootstrap_values[e];
    double gae = 0.0;
    for (std::size_t t = buf.n_steps; t-- > 0;) {
      const std::size_t k = buf.index(t, e);
      const double live = buf.dones[k] ? 0.0 : 1.0;
      const double delta = buf.rewards[k] + gamma * next_value * live - buf.values[k];
      gae = delta + gamma * lambda * live * gae;
      buf.advantages[k] = gae;
      buf.returns[k] = gae + buf.values[k];
      next_value = buf.values[k];
    }
  }
}

struct Minibatch {
  Matrix observations;
  std::vector<std::uint8_t> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const noexcept { return actions.size(); }
};

inline Minibatch gather(const RolloutBuffer& buf, std::span<const std::size_t> idx) {
  Minibatch mb;
  mb.observations.resize(buf.observations.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const std::size_t k = idx[j];
    mb.observations.col(static_cast<Eigen::Index>(j)) = buf.observations.col(static_cast<Eigen::Index>(k));
    mb.actions.push_back(buf.actions[k]);
    mb.old_log_probs.push_back(buf.log_probs[k]);
    mb.advantages.push_back(buf.advantages[k]);
    mb.returns.push_back(buf.returns[k]);
  }
  return mb;
}

inline constexpr double kAdvantageStdFloor = 1e-8;

/// Advantages shifted to mean 0 and scaled to unit (population) std.
inline std::vector<double> normalize_advantages(std::span<const double> adv) {
  const auto n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / n), kAdvantageStdFloor);
  std::vector<double> out(adv.size());
  for (std::size_t i = 0; i < adv.size(); ++i) out[i] = (adv[i] - mean) / sd;
  return out;
}

struct LossTerms {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

struct LossAndGrad {
  LossTerms terms;
  nn::MlpParams actor_grad;
  nn::MlpParams critic_grad;
};

/// Clipped-surrogate objective on one minibatch:
///   policy + value_coef·MSE(V, return) − entropy_coef·entropy,
/// with exact gradients for both networks.
inline LossAndGrad ppo_loss(const nn::MlpParams& actor, const nn::MlpParams& critic, const Minibatch& mb,
                            const Hyperparams& hp, bool with_grad = true) {
  const std::size_t m = mb.size();
  if (m == 0) throw UsageError("empty minibatch");
  const double inv_m = 1.0 / static_cast<double>(m);
  const auto adv = hp.normalize_advantage ? normalize_advantages(mb.advantages) : mb.advantages;

  const auto actor_fw = nn::forward(actor, mb.observations);
  const auto critic_fw = nn::forward(critic, mb.observations);
  Matrix d_logits(actor_fw.output.rows(), actor_fw.output.cols());
  Matrix d_values(1, critic_fw.output.cols());

  LossAndGrad out;
  auto& L = out.terms;
  const double lo = 1.0 - hp.clip_range;
  const double hi = 1.0 + hp.clip_range;
  for (std::size_t j = 0; j < m; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const Vector lp = nn::log_softmax(actor_fw.output.col(col));
    const Vector p = lp.array().exp();
    const double entropy = -(p.array() * lp.array()).sum();
    const auto a = static_cast<Eigen::Index>(mb.actions[j]);
    const double log_ratio = lp(a) - mb.old_log_probs[j];
    const double ratio = std::exp(log_ratio);
    const double surr1 = ratio * adv[j];
    const double surr2 = std::clamp(ratio, lo, hi) * adv[j];

    L.policy_loss -= std::min(surr1, surr2) * inv_m;
    L.entropy += entropy * inv_m;
    L.clip_fraction += (std::abs(ratio - 1.0) > hp.clip_range ? 1.0 : 0.0) * inv_m;
    L.approx_kl += ((ratio - 1.0) - log_ratio) * inv_m;
    const double v_err = critic_fw.output(0, col) - mb.returns[j];
    L.value_loss += v_err * v_err * inv_m;

    // d(-min(surr1, surr2))/d log π(a): the clipped branch is flat.
    const double g_logp = surr1 <= surr2 ? -surr1 * inv_m : 0.0;
    for (Eigen::Index k = 0; k < lp.size(); ++k) {
      const double onehot = k == a ? 1.0 : 0.0;
      // dH/dz_k = -p_k (log p_k + H), entering with coefficient -entropy_coef/m.
      d_logits(k, col) = g_logp * (onehot - p(k)) + hp.entropy_coef * inv_m * p(k) * (lp(k) + entropy);
    }
    d_values(0, col) = hp.value_coef * 2.0 * v_err * inv_m;
  }
  L.total = L.policy_loss + hp.value_coef * L.value_loss - hp.entropy_coef * L.entropy;
  if (with_grad) {
    out.actor_grad = nn::backward(actor, actor_fw, d_logits);
    out.critic_grad = nn::backward(critic, critic_fw, d_values);
  }
  return out;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  std::size_t minibatches = 0;
};

inline std::string describe(const LossTerms& t) {
  return "policy_loss=" + csv::shortest(t.policy_loss) + " value_loss=" + csv::shortest(t.value_loss) +
         " entropy=" + csv::shortest(t.entropy) + " clip_fraction=" + csv::shortest(t.clip_fraction) +
         " approx_kl=" + csv::shortest(t.approx_kl);
}

/// n_epochs passes of shuffled minibatch Adam steps over the buffer.
inline UpdateStats ppo_update(Policy& policy, const RolloutBuffer& buf, const Hyperparams& hp, std::mt19937_64& rng) {
  std::vector<std::size_t> order(buf.size());
  UpdateStats stats;
  for (std::size_t epoch = 0; epoch < hp.n_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += hp.minibatch_size) {
      const std::size_t len = std::min(hp.minibatch_size, order.size() - start);
      const auto mb = gather(buf, std::span<const std::size_t>(order).subspan(start, len));
      auto lg = ppo_loss(policy.actor, policy.critic, mb, hp);
      if (!std::isfinite(lg.terms.total)) throw TrainingError("non-finite PPO loss: " + describe(lg.terms));
      if (hp.max_grad_norm > 0.0) {
        const double norm = std::sqrt(nn::squared_norm(lg.actor_grad) + nn::squared_norm(lg.critic_grad));
        if (norm > hp.max_grad_norm) {
          const double f = hp.max_grad_norm / (norm + 1e-6);
          nn::scale(lg.actor_grad, f);
          nn::scale(lg.critic_grad, f);
        }
      }
      nn::adam_step(policy.actor, lg.actor_grad, policy.actor_opt, hp.learning_rate);
      nn::adam_step(policy.critic, lg.critic_grad, policy.critic_opt, hp.learning_rate);
      stats.policy_loss += lg.terms.policy_loss;
      stats.value_loss += lg.terms.value_loss;
      stats.entropy += lg.terms.entropy;
      stats.clip_fraction += lg.terms.clip_fraction;
      stats.approx_kl += lg.terms.approx_kl;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    const double inv = 1.0 / static_cast<double>(stats.minibatches);
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.clip_fraction *= inv;
    stats.approx_kl *= inv;
  }
  return stats;
}

inline constexpr int kCheckpointVersion = 1;

/// A trained stopping policy and everything needed to interpret it.
struct Checkpoint {
  int version = kCheckpointVersion;
  std::string activation = "tanh";
  std::string initializer = "orthogonal";
  nn::MlpParams actor;
  nn::MlpParams critic;
  double target_recall = 1.0;
  std::size_t batches = 0;
  env::ObsMode obs_mode = env::ObsMode::Ratio;
  Hyperparams hyperparams;
  std::size_t timesteps = 0;  // transitions actually consumed

  bool operator==(const Checkpoint& o) const {
    return version == o.version && activation == o.activation && initializer == o.initializer &&
           nn::flatten(actor) == nn::flatten(o.actor) && nn::flatten(critic) == nn::flatten(o.critic) &&
           actor.architecture() == o.actor.architecture() && critic.architecture() == o.critic.architecture() &&
           target_recall == o.target_recall && batches == o.batches && obs_mode == o.obs_mode &&
           hyperparams == o.hyperparams && timesteps == o.timesteps;
  }
};

struct LogRow {
  std::size_t iteration = 0;
  std::size_t timesteps = 0;
  double mean_episode_reward = std::nan("");
  double mean_stop_batch = std::nan("");
  UpdateStats update;
};

inline constexpr std::string_view kTrainLogHeader =
    "iteration,timesteps,mean_ep_reward,mean_stop_batch,policy_loss,value_loss,entropy,clip_fraction,approx_kl";

inline std::string to_csv_line(const LogRow& r) {
  return csv::join({std::to_string(r.iteration), std::to_string(r.timesteps), csv::shortest(r.mean_episode_reward),
                    csv::shortest(r.mean_stop_batch), csv::shortest(r.update.policy_loss),
                    csv::shortest(r.update.value_loss), csv::shortest(r.update.entropy),
                    csv::shortest(r.update.clip_fraction), csv::shortest(r.update.approx_kl)});
}

inline std::string training_log_csv(std::span<const LogRow> rows) {
  std::string out(kTrainLogHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += to_csv_line(r);
    out += '\n';
  }
  return out;
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
};

/// Trains one policy for one target recall on a pool of equally-batched topics.
inline TrainResult train(std::span<const corpus::BatchedTopic> pool, double target_recall, const Hyperparams& hp,
                         env::ObsMode mode = env::ObsMode::Ratio,
                         const std::function<void(const LogRow&)>& on_iteration = {}) {
  hp.validate();
  if (pool.empty()) throw ConfigError("training topic pool is empty");
  const std::size_t width = pool.front().batches();
  env::VecEnv venv(pool, target_recall, hp.n_envs, stream(hp.seed, kEnvStream)(), mode);
  Policy policy = make_policy(width, hp.seed);
  auto action_rng = stream(hp.seed, kActionStream);
  auto shuffle_rng = stream(hp.seed, kShuffleStream);

  TrainResult res;
  std::size_t consumed = 0;
  const std::size_t iterations = hp.iterations();
  for (std::size_t it = 1; it <= iterations; ++it) {
    auto rollout = collect_rollout(policy, venv, hp.n_steps, action_rng);
    consumed += rollout.buffer.size();
    compute_gae(rollout.buffer, hp.gamma, hp.gae_lambda);
    LogRow row;
    row.iteration = it;
    row.timesteps = consumed;
    if (!rollout.episodes.empty()) {
      double ret = 0.0;
      double stop = 0.0;
      for (const auto& ep : rollout.episodes) {
        ret += ep.episode_return;
        stop += static_cast<double>(ep.stop_batch);
      }
      row.mean_episode_reward = ret / static_cast<double>(rollout.episodes.size());
      row.mean_stop_batch = stop / static_cast<double>(rollout.episodes.size());
    }
    row.update = ppo_update(policy, rollout.buffer, hp, shuffle_rng);
    if (on_iteration) on_iteration(row);
    res.log.push_back(row);
  }

  auto& ck = res.checkpoint;
  ck.actor = std::move(policy.actor);
  ck.critic = std::move(policy.critic);
  ck.target_recall = target_recall;
  ck.batches = width;
  ck.obs_mode = mode;
  ck.hyperparams = hp;
  ck.timesteps = consumed;
  return res;
}

enum class InferMode { Greedy, Sample };

inline constexpr std::string_view kMethodName = "rlstop";

/// Runs the policy from S_1 until it stops (or reaches S_B). Only examined
/// batches are ever read.
inline StopResult infer_stop(const Checkpoint& ck, const corpus::BatchedTopic& bt, InferMode mode = InferMode::Greedy,
                             std::mt19937_64* rng = nullptr) {
  const std::size_t b = bt.batches();
  if (b != ck.batches || ck.actor.input_width() != b) {
    throw ConfigError("topic '" + bt.topic.id + "' has " + std::to_string(b) + " batches, checkpoint expects " +
                      std::to_string(ck.batches));
  }
  if (mode == InferMode::Sample && rng == nullptr) throw UsageError("sample mode needs a random generator");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector obs = Vector::Constant(static_cast<Eigen::Index>(b), env::kUnexamined);
  std::size_t i = 1;
  for (;; ++i) {
    obs(static_cast<Eigen::Index>(i - 1)) = env::batch_feature(bt, i - 1, ck.obs_mode);
    if (i == b) break;
    const Vector logits = nn::forward(ck.actor, obs).output.col(0);
    bool stop = false;
    if (mode == InferMode::Greedy) {
      stop = logits(0) >= logits(1);
    } else {
      stop = unit(*rng) < nn::softmax(logits)(0);
    }
    if (stop) break;
  }
  StopResult r;
  r.topic_id = bt.topic.id;
  r.method = std::string(kMethodName);
  r.target_recall = ck.target_recall;
  r.docs_examined = bt.batch_end[i - 1];
  r.relevant_found = bt.cum_rel[i - 1];
  r.stop_batch = i;
  return r;
}

}  // namespace rlstop::ppo
