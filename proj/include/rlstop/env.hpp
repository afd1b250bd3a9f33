#pragma once

// The stopping decision process: batches of a ranking are revealed one at a
// time and the agent chooses STOP or CONTINUE after each.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlstop/corpus.hpp"
#include "rlstop/error.hpp"

namespace rlstop::env {

enum class Action : std::uint8_t { Stop = 0, Continue = 1 };

inline constexpr double kUnexamined = -1.0;

/// How examined batches are encoded in the observation vector.
enum class ObsMode : std::uint8_t {
  Ratio,  // relevant / batch size, in [0, 1]
  Count,  // raw relevant count
};

inline std::string_view to_string(ObsMode mode) { return mode == ObsMode::Ratio ? "ratio" : "count"; }

inline ObsMode obs_mode_from_string(std::string_view s) {
  if (s == "ratio") return ObsMode::Ratio;
  if (s == "count") return ObsMode::Count;
  throw ConfigError("unknown observation mode '" + std::string(s) + "' (expected ratio or count)");
}

/// Per-state reward: 1 - i/T up to the target batch, -(i-T)/(B-T) past it.
inline double reward(std::size_t i, std::size_t target, std::size_t batches) {
  const auto di = static_cast<double>(i);
  const auto dt = static_cast<double>(target);
  if (i <= target) return 1.0 - di / dt;
  return -(di - dt) / static_cast<double>(batches - target);
}

/// Encoded value of batch j (0-based) once examined.
inline double batch_feature(const corpus::BatchedTopic& bt, std::size_t j, ObsMode mode) {
  const auto rel = static_cast<double>(bt.batch_rel[j]);
  return mode == ObsMode::Ratio ? rel / static_cast<double>(bt.batch_sizes[j]) : rel;
}

/// Observation for state S_examined: the first `examined` batches revealed.
inline void observe(const corpus::BatchedTopic& bt, std::size_t examined, ObsMode mode, std::span<double> out) {
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = j < examined ? batch_feature(bt, j, mode) : kUnexamined;
}

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

/// One episode over one batched topic. The topic must outlive the env.
class StopEnv {
 public:
  explicit StopEnv(ObsMode mode = ObsMode::Ratio) : mode_(mode) {}

  /// Moves to S_1 and returns its observation.
  std::span<const double> reset(const corpus::BatchedTopic& bt, double target_recall) {
    const std::size_t t = corpus::target_batch(bt, target_recall);
    reset(bt, target_recall, t);
    return obs_;
  }

  /// Reset with a precomputed target batch.
  void reset(const corpus::BatchedTopic& bt, double target_recall, std::size_t target) {
    topic_ = &bt;
    target_recall_ = target_recall;
    target_ = target;
    i_ = 1;
    done_ = false;
    episode_return_ = 0.0;
    obs_.assign(bt.batches(), kUnexamined);
    obs_[0] = batch_feature(bt, 0, mode_);
  }

  /// Credits R(S_i) for the state the action is taken in. STOP, or any
  /// action at S_B, ends the episode; CONTINUE reveals the next batch.
  StepResult step(Action action) {
    if (topic_ == nullptr) throw UsageError("step before reset");
    if (done_) throw UsageError("step after episode end");
    const std::size_t b = topic_->batches();
    StepResult res;
    res.reward = env::reward(i_, target_, b);
    episode_return_ += res.reward;
    if (action == Action::Stop || i_ == b) {
      done_ = true;
      res.done = true;
      return res;
    }
    obs_[i_] = batch_feature(*topic_, i_, mode_);
    ++i_;
    return res;
  }

  std::span<const double> observation() const noexcept { return obs_; }
  std::size_t batch_index() const noexcept { return i_; }
  std::size_t target_batch() const noexcept { return target_; }
  double target_recall() const noexcept { return target_recall_; }
  bool done() const noexcept { return done_; }
  double episode_return() const noexcept { return episode_return_; }
  const corpus::BatchedTopic* topic() const noexcept { return topic_; }
  ObsMode mode() const noexcept { return mode_; }

 private:
  ObsMode mode_;
  const corpus::BatchedTopic* topic_ = nullptr;
  double target_recall_ = 1.0;
  std::size_t target_ = 1;
  std::size_t i_ = 1;
  bool done_ = false;
  double episode_return_ = 0.0;
  std::vector<double> obs_;
};

/// An episode that finished during a vectorized step.
struct EpisodeInfo {
  std::size_t slot = 0;
  std::size_t topic_index = 0;
  std::size_t stop_batch = 0;
  double episode_return = 0.0;
};

struct VecStep {
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;  // episode boundary: the slot was auto-reset
  std::vector<EpisodeInfo> finished;
};

/// Independent stopping episodes over a shared topic pool. Finished slots
/// are reset onto a topic drawn uniformly from the pool; draws happen in slot
/// order so a seed fixes the whole resampling sequence.
class VecEnv {
 public:
  VecEnv(std::span<const corpus::BatchedTopic> pool, double target_recall, std::size_t n_envs,
         std::uint64_t seed, ObsMode mode = ObsMode::Ratio)
      : pool_(pool), target_recall_(target_recall), rng_(seed), envs_(n_envs, StopEnv(mode)) {
    if (pool_.empty()) throw ConfigError("topic pool is empty");
    if (n_envs == 0) throw ConfigError("need at least one environment");
    corpus::check_target(target_recall);
    width_ = pool_.front().batches();
    targets_.reserve(pool_.size());
    for (const auto& bt : pool_) {
      if (bt.batches() != width_) {
        throw ConfigError("topic '" + bt.topic.id + "' has " + std::to_string(bt.batches()) +
                          " batches, pool uses " + std::to_string(width_));
      }
      targets_.push_back(corpus::target_batch(bt, target_recall));
    }
    topic_of_.assign(n_envs, 0);
    reset();
  }

  void reset() {
    for (std::size_t e = 0; e < envs_.size(); ++e) reset_slot(e);
  }

  VecStep step(std::span<const Action> actions) {
    if (actions.size() != envs_.size()) {
      throw UsageError("expected " + std::to_string(envs_.size()) + " actions, got " + std::to_string(actions.size()));
    }
    VecStep out;
    out.rewards.resize(envs_.size());
    out.dones.resize(envs_.size());
    for (std::size_t e = 0; e < envs_.size(); ++e) {
      auto r = envs_[e].step(actions[e]);
      out.rewards[e] = r.reward;
      out.dones[e] = r.done ? 1 : 0;
      if (r.done) {
        out.finished.push_back({e, topic_of_[e], envs_[e].batch_index(), envs_[e].episode_return()});
        reset_slot(e);
      }
    }
    return out;
  }

  /// Writes current observations column-wise: slot e occupies out[e*width .. (e+1)*width).
  void observations(std::span<double> out) const {
    for (std::size_t e = 0; e < envs_.size(); ++e) {
      auto o = envs_[e].observation();
      std::copy(o.begin(), o.end(), out.begin() + static_cast<std::ptrdiff_t>(e * width_));
    }
  }

  std::size_t size() const noexcept { return envs_.size(); }
  std::size_t width() const noexcept { return width_; }
  const StopEnv& env(std::size_t e) const { return envs_.at(e); }
  std::size_t topic_index(std::size_t e) const { return topic_of_.at(e); }

 private:
  void reset_slot(std::size_t e) {
    std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
    const std::size_t k = pick(rng_);
    topic_of_[e] = k;
    envs_[e].reset(pool_[k], target_recall_, targets_[k]);
  }

  std::span<const corpus::BatchedTopic> pool_;
  double target_recall_;
  std::mt19937_64 rng_;
  std::vector<StopEnv> envs_;
  std::vector<std::size_t> targets_;
  std::vector<std::size_t> topic_of_;
  std::size_t width_ = 0;
};

}  // namespace rlstop::env
