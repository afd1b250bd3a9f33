#pragma once

// Reference stopping rules: the label-aware oracle, the gain-curve knee
// heuristic and a fixed review budget.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rlstop/corpus.hpp"
#include "rlstop/error.hpp"
#include "rlstop/stop_result.hpp"

namespace rlstop::baselines {

/// Cumulative relevant count g(r) for r = 0..N.
struct GainCurve {
  std::vector<std::size_t> gain;

  explicit GainCurve(const corpus::Topic& t) : gain(t.size() + 1, 0) {
    for (std::size_t r = 0; r < t.size(); ++r) gain[r + 1] = gain[r] + t.labels[r];
  }
  std::size_t operator()(std::size_t rank) const { return gain.at(rank); }
  std::size_t size() const noexcept { return gain.size() - 1; }
  std::size_t relevant() const noexcept { return gain.back(); }
};

inline StopResult make_result(const corpus::Topic& t, std::string method, double target, std::size_t rank,
                              const GainCurve& g) {
  StopResult r;
  r.topic_id = t.id;
  r.method = std::move(method);
  r.target_recall = target;
  r.docs_examined = rank;
  r.relevant_found = g(rank);
  return r;
}

/// Smallest rank whose cumulative recall meets the target.
inline StopResult oracle_stop(const corpus::Topic& t, double target_recall) {
  const GainCurve g(t);
  if (g.relevant() == 0) throw UndefinedTargetError("topic '" + t.id + "' has no relevant documents");
  const std::size_t need = corpus::required_relevant(target_recall, g.relevant());
  std::size_t rank = 1;
  while (g(rank) < need) ++rank;
  return make_result(t, "oracle", target_recall, rank, g);
}

struct KneeParams {
  double threshold_base = 156.0;
  double relevant_cap = 150.0;
  double smoothing = 1.0;  // added to the trailing-slope numerator
};

/// Knee candidate at examined rank i: the k < i furthest above the chord
/// (0,0)-(i, g(i)). Returns 0 when no point lies strictly above the chord.
inline std::size_t knee_point(const GainCurve& g, std::size_t i) {
  const auto gi = static_cast<long long>(g(i));
  const auto di = static_cast<long long>(i);
  long long best = 0;
  std::size_t knee = 0;
  for (std::size_t k = 1; k < i; ++k) {
    // Proportional to the signed perpendicular distance to the chord.
    const long long d = di * static_cast<long long>(g(k)) - gi * static_cast<long long>(k);
    if (d > best) {
      best = d;
      knee = k;
    }
  }
  return knee;
}

/// Slope before the knee over (smoothed) slope after it.
inline double slope_ratio(const GainCurve& g, std::size_t knee, std::size_t i, double smoothing) {
  const double before = static_cast<double>(g(knee)) / static_cast<double>(knee);
  const double after = (static_cast<double>(g(i)) - static_cast<double>(g(knee)) + smoothing) /
                       static_cast<double>(i - knee);
  return before / after;
}

/// Knee method evaluated at each batch end; stops at N if it never fires.
inline StopResult knee_stop(const corpus::BatchedTopic& bt, double target_recall, const KneeParams& kp = {}) {
  const GainCurve g(bt.topic);
  const std::size_t n = bt.size();
  for (std::size_t j = 0; j < bt.batches(); ++j) {
    const std::size_t i = bt.batch_end[j];
    if (i == n) break;
    const std::size_t k = knee_point(g, i);
    if (k == 0) continue;
    const double threshold = kp.threshold_base - std::min(static_cast<double>(g(k)), kp.relevant_cap);
    if (slope_ratio(g, k, i, kp.smoothing) >= threshold) {
      auto r = make_result(bt.topic, "knee", target_recall, i, g);
      r.stop_batch = j + 1;
      return r;
    }
  }
  auto r = make_result(bt.topic, "knee", target_recall, n, g);
  r.stop_batch = bt.batches();
  return r;
}

/// Reviews ceil(fraction·N) documents.
inline StopResult budget_stop(const corpus::Topic& t, double fraction, double target_recall = 1.0) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("budget fraction must lie in (0, 1]");
  const GainCurve g(t);
  const auto n = static_cast<double>(t.size());
  auto rank = static_cast<std::size_t>(std::ceil(fraction * n - corpus::kTargetEpsilon));
  rank = std::clamp<std::size_t>(rank, 1, t.size());
  return make_result(t, "budget", target_recall, rank, g);
}

}  // namespace rlstop::baselines
