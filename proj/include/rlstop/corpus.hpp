#pragma once

// Ranked collections with binary relevance: qrels/run ingestion, batching,
// target-batch lookup and a synthetic front-loaded topic generator.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <vector>

#include "rlstop/error.hpp"

namespace rlstop::corpus {

/// Slack applied to target·R comparisons so decimal targets such as 0.9 do
/// not miss an exactly-met threshold through rounding.
inline constexpr double kTargetEpsilon = 1e-9;

using Qrels = std::map<std::string, std::map<std::string, int>, std::less<>>;
using RunRankings = std::map<std::string, std::vector<std::string>, std::less<>>;

struct Topic {
  std::string id;
  std::vector<std::string> ranking;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t relevant() const noexcept {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  }
};

struct BatchedTopic {
  Topic topic;
  std::size_t requested_batches = 0;  // B as asked for, before clamping to N
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> batch_rel;
  std::vector<std::size_t> cum_rel;
  std::vector<std::size_t> batch_end;  // cumulative documents after each batch

  std::size_t batches() const noexcept { return batch_sizes.size(); }
  std::size_t size() const noexcept { return topic.size(); }
  std::size_t relevant() const noexcept { return cum_rel.empty() ? 0 : cum_rel.back(); }
  bool clamped() const noexcept { return requested_batches != batches(); }
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Calls fn(line_number, fields) for every non-blank line. Accepts LF and CRLF.
template <typename Fn>
void for_each_record(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    auto fields = split_ws(line);
    if (!fields.empty()) fn(line_no, fields);
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

}  // namespace detail

/// Parses "topic iteration doc relevance" lines. Graded relevance collapses
/// to binary; a later line for the same (topic, doc) wins.
inline Qrels parse_qrels(std::string_view text) {
  Qrels qrels;
  detail::for_each_record(text, [&](std::size_t line, const auto& f) {
    if (f.size() < 4) throw ParseError(line, "qrels line needs 4 fields, got " + std::to_string(f.size()));
    auto rel = detail::parse_number<long long>(f[3]);
    if (!rel) throw ParseError(line, "non-integer relevance '" + std::string(f[3]) + "'");
    qrels[std::string(f[0])][std::string(f[2])] = *rel > 0 ? 1 : 0;
  });
  return qrels;
}

/// Parses "topic Q0 doc rank score [tag]" lines into per-topic orderings:
/// ascending rank, then descending score, then doc id.
inline RunRankings parse_run(std::string_view text) {
  struct Entry {
    std::string doc;
    long long rank;
    double score;
  };
  std::map<std::string, std::vector<Entry>, std::less<>> entries;
  std::map<std::string, std::set<std::string, std::less<>>, std::less<>> seen;

  detail::for_each_record(text, [&](std::size_t line, const auto& f) {
    if (f.size() < 5) throw ParseError(line, "run line needs at least 5 fields, got " + std::to_string(f.size()));
    auto rank = detail::parse_number<long long>(f[3]);
    if (!rank) throw ParseError(line, "non-numeric rank '" + std::string(f[3]) + "'");
    auto score = detail::parse_number<double>(f[4]);
    if (!score || !std::isfinite(*score)) throw ParseError(line, "non-numeric score '" + std::string(f[4]) + "'");
    std::string topic(f[0]);
    std::string doc(f[2]);
    if (!seen[topic].insert(doc).second) {
      throw ParseError(line, "duplicate document '" + doc + "' in topic '" + topic + "'");
    }
    entries[topic].push_back({std::move(doc), *rank, *score});
  });

  RunRankings run;
  for (auto& [topic, list] : entries) {
    std::sort(list.begin(), list.end(), [](const Entry& a, const Entry& b) {
      return std::tie(a.rank, b.score, a.doc) < std::tie(b.rank, a.score, b.doc);
    });
    auto& ranking = run[topic];
    ranking.reserve(list.size());
    for (auto& e : list) ranking.push_back(std::move(e.doc));
  }
  return run;
}

struct AssembledTopics {
  std::vector<Topic> topics;
  std::vector<std::string> excluded;  // run topics with no relevant documents
  std::vector<std::string> warnings;
};

/// Aligns run rankings with qrels. Documents absent from qrels count as
/// non-relevant; topics with R = 0 are dropped and listed in `excluded`.
inline AssembledTopics assemble_topics(const RunRankings& run, const Qrels& qrels) {
  AssembledTopics out;
  for (const auto& [topic_id, ranking] : run) {
    auto q = qrels.find(topic_id);
    if (q == qrels.end()) throw ParseError("run topic '" + topic_id + "' is absent from qrels");
    Topic t;
    t.id = topic_id;
    t.ranking = ranking;
    t.labels.reserve(ranking.size());
    for (const auto& doc : ranking) {
      auto it = q->second.find(doc);
      t.labels.push_back(it != q->second.end() && it->second > 0 ? 1 : 0);
    }
    if (t.ranking.empty() || t.relevant() == 0) {
      out.excluded.push_back(topic_id);
      out.warnings.push_back("topic '" + topic_id + "' has no relevant documents; excluded");
      continue;
    }
    out.topics.push_back(std::move(t));
  }
  for (const auto& [topic_id, docs] : qrels) {
    if (!run.contains(topic_id)) out.warnings.push_back("qrels topic '" + topic_id + "' not in run; ignored");
  }
  return out;
}

/// Splits a topic into B contiguous batches. The first N mod B batches get
/// one extra document. B larger than N is clamped to N.
inline BatchedTopic batch_topic(Topic topic, std::size_t batches) {
  if (batches == 0) throw ConfigError("batch count must be positive");
  if (topic.size() == 0) throw ConfigError("topic '" + topic.id + "' is empty");
  BatchedTopic bt;
  bt.requested_batches = batches;
  const std::size_t n = topic.size();
  const std::size_t b = std::min(batches, n);
  const std::size_t base = n / b;
  const std::size_t extra = n % b;
  bt.batch_sizes.resize(b);
  bt.batch_rel.resize(b);
  bt.cum_rel.resize(b);
  bt.batch_end.resize(b);
  std::size_t pos = 0;
  std::size_t cum = 0;
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t len = base + (j < extra ? 1 : 0);
    std::size_t rel = 0;
    for (std::size_t k = pos; k < pos + len; ++k) rel += topic.labels[k];
    pos += len;
    cum += rel;
    bt.batch_sizes[j] = len;
    bt.batch_rel[j] = rel;
    bt.cum_rel[j] = cum;
    bt.batch_end[j] = pos;
  }
  bt.topic = std::move(topic);
  return bt;
}

inline void check_target(double target_recall) {
  if (!(target_recall > 0.0 && target_recall <= 1.0)) {
    throw ConfigError("target recall must lie in (0, 1], got " + std::to_string(target_recall));
  }
}

/// Smallest count of relevant documents that meets target·R.
inline std::size_t required_relevant(double target_recall, std::size_t relevant) {
  check_target(target_recall);
  const double need = target_recall * static_cast<double>(relevant) - kTargetEpsilon;
  return static_cast<std::size_t>(std::max(0.0, std::ceil(need)));
}

/// 1-based index of the first batch at which cumulative recall reaches the target.
inline std::size_t target_batch(const BatchedTopic& bt, double target_recall) {
  const std::size_t r = bt.relevant();
  if (r == 0) throw UndefinedTargetError("topic '" + bt.topic.id + "' has no relevant documents");
  const std::size_t need = required_relevant(target_recall, r);
  auto it = std::lower_bound(bt.cum_rel.begin(), bt.cum_rel.end(), need);
  return static_cast<std::size_t>(it - bt.cum_rel.begin()) + 1;
}

struct SynthConfig {
  std::size_t count = 0;
  std::size_t docs = 0;
  double prevalence = 0.02;
  double decay = 100.0;  // +inf gives uniform relevance
  std::uint64_t seed = 0;
  std::string id_prefix = "synth";
};

/// Scale c such that sum_r min(1, c·exp(-r/decay)) = prevalence·N for r = 1..N.
inline double synth_scale(std::size_t docs, double prevalence, double decay) {
  const double target = prevalence * static_cast<double>(docs);
  auto expected = [&](double log_c) {
    double sum = 0.0;
    for (std::size_t r = 1; r <= docs; ++r) sum += std::min(1.0, std::exp(log_c - static_cast<double>(r) / decay));
    return sum;
  };
  // expected(log prevalence) <= target < expected(N / decay) = N.
  double lo = std::log(prevalence);
  double hi = std::isinf(decay) ? 0.0 : static_cast<double>(docs) / decay;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < target ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

/// Per-rank relevance probabilities of the synthetic generator.
inline std::vector<double> synth_profile(std::size_t docs, double prevalence, double decay) {
  const double c = synth_scale(docs, prevalence, decay);
  std::vector<double> p(docs);
  for (std::size_t r = 1; r <= docs; ++r) p[r - 1] = std::min(1.0, c * std::exp(-static_cast<double>(r) / decay));
  return p;
}

/// Front-loaded synthetic topics standing in for actively-learned rankings.
/// Deterministic per seed; topics that sample no relevant document are redrawn.
inline std::vector<Topic> synth_topics(const SynthConfig& cfg) {
  if (cfg.count == 0) throw ConfigError("topic count must be positive");
  if (cfg.docs == 0) throw ConfigError("document count must be positive");
  if (!(cfg.prevalence > 0.0 && cfg.prevalence < 1.0)) throw ConfigError("prevalence must lie in (0, 1)");
  if (!(cfg.decay > 0.0)) throw ConfigError("decay must be positive");

  const auto p = synth_profile(cfg.docs, cfg.prevalence, cfg.decay);
  if (p.back() >= 1.0) throw ConfigError("prevalence infeasible: every rank would be relevant");
  double log_none = 0.0;
  for (double pr : p) log_none += std::log1p(-std::min(pr, 1.0 - 1e-300));
  if (log_none > std::log1p(-1e-6)) {
    throw ConfigError("prevalence infeasible: topics would almost never contain a relevant document");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Topic> topics;
  topics.reserve(cfg.count);
  char buf[64];
  for (std::size_t t = 0; t < cfg.count; ++t) {
    Topic topic;
    std::snprintf(buf, sizeof buf, "%03zu", t + 1);
    topic.id = cfg.id_prefix + buf;
    topic.ranking.reserve(cfg.docs);
    for (std::size_t r = 1; r <= cfg.docs; ++r) {
      std::snprintf(buf, sizeof buf, "-d%06zu", r);
      topic.ranking.push_back(topic.id + buf);
    }
    do {
      topic.labels.assign(cfg.docs, 0);
      for (std::size_t r = 0; r < cfg.docs; ++r) topic.labels[r] = unit(rng) < p[r] ? 1 : 0;
    } while (topic.relevant() == 0);
    topics.push_back(std::move(topic));
  }
  return topics;
}

/// Run-file rendering: rank = position, score = N - rank + 1.
inline std::string write_run(const std::vector<Topic>& topics, std::string_view tag = "rlstop") {
  std::string out;
  for (const auto& t : topics) {
    const std::size_t n = t.size();
    for (std::size_t i = 0; i < n; ++i) {
      out += t.id;
      out += " Q0 ";
      out += t.ranking[i];
      out += ' ';
      out += std::to_string(i + 1);
      out += ' ';
      out += std::to_string(n - i);
      out += ' ';
      out += tag;
      out += '\n';
    }
  }
  return out;
}

/// Qrels rendering with one line per ranked document (0 or 1).
inline std::string write_qrels(const std::vector<Topic>& topics) {
  std::string out;
  for (const auto& t : topics) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      out += t.id;
      out += " 0 ";
      out += t.ranking[i];
      out += t.labels[i] ? " 1\n" : " 0\n";
    }
  }
  return out;
}

}  // namespace rlstop::corpus
