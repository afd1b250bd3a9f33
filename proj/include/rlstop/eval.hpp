#pragma once

// Recall, cost and excess per topic, per-method means, Pareto flags, and the
// CSV formats that carry stop results and reports.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "rlstop/baselines.hpp"
#include "rlstop/corpus.hpp"
#include "rlstop/csv.hpp"
#include "rlstop/error.hpp"
#include "rlstop/stop_result.hpp"

namespace rlstop::eval {

inline constexpr std::string_view kOracleMethod = "oracle";

inline double recall_of(const StopResult& r, const corpus::Topic& t) {
  const std::size_t rel = t.relevant();
  if (rel == 0) throw UndefinedTargetError("topic '" + t.id + "' has no relevant documents");
  return static_cast<double>(r.relevant_found) / static_cast<double>(rel);
}

inline double cost_of(const StopResult& r, const corpus::Topic& t) {
  return static_cast<double>(r.docs_examined) / static_cast<double>(t.size());
}

/// Normalized over/undershoot relative to the oracle's cost. When the oracle
/// must read everything (cost 1) the ratio is singular; we use 0 if the
/// method also read everything and (cost - 1) otherwise.
inline double excess(double method_cost, double oracle_cost) {
  if (oracle_cost >= 1.0) return method_cost >= 1.0 ? 0.0 : method_cost - 1.0;
  return (method_cost - oracle_cost) / (1.0 - oracle_cost);
}

inline double excess_of(const StopResult& r, const corpus::Topic& t, double target_recall) {
  const auto oracle = baselines::oracle_stop(t, target_recall);
  return excess(cost_of(r, t), cost_of(oracle, t));
}

struct TopicMetrics {
  std::string method;
  double target_recall = 0.0;
  std::string topic_id;
  std::size_t docs = 0;
  std::size_t relevant = 0;
  std::size_t docs_examined = 0;
  std::size_t relevant_found = 0;
  double recall = 0.0;
  double cost = 0.0;
  double excess = 0.0;
};

struct MethodSummary {
  std::string method;
  double target_recall = 0.0;
  double mean_recall = 0.0;
  double mean_cost = 0.0;
  double mean_excess = 0.0;
  bool pareto = false;
  std::vector<double> excess;  // per topic, in report row order
};

struct MetricsReport {
  std::vector<TopicMetrics> rows;          // sorted by (target, method, topic)
  std::vector<MethodSummary> summaries;    // sorted by (target, method)
};

/// Flags methods on the (cost, recall) frontier within each target: no other
/// method has recall >= and cost <= with one strict. The oracle is a
/// reference point; it is always flagged and never dominates other methods.
inline void mark_pareto(std::vector<MethodSummary>& s) {
  for (auto& a : s) {
    if (a.method == kOracleMethod) {
      a.pareto = true;
      continue;
    }
    a.pareto = std::none_of(s.begin(), s.end(), [&](const MethodSummary& b) {
      if (&a == &b || b.method == kOracleMethod || b.target_recall != a.target_recall) return false;
      return b.mean_recall >= a.mean_recall && b.mean_cost <= a.mean_cost &&
             (b.mean_recall > a.mean_recall || b.mean_cost < a.mean_cost);
    });
  }
}

inline MetricsReport aggregate(std::span<const StopResult> results, std::span<const corpus::Topic> topics) {
  std::map<std::string, const corpus::Topic*, std::less<>> by_id;
  for (const auto& t : topics) by_id[t.id] = &t;

  MetricsReport rep;
  std::set<std::tuple<double, std::string, std::string>> seen;
  std::map<std::pair<std::string, double>, double> oracle_cost;
  for (const auto& r : results) {
    auto it = by_id.find(r.topic_id);
    if (it == by_id.end()) throw ConfigError("result for unknown topic '" + r.topic_id + "'");
    const corpus::Topic& t = *it->second;
    if (!seen.emplace(r.target_recall, r.method, r.topic_id).second) {
      throw ConfigError("duplicate result for method '" + r.method + "', topic '" + r.topic_id + "'");
    }
    if (r.docs_examined < 1 || r.docs_examined > t.size()) {
      throw ConfigError("method '" + r.method + "' examined " + std::to_string(r.docs_examined) +
                        " documents of topic '" + t.id + "' (N = " + std::to_string(t.size()) + ")");
    }
    auto key = std::make_pair(t.id, r.target_recall);
    auto oc = oracle_cost.find(key);
    if (oc == oracle_cost.end()) {
      oc = oracle_cost.emplace(key, cost_of(baselines::oracle_stop(t, r.target_recall), t)).first;
    }
    TopicMetrics m;
    m.method = r.method;
    m.target_recall = r.target_recall;
    m.topic_id = t.id;
    m.docs = t.size();
    m.relevant = t.relevant();
    m.docs_examined = r.docs_examined;
    m.relevant_found = r.relevant_found;
    m.recall = recall_of(r, t);
    m.cost = cost_of(r, t);
    m.excess = excess(m.cost, oc->second);
    rep.rows.push_back(std::move(m));
  }
  std::sort(rep.rows.begin(), rep.rows.end(), [](const TopicMetrics& a, const TopicMetrics& b) {
    return std::tie(a.target_recall, a.method, a.topic_id) < std::tie(b.target_recall, b.method, b.topic_id);
  });

  for (const auto& m : rep.rows) {
    if (rep.summaries.empty() || rep.summaries.back().method != m.method ||
        rep.summaries.back().target_recall != m.target_recall) {
      MethodSummary s;
      s.method = m.method;
      s.target_recall = m.target_recall;
      rep.summaries.push_back(std::move(s));
    }
    auto& s = rep.summaries.back();
    s.mean_recall += m.recall;
    s.mean_cost += m.cost;
    s.mean_excess += m.excess;
    s.excess.push_back(m.excess);
  }
  for (auto& s : rep.summaries) {
    const auto n = static_cast<double>(s.excess.size());
    s.mean_recall /= n;
    s.mean_cost /= n;
    s.mean_excess /= n;
  }
  mark_pareto(rep.summaries);
  return rep;
}

inline constexpr int kReportFormatVersion = 1;
inline constexpr std::string_view kReportHeader =
    "method,target,topic_id,N,R,docs_examined,relevant_found,recall,cost,excess";
inline constexpr std::string_view kAggregateHeader = "method,target,mean_recall,mean_cost,mean_excess,pareto_flag";
inline constexpr std::string_view kStopResultHeader = "topic_id,method,target,docs_examined,relevant_found,stop_batch";

inline std::string footer() {
  return "# rlstop report format v" + std::to_string(kReportFormatVersion) +
         "; cost is a proportion of N; excess = (cost - oracle_cost) / (1 - oracle_cost), and when oracle_cost = 1 "
         "excess = 0 if cost = 1 else cost - 1\n";
}

inline std::string format_target(double t) { return csv::shortest(t); }

inline std::string report_csv(const MetricsReport& rep) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& m : rep.rows) {
    out += csv::join({m.method, format_target(m.target_recall), m.topic_id, std::to_string(m.docs),
                      std::to_string(m.relevant), std::to_string(m.docs_examined), std::to_string(m.relevant_found),
                      csv::fixed(m.recall), csv::fixed(m.cost), csv::fixed(m.excess)});
    out += '\n';
  }
  return out + footer();
}

inline std::string aggregate_csv(const MetricsReport& rep) {
  std::string out(kAggregateHeader);
  out += '\n';
  for (const auto& s : rep.summaries) {
    out += csv::join({s.method, format_target(s.target_recall), csv::fixed(s.mean_recall), csv::fixed(s.mean_cost),
                      csv::fixed(s.mean_excess), s.pareto ? "1" : "0"});
    out += '\n';
  }
  return out + footer();
}

inline std::string stop_results_csv(std::span<const StopResult> results) {
  std::string out(kStopResultHeader);
  out += '\n';
  for (const auto& r : results) {
    out += csv::join({r.topic_id, r.method, format_target(r.target_recall), std::to_string(r.docs_examined),
                      std::to_string(r.relevant_found), r.stop_batch ? std::to_string(*r.stop_batch) : ""});
    out += '\n';
  }
  return out;
}

/// Reads stop results: our own format or an external import with at least
/// (topic_id, method, docs_examined). Without a target column every row gets
/// `default_target`. relevant_found is recomputed from the topics when they
/// are supplied.
inline std::vector<StopResult> parse_stop_results(std::string_view text, std::string_view source,
                                                  std::optional<double> default_target = std::nullopt,
                                                  std::span<const corpus::Topic> topics = {}) {
  const auto table = csv::parse(text);
  const auto c_topic = table.require("topic_id", source);
  const auto c_method = table.require("method", source);
  const auto c_docs = table.require("docs_examined", source);
  const auto c_target = table.find("target");
  const auto c_found = table.find("relevant_found");
  const auto c_batch = table.find("stop_batch");
  if (c_target == csv::Table::npos && !default_target) {
    throw ConfigError(std::string(source) + ": missing required column 'target' (or pass exactly one target)");
  }
  std::map<std::string, baselines::GainCurve, std::less<>> gains;
  for (const auto& t : topics) gains.emplace(t.id, baselines::GainCurve(t));

  auto number = [&](const std::string& s, std::size_t line, std::string_view column) {
    auto v = corpus::detail::parse_number<double>(s);
    if (!v) throw ParseError(line, std::string(source) + ": column '" + std::string(column) + "' is not numeric");
    return *v;
  };
  auto count = [&](const std::string& s, std::size_t line, std::string_view column) {
    auto v = corpus::detail::parse_number<std::size_t>(s);
    if (!v) throw ParseError(line, std::string(source) + ": column '" + std::string(column) + "' is not a count");
    return *v;
  };

  std::vector<StopResult> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto line = table.row_lines[i];
    StopResult r;
    r.topic_id = row[c_topic];
    r.method = row[c_method];
    r.docs_examined = count(row[c_docs], line, "docs_examined");
    r.target_recall = c_target != csv::Table::npos ? number(row[c_target], line, "target") : *default_target;
    corpus::check_target(r.target_recall);
    if (auto g = gains.find(r.topic_id); g != gains.end()) {
      if (r.docs_examined > g->second.size()) {
        throw ParseError(line, std::string(source) + ": docs_examined exceeds topic size");
      }
      r.relevant_found = g->second(r.docs_examined);
    } else if (c_found != csv::Table::npos) {
      r.relevant_found = count(row[c_found], line, "relevant_found");
    }
    if (c_batch != csv::Table::npos && !row[c_batch].empty()) r.stop_batch = count(row[c_batch], line, "stop_batch");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace rlstop::eval
