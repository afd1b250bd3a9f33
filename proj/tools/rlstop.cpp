// rlstop command-line tool: synth | train | stop | baseline | eval.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlstop/baselines.hpp"
#include "rlstop/checkpoint.hpp"
#include "rlstop/corpus.hpp"
#include "rlstop/eval.hpp"
#include "rlstop/io.hpp"
#include "rlstop/ppo.hpp"

namespace fs = std::filesystem;
using namespace rlstop;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string run;
  std::string qrels;
  std::vector<double> targets;
  std::size_t batches = 100;
  std::uint64_t seed = 0;
  std::string out;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " file '" + path + "' does not exist");
}

void check_targets(const std::vector<double>& targets) {
  if (targets.empty()) throw ConfigError("at least one --target is required");
  for (double t : targets) corpus::check_target(t);
}

corpus::AssembledTopics load(const CommonOptions& o) {
  require_file(o.run, "run");
  require_file(o.qrels, "qrels");
  auto topics = io::load_topics(o.run, o.qrels);
  for (const auto& w : topics.warnings) std::cerr << "warning: " << w << '\n';
  if (topics.topics.empty()) throw ConfigError("no topics with relevant documents");
  return topics;
}

std::vector<corpus::BatchedTopic> batch_all(const std::vector<corpus::Topic>& topics, std::size_t batches) {
  std::vector<corpus::BatchedTopic> out;
  out.reserve(topics.size());
  for (const auto& t : topics) {
    out.push_back(corpus::batch_topic(t, batches));
    if (out.back().clamped()) {
      std::cerr << "warning: topic '" << t.id << "' has " << t.size() << " documents; batch count clamped to "
                << out.back().batches() << '\n';
    }
  }
  return out;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    io::write_file(path, content);
  }
}

std::string target_tag(double t) { return "t" + csv::shortest(t); }

// synth --------------------------------------------------------------------

struct SynthOptions {
  CommonOptions common;
  corpus::SynthConfig cfg{20, 2000, 0.02, 130.0, 0, "synth"};
};

void cmd_synth(SynthOptions& o) {
  if (o.common.run.empty() || o.common.qrels.empty()) throw ConfigError("synth needs --run and --qrels output paths");
  o.cfg.seed = o.common.seed;
  const auto topics = corpus::synth_topics(o.cfg);
  io::write_file(o.common.run, corpus::write_run(topics));
  io::write_file(o.common.qrels, corpus::write_qrels(topics));
  double prevalence = 0.0;
  for (const auto& t : topics) prevalence += static_cast<double>(t.relevant()) / static_cast<double>(t.size());
  std::printf("topics=%zu docs=%zu mean_prevalence=%.6f\n", topics.size(), o.cfg.docs,
              prevalence / static_cast<double>(topics.size()));
}

// train --------------------------------------------------------------------

struct TrainOptions {
  CommonOptions common;
  ppo::Hyperparams hp;
  std::string normalize = "ratio";
  bool verbose = false;
};

void cmd_train(TrainOptions& o) {
  check_targets(o.common.targets);
  if (o.common.out.empty()) throw ConfigError("train needs --out directory");
  const auto mode = env::obs_mode_from_string(o.normalize);
  o.hp.seed = o.common.seed;
  o.hp.validate();
  const auto topics = load(o.common);
  const auto pool = batch_all(topics.topics, o.common.batches);
  for (double target : o.common.targets) {
    auto result = ppo::train(pool, target, o.hp, mode, [&](const ppo::LogRow& row) {
      if (o.verbose) std::cerr << ppo::to_csv_line(row) << '\n';
    });
    const fs::path dir(o.common.out);
    const auto ck_path = dir / ("rlstop_" + target_tag(target) + ".json");
    const auto log_path = dir / ("train_log_" + target_tag(target) + ".csv");
    io::write_file(ck_path, checkpoint::dump(result.checkpoint));
    io::write_file(log_path, ppo::training_log_csv(result.log));
    const auto& last = result.log.back();
    std::printf("target=%s timesteps=%zu mean_stop_batch=%s checkpoint=%s\n", csv::shortest(target).c_str(),
                result.checkpoint.timesteps, csv::shortest(last.mean_stop_batch).c_str(), ck_path.c_str());
  }
}

// stop ---------------------------------------------------------------------

struct StopOptions {
  CommonOptions common;
  std::string checkpoint;
  std::string mode = "greedy";
  std::optional<std::size_t> batches;
};

void cmd_stop(StopOptions& o) {
  require_file(o.checkpoint, "checkpoint");
  if (o.mode != "greedy" && o.mode != "sample") throw ConfigError("--mode must be greedy or sample");
  const auto ck = checkpoint::load(o.checkpoint);
  if (o.batches && *o.batches != ck.batches) {
    throw ConfigError("--batches " + std::to_string(*o.batches) + " does not match checkpoint batch count " +
                      std::to_string(ck.batches));
  }
  const auto topics = load(o.common);
  const auto batched = batch_all(topics.topics, ck.batches);
  const auto mode = o.mode == "greedy" ? ppo::InferMode::Greedy : ppo::InferMode::Sample;
  auto rng = ppo::stream(o.common.seed, ppo::kActionStream);
  std::vector<StopResult> results;
  for (const auto& bt : batched) results.push_back(ppo::infer_stop(ck, bt, mode, &rng));
  emit(o.common.out, eval::stop_results_csv(results));
}

// baseline -----------------------------------------------------------------

struct BaselineOptions {
  CommonOptions common;
  std::string method;
  double fraction = 0.5;
  baselines::KneeParams knee;
};

void cmd_baseline(BaselineOptions& o) {
  check_targets(o.common.targets);
  const auto topics = load(o.common);
  std::vector<StopResult> results;
  for (double target : o.common.targets) {
    if (o.method == "oracle") {
      for (const auto& t : topics.topics) results.push_back(baselines::oracle_stop(t, target));
    } else if (o.method == "knee") {
      for (const auto& bt : batch_all(topics.topics, o.common.batches)) {
        results.push_back(baselines::knee_stop(bt, target, o.knee));
      }
    } else if (o.method == "budget") {
      for (const auto& t : topics.topics) results.push_back(baselines::budget_stop(t, o.fraction, target));
    } else {
      throw ConfigError("unknown baseline '" + o.method + "'");
    }
  }
  emit(o.common.out, eval::stop_results_csv(results));
}

// eval ---------------------------------------------------------------------

struct EvalOptions {
  CommonOptions common;
  std::vector<std::string> results;
};

void cmd_eval(EvalOptions& o) {
  if (o.results.empty()) throw ConfigError("eval needs at least one --results file");
  for (const auto& r : o.results) require_file(r, "results");
  if (o.common.out.empty()) throw ConfigError("eval needs --out directory");
  for (double t : o.common.targets) corpus::check_target(t);
  const auto topics = load(o.common);
  std::optional<double> default_target;
  if (o.common.targets.size() == 1) default_target = o.common.targets.front();

  std::vector<StopResult> all;
  for (const auto& path : o.results) {
    auto rs = eval::parse_stop_results(io::read_file(path), path, default_target, topics.topics);
    all.insert(all.end(), rs.begin(), rs.end());
  }
  if (all.empty()) throw ConfigError("result files contain no rows");
  const auto report = eval::aggregate(all, topics.topics);
  const fs::path dir(o.common.out);
  io::write_file(dir / "report.csv", eval::report_csv(report));
  io::write_file(dir / "aggregate.csv", eval::aggregate_csv(report));
  std::cout << eval::aggregate_csv(report);
}

void add_data_options(CLI::App* cmd, CommonOptions& c) {
  cmd->add_option("--run", c.run, "Run file (topic Q0 doc rank score tag)");
  cmd->add_option("--qrels", c.qrels, "Qrels file (topic iter doc rel)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RL stopping rule for technology-assisted review"};
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.require_subcommand(1);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic run + qrels collection");
  c_synth->add_option("--run", synth.common.run, "Output run file")->required();
  c_synth->add_option("--qrels", synth.common.qrels, "Output qrels file")->required();
  c_synth->add_option("--topics", synth.cfg.count, "Number of topics")->capture_default_str();
  c_synth->add_option("--docs", synth.cfg.docs, "Documents per topic")->capture_default_str();
  c_synth->add_option("--prevalence", synth.cfg.prevalence, "Expected fraction of relevant documents")
      ->capture_default_str();
  c_synth->add_option("--decay", synth.cfg.decay, "Rank decay length of relevance probability")
      ->capture_default_str();
  c_synth->add_option("--prefix", synth.cfg.id_prefix, "Topic id prefix")->capture_default_str();
  c_synth->add_option("--seed", synth.common.seed, "Random seed")->capture_default_str();

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Train one stopping policy per target recall");
  add_data_options(c_train, train.common);
  c_train->add_option("--target", train.common.targets, "Target recall (repeatable)");
  c_train->add_option("--batches", train.common.batches, "Batches per ranking")->capture_default_str();
  c_train->add_option("--timesteps", train.hp.total_timesteps, "Training transitions")->capture_default_str();
  c_train->add_option("--seed", train.common.seed, "Random seed")->capture_default_str();
  c_train->add_option("--out", train.common.out, "Output directory for checkpoints and logs");
  c_train->add_option("--normalize-obs", train.normalize, "Observation encoding: ratio or count")
      ->check(CLI::IsMember({"ratio", "count"}))
      ->capture_default_str();
  c_train->add_option("--n-steps", train.hp.n_steps, "Rollout steps per env per update")->capture_default_str();
  c_train->add_option("--minibatch-size", train.hp.minibatch_size, "PPO minibatch size")->capture_default_str();
  c_train->add_option("--learning-rate", train.hp.learning_rate, "Adam learning rate")->capture_default_str();
  c_train->add_option("--epochs", train.hp.n_epochs, "Passes over each rollout")->capture_default_str();
  c_train->add_option("--entropy-coef", train.hp.entropy_coef, "Entropy bonus weight")->capture_default_str();
  c_train->add_option("--gamma", train.hp.gamma, "Discount factor")->capture_default_str();
  c_train->add_option("--clip-range", train.hp.clip_range, "PPO ratio clip")->capture_default_str();
  c_train->add_option("--gae-lambda", train.hp.gae_lambda, "GAE lambda")->capture_default_str();
  c_train->add_option("--value-coef", train.hp.value_coef, "Value loss weight")->capture_default_str();
  c_train->add_option("--n-envs", train.hp.n_envs, "Parallel environments")->capture_default_str();
  c_train->add_option("--max-grad-norm", train.hp.max_grad_norm, "Global gradient norm clip (0 = off)")
      ->capture_default_str();
  c_train->add_flag("--verbose", train.verbose, "Print the training log to stderr");

  StopOptions stop;
  auto* c_stop = app.add_subcommand("stop", "Apply a trained policy to every topic");
  add_data_options(c_stop, stop.common);
  c_stop->add_option("--checkpoint", stop.checkpoint, "Trained checkpoint");
  c_stop->add_option("--batches", stop.batches, "Expected batch count (must match the checkpoint)");
  c_stop->add_option("--mode", stop.mode, "greedy or sample")
      ->check(CLI::IsMember({"greedy", "sample"}))
      ->capture_default_str();
  c_stop->add_option("--seed", stop.common.seed, "Seed for sample mode")->capture_default_str();
  c_stop->add_option("--out", stop.common.out, "Output CSV (default stdout)");

  BaselineOptions base;
  auto* c_base = app.add_subcommand("baseline", "Run a reference stopping rule");
  add_data_options(c_base, base.common);
  c_base->add_option("--method", base.method, "oracle, knee or budget")
      ->required()
      ->check(CLI::IsMember({"oracle", "knee", "budget"}));
  c_base->add_option("--target", base.common.targets, "Target recall (repeatable)");
  c_base->add_option("--batches", base.common.batches, "Batch schedule for the knee method")->capture_default_str();
  c_base->add_option("--fraction", base.fraction, "Budget fraction of the ranking")->capture_default_str();
  c_base->add_option("--knee-base", base.knee.threshold_base, "Knee threshold base")->capture_default_str();
  c_base->add_option("--knee-cap", base.knee.relevant_cap, "Knee relevant-count cap")->capture_default_str();
  c_base->add_option("--out", base.common.out, "Output CSV (default stdout)");

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "Recall, cost and excess reports for stop results");
  add_data_options(c_eval, ev.common);
  c_eval->add_option("--results", ev.results, "Stop-result CSV (repeatable)");
  c_eval->add_option("--target", ev.common.targets, "Target for imported results without a target column");
  c_eval->add_option("--out", ev.common.out, "Output directory for report.csv and aggregate.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_synth) cmd_synth(synth);
    if (*c_train) cmd_train(train);
    if (*c_stop) cmd_stop(stop);
    if (*c_base) cmd_baseline(base);
    if (*c_eval) cmd_eval(ev);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
