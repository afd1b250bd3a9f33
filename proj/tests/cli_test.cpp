#include <gtest/gtest.h>

#include <filesystem>

#include "rlstop/checkpoint.hpp"
#include "rlstop/corpus.hpp"
#include "rlstop/csv.hpp"
#include "rlstop/io.hpp"
#include "support/oracles.hpp"
#include "support/shell.hpp"

namespace fs = std::filesystem;
using namespace rlstop;
using rlstop::testing::CommandResult;
using rlstop::testing::slurp;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("rlstop_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    if (!HasFailure()) fs::remove_all(dir_);
  }

  CommandResult rlstop(const std::vector<std::string>& args) {
    return rlstop::testing::run_command(RLSTOP_CLI, args, dir_ / "io");
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small synthetic collection: 6 topics of 300 docs.
  void synth(const std::string& prefix = "c", const std::string& seed = "1") {
    auto r = rlstop({"synth", "--run", path(prefix + ".run"), "--qrels", path(prefix + ".qrels"), "--topics", "6",
                     "--docs", "300", "--prevalence", "0.05", "--decay", "40", "--seed", seed});
    ASSERT_EQ(r.exit_code, 0) << r.err;
  }

  std::vector<std::string> data(const std::string& prefix = "c") {
    return {"--run", path(prefix + ".run"), "--qrels", path(prefix + ".qrels")};
  }

  static std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  std::vector<std::string> small_train() const {
    return {"--batches", "10", "--timesteps", "400", "--n-steps", "10", "--n-envs", "4", "--minibatch-size", "20",
            "--epochs", "1"};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(rlstop({"--help"}).exit_code, 0);
  EXPECT_EQ(rlstop({}).exit_code, 2);
  EXPECT_EQ(rlstop({"frobnicate"}).exit_code, 2);
  EXPECT_EQ(rlstop({"baseline", "--method", "magic"}).exit_code, 2);
}

TEST_F(Cli, SynthWritesReparseableDeterministicFiles) {
  synth("a", "1");
  synth("b", "1");
  synth("c", "2");
  EXPECT_EQ(slurp(path("a.run")), slurp(path("b.run")));
  EXPECT_EQ(slurp(path("a.qrels")), slurp(path("b.qrels")));
  EXPECT_NE(slurp(path("a.qrels")), slurp(path("c.qrels")));

  auto loaded = io::load_topics(path("a.run"), path("a.qrels"));
  auto direct = corpus::synth_topics({6, 300, 0.05, 40.0, 1, "synth"});
  ASSERT_EQ(loaded.topics.size(), direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) {
    EXPECT_EQ(loaded.topics[i].id, direct[i].id);
    EXPECT_EQ(loaded.topics[i].ranking, direct[i].ranking);
    EXPECT_EQ(loaded.topics[i].labels, direct[i].labels);
  }
  auto r = rlstop({"synth", "--run", path("x.run"), "--qrels", path("x.qrels"), "--topics", "6"});
  EXPECT_NE(r.out.find("topics=6 docs=2000 mean_prevalence="), std::string::npos);
}

TEST_F(Cli, SynthZeroTopicsIsConfigError) {
  auto r = rlstop({"synth", "--run", path("z.run"), "--qrels", path("z.qrels"), "--topics", "0"});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(Cli, TrainOneCheckpointPerTarget) {
  synth();
  auto one = rlstop(concat(concat({"train", "--target", "0.9", "--out", path("one")}, data()), small_train()));
  ASSERT_EQ(one.exit_code, 0) << one.err;
  EXPECT_TRUE(fs::exists(path("one/rlstop_t0.9.json")));
  EXPECT_TRUE(fs::exists(path("one/train_log_t0.9.csv")));
  EXPECT_EQ(std::distance(fs::directory_iterator(path("one")), fs::directory_iterator{}), 2);

  auto three = rlstop(concat(concat({"train", "--target", "0.8", "--target", "0.9", "--target", "1.0", "--out",
                                     path("three")},
                                    data()),
                             small_train()));
  ASSERT_EQ(three.exit_code, 0) << three.err;
  for (const char* t : {"0.8", "0.9", "1"}) {
    auto ck = checkpoint::load(path(std::string("three/rlstop_t") + t + ".json"));
    EXPECT_EQ(csv::shortest(ck.target_recall), t);
    EXPECT_EQ(ck.batches, 10u);
    EXPECT_EQ(ck.timesteps, 400u);
  }
  // Log has a header plus one row per iteration (400 / (10·4) = 10).
  const auto log = slurp(path("three/train_log_t1.csv"));
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 11);
}

TEST_F(Cli, TrainInputErrors) {
  synth();
  auto missing = rlstop({"train", "--run", path("c.run"), "--qrels", path("nope.qrels"), "--target", "0.9", "--out",
                         path("o")});
  EXPECT_EQ(missing.exit_code, 2);
  EXPECT_NE(missing.err.find("nope.qrels"), std::string::npos);
  EXPECT_EQ(rlstop(concat({"train", "--target", "1.5", "--out", path("o")}, data())).exit_code, 2);
  EXPECT_EQ(rlstop(concat({"train", "--out", path("o")}, data())).exit_code, 2);
  EXPECT_EQ(rlstop(concat({"train", "--target", "0.9", "--out", path("o"), "--normalize-obs", "zscore"}, data()))
                .exit_code,
            2);
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
  synth();
  {
    std::ofstream cfg(path("train.ini"));
    cfg << "[train]\nbatches=10\ntimesteps=400\nn-steps=10\nn-envs=4\nminibatch-size=20\nepochs=1\n";
  }
  auto a = rlstop(concat({"--config", path("train.ini"), "train", "--target", "0.9", "--out", path("a")}, data()));
  ASSERT_EQ(a.exit_code, 0) << a.err;
  EXPECT_EQ(checkpoint::load(path("a/rlstop_t0.9.json")).hyperparams.total_timesteps, 400u);
  auto b = rlstop(concat(
      {"--config", path("train.ini"), "train", "--target", "0.9", "--out", path("b"), "--timesteps", "80"}, data()));
  ASSERT_EQ(b.exit_code, 0) << b.err;
  const auto ck = checkpoint::load(path("b/rlstop_t0.9.json"));
  EXPECT_EQ(ck.hyperparams.total_timesteps, 80u);
  EXPECT_EQ(ck.batches, 10u);
}

TEST_F(Cli, StopIsDeterministicAndChecksBatches) {
  synth();
  ASSERT_EQ(rlstop(concat(concat({"train", "--target", "0.9", "--out", path("m")}, data()), small_train())).exit_code,
            0);
  const auto ck = path("m/rlstop_t0.9.json");
  auto g1 = rlstop(concat({"stop", "--checkpoint", ck}, data()));
  auto g2 = rlstop(concat({"stop", "--checkpoint", ck}, data()));
  ASSERT_EQ(g1.exit_code, 0) << g1.err;
  EXPECT_EQ(g1.out, g2.out);
  EXPECT_EQ(g1.out.substr(0, g1.out.find('\n')), "topic_id,method,target,docs_examined,relevant_found,stop_batch");
  EXPECT_EQ(std::count(g1.out.begin(), g1.out.end(), '\n'), 7);

  auto s1 = rlstop(concat({"stop", "--checkpoint", ck, "--mode", "sample", "--seed", "5", "--out", path("s1.csv")}, data()));
  auto s2 = rlstop(concat({"stop", "--checkpoint", ck, "--mode", "sample", "--seed", "5", "--out", path("s2.csv")}, data()));
  ASSERT_EQ(s1.exit_code, 0) << s1.err;
  EXPECT_EQ(slurp(path("s1.csv")), slurp(path("s2.csv")));

  auto mismatch = rlstop(concat({"stop", "--checkpoint", ck, "--batches", "20"}, data()));
  EXPECT_EQ(mismatch.exit_code, 2);
  EXPECT_NE(mismatch.err.find("does not match"), std::string::npos);
  EXPECT_EQ(rlstop(concat({"stop", "--checkpoint", path("absent.json")}, data())).exit_code, 2);
}

TEST_F(Cli, QrelsOnlyTopicIsIgnoredWithWarning) {
  synth();
  {
    std::ofstream q(path("c.qrels"), std::ios::app);
    q << "ghost 0 ghost-d1 1\n";
  }
  auto r = rlstop(concat({"baseline", "--method", "oracle", "--target", "0.9"}, data()));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.err.find("ghost"), std::string::npos);
  EXPECT_EQ(r.out.find("ghost"), std::string::npos);
}

TEST_F(Cli, BaselinesThroughEval) {
  synth();
  ASSERT_EQ(rlstop(concat({"baseline", "--method", "oracle", "--target", "0.8", "--target", "1.0", "--out",
                           path("oracle.csv")},
                          data()))
                .exit_code,
            0);
  ASSERT_EQ(rlstop(concat({"baseline", "--method", "budget", "--fraction", "1.0", "--target", "0.8", "--target",
                           "1.0", "--out", path("budget.csv")},
                          data()))
                .exit_code,
            0);

  auto ev = rlstop(concat({"eval", "--results", path("oracle.csv"), "--results", path("budget.csv"), "--out",
                           path("rep")},
                          data()));
  ASSERT_EQ(ev.exit_code, 0) << ev.err;
  EXPECT_EQ(ev.out, slurp(path("rep/aggregate.csv")));
  const auto report = csv::parse(slurp(path("rep/report.csv")));
  const auto c_method = report.require("method", "report");
  const auto c_excess = report.require("excess", "report");
  const auto c_recall = report.require("recall", "report");
  EXPECT_EQ(report.rows.size(), 6u * 2 * 2);
  for (const auto& row : report.rows) {
    if (row[c_method] == "oracle") { EXPECT_EQ(row[c_excess], "0.000000"); }
    if (row[c_method] == "budget") { EXPECT_EQ(row[c_recall], "1.000000"); }
  }
  const auto agg = csv::parse(slurp(path("rep/aggregate.csv")));
  EXPECT_EQ(agg.rows.size(), 4u);
  for (const auto& row : agg.rows) {
    if (row[agg.require("method", "agg")] == "oracle") {
      EXPECT_EQ(row[agg.require("mean_excess", "agg")], "0.000000");
      EXPECT_EQ(row[agg.require("pareto_flag", "agg")], "1");
    }
  }
}

TEST_F(Cli, KneeOnStraightLineStopsAtN) {
  std::vector<std::uint8_t> labels(1000, 0);
  for (std::size_t i = 9; i < 1000; i += 10) labels[i] = 1;
  std::vector<corpus::Topic> topics{rlstop::testing::make_topic("line", labels)};
  io::write_file(path("l.run"), corpus::write_run(topics));
  io::write_file(path("l.qrels"), corpus::write_qrels(topics));
  auto r = rlstop(concat({"baseline", "--method", "knee", "--target", "1.0"}, data("l")));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("line,knee,1,1000,100,100\n"), std::string::npos) << r.out;
}

TEST_F(Cli, EvalOracleOnlyAndJointRows) {
  synth();
  ASSERT_EQ(rlstop(concat(concat({"train", "--target", "0.9", "--out", path("m")}, data()), small_train())).exit_code,
            0);
  ASSERT_EQ(rlstop(concat({"stop", "--checkpoint", path("m/rlstop_t0.9.json"), "--out", path("rl.csv")}, data()))
                .exit_code,
            0);
  ASSERT_EQ(rlstop(concat({"baseline", "--method", "oracle", "--target", "0.9", "--out", path("o.csv")}, data()))
                .exit_code,
            0);
  auto only = rlstop(concat({"eval", "--results", path("o.csv"), "--out", path("r1")}, data()));
  ASSERT_EQ(only.exit_code, 0) << only.err;
  EXPECT_NE(only.out.find("\noracle,0.9,"), std::string::npos);
  auto agg1 = csv::parse(only.out);
  ASSERT_EQ(agg1.rows.size(), 1u);
  EXPECT_EQ(agg1.rows[0][agg1.require("mean_excess", "a")], "0.000000");

  auto joint = rlstop(concat({"eval", "--results", path("rl.csv"), "--results", path("o.csv"), "--out", path("r2")},
                             data()));
  ASSERT_EQ(joint.exit_code, 0) << joint.err;
  auto agg2 = csv::parse(joint.out);
  ASSERT_EQ(agg2.rows.size(), 2u);
  EXPECT_EQ(agg2.rows[0][0], "oracle");
  EXPECT_EQ(agg2.rows[1][0], "rlstop");
}

TEST_F(Cli, EvalInputErrors) {
  synth();
  auto empty = rlstop(concat({"eval", "--out", path("r")}, data()));
  EXPECT_EQ(empty.exit_code, 2);
  {
    std::ofstream f(path("bad.csv"));
    f << "topic_id,method,examined\nsynth001,x,5\n";
  }
  auto bad = rlstop(concat({"eval", "--results", path("bad.csv"), "--target", "0.9", "--out", path("r")}, data()));
  EXPECT_NE(bad.exit_code, 0);
  EXPECT_NE(bad.err.find("'docs_examined'"), std::string::npos) << bad.err;
  {
    std::ofstream f(path("ext.csv"));
    f << "topic_id,method,docs_examined\nsynth001,external,150\n";
  }
  auto no_target = rlstop(concat({"eval", "--results", path("ext.csv"), "--out", path("r")}, data()));
  EXPECT_EQ(no_target.exit_code, 2);
  EXPECT_NE(no_target.err.find("'target'"), std::string::npos);
  auto imported = rlstop(concat({"eval", "--results", path("ext.csv"), "--target", "0.9", "--out", path("r")}, data()));
  EXPECT_EQ(imported.exit_code, 0) << imported.err;
  EXPECT_NE(imported.out.find("external,0.9,"), std::string::npos);
}
