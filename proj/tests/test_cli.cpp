#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "mrb/cli.hpp"
#include "mrb/data_io.hpp"
#include "temp_dir.hpp"

namespace mrb {
namespace {

using testing::TempDir;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string tiny_config_json(const TempDir& dir, const std::string& training = "{}") {
  nlohmann::json j;
  j["model"] = to_json(testing::tiny_model());
  j["training"] = nlohmann::json::parse(training);
  return dir.write("config.json", j.dump());
}

std::vector<std::string> data_args(const TempDir& dir) {
  return {"--bart-emb", dir.file("d/bart.mreb"), "--roberta-emb", dir.file("d/roberta.mreb"),
          "--labels", dir.file("d/labels.csv")};
}

void synth_tiny(const TempDir& dir) {
  const CliRun r = run({"synth", "--out-dir", dir.file("d"), "--classes", "3", "--per-class", "20",
                     "--bart-dim", "8", "--roberta-dim", "6", "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, exit_code::usage);
  const CliRun bogus = run({"bogus"});
  EXPECT_EQ(bogus.code, exit_code::usage);
  EXPECT_NE(bogus.err.find("shapes"), std::string::npos) << bogus.err;
  const CliRun missing = run({"evaluate"});
  EXPECT_EQ(missing.code, exit_code::usage);
  EXPECT_NE(missing.err.find("--model"), std::string::npos);
  EXPECT_EQ(run({"ablate", "--grid", "huge"}).code, exit_code::usage);
  EXPECT_EQ(run({"train", "--epochs", "many"}).code, exit_code::usage);
}

TEST(Cli, HelpExitsZero) {
  const CliRun r = run({"--help"});
  EXPECT_EQ(r.code, exit_code::ok);
  EXPECT_NE(r.out.find("train"), std::string::npos);
}

TEST(Cli, ShapesPrintsTheDefaultTrace) {
  const CliRun r = run({"shapes"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 20);
  EXPECT_NE(r.out.find("ensemble.bilstm0"), std::string::npos);
  EXPECT_NE(r.out.find("8520704"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitTwoAndNameEveryField) {
  TempDir dir;
  const auto bad = dir.write(
      "bad.json",
      R"({"model": {"bart_branch": {"units": 64, "cell_type": "LSTM"}, "n_classes": 1},
          "training": {"batch_size": 0}, "extra": 1})");
  const CliRun r = run({"shapes", "--config", bad});
  EXPECT_EQ(r.code, exit_code::data);
  EXPECT_NE(r.err.find("model.bart_branch.conv_kernel"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("model.n_classes"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("training.batch_size"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("extra"), std::string::npos) << r.err;

  const CliRun parse = run({"shapes", "--config", dir.write("p.json", "{\"model\": [1,}")});
  EXPECT_EQ(parse.code, exit_code::data);
  EXPECT_NE(parse.err.find("byte"), std::string::npos);
  EXPECT_EQ(run({"shapes", "--config", dir.file("missing.json")}).code, exit_code::data);
}

TEST(Cli, ConfigRoundTrip) {
  CliConfig cfg;
  cfg.model = testing::tiny_model();
  cfg.training.rounds = 3;
  cfg.paths.labels = "x.csv";
  const CliConfig back = cli_config_from_json(to_json(cfg));
  EXPECT_EQ(back.model, cfg.model);
  EXPECT_EQ(back.training.rounds, 3);
  EXPECT_EQ(back.paths.labels, "x.csv");
}

TEST(Cli, ShippedDefaultConfigMatchesBuiltInDefaults) {
  const CliConfig cfg = load_cli_config(MRB_SOURCE_DIR "/configs/default.json");
  EXPECT_EQ(cfg.model, ModelConfig{});
  EXPECT_EQ(to_json(cfg.training), to_json(TrainConfig{}));
}

TEST(Cli, SynthTrainEvaluate) {
  TempDir dir;
  synth_tiny(dir);
  const auto labels = read_labels(dir.file("d/labels.csv"));
  EXPECT_EQ(labels.ids.size(), 60u);
  EXPECT_EQ(read_embeddings(dir.file("d/bart.mreb")).dim, 8u);

  const auto config = tiny_config_json(dir, R"({"learning_rate": 0.01, "batch_size": 8})");
  const CliRun train = run(cat({"train", "--config", config, "--epochs", "3", "--out",
                             dir.file("m.mrbw"), "--history", dir.file("h.csv")},
                            data_args(dir)));
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_NE(train.out.find("epoch 3"), std::string::npos);
  EXPECT_NE(train.out.find("accuracy"), std::string::npos);
  const std::string history = dir.read("h.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 4);

  const CliRun eval = run(cat({"evaluate", "--model", dir.file("m.mrbw")}, data_args(dir)));
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_NE(eval.out.find("records 60"), std::string::npos);
}

TEST(Cli, RoundsAndAblateReports) {
  TempDir dir;
  synth_tiny(dir);
  const auto config = tiny_config_json(dir);
  const CliRun rounds = run(cat({"rounds", "--config", config, "--rounds", "2", "--epochs", "1",
                              "--csv", dir.file("r.csv"), "--bart-hours", "2", "--roberta-hours",
                              "1.5"},
                             data_args(dir)));
  ASSERT_EQ(rounds.code, 0) << rounds.err;
  EXPECT_NE(rounds.out.find("±"), std::string::npos);
  EXPECT_NE(rounds.out.find("bart embeddings 2.00"), std::string::npos) << rounds.out;
  EXPECT_NE(dir.read("r.csv").find("mean"), std::string::npos);

  const CliRun ablate = run(cat({"ablate", "--grid", "smoke", "--config", config, "--rounds", "1",
                              "--epochs", "1"},
                             data_args(dir)));
  ASSERT_EQ(ablate.code, 0) << ablate.err;
  EXPECT_NE(ablate.out.find("[6/6]"), std::string::npos);
}

TEST(Cli, DataErrorsExitTwo) {
  TempDir dir;
  synth_tiny(dir);
  // Default model expects 1024/768-d inputs.
  const CliRun dims = run(cat({"train", "--epochs", "1"}, data_args(dir)));
  EXPECT_EQ(dims.code, exit_code::data);
  EXPECT_NE(dims.err.find("dimension"), std::string::npos) << dims.err;

  dir.write("d/labels.csv", "id,label\nr0,class_0\n");
  const CliRun count = run(cat({"train", "--config", tiny_config_json(dir)}, data_args(dir)));
  EXPECT_EQ(count.code, exit_code::data);
  EXPECT_NE(count.err.find("60"), std::string::npos) << count.err;

  EXPECT_EQ(run({"evaluate", "--model", dir.file("nothing.mrbw")}).code, exit_code::data);
  EXPECT_EQ(run({"train", "--epochs", "1"}).code, exit_code::data);  // no data paths
}

TEST(Cli, NonFiniteInputsExitThree) {
  TempDir dir;
  synth_tiny(dir);
  auto bart = read_embeddings(dir.file("d/bart.mreb"));
  for (float& v : bart.values) v = std::nanf("");
  write_embeddings(dir.file("d/bart.mreb"), bart);
  const CliRun r = run(cat({"train", "--config", tiny_config_json(dir), "--epochs", "1"},
                        data_args(dir)));
  EXPECT_EQ(r.code, exit_code::numeric) << r.err;
}

TEST(Cli, AnalyzeWritesReports) {
  TempDir dir;
  write_jsonl_corpus(dir.file("c.jsonl"), {{"1", "Stocks rise as markets rally", "biz"},
                                           {"2", "Stocks fall sharply", "biz"},
                                           {"3", "The team wins the final match", "sport"},
                                           {"4", "Team loses the match", "sport"}});
  dir.write("v.vec", "stocks 1 0\nmarkets 0.9 0.1\nteam 0 1\nmatch 0.1 0.9\nrise 1 1\n"
                     "fall 1 -1\nrally 0.5 0.5\nsharply 0.2 0.3\nwins 0 2\nfinal 1 3\nloses 2 1\n");
  const CliRun r = run({"analyze", "--corpus", dir.file("c.jsonl"), "--vectors",
                     "toy=" + dir.file("v.vec"), "--out-dir", dir.file("out"), "--top", "3",
                     "--topics", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Entire dataset"), std::string::npos);
  EXPECT_NE(dir.read("out/unigrams.csv").find("toy"), std::string::npos);
  EXPECT_FALSE(dir.read("out/topics.csv").empty());
  EXPECT_FALSE(dir.read("out/token_stats.csv").empty());

  const CliRun bad = run({"analyze", "--corpus", dir.write("bad.jsonl", "{nope\n")});
  EXPECT_EQ(bad.code, exit_code::data);
  EXPECT_NE(bad.err.find("line 1"), std::string::npos);
}

}  // namespace
}  // namespace mrb
