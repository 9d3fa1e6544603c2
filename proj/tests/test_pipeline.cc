#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seqattack/errors.h"
#include "seqattack/pipeline.h"

using namespace seqattack;
namespace fs = std::filesystem;

namespace {

fs::path Fresh(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("seqattack_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig Small(const fs::path& workdir) {
  PipelineConfig c;
  c.workdir = workdir;
  c.workers = 2;
  c.synth.n_benign = 300;
  c.synth.n_malicious = 300;
  c.train_count = 200;
  c.probe_count = 200;
  c.fit.epochs = 4;
  c.targets = {Architecture::kRecurrent, Architecture::kConvolutional};
  c.dqn_sequences = 5;
  c.dqn_passes = 2;
  c.attack_limit = 30;
  c.retrain_records = 10;
  c.fresh_windows = 10;
  c.weave_dir = fs::path(SEQATTACK_SHARE_DIR) / "weave";
  c.weave_records = 5;
  return c;
}

}  // namespace

TEST_CASE("ini parsing over defaults") {
  const auto dir = Fresh("ini");
  std::ofstream(dir / "x.ini") << "[run]\nworkdir = out\n\n[train]\nepochs = 3\ntargets = convolutional, recurrent\n"
                                  "[mine]\ngrouping = shared-first\n[dqn]\nrestrict_to_graph_nodes = false\n";
  const auto c = LoadPipelineConfig(dir / "x.ini");
  CHECK(c.workdir == dir / "out");
  CHECK(c.fit.epochs == 3);
  CHECK(c.targets.size() == 2);
  CHECK(c.grouping == GraphGrouping::kSharedFirstBehavior);
  CHECK_FALSE(c.restrict_to_graph_nodes);
  CHECK(c.attack_limit == PipelineConfig{}.attack_limit);
}

TEST_CASE("ini errors") {
  const auto dir = Fresh("ini_bad");
  std::ofstream(dir / "a.ini") << "[train]\nepoch = 3\n";
  CHECK_THROWS_AS(LoadPipelineConfig(dir / "a.ini"), ConfigError);
  std::ofstream(dir / "b.ini") << "[train]\nepochs = many\n";
  CHECK_THROWS_AS(LoadPipelineConfig(dir / "b.ini"), ConfigError);
  std::ofstream(dir / "c.ini") << "[distill]\noracle = svm\n";
  CHECK_THROWS_AS(LoadPipelineConfig(dir / "c.ini"), ConfigError);
  CHECK_THROWS_AS(LoadPipelineConfig(dir / "missing.ini"), ConfigError);
  PipelineConfig c;
  CHECK_THROWS_AS(ApplySetting(c, "mine.grouping", "clustered"), ConfigError);
  CHECK_THROWS_AS(ApplySetting(c, "nosection", "1"), ConfigError);
}

TEST_CASE("saved config reloads to the same settings") {
  const auto dir = Fresh("ini_roundtrip");
  PipelineConfig c;
  c.workdir = dir / "w";
  ApplySetting(c, "attack.mod_limit", "3");
  ApplySetting(c, "synth.context_noise", "0.35");
  ApplySetting(c, "train.targets", "attention");
  SavePipelineConfig(c, dir / "saved.ini");
  const auto back = LoadPipelineConfig(dir / "saved.ini");
  CHECK(DescribeConfig(back) == DescribeConfig(c));
}

TEST_CASE("stages name the missing prerequisite") {
  const auto c = Small(Fresh("missing"));
  try {
    RunMine(c);
    FAIL("expected a missing artifact");
  } catch (const MissingArtifactError& e) {
    CHECK(std::string(e.what()).find("seqattack synth") != std::string::npos);
  }
  CHECK_THROWS_AS(RunAttack(c), MissingArtifactError);
  CHECK_THROWS_AS(RunReport(c), MissingArtifactError);
}

TEST_CASE("pool must not be empty") {
  auto c = Small(Fresh("nopool"));
  c.train_count = 400;
  c.probe_count = 200;
  CHECK_THROWS_AS(RunSynth(c), ConfigError);
}

TEST_CASE("small pipeline end to end") {
  const auto dir = Fresh("e2e");
  auto c = Small(dir);
  RunSynth(c);
  RunMine(c);
  RunTrainTargets(c);
  RunDistill(c);
  RunTrainDqn(c);
  RunAttack(c);

  const std::string first = Slurp(dir / artifacts::kRecords);
  CHECK_FALSE(first.empty());
  c.workers = 1;
  RunAttack(c);
  CHECK(Slurp(dir / artifacts::kRecords) == first);

  const auto summary = nlohmann::json::parse(Slurp(dir / artifacts::kSummary));
  CHECK(summary["records"] == 30);
  CHECK(summary["sr"].get<double>() >= 0.0);

  RunEvaluateDefenses(c);
  RunWeave(c);
  const auto weave = nlohmann::json::parse(Slurp(dir / artifacts::kWeave));
  CHECK(weave["ok"] == weave["items"]);
  RunReport(c);
  for (const char* f : {"report.txt", "transfer_sr.svg", "perturbation_rate.svg", "dqn_reward.svg",
                        "defense_sr.svg"}) {
    CHECK(fs::exists(dir / artifacts::kReportDir / f));
  }

  std::ofstream(dir / artifacts::kRecords, std::ios::trunc).flush();
  CHECK_THROWS_AS(RunReport(c), MetricError);
}
