#include <chrono>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seqattack/errors.h"
#include "seqattack/pipeline.h"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3, kMetric = 4 };

struct Stage {
  const char* name;
  const char* help;
  std::function<std::string(const seqattack::PipelineConfig&)> run;
};

const std::vector<Stage>& Stages() {
  static const std::vector<Stage> stages = {
      {"synth", "generate (or window) the corpus and split it", seqattack::RunSynth},
      {"mine", "mine benign patterns into the perturbation graph set", seqattack::RunMine},
      {"train-target", "train every target model role", seqattack::RunTrainTargets},
      {"distill", "distill the surrogate from a black-box target", seqattack::RunDistill},
      {"train-dqn", "train the insertion policy against the surrogate", seqattack::RunTrainDqn},
      {"attack", "run the backtracking attack campaign", seqattack::RunAttack},
      {"evaluate-defenses", "attack hardened and squeezed models",
       seqattack::RunEvaluateDefenses},
      {"weave", "instrument micro-programs and verify their traces", seqattack::RunWeave},
      {"report", "render tables and plots for the run", seqattack::RunReport},
  };
  return stages;
}

int Run(const std::vector<const Stage*>& stages, const seqattack::PipelineConfig& config) {
  try {
    for (const Stage* s : stages) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::string line = s->run(config);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << line << "  [" << static_cast<int>(secs * 10) / 10.0 << "s]" << std::endl;
    }
    return kOk;
  } catch (const seqattack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const seqattack::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfig;
  } catch (const seqattack::MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kMissing;
  } catch (const seqattack::MetricError& e) {
    std::cerr << "metric undefined: " << e.what() << '\n';
    return kMetric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Insertion-only adversarial sequence generation against sequence classifiers"};
  app.require_subcommand(1);

  std::string config_path, workdir;
  std::size_t workers = 0;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "INI file with [section] key = value settings");
  app.add_option("-w,--workdir", workdir, "artifact directory (overrides run.workdir)");
  app.add_option("-j,--workers", workers, "worker threads (overrides run.workers)");
  app.add_option("-s,--set", overrides, "section.key=value override, repeatable");

  std::vector<const Stage*> selected;
  for (const auto& s : Stages()) {
    app.add_subcommand(s.name, s.help)->callback([&selected, &s] { selected.push_back(&s); });
  }
  app.add_subcommand("pipeline", "run every stage in order")->callback([&selected] {
    for (const auto& s : Stages()) selected.push_back(&s);
  });
  app.add_subcommand("show-config", "print the effective settings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  seqattack::PipelineConfig config;
  try {
    if (!config_path.empty()) config = seqattack::LoadPipelineConfig(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw seqattack::ConfigError("--set expects key=value: " + o);
      seqattack::ApplySetting(config, o.substr(0, eq), o.substr(eq + 1));
    }
  } catch (const seqattack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  }
  if (!workdir.empty()) config.workdir = workdir;
  if (workers > 0) config.workers = workers;

  if (app.got_subcommand("show-config")) {
    for (const auto& [k, v] : seqattack::DescribeConfig(config)) std::cout << k << " = " << v << '\n';
    return kOk;
  }
  return Run(selected, config);
}
