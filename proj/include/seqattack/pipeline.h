#ifndef SEQATTACK_PIPELINE_H_
#define SEQATTACK_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "seqattack/backtracking.h"
#include "seqattack/classifier.h"
#include "seqattack/dqn.h"
#include "seqattack/pattern_miner.h"
#include "seqattack/synth.h"
#include "seqattack/training.h"

namespace seqattack {

// Everything the staged pipeline needs. Defaults are the desk-scale
// evasion scenario; every field can be overridden from an INI file.
struct PipelineConfig {
  std::filesystem::path workdir = "run";
  std::size_t workers = 4;

  // [data] Either synthesize (traces empty) or window an external trace
  // file resolved against `vocab`.
  std::filesystem::path traces;
  std::filesystem::path vocab;
  std::size_t window = 20;
  std::size_t stride = 20;

  // [synth]
  SynthConfig synth = [] {
    SynthConfig c;
    c.seed = 11;
    c.n_benign = 2500;
    c.n_malicious = 2500;
    c.context_noise = 0.2;
    c.max_gram_length = 2;
    c.max_grams_per_sequence = 1;
    c.decoy_tokens = 3;
    return c;
  }();

  // [split] counts taken in order from the shuffled corpus; the rest is the
  // attack pool.
  std::size_t train_count = 1500;
  std::size_t probe_count = 2000;

  // [model] / [train]
  ModelConfig model;
  FitOptions fit = [] {
    FitOptions f;
    f.epochs = 12;
    f.seed = 3;
    return f;
  }();
  std::vector<Architecture> targets = {Architecture::kRecurrent, Architecture::kConvolutional,
                                       Architecture::kAttention, Architecture::kAutoencoder};

  // [distill]
  Architecture oracle = Architecture::kRecurrent;     // black box queried
  Architecture surrogate = Architecture::kRecurrent;  // locally trained

  // [mine]
  MinerConfig miner;
  GraphGrouping grouping = GraphGrouping::kPerPattern;

  // [dqn]
  QAgentConfig agent;
  std::size_t dqn_sequences = 20;
  std::size_t dqn_passes = 10;
  std::uint64_t dqn_seed = 5;
  bool restrict_to_graph_nodes = true;

  // [attack]
  AttackBudget budget;
  std::size_t attack_limit = 200;

  // [defenses]
  Architecture defended = Architecture::kRecurrent;
  std::size_t retrain_records = 200;
  std::size_t fresh_windows = 200;
  std::filesystem::path squeeze_map;  // empty: built-in syscall families

  // [weave]
  std::filesystem::path weave_dir;  // *.prog with optional *.adv / *.plan
  std::size_t weave_records = 100;  // successful records replayed as programs
};

// Parses an INI file over the defaults. Unknown sections or keys and bad
// values raise ConfigError.
PipelineConfig LoadPipelineConfig(const std::filesystem::path& path);
// Applies one "section.key" override.
void ApplySetting(PipelineConfig& config, const std::string& key, const std::string& value);
// Flat "section.key = value" listing of every setting.
std::map<std::string, std::string> DescribeConfig(const PipelineConfig& config);
void SavePipelineConfig(const PipelineConfig& config, const std::filesystem::path& path);

// Stage entry points. Each reads only artifacts under the workdir written by
// earlier stages (MissingArtifactError names the stage to run) and returns a
// one-line human summary.
std::string RunSynth(const PipelineConfig& config);
std::string RunMine(const PipelineConfig& config);
std::string RunTrainTargets(const PipelineConfig& config);
std::string RunDistill(const PipelineConfig& config);
std::string RunTrainDqn(const PipelineConfig& config);
std::string RunAttack(const PipelineConfig& config);
std::string RunEvaluateDefenses(const PipelineConfig& config);
std::string RunWeave(const PipelineConfig& config);
std::string RunReport(const PipelineConfig& config);

// Artifact layout under the workdir.
namespace artifacts {
inline constexpr const char* kVocab = "vocab.json";
inline constexpr const char* kTrain = "data/train.traces";
inline constexpr const char* kProbes = "data/probes.traces";
inline constexpr const char* kPool = "data/pool.traces";
inline constexpr const char* kGraphs = "graphs.json";
inline constexpr const char* kPatterns = "patterns.json";
inline constexpr const char* kTargetsReport = "models/targets.json";
inline constexpr const char* kSurrogate = "models/surrogate.json";
inline constexpr const char* kDistillReport = "models/distill.json";
inline constexpr const char* kAgent = "agent/agent.json";
inline constexpr const char* kEpisodes = "agent/episodes.jsonl";
inline constexpr const char* kRecords = "attack/records.jsonl";
inline constexpr const char* kSummary = "attack/summary.json";
inline constexpr const char* kDefenses = "defenses/summary.json";
inline constexpr const char* kWeave = "weave/summary.json";
inline constexpr const char* kReportDir = "report";
std::string TargetModel(Architecture arch);  // "models/<tag>.json"
}  // namespace artifacts

}  // namespace seqattack

#endif  // SEQATTACK_PIPELINE_H_
