#include "seqattack/pipeline.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "seqattack/campaign.h"
#include "seqattack/defenses.h"
#include "seqattack/errors.h"
#include "seqattack/svg.h"
#include "seqattack/trace_io.h"
#include "seqattack/weaver.h"

namespace seqattack {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string artifacts::TargetModel(Architecture arch) {
  return "models/" + std::string(ArchitectureTag(arch)) + ".json";
}

namespace {

// ---- config parsing ------------------------------------------------------

std::size_t ParseSize(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double ParseDouble(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

Architecture ParseArch(const std::string& key, const std::string& v) {
  try {
    return ParseArchitecture(v);
  } catch (const Error&) {
    throw ConfigError(key + ": unknown architecture '" + v + "'");
  }
}

std::string GroupingTag(GraphGrouping g) {
  switch (g) {
    case GraphGrouping::kPerPattern:
      return "per-pattern";
    case GraphGrouping::kSharedFirstBehavior:
      return "shared-first";
    case GraphGrouping::kSingleGraph:
      return "single";
  }
  return "?";
}

GraphGrouping ParseGrouping(const std::string& key, const std::string& v) {
  for (auto g : {GraphGrouping::kPerPattern, GraphGrouping::kSharedFirstBehavior,
                 GraphGrouping::kSingleGraph}) {
    if (GroupingTag(g) == v) return g;
  }
  throw ConfigError(key + ": grouping must be per-pattern, shared-first or single");
}

std::string Num(double d) {
  std::ostringstream os;
  os << d;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define SIZE_FIELD(name, member)                                                              \
  Field {                                                                                     \
    name, [](PipelineConfig& c, const std::string& v) { c.member = ParseSize(name, v); },     \
        [](const PipelineConfig& c) { return std::to_string(c.member); }                      \
  }
#define DOUBLE_FIELD(name, member)                                                            \
  Field {                                                                                     \
    name, [](PipelineConfig& c, const std::string& v) { c.member = ParseDouble(name, v); },   \
        [](const PipelineConfig& c) { return Num(c.member); }                                 \
  }
#define PATH_FIELD(name, member)                                                              \
  Field {                                                                                     \
    name, [](PipelineConfig& c, const std::string& v) { c.member = v; },                      \
        [](const PipelineConfig& c) { return c.member.string(); }                             \
  }
#define ARCH_FIELD(name, member)                                                              \
  Field {                                                                                     \
    name, [](PipelineConfig& c, const std::string& v) { c.member = ParseArch(name, v); },     \
        [](const PipelineConfig& c) { return std::string(ArchitectureTag(c.member)); }        \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      PATH_FIELD("run.workdir", workdir),
      SIZE_FIELD("run.workers", workers),
      PATH_FIELD("data.traces", traces),
      PATH_FIELD("data.vocab", vocab),
      SIZE_FIELD("data.window", window),
      SIZE_FIELD("data.stride", stride),
      SIZE_FIELD("synth.seed", synth.seed),
      SIZE_FIELD("synth.n_benign", synth.n_benign),
      SIZE_FIELD("synth.n_malicious", synth.n_malicious),
      SIZE_FIELD("synth.vocab_size", synth.vocab_size),
      SIZE_FIELD("synth.length", synth.length),
      DOUBLE_FIELD("synth.context_noise", synth.context_noise),
      SIZE_FIELD("synth.num_attack_grams", synth.num_attack_grams),
      SIZE_FIELD("synth.max_gram_length", synth.max_gram_length),
      SIZE_FIELD("synth.max_grams_per_sequence", synth.max_grams_per_sequence),
      SIZE_FIELD("synth.decoy_tokens", synth.decoy_tokens),
      SIZE_FIELD("split.train", train_count),
      SIZE_FIELD("split.probes", probe_count),
      SIZE_FIELD("model.max_len", model.max_len),
      SIZE_FIELD("model.embed_dim", model.embed_dim),
      SIZE_FIELD("model.hidden", model.hidden),
      SIZE_FIELD("model.conv_filters", model.conv_filters),
      SIZE_FIELD("model.model_width", model.model_width),
      SIZE_FIELD("model.heads", model.heads),
      SIZE_FIELD("model.ffn_width", model.ffn_width),
      SIZE_FIELD("model.bottleneck", model.bottleneck),
      DOUBLE_FIELD("model.threshold_quantile", model.threshold_quantile),
      DOUBLE_FIELD("model.anomaly_temperature", model.anomaly_temperature),
      SIZE_FIELD("train.epochs", fit.epochs),
      SIZE_FIELD("train.batch_size", fit.batch_size),
      SIZE_FIELD("train.seed", fit.seed),
      DOUBLE_FIELD("train.holdout_fraction", fit.holdout_fraction),
      DOUBLE_FIELD("train.learning_rate", fit.adam.learning_rate),
      DOUBLE_FIELD("train.clip_norm", fit.adam.clip_norm),
      Field{"train.targets",
            [](PipelineConfig& c, const std::string& v) {
              c.targets.clear();
              std::stringstream ss(v);
              std::string item;
              while (std::getline(ss, item, ',')) {
                item.erase(0, item.find_first_not_of(' '));
                item.erase(item.find_last_not_of(' ') + 1);
                if (!item.empty()) c.targets.push_back(ParseArch("train.targets", item));
              }
              if (c.targets.empty()) throw ConfigError("train.targets: empty list");
            },
            [](const PipelineConfig& c) {
              std::string out;
              for (auto a : c.targets) out += (out.empty() ? "" : ",") + std::string(ArchitectureTag(a));
              return out;
            }},
      ARCH_FIELD("distill.oracle", oracle),
      ARCH_FIELD("distill.surrogate", surrogate),
      DOUBLE_FIELD("mine.min_support", miner.min_support),
      SIZE_FIELD("mine.max_length", miner.max_length),
      Field{"mine.grouping",
            [](PipelineConfig& c, const std::string& v) {
              c.grouping = ParseGrouping("mine.grouping", v);
            },
            [](const PipelineConfig& c) { return GroupingTag(c.grouping); }},
      DOUBLE_FIELD("dqn.gamma", agent.gamma),
      DOUBLE_FIELD("dqn.epsilon_start", agent.epsilon_start),
      DOUBLE_FIELD("dqn.epsilon_end", agent.epsilon_end),
      DOUBLE_FIELD("dqn.anneal_fraction", agent.anneal_fraction),
      SIZE_FIELD("dqn.replay_capacity", agent.replay_capacity),
      SIZE_FIELD("dqn.batch_size", agent.batch_size),
      SIZE_FIELD("dqn.sync_every", agent.sync_every),
      DOUBLE_FIELD("dqn.alpha", agent.alpha),
      DOUBLE_FIELD("dqn.max_steps_fraction", agent.max_steps_fraction),
      SIZE_FIELD("dqn.embed_dim", agent.embed_dim),
      SIZE_FIELD("dqn.hidden", agent.hidden),
      DOUBLE_FIELD("dqn.learning_rate", agent.adam.learning_rate),
      SIZE_FIELD("dqn.sequences", dqn_sequences),
      SIZE_FIELD("dqn.passes", dqn_passes),
      SIZE_FIELD("dqn.seed", dqn_seed),
      Field{"dqn.restrict_to_graph_nodes",
            [](PipelineConfig& c, const std::string& v) {
              c.restrict_to_graph_nodes = ParseBool("dqn.restrict_to_graph_nodes", v);
            },
            [](const PipelineConfig& c) {
              return std::string(c.restrict_to_graph_nodes ? "true" : "false");
            }},
      SIZE_FIELD("attack.max_step", budget.max_step),
      SIZE_FIELD("attack.mod_limit", budget.mod_limit),
      SIZE_FIELD("attack.query_cap", budget.query_cap),
      SIZE_FIELD("attack.limit", attack_limit),
      ARCH_FIELD("defenses.model", defended),
      SIZE_FIELD("defenses.retrain_records", retrain_records),
      SIZE_FIELD("defenses.fresh_windows", fresh_windows),
      PATH_FIELD("defenses.squeeze_map", squeeze_map),
      PATH_FIELD("weave.dir", weave_dir),
      SIZE_FIELD("weave.records", weave_records),
  };
  return fields;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef PATH_FIELD
#undef ARCH_FIELD

// ---- artifact helpers ----------------------------------------------------

fs::path At(const PipelineConfig& c, const fs::path& rel) { return c.workdir / rel; }

fs::path Require(const PipelineConfig& c, const fs::path& rel, const std::string& stage) {
  fs::path p = At(c, rel);
  if (!fs::exists(p)) {
    throw MissingArtifactError("missing " + p.string() + "; run `seqattack " + stage +
                               "` first");
  }
  return p;
}

fs::path Output(const PipelineConfig& c, const fs::path& rel) {
  fs::path p = At(c, rel);
  fs::create_directories(p.parent_path());
  return p;
}

void WriteJson(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

Vocabulary Vocab(const PipelineConfig& c) {
  return LoadVocabulary(Require(c, artifacts::kVocab, "synth"));
}

std::vector<BehaviorSequence> Split(const PipelineConfig& c, const Vocabulary& v,
                                    const char* rel) {
  return LoadTraces(Require(c, rel, "synth"), v);
}

std::unique_ptr<NeuralClassifier> LoadTarget(const PipelineConfig& c, const Vocabulary& v,
                                             Architecture arch) {
  return NeuralClassifier::Load(Require(c, artifacts::TargetModel(arch), "train-target"), v);
}

std::unique_ptr<NeuralClassifier> LoadSurrogate(const PipelineConfig& c, const Vocabulary& v) {
  return NeuralClassifier::Load(Require(c, artifacts::kSurrogate, "distill"), v);
}

PerturbationGraphSet Graphs(const PipelineConfig& c, const Vocabulary& v) {
  auto g = LoadGraphSet(Require(c, artifacts::kGraphs, "mine"), v);
  g.grouping = c.grouping;
  g.provenance = c.miner;
  return g;
}

QAgent LoadAgent(const PipelineConfig& c, const Vocabulary& v) {
  return QAgent::Load(Require(c, artifacts::kAgent, "train-dqn"), v);
}

ModelConfig ModelFor(const PipelineConfig& c, Architecture arch) {
  ModelConfig m = c.model;
  m.architecture = arch;
  return m;
}

std::vector<BehaviorSequence> Benign(std::span<const BehaviorSequence> seqs) {
  std::vector<BehaviorSequence> out;
  for (const auto& s : seqs) {
    if (s.label == Label::kBenign) out.push_back(s);
  }
  return out;
}

// Pool windows the surrogate detects: the first dqn_sequences train the
// agent, the next attack_limit are attacked.
std::pair<std::vector<BehaviorSequence>, std::vector<BehaviorSequence>> PoolRoles(
    const PipelineConfig& c, std::span<const BehaviorSequence> pool,
    const SequenceClassifier& surrogate) {
  auto detected = DetectedMalicious(pool, surrogate, c.dqn_sequences + c.attack_limit);
  const std::size_t n_dqn = std::min(c.dqn_sequences, detected.size());
  std::vector<BehaviorSequence> dqn(detected.begin(), detected.begin() + static_cast<long>(n_dqn));
  std::vector<BehaviorSequence> attack(detected.begin() + static_cast<long>(n_dqn), detected.end());
  return {dqn, attack};
}

std::vector<BehaviorId> GraphNodes(const PerturbationGraphSet& graphs) {
  std::set<BehaviorId> nodes;
  for (const auto& g : graphs.graphs) nodes.insert(g.nodes().begin(), g.nodes().end());
  return {nodes.begin(), nodes.end()};
}

std::string Fixed(double d, int digits = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << d;
  return os.str();
}

}  // namespace

// ---- config --------------------------------------------------------------

PipelineConfig LoadPipelineConfig(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  PipelineConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      ApplySetting(config, full, value.data());
    }
  }
  // Relative paths inside the file resolve against its directory.
  const fs::path base = path.parent_path();
  for (fs::path* p : {&config.workdir, &config.traces, &config.vocab, &config.squeeze_map,
                      &config.weave_dir}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return config;
}

void ApplySetting(PipelineConfig& config, const std::string& key, const std::string& value) {
  auto it = std::find_if(Fields().begin(), Fields().end(),
                         [&](const Field& f) { return f.key == key; });
  if (it == Fields().end()) throw ConfigError("unknown setting " + key);
  it->set(config, value);
}

std::map<std::string, std::string> DescribeConfig(const PipelineConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& f : Fields()) out[f.key] = f.get(config);
  return out;
}

void SavePipelineConfig(const PipelineConfig& config, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  std::string section;
  for (const auto& f : Fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
}

// ---- stages --------------------------------------------------------------

std::string RunSynth(const PipelineConfig& c) {
  Vocabulary vocab;
  std::vector<BehaviorSequence> all;
  std::string source;
  if (!c.traces.empty()) {
    if (c.vocab.empty()) throw ConfigError("data.traces needs data.vocab");
    if (!fs::exists(c.traces)) throw ConfigError("trace file not found: " + c.traces.string());
    if (!fs::exists(c.vocab)) throw ConfigError("vocabulary not found: " + c.vocab.string());
    if (c.window == 0 || c.stride == 0) throw ConfigError("window and stride must be positive");
    vocab = LoadVocabulary(c.vocab);
    for (const auto& trace : LoadTraces(c.traces, vocab)) {
      auto windows = WindowGroup(trace.tokens, trace.label, c.window, c.stride, trace.origin);
      all.insert(all.end(), windows.begin(), windows.end());
    }
    std::mt19937_64 rng(c.synth.seed);
    std::shuffle(all.begin(), all.end(), rng);
    source = c.traces.string();
  } else {
    auto corpus = SynthDataset(c.synth);
    vocab = corpus.vocab;
    all = std::move(corpus.sequences);
    source = "synthetic seed " + std::to_string(c.synth.seed);
  }
  if (c.train_count + c.probe_count >= all.size()) {
    throw ConfigError("split.train + split.probes must leave an attack pool (corpus has " +
                      std::to_string(all.size()) + " windows)");
  }
  auto begin = all.begin();
  std::vector<BehaviorSequence> train(begin, begin + static_cast<long>(c.train_count));
  std::vector<BehaviorSequence> probes(begin + static_cast<long>(c.train_count),
                                       begin + static_cast<long>(c.train_count + c.probe_count));
  std::vector<BehaviorSequence> pool(begin + static_cast<long>(c.train_count + c.probe_count),
                                     all.end());
  SaveVocabulary(vocab, Output(c, artifacts::kVocab));
  SaveTraces(train, Output(c, artifacts::kTrain));
  SaveTraces(probes, Output(c, artifacts::kProbes));
  SaveTraces(pool, Output(c, artifacts::kPool));
  SavePipelineConfig(c, Output(c, "config.ini"));
  return "synth: " + std::to_string(all.size()) + " windows from " + source + " (train " +
         std::to_string(train.size()) + ", probes " + std::to_string(probes.size()) +
         ", pool " + std::to_string(pool.size()) + ")";
}

std::string RunMine(const PipelineConfig& c) {
  const auto vocab = Vocab(c);
  const auto benign = Benign(Split(c, vocab, artifacts::kTrain));
  if (benign.empty()) throw ConfigError("training split holds no benign sequences to mine");
  const auto patterns = MineFrequent(benign, c.miner);
  if (patterns.empty()) {
    throw ConfigError("no benign pattern reaches mine.min_support = " + Num(c.miner.min_support));
  }
  auto graphs = MergeGraphs(patterns, c.grouping);
  graphs.provenance = c.miner;
  SaveGraphSet(graphs, vocab, Output(c, artifacts::kGraphs));
  Json list = Json::array();
  for (const auto& p : patterns) {
    Json names = Json::array();
    for (auto b : p.behaviors) names.push_back(vocab.name(b));
    list.push_back({{"behaviors", names}, {"support", p.support}});
  }
  WriteJson(Output(c, artifacts::kPatterns), list);
  return "mine: " + std::to_string(patterns.size()) + " patterns, " +
         std::to_string(graphs.size()) + " graphs (" + GroupingTag(c.grouping) + ")";
}

std::string RunTrainTargets(const PipelineConfig& c) {
  const auto vocab = Vocab(c);
  const auto train = Split(c, vocab, artifacts::kTrain);
  const auto pool = Split(c, vocab, artifacts::kPool);
  Json report = Json::object();
  std::string line = "train-target:";
  for (auto arch : c.targets) {
    auto model = NeuralClassifier::Create(ModelFor(c, arch), vocab);
    const FitReport fit = Fit(*model, train, c.fit);
    model->Save(Output(c, artifacts::TargetModel(arch)));
    const double pool_acc = Accuracy(*model, pool);
    report[std::string(ArchitectureTag(arch))] = {{"heldout_accuracy", fit.heldout_accuracy},
                                                  {"pool_accuracy", pool_acc},
                                                  {"train_size", fit.train_size},
                                                  {"heldout_size", fit.heldout_size},
                                                  {"epoch_loss", fit.epoch_loss}};
    line += " " + std::string(ArchitectureTag(arch)) + "=" + Fixed(fit.heldout_accuracy);
  }
  WriteJson(Output(c, artifacts::kTargetsReport), report);
  return line;
}

std::string RunDistill(const PipelineConfig& c) {
  const auto vocab = Vocab(c);
  const auto oracle = LoadTarget(c, vocab, c.oracle);
  const auto probes = Split(c, vocab, artifacts::kProbes);
  const SequenceClassifier& black_box = *oracle;
  auto result = DistillSurrogate(
      [&](const BehaviorSequence& s) { return Predict(black_box, s.tokens); }, probes,
      ModelFor(c, c.surrogate), vocab, c.fit);
  result.surrogate->Save(Output(c, artifacts::kSurrogate));
  WriteJson(Output(c, artifacts::kDistillReport),
            {{"oracle", ArchitectureTag(c.oracle)},
             {"surrogate", ArchitectureTag(c.surrogate)},
             {"agreement", result.agreement},
             {"queries", result.queries},
             {"train_probes", result.train_probes},
             {"heldout_probes", result.heldout_probes}});
  return "distill: agreement " + Fixed(result.agreement) + " over " +
         std::to_string(result.heldout_probes) + " held-out probes (" +
         std::to_string(result.queries) + " oracle queries)";
}

std::string RunTrainDqn(const PipelineConfig& c) {
  const auto vocab = Vocab(c);
  const auto surrogate = LoadSurrogate(c, vocab);
  const auto graphs = Graphs(c, vocab);
  const auto pool = Split(c, vocab, artifacts::kPool);
  auto [dqn_seqs, unused] = PoolRoles(c, pool, *surrogate);
  if (dqn_seqs.empty()) throw ConfigError("the surrogate detects no pool window to train on");
  QAgentConfig ac = c.agent;
  ac.max_len = c.model.max_len;
  QAgent agent(vocab, ac, c.dqn_seed);
  DqnTrainOptions options;
  options.passes = c.dqn_passes;
  options.seed = c.dqn_seed;
  if (c.restrict_to_graph_nodes) options.allowed = GraphNodes(graphs);
  const auto log = Train(agent, *surrogate, dqn_seqs, options);
  agent.Save(Output(c, artifacts::kAgent));
  SaveEpisodeLog(log, Output(c, artifacts::kEpisodes));
  std::size_t wins = 0;
  for (const auto& e : log) wins += e.success ? 1 : 0;
  return "train-dqn: " + std::to_string(log.size()) + " episodes on " +
         std::to_string(dqn_seqs.size()) + " sequences, " + std::to_string(wins) +
         " reached benign, " + std::to_string(agent.gradient_steps()) + " gradient steps";
}

std::string RunAttack(const PipelineConfig& c) {
  c.budget.Validate();
  const auto vocab = Vocab(c);
  const auto surrogate = LoadSurrogate(c, vocab);
  const auto graphs = Graphs(c, vocab);
  const auto agent = LoadAgent(c, vocab);
  const auto pool = Split(c, vocab, artifacts::kPool);
  std::vector<std::unique_ptr<NeuralClassifier>> targets;
  for (auto arch : c.targets) targets.push_back(LoadTarget(c, vocab, arch));

  auto [unused, victims] = PoolRoles(c, pool, *surrogate);
  const auto records = RunCampaign(victims, *surrogate, &agent, graphs, c.budget, c.workers);
  SaveRecords(records, vocab, Output(c, artifacts::kRecords));
  auto summary = Summarize(records);
  for (const auto& t : targets) summary.transfer.push_back(EvaluateTransfer(records, *t, t->tag()));
  SaveSummary(summary, Output(c, artifacts::kSummary));
  return "attack: " + std::to_string(summary.records) + " windows, SR " +
         Fixed(summary.success_rate) + ", PR " + Fixed(summary.perturbation_rate) +
         ", mean queries " + Fixed(summary.mean_queries, 1);
}

std::string RunEvaluateDefenses(const PipelineConfig& c) {
  c.budget.Validate();
  const auto vocab = Vocab(c);
  const auto train = Split(c, vocab, artifacts::kTrain);
  const auto pool = Split(c, vocab, artifacts::kPool);
  const auto graphs = Graphs(c, vocab);
  const auto agent = LoadAgent(c, vocab);
  const auto base = LoadTarget(c, vocab, c.defended);

  // The defender owns the model; the attacker searches against whichever
  // version is deployed.
  auto detected = DetectedMalicious(pool, *base, c.retrain_records + c.fresh_windows);
  if (detected.size() <= c.retrain_records) {
    throw ConfigError("pool has too few detected windows for defenses.retrain_records");
  }
  std::vector<BehaviorSequence> harvest(detected.begin(),
                                        detected.begin() + static_cast<long>(c.retrain_records));
  std::vector<BehaviorSequence> fresh(detected.begin() + static_cast<long>(c.retrain_records),
                                      detected.end());

  const auto harvested = RunCampaign(harvest, *base, &agent, graphs, c.budget, c.workers);
  const auto before = RunCampaign(fresh, *base, &agent, graphs, c.budget, c.workers);

  const ModelConfig mc = ModelFor(c, c.defended);
  FitReport hard_fit;
  auto hardened = AdversarialRetrain(mc, vocab, train, harvested, c.fit, &hard_fit);
  hardened->Save(Output(c, "defenses/hardened.json"));
  const auto hard_victims = DetectedMalicious(fresh, *hardened);
  const auto after_retrain =
      RunCampaign(hard_victims, *hardened, &agent, graphs, c.budget, c.workers);

  const SqueezeMap map =
      c.squeeze_map.empty() ? DefaultSqueezeMap(vocab) : SqueezeMap::Load(c.squeeze_map, vocab);
  map.CheckIdempotent();
  FitReport squeeze_fit;
  auto squeezed = FitSqueezed(mc, vocab, train, map, c.fit, &squeeze_fit);
  const auto sq_victims = DetectedMalicious(fresh, *squeezed);
  const auto after_squeeze =
      RunCampaign(sq_victims, *squeezed, &agent, graphs, c.budget, c.workers);

  SaveRecords(harvested, vocab, Output(c, "defenses/harvest.jsonl"));
  SaveRecords(before, vocab, Output(c, "defenses/undefended.jsonl"));
  SaveRecords(after_retrain, vocab, Output(c, "defenses/adversarial_retrain.jsonl"));
  SaveRecords(after_squeeze, vocab, Output(c, "defenses/squeeze.jsonl"));

  std::size_t caught = 0;
  for (const auto& r : harvested) {
    caught += Predict(*hardened, r.adversarial.tokens) == Label::kMalicious ? 1 : 0;
  }
  const auto s0 = Summarize(before);
  const auto s1 = Summarize(after_retrain);
  const auto s2 = Summarize(after_squeeze);
  auto row = [&](const std::string& name, const CampaignSummary& s, const SequenceClassifier& m) {
    return Json{{"defense", name},
                {"model", m.tag()},
                {"windows", s.records},
                {"sr", s.success_rate},
                {"pr", s.perturbation_rate},
                {"sr_delta", s.success_rate - s0.success_rate},
                {"clean_accuracy", Accuracy(m, pool)}};
  };
  Json out;
  out["rows"] = Json::array({row("none", s0, *base), row("adversarial-retrain", s1, *hardened),
                             row("squeeze", s2, *squeezed)});
  out["harvested_records"] = harvested.size();
  out["harvest_sr"] = Summarize(harvested).success_rate;
  out["hardened_catches_harvest"] =
      static_cast<double>(caught) / static_cast<double>(harvested.size());
  out["squeeze_merged_behaviors"] = map.merged_count();
  WriteJson(Output(c, artifacts::kDefenses), out);
  return "evaluate-defenses: SR none " + Fixed(s0.success_rate) + ", adversarial-retrain " +
         Fixed(s1.success_rate) + ", squeeze " + Fixed(s2.success_rate);
}

namespace {

// Straight-line program for a behavior list; runs of one behavior become a
// counted loop so anchors exercise occurrence guards.
weaver::MicroProgram ProgramFor(const std::vector<std::string>& behaviors, const std::string& file) {
  weaver::MicroProgram p;
  std::size_t line = 1;
  for (std::size_t i = 0; i < behaviors.size();) {
    std::size_t j = i;
    while (j < behaviors.size() && behaviors[j] == behaviors[i]) ++j;
    const std::string loc = file + ":" + std::to_string(line++);
    if (j - i == 1) {
      p.statements.push_back(weaver::Statement::Emit(loc, behaviors[i]));
    } else {
      const std::string inner = file + ":" + std::to_string(line++);
      p.statements.push_back(
          weaver::Statement::Loop(loc, j - i, {weaver::Statement::Emit(inner, behaviors[i])}));
    }
    i = j;
  }
  return p;
}

std::vector<std::string> ReadWords(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

struct WeaveItem {
  std::string name;
  weaver::MicroProgram program;
  std::optional<std::vector<std::string>> adversarial;
  std::optional<std::vector<std::size_t>> positions;
  std::optional<weaver::InsertionPlan> plan;
};

}  // namespace

std::string RunWeave(const PipelineConfig& c) {
  std::vector<WeaveItem> items;
  if (!c.weave_dir.empty()) {
    if (!fs::is_directory(c.weave_dir)) {
      throw ConfigError("weave.dir is not a directory: " + c.weave_dir.string());
    }
    std::vector<fs::path> progs;
    for (const auto& e : fs::directory_iterator(c.weave_dir)) {
      if (e.path().extension() == ".prog") progs.push_back(e.path());
    }
    std::sort(progs.begin(), progs.end());
    for (const auto& p : progs) {
      WeaveItem item;
      item.name = p.stem().string();
      item.program = weaver::LoadProgram(p);
      auto adv = fs::path(p).replace_extension(".adv");
      auto plan = fs::path(p).replace_extension(".plan");
      if (fs::exists(adv)) item.adversarial = ReadWords(adv);
      if (fs::exists(plan)) item.plan = weaver::LoadPlan(plan);
      items.push_back(std::move(item));
    }
  }
  if (c.weave_records > 0) {
    const auto vocab = Vocab(c);
    const auto records = LoadRecords(Require(c, artifacts::kRecords, "attack"), vocab);
    std::size_t taken = 0;
    for (const auto& r : records) {
      if (taken == c.weave_records) break;
      if (!r.success || r.inserted_positions.empty()) continue;
      WeaveItem item;
      item.name = "record-" + std::to_string(taken++);
      std::vector<std::string> orig, adv;
      for (auto t : r.original.tokens) orig.push_back(vocab.name(t));
      for (auto t : r.adversarial.tokens) adv.push_back(vocab.name(t));
      item.program = ProgramFor(orig, item.name + ".c");
      item.adversarial = adv;
      item.positions = r.inserted_positions;
      items.push_back(std::move(item));
    }
  }
  if (items.empty()) throw ConfigError("nothing to weave: set weave.dir or weave.records");

  struct Outcome {
    bool checked = false;
    bool ok = false;
    bool non_interference = false;
    std::string diff;
    std::size_t injected = 0;
    std::string error;
  };
  std::vector<Outcome> outcomes(items.size());
  const fs::path out_dir = Output(c, artifacts::kWeave).parent_path();
  ParallelFor(items.size(), c.workers, [&](std::size_t i) {
    const auto& item = items[i];
    Outcome& o = outcomes[i];
    try {
      const auto trace = weaver::Execute(item.program);
      // A hand-written plan wins; otherwise derive one from the target trace.
      weaver::InsertionPlan plan;
      if (item.plan) {
        plan = *item.plan;
      } else if (item.adversarial && item.positions) {
        plan = weaver::DerivePlan(trace, *item.adversarial, *item.positions);
      } else if (item.adversarial) {
        plan = weaver::DerivePlan(trace, *item.adversarial);
      }
      const auto instrumented = weaver::Instrument(item.program, plan);
      o.non_interference = weaver::NonInterference(item.program, instrumented);
      for (const auto& e : weaver::Execute(instrumented).events) o.injected += e.injected ? 1 : 0;
      if (item.adversarial) {
        auto rt = weaver::VerifyRoundtrip(item.program, plan, *item.adversarial);
        o.checked = true;
        o.ok = rt.ok;
        o.diff = rt.diff;
      } else {
        o.ok = o.non_interference;
      }
      weaver::WriteText(out_dir / (item.name + ".plan"), weaver::FormatPlan(plan));
      weaver::WriteText(out_dir / (item.name + ".instrumented.prog"),
                        weaver::FormatProgram(instrumented));
    } catch (const Error& e) {
      o.error = e.what();
    }
  });

  Json list = Json::array();
  std::size_t ok = 0, ni = 0, checked = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& o = outcomes[i];
    ok += o.ok ? 1 : 0;
    ni += o.non_interference ? 1 : 0;
    checked += o.checked ? 1 : 0;
    Json j{{"name", items[i].name},
           {"roundtrip_checked", o.checked},
           {"ok", o.ok},
           {"non_interference", o.non_interference},
           {"injected_events", o.injected}};
    if (!o.diff.empty()) j["diff"] = o.diff;
    if (!o.error.empty()) j["error"] = o.error;
    list.push_back(j);
  }
  WriteJson(Output(c, artifacts::kWeave), {{"items", items.size()},
                                           {"ok", ok},
                                           {"roundtrip_checked", checked},
                                           {"non_interference", ni},
                                           {"results", list}});
  return "weave: " + std::to_string(ok) + "/" + std::to_string(items.size()) +
         " ok, non-interference " + std::to_string(ni) + "/" + std::to_string(items.size());
}

namespace {

std::string Pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string OptRate(const Json& v) { return v.is_null() ? "undef" : Fixed(v.get<double>()); }

std::optional<Json> ReadOptional(const PipelineConfig& c, const char* rel) {
  const fs::path p = At(c, rel);
  if (!fs::exists(p)) return std::nullopt;
  return ReadJson(p);
}

std::vector<Json> ReadJsonLines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<Json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(Json::parse(line));
  }
  return out;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string RunReport(const PipelineConfig& c) {
  const auto vocab = Vocab(c);
  const auto records = LoadRecords(Require(c, artifacts::kRecords, "attack"), vocab);
  const auto summary = Summarize(records);  // MetricError on an empty file
  const Json saved = ReadJson(Require(c, artifacts::kSummary, "attack"));
  const Json targets = ReadJson(Require(c, artifacts::kTargetsReport, "train-target"));
  const Json distill = ReadJson(Require(c, artifacts::kDistillReport, "distill"));
  const auto graphs = Graphs(c, vocab);
  const auto defenses = ReadOptional(c, artifacts::kDefenses);
  const auto weave = ReadOptional(c, artifacts::kWeave);

  std::size_t legal = 0, intact = 0;
  std::vector<double> prs;
  for (const auto& r : records) {
    intact += SatisfiesInsertionOnly(r) ? 1 : 0;
    if (r.success) legal += LegalityCheck(r, graphs) ? 1 : 0;
    prs.push_back(static_cast<double>(r.inserted_positions.size()) /
                  static_cast<double>(r.original.size()));
  }

  std::ostringstream out;
  out << "Run report\n==========\n\n";
  out << "Surrogate: " << distill["surrogate"].get<std::string>() << " distilled from "
      << distill["oracle"].get<std::string>() << " (agreement " << Fixed(distill["agreement"])
      << ", " << distill["queries"] << " queries)\n";
  out << "Graph set: " << graphs.size() << " graphs, grouping " << GroupingTag(c.grouping)
      << ", min_support " << Num(c.miner.min_support) << "\n\n";

  out << "Target models\n\n" << Pad("model", 16) << Pad("heldout acc", 14) << "pool acc\n";
  for (const auto& [name, row] : targets.items()) {
    out << Pad(name, 16) << Pad(Fixed(row["heldout_accuracy"]), 14)
        << Fixed(row["pool_accuracy"]) << '\n';
  }

  out << "\nTable A. Attack success (SR) and perturbation rate (PR)\n\n"
      << Pad("method", 10) << Pad("edit", 16) << Pad("evaluated on", 26) << Pad("SR", 10)
      << Pad("SR overall", 12) << "PR\n";
  out << Pad("ours", 10) << Pad("insert", 16)
      << Pad("surrogate (" + distill["surrogate"].get<std::string>() + ")", 26)
      << Pad(Fixed(summary.success_rate), 10) << Pad("-", 12) << Fixed(summary.perturbation_rate)
      << '\n';
  std::vector<std::string> bar_labels = {"surrogate"};
  std::vector<double> bar_values = {summary.success_rate};
  for (const auto& t : saved["transfer"]) {
    out << Pad("ours", 10) << Pad("insert", 16)
        << Pad(t["target"].get<std::string>() + " (transfer)", 26) << Pad(OptRate(t["sr"]), 10)
        << Pad(OptRate(t["overall_sr"]), 12) << "-\n";
    bar_labels.push_back(t["target"].get<std::string>());
    bar_values.push_back(t["sr"].is_null() ? 0.0 : t["sr"].get<double>());
  }
  for (const char* m : {"LAM", "AA", "GA"}) {
    out << Pad(m, 10) << Pad("replace/delete", 16) << Pad("not run", 26) << Pad("n/a", 10)
        << Pad("n/a", 12) << "n/a\n";
  }
  out << "\nWindows attacked: " << summary.records << ", successes: " << summary.successes
      << ", mean queries: " << Fixed(summary.mean_queries, 1) << '\n'
      << "Insertion-only intact: " << intact << "/" << records.size()
      << "; graph-legal successes: " << legal << "/" << summary.successes << '\n';

  out << "\nTable B. Attack success under defenses\n\n";
  if (defenses) {
    out << Pad("defense", 22) << Pad("model", 22) << Pad("windows", 9) << Pad("SR", 9)
        << Pad("delta SR", 10) << Pad("PR", 9) << "clean acc\n";
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& row : (*defenses)["rows"]) {
      const double delta = row["sr_delta"];
      out << Pad(row["defense"].get<std::string>(), 22) << Pad(row["model"].get<std::string>(), 22)
          << Pad(std::to_string(row["windows"].get<std::size_t>()), 9) << Pad(Fixed(row["sr"]), 9)
          << Pad((delta > 0 ? "+" : "") + Fixed(delta), 10) << Pad(Fixed(row["pr"]), 9)
          << Fixed(row["clean_accuracy"]) << '\n';
      labels.push_back(row["defense"].get<std::string>());
      values.push_back(row["sr"]);
    }
    out << "Hardened model flags " << Fixed((*defenses)["hardened_catches_harvest"])
        << " of the " << (*defenses)["harvested_records"] << " adversarial training sequences\n";
    WriteFile(Output(c, std::string(artifacts::kReportDir) + "/defense_sr.svg"),
              svg::BarChart("Attack SR by defense", labels, values, "SR"));
  } else {
    out << "(not run: `seqattack evaluate-defenses`)\n";
  }

  out << "\nInstrumentation round-trips\n\n";
  if (weave) {
    out << "programs: " << (*weave)["items"] << ", exact trace match: " << (*weave)["ok"]
        << ", non-interference: " << (*weave)["non_interference"] << '\n';
  } else {
    out << "(not run: `seqattack weave`)\n";
  }

  out << "\nSettings\n\n";
  for (const auto& [k, v] : DescribeConfig(c)) out << k << " = " << v << '\n';

  const fs::path dir = Output(c, std::string(artifacts::kReportDir) + "/report.txt").parent_path();
  WriteFile(dir / "report.txt", out.str());
  WriteFile(dir / "transfer_sr.svg",
            svg::BarChart("Attack SR: surrogate and transfer", bar_labels, bar_values, "SR"));
  WriteFile(dir / "perturbation_rate.svg",
            svg::Histogram("Per-window perturbation rate", prs, 10, 0.0, 0.5, "PR"));
  const fs::path episodes = At(c, artifacts::kEpisodes);
  if (fs::exists(episodes)) {
    std::vector<double> rewards;
    for (const auto& e : ReadJsonLines(episodes)) rewards.push_back(e["total_reward"]);
    WriteFile(dir / "dqn_reward.svg",
              svg::LineChart("DQN episode reward", rewards, "episode", "total reward"));
  }
  return "report: " + (dir / "report.txt").string();
}

}  // namespace seqattack
