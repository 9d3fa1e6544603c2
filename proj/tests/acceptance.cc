// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqattack/backtracking.h"
#include "seqattack/campaign.h"
#include "seqattack/dqn.h"
#include "seqattack/errors.h"
#include "seqattack/pattern_miner.h"
#include "seqattack/pipeline.h"
#include "seqattack/sequence.h"
#include "seqattack/trace_io.h"
#include "seqattack/weaver.h"
#include "support.h"

namespace fs = std::filesystem;
using namespace seqattack;
using namespace seqattack::testing;
using Json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string F(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Json ReadJson(const fs::path& p) {
  std::ifstream in(p);
  return Json::parse(in);
}

// ---- A1 --------------------------------------------------------------------

Outcome MinerOracle() {
  std::mt19937_64 rng(2024);
  std::size_t agree = 0;
  const std::size_t trials = 200;
  std::size_t nonempty = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::uniform_int_distribution<std::size_t> n_seq(1, 8), len(1, 10), vsz(2, 6), cap(2, 5);
    const std::size_t v = vsz(rng);
    std::uniform_int_distribution<BehaviorId> tok(0, static_cast<BehaviorId>(v - 1));
    std::vector<BehaviorSequence> corpus(n_seq(rng));
    for (auto& s : corpus) {
      const std::size_t l = len(rng);
      for (std::size_t i = 0; i < l; ++i) s.tokens.push_back(tok(rng));
    }
    // Thresholds on exact count fractions exercise the boundary.
    std::uniform_int_distribution<std::size_t> k(1, corpus.size());
    MinerConfig mc;
    mc.min_support = (t % 2 == 0) ? static_cast<double>(k(rng)) / static_cast<double>(corpus.size())
                                  : std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    mc.max_length = cap(rng);
    const auto mined = AsMap(MineFrequent(corpus, mc));
    const auto oracle = BruteForceNgrams(corpus, mc.min_support, mc.max_length);
    agree += SameSupportMaps(mined, oracle) ? 1 : 0;
    nonempty += oracle.empty() ? 0 : 1;
  }
  return {agree == trials, std::to_string(agree) + "/" + std::to_string(trials) +
                               " corpora match brute force (" + std::to_string(nonempty) +
                               " with patterns)"};
}

// ---- A2 --------------------------------------------------------------------

Outcome GraphPaths() {
  const auto g = ExampleGraph();
  using P = std::vector<BehaviorId>;
  // b1..b5 are ids 0..4.
  const std::set<P> listed_b1 = {{0, 1}, {0, 1, 3}, {0, 1, 3, 4}, {0, 2}, {0, 2, 3}, {0, 2, 3, 4}};
  const std::set<P> listed_b2 = {{1, 3}, {1, 3, 4}};
  const auto from_b1 = EnumeratePaths(g, 0, 3);
  const auto from_b2 = EnumeratePaths(g, 1, 3);
  std::set<P> got_b1(from_b1.begin(), from_b1.end()), got_b2(from_b2.begin(), from_b2.end());

  bool legal = true;
  for (const auto* list : {&from_b1, &from_b2}) {
    for (const auto& p : *list) legal = legal && g.is_walk(p);
  }
  bool superset = std::includes(got_b1.begin(), got_b1.end(), listed_b1.begin(), listed_b1.end()) &&
                  std::includes(got_b2.begin(), got_b2.end(), listed_b2.begin(), listed_b2.end());
  std::set<P> expect_b1 = listed_b1;
  expect_b1.insert({0, 1, 4});  // the edge b2->b5 also yields (b1, b2, b5)
  std::set<P> expect_b2 = listed_b2;
  expect_b2.insert({1, 4});
  const bool exact = got_b1 == expect_b1 && got_b2 == expect_b2;
  return {superset && legal && exact,
          "b1: " + std::to_string(got_b1.size()) + " paths, b2: " + std::to_string(got_b2.size()) +
              " paths; superset=" + (superset ? "yes" : "no") + ", legal=" +
              (legal ? "yes" : "no") + ", exact modulo (b1,b2,b5)=" + (exact ? "yes" : "no")};
}

// ---- A3 --------------------------------------------------------------------

Outcome Gradients() {
  const Vocabulary vocab = LetterVocab(6);
  std::mt19937_64 rng(77);
  std::string detail;
  bool all = true;
  for (auto arch : {Architecture::kRecurrent, Architecture::kConvolutional,
                    Architecture::kAttention, Architecture::kAutoencoder}) {
    ModelConfig mc;
    mc.architecture = arch;
    mc.max_len = 8;
    auto model = NeuralClassifier::Create(mc, vocab);
    std::size_t ok = 0;
    double worst = 0.0;
    for (std::size_t t = 0; t < 20; ++t) {
      model->Initialize(1000 + t);
      std::uniform_int_distribution<std::size_t> len(1, mc.max_len);
      std::uniform_int_distribution<BehaviorId> tok(0, 5);
      std::vector<BehaviorId> tokens(len(rng));
      for (auto& x : tokens) x = tok(rng);
      const Label y = (t % 2) ? Label::kMalicious : Label::kBenign;
      const double err = GradientRelativeError(*model, EncodeView(tokens, vocab, mc.max_len), y);
      worst = std::max(worst, err);
      ok += err < 1e-4 ? 1 : 0;
    }
    all = all && ok == 20;
    detail += std::string(ArchitectureTag(arch)) + " " + std::to_string(ok) + "/20 (max rel err " +
              [&] {
                char b[32];
                std::snprintf(b, sizeof b, "%.1e", worst);
                return std::string(b);
              }() +
              ") ";
  }
  return {all, detail};
}

// ---- A4 / A5 / A7 share one pipeline run ---------------------------------

struct Scenario {
  PipelineConfig config;
  double distill_secs = 0.0;
  double attack_secs = 0.0;
  double defense_secs = 0.0;
  std::string error;
};

double Time(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Scenario RunScenario(const fs::path& workdir) {
  Scenario s;
  s.config.workdir = workdir;
  s.config.weave_records = 0;
  fs::remove_all(workdir);
  try {
    double prep = Time([&] {
      RunSynth(s.config);
      RunMine(s.config);
      RunTrainTargets(s.config);
    });
    s.distill_secs = Time([&] { RunDistill(s.config); });
    s.attack_secs = prep + s.distill_secs + Time([&] {
                      RunTrainDqn(s.config);
                      RunAttack(s.config);
                    });
    s.defense_secs = Time([&] { RunEvaluateDefenses(s.config); });
  } catch (const std::exception& e) {
    s.error = e.what();
  }
  return s;
}

Outcome Distillation(const Scenario& s) {
  if (!s.error.empty()) return {false, "pipeline failed: " + s.error};
  const Json d = ReadJson(s.config.workdir / artifacts::kDistillReport);
  const double agreement = d["agreement"];
  const std::size_t queries = d["queries"];
  const bool pass = agreement >= 0.90 && queries == 2000 && s.distill_secs < 300;
  return {pass, "agreement " + F(agreement) + " on " + std::to_string(d["heldout_probes"].get<int>()) +
                    " held-out probes, " + std::to_string(queries) + " hard-label queries, " +
                    F(s.distill_secs, 1) + "s"};
}

Outcome EndToEnd(const Scenario& s) {
  if (!s.error.empty()) return {false, "pipeline failed: " + s.error};
  const auto& c = s.config;
  const auto vocab = LoadVocabulary(c.workdir / artifacts::kVocab);
  const auto records = LoadRecords(c.workdir / artifacts::kRecords, vocab);
  auto graphs = LoadGraphSet(c.workdir / artifacts::kGraphs, vocab);
  const auto surrogate = NeuralClassifier::Load(c.workdir / artifacts::kSurrogate, vocab);
  const Json summary = ReadJson(c.workdir / artifacts::kSummary);

  std::size_t detected = 0, invalid = 0;
  for (const auto& r : records) {
    detected += Predict(*surrogate, r.original.tokens) == Label::kMalicious ? 1 : 0;
    if (r.success && !(SatisfiesInsertionOnly(r) && LegalityCheck(r, graphs))) ++invalid;
  }
  const double sr = SuccessRate(records), pr = PerturbationRate(records);
  std::size_t transfer_ok = 0;
  std::string transfer;
  for (const auto& t : summary["transfer"]) {
    if (t["target"] == ArchitectureTag(c.oracle)) continue;  // the distillation oracle
    const double v = t["sr"].is_null() ? 0.0 : t["sr"].get<double>();
    transfer_ok += v >= 0.30 ? 1 : 0;
    transfer += t["target"].get<std::string>() + "=" + F(v) + " ";
  }
  const bool pass = records.size() >= 200 && detected == records.size() && sr >= 0.50 &&
                    pr <= 0.30 && transfer_ok >= 2 && invalid == 0 && s.attack_secs < 900;
  return {pass, std::to_string(records.size()) + " detected windows, SR " + F(sr) + ", PR " +
                    F(pr) + ", transfer " + transfer + "(" + std::to_string(transfer_ok) +
                    " >= 0.30), invalid successes " + std::to_string(invalid) + ", " +
                    F(s.attack_secs, 1) + "s"};
}

Outcome Defenses(const Scenario& s) {
  if (!s.error.empty()) return {false, "pipeline failed: " + s.error};
  const Json d = ReadJson(s.config.workdir / artifacts::kDefenses);
  double none = 0, retrain = 0, squeeze = 0;
  for (const auto& row : d["rows"]) {
    if (row["defense"] == "none") none = row["sr"];
    if (row["defense"] == "adversarial-retrain") retrain = row["sr"];
    if (row["defense"] == "squeeze") squeeze = row["sr"];
  }
  const double sq_delta = squeeze - none;
  const bool pass = d["harvested_records"].get<std::size_t>() == 200 && retrain < none;
  return {pass, "SR undefended " + F(none) + " -> adversarial retrain " + F(retrain) +
                    " (delta " + F(retrain - none) + "); squeeze delta " +
                    (sq_delta > 0 ? "+" : "") + F(sq_delta) +
                    (sq_delta < 0 ? " (reduces SR)" : " (does not reduce SR)")};
}

// ---- A6 --------------------------------------------------------------------

Outcome DqnConvergence() {
  bool exact = true;
  exact = exact && TdTarget(1.0, true, 0.9, 123.0) == 1.0;
  exact = exact && std::abs(TdTarget(1.0, false, 0.9, 2.0) - 2.8) < 1e-12;
  exact = exact && TdTarget(0.37, false, 0.0, 5.0) == 0.37;
  exact = exact && RewardFromLoss(0.0, 1.0) == 1.0;
  exact = exact && std::abs(RewardFromLoss(std::log(2.0), 1.0) - (1.0 - 2.0 * std::log(2.0))) < 1e-15;
  exact = exact && RewardFromLoss(0.5, 2.0) == 0.0;

  const Vocabulary vocab = LetterVocab(12);
  const BehaviorId flip = 7;
  RiggedClassifier rigged(vocab, flip);
  std::mt19937_64 rng(31);
  auto random_state = [&](std::size_t lo, std::size_t hi) {
    std::uniform_int_distribution<std::size_t> len(lo, hi);
    std::uniform_int_distribution<BehaviorId> tok(0, 10);
    BehaviorSequence s;
    s.label = Label::kMalicious;
    const std::size_t n = len(rng);
    while (s.tokens.size() < n) {
      BehaviorId t = tok(rng);
      s.tokens.push_back(t >= flip ? t + 1 : t);  // never the flip token
    }
    return s;
  };
  std::vector<BehaviorSequence> train;
  for (int i = 0; i < 20; ++i) train.push_back(random_state(8, 20));
  QAgent agent(vocab, {}, 9);
  DqnTrainOptions opts;
  opts.passes = 10;
  opts.seed = 9;
  const auto log = Train(agent, rigged, train, opts);

  std::size_t first = 0;
  for (int i = 0; i < 100; ++i) {
    const auto s = random_state(5, 25);
    const auto q = agent.QValues(s.tokens);
    const auto best = std::max_element(q.begin(), q.end()) - q.begin();
    first += best == flip ? 1 : 0;
  }
  const bool pass = exact && log.size() <= 200 && first >= 95;
  return {pass, "flip token ranked first in " + std::to_string(first) + "/100 held-out states after " +
                    std::to_string(log.size()) + " episodes; td/reward examples " +
                    (exact ? "exact" : "MISMATCH")};
}

// ---- A8 --------------------------------------------------------------------

weaver::MicroProgram Straight(const std::vector<std::string>& calls, const std::string& file) {
  weaver::MicroProgram p;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    p.statements.push_back(weaver::Statement::Emit(file + ":" + std::to_string(10 + i), calls[i]));
  }
  return p;
}

bool CheckPair(const weaver::MicroProgram& program, const std::vector<std::string>& adversarial,
               const std::vector<std::size_t>* positions) {
  const auto trace = weaver::Execute(program);
  const auto plan = positions ? weaver::DerivePlan(trace, adversarial, *positions)
                              : weaver::DerivePlan(trace, adversarial);
  const auto instrumented = weaver::Instrument(program, plan);
  return weaver::VerifyRoundtrip(program, plan, adversarial).ok &&
         weaver::NonInterference(program, instrumented);
}

Outcome WeaverRoundtrip() {
  const auto t0 = std::chrono::steady_clock::now();
  const bool fig = CheckPair(Straight({"clone", "execve", "setuid", "exit_group"}, "fig1.c"),
                             {"clone", "openat", "execve", "read", "close", "setuid", "exit_group"},
                             nullptr);
  const bool study = CheckPair(
      Straight({"openat", "mmap", "getpid", "clone", "clock_nanosleep", "restart_syscall",
                "exit_group"},
               "poc.c"),
      {"setxattr", "setxattr", "openat", "mmap", "getuid", "getuid", "getpid", "clone",
       "clock_nanosleep", "restart_syscall", "exit_group"},
      nullptr);
  const auto vocab = FuzzVocab();
  const auto graphs = FuzzGraphs(vocab);
  std::mt19937_64 rng(4242);
  std::size_t ok = 0, with_insertions = 0;
  for (int i = 0; i < 100; ++i) {
    const auto fc = MakeFuzzCase(rng, graphs, vocab);
    with_insertions += fc.inserted.empty() ? 0 : 1;
    try {
      ok += CheckPair(fc.program, fc.adversarial, &fc.inserted) ? 1 : 0;
    } catch (const std::exception&) {
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {fig && study && ok == 100 && secs < 60,
          std::string("example=") + (fig ? "ok" : "FAIL") + ", case study=" +
              (study ? "ok" : "FAIL") + ", fuzzed " + std::to_string(ok) + "/100 (" +
              std::to_string(with_insertions) + " with insertions), " + F(secs, 2) + "s"};
}

// ---- A9 --------------------------------------------------------------------

AttackRecord Record(std::size_t original_len, std::size_t inserted, bool success) {
  AttackRecord r;
  r.original.tokens.assign(original_len, 0);
  r.adversarial.tokens.assign(original_len + inserted, 0);
  for (std::size_t i = 0; i < inserted; ++i) r.inserted_positions.push_back(i);
  r.success = success;
  return r;
}

Outcome Metrics() {
  // clone, execve, setuid, exit_group -> clone, openat, execve, read, close, setuid, exit_group
  AttackRecord fig;
  fig.original.tokens = {0, 1, 2, 3};
  fig.adversarial.tokens = {0, 4, 1, 5, 6, 2, 3};
  fig.inserted_positions = {1, 3, 4};
  fig.success = true;
  std::vector<AttackRecord> one = {fig};
  const bool pr_fig = PerturbationRate(one) == 0.75 && SatisfiesInsertionOnly(fig);

  std::vector<AttackRecord> four = {Record(4, 1, true), Record(4, 1, true), Record(4, 1, true),
                                    Record(4, 1, false)};
  std::vector<AttackRecord> five(5, Record(5, 0, false));
  std::vector<AttackRecord> all(3, Record(5, 1, true));
  const bool sr = SuccessRate(four) == 0.75 && SuccessRate(five) == 0.0 && SuccessRate(all) == 1.0;
  std::vector<AttackRecord> zero = {Record(5, 0, false)};
  std::vector<AttackRecord> mix = {Record(5, 1, true), Record(5, 2, true)};
  const bool pr = PerturbationRate(zero) == 0.0 && std::abs(PerturbationRate(mix) - 0.3) < 1e-15;
  bool undefined = false;
  try {
    std::vector<AttackRecord> none;
    SuccessRate(none);
  } catch (const MetricError&) {
    undefined = true;
  }
  const bool pass = pr_fig && sr && pr && undefined;
  return {pass, std::string("PR(example)=") + F(PerturbationRate(one), 2) + ", SR 3/4=" +
                    F(SuccessRate(four), 2) + ", 0/5=" + F(SuccessRate(five), 2) + ", all=" +
                    F(SuccessRate(all), 2) + ", PR mean(0.2,0.4)=" + F(PerturbationRate(mix), 2) +
                    ", empty -> " + (undefined ? "undefined" : "no error")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path workdir = "acceptance_run";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--workdir") workdir = argv[i + 1];
  }

  struct Criterion {
    const char* id;
    const char* name;
    std::function<Outcome()> run;
  };
  Scenario scenario;
  bool scenario_ready = false;
  auto shared = [&]() -> const Scenario& {
    if (!scenario_ready) {
      scenario = RunScenario(workdir);
      scenario_ready = true;
    }
    return scenario;
  };
  const std::vector<Criterion> criteria = {
      {"A1", "miner oracle equivalence", MinerOracle},
      {"A2", "graph/path fidelity", GraphPaths},
      {"A3", "gradient correctness", Gradients},
      {"A4", "surrogate distillation", [&] { return Distillation(shared()); }},
      {"A5", "end-to-end attack", [&] { return EndToEnd(shared()); }},
      {"A6", "DQN convergence", DqnConvergence},
      {"A7", "defense effect", [&] { return Defenses(shared()); }},
      {"A8", "weaver round-trip", WeaverRoundtrip},
      {"A9", "metric formulas", Metrics},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const double secs = Time([&] {
      try {
        o = c.run();
      } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
      }
    });
    failures += o.pass ? 0 : 1;
    std::cout << c.id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail
              << "  [" << F(secs, 1) << "s]" << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
