// Shared fixtures for the unit tests and the acceptance run: independent
// oracles, a rigged classifier and generators for fuzzing.
#ifndef SEQATTACK_TESTS_SUPPORT_H_
#define SEQATTACK_TESTS_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "seqattack/classifier.h"
#include "seqattack/nn/tape.h"
#include "seqattack/pattern_miner.h"
#include "seqattack/sequence.h"
#include "seqattack/weaver.h"

namespace seqattack::testing {

inline Vocabulary LetterVocab(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(std::string(1, static_cast<char>('a' + i)));
  return Vocabulary(names);
}

inline BehaviorSequence Seq(std::vector<BehaviorId> tokens, Label label = Label::kBenign) {
  BehaviorSequence s;
  s.tokens = std::move(tokens);
  s.label = label;
  return s;
}

// Brute force: count every distinct n-gram once per sequence.
inline std::map<std::vector<BehaviorId>, double> BruteForceNgrams(
    const std::vector<BehaviorSequence>& corpus, double min_support, std::size_t max_len) {
  std::map<std::vector<BehaviorId>, std::size_t> counts;
  for (const auto& s : corpus) {
    std::set<std::vector<BehaviorId>> seen;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      for (std::size_t n = 2; n <= max_len && i + n <= s.tokens.size(); ++n) {
        seen.insert(std::vector<BehaviorId>(s.tokens.begin() + static_cast<long>(i),
                                            s.tokens.begin() + static_cast<long>(i + n)));
      }
    }
    for (const auto& g : seen) ++counts[g];
  }
  std::map<std::vector<BehaviorId>, double> out;
  for (const auto& [g, c] : counts) {
    if (MeetsSupport(c, corpus.size(), min_support)) {
      out[g] = static_cast<double>(c) / static_cast<double>(corpus.size());
    }
  }
  return out;
}

inline std::map<std::vector<BehaviorId>, double> AsMap(const std::vector<Pattern>& patterns) {
  std::map<std::vector<BehaviorId>, double> out;
  for (const auto& p : patterns) out[p.behaviors] = p.support;
  return out;
}

inline bool SameSupportMaps(const std::map<std::vector<BehaviorId>, double>& a,
                            const std::map<std::vector<BehaviorId>, double>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || std::abs(it->second - v) > 1e-12) return false;
  }
  return true;
}

// The b1..b5 example graph: b1->b2, b1->b3, b2->b4, b2->b5, b3->b4, b4->b5.
inline PerturbationGraph ExampleGraph() {
  PerturbationGraph g;
  for (BehaviorId b = 0; b < 5; ++b) g.add_node(b);
  g.add_edge(0, 1);
  g.add_edge(0, 2);
  g.add_edge(1, 3);
  g.add_edge(1, 4);
  g.add_edge(2, 3);
  g.add_edge(3, 4);
  return g;
}

// Loss on a relaxed (not necessarily one-hot) view.
inline double ViewLoss(const SequenceClassifier& model, const Eigen::MatrixXd& rows,
                       std::size_t length, Label y) {
  nn::Tape tape;
  auto logits = model.Logits(tape, tape.constant(rows), length);
  return nn::FlooredCrossEntropy(logits, ToInt(y), kProbabilityFloor).scalar();
}

// Relative error between the analytic input gradient and central
// differences over every entry of the view.
inline double GradientRelativeError(const SequenceClassifier& model, const EncodedSequence& view,
                                    Label y, double h = 1e-6) {
  const Eigen::MatrixXd analytic = InputGradient(model, view, y);
  Eigen::MatrixXd numeric = Eigen::MatrixXd::Zero(view.rows.rows(), view.rows.cols());
  Eigen::MatrixXd probe = view.rows;
  for (Eigen::Index r = 0; r < probe.rows(); ++r) {
    for (Eigen::Index c = 0; c < probe.cols(); ++c) {
      const double keep = probe(r, c);
      probe(r, c) = keep + h;
      const double up = ViewLoss(model, probe, view.length, y);
      probe(r, c) = keep - h;
      const double down = ViewLoss(model, probe, view.length, y);
      probe(r, c) = keep;
      numeric(r, c) = (up - down) / (2 * h);
    }
  }
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-8});
  return (analytic - numeric).norm() / scale;
}

// Benign iff the real rows hold token `flip`. Differentiable so the
// gradient-based position search still works.
class RiggedClassifier final : public SequenceClassifier {
 public:
  RiggedClassifier(Vocabulary vocab, BehaviorId flip, std::size_t max_len = 40)
      : vocab_(std::move(vocab)), flip_(flip), max_len_(max_len) {}

  std::string tag() const override { return "rigged"; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t max_len() const override { return max_len_; }
  nn::Var Logits(nn::Tape& tape, nn::Var input, std::size_t length) const override {
    (void)tape;
    const auto rows = static_cast<Eigen::Index>(std::max<std::size_t>(length, 1));
    nn::Var hits = nn::Sum(nn::SliceCols(nn::SliceRows(input, 0, rows), flip_, 1));
    if (length == 0) hits = nn::Scale(hits, 0.0);
    nn::Var benign = nn::Scale(hits, 10.0);
    nn::Var malicious = nn::AddScalar(nn::Scale(hits, -10.0), 5.0);
    std::vector<nn::Var> parts = {benign, malicious};
    return nn::ConcatCols(parts);
  }

 private:
  Vocabulary vocab_;
  BehaviorId flip_;
  std::size_t max_len_;
};

// Always answers malicious with a fixed confidence.
class ConstantClassifier final : public SequenceClassifier {
 public:
  ConstantClassifier(Vocabulary vocab, Label verdict, std::size_t max_len = 40)
      : vocab_(std::move(vocab)), verdict_(verdict), max_len_(max_len) {}
  std::string tag() const override { return "constant"; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t max_len() const override { return max_len_; }
  nn::Var Logits(nn::Tape& tape, nn::Var input, std::size_t) const override {
    Eigen::MatrixXd l(1, 2);
    l << (verdict_ == Label::kBenign ? 4.0 : 0.0), (verdict_ == Label::kBenign ? 0.0 : 4.0);
    // Keep a dependence on the input so gradients are defined (and zero).
    nn::Var zero = nn::Scale(nn::Sum(input), 0.0);
    std::vector<nn::Var> parts = {zero, zero};
    return nn::Add(tape.constant(l), nn::ConcatCols(parts));
  }

 private:
  Vocabulary vocab_;
  Label verdict_;
  std::size_t max_len_;
};

// ---- weaver fuzzing --------------------------------------------------------

struct FuzzCase {
  weaver::MicroProgram program;
  std::vector<std::string> adversarial;
  std::vector<std::size_t> inserted;
};

inline weaver::Statement FuzzStatement(std::mt19937_64& rng, const std::vector<std::string>& pool,
                                       std::size_t depth, std::size_t& line) {
  std::uniform_int_distribution<int> kind(0, 9);
  const std::string loc = "fuzz.c:" + std::to_string(line++);
  const int k = kind(rng);
  if (k == 0 && depth < 2) {
    std::uniform_int_distribution<std::size_t> count(1, 3), len(1, 3);
    std::vector<weaver::Statement> body;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) body.push_back(FuzzStatement(rng, pool, depth + 1, line));
    return weaver::Statement::Loop(loc, count(rng), std::move(body));
  }
  if (k == 1) return weaver::Statement::Nop(loc);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return weaver::Statement::Emit(loc, pool[pick(rng)]);
}

// Random program plus an adversarial built by splicing graph walks between
// its trace events.
inline FuzzCase MakeFuzzCase(std::mt19937_64& rng, const std::vector<PerturbationGraph>& graphs,
                             const Vocabulary& vocab) {
  static const std::vector<std::string> kProgramPool = {
      "clone", "execve", "setuid", "exit_group", "mmap", "getpid", "brk", "futex", "kill"};
  FuzzCase fc;
  std::size_t line = 1;
  std::uniform_int_distribution<std::size_t> n_stmts(1, 6);
  const std::size_t n = n_stmts(rng);
  for (std::size_t i = 0; i < n; ++i) {
    fc.program.statements.push_back(FuzzStatement(rng, kProgramPool, 0, line));
  }
  const auto original = weaver::Execute(fc.program).behaviors();

  std::uniform_int_distribution<std::size_t> n_runs(0, 3), pick_graph(0, graphs.size() - 1);
  std::uniform_int_distribution<std::size_t> gap(0, original.size());
  std::map<std::size_t, std::vector<std::string>> runs;  // before original index
  const std::size_t count = n_runs(rng);
  for (std::size_t r = 0; r < count; ++r) {
    const auto& g = graphs[pick_graph(rng)];
    std::uniform_int_distribution<std::size_t> start(0, g.size() - 1), steps(0, 3);
    BehaviorId cur = g.nodes()[start(rng)];
    std::vector<std::string> walk = {vocab.name(cur)};
    const std::size_t extra = steps(rng);
    for (std::size_t s = 0; s < extra; ++s) {
      auto next = g.successors(cur);
      if (next.empty()) break;
      std::uniform_int_distribution<std::size_t> pn(0, next.size() - 1);
      cur = next[pn(rng)];
      walk.push_back(vocab.name(cur));
    }
    auto& slot = runs[gap(rng)];
    if (slot.empty()) slot = walk;  // one run per gap keeps runs maximal
  }
  for (std::size_t i = 0; i <= original.size(); ++i) {
    auto it = runs.find(i);
    if (it != runs.end()) {
      for (const auto& b : it->second) {
        fc.inserted.push_back(fc.adversarial.size());
        fc.adversarial.push_back(b);
      }
    }
    if (i < original.size()) fc.adversarial.push_back(original[i]);
  }
  return fc;
}

// Graphs over handle-using and constant-argument behaviors for the fuzzer.
inline std::vector<PerturbationGraph> FuzzGraphs(const Vocabulary& vocab) {
  auto make = [&](std::vector<std::string> path) {
    Pattern p;
    for (const auto& n : path) p.behaviors.push_back(vocab.id(n));
    p.support = 1.0;
    return PerturbationGraph::FromPattern(p);
  };
  return {make({"openat", "read", "close"}), make({"open", "write", "write", "close"}),
          make({"getuid", "lsetxattr"}), make({"setxattr", "setxattr", "getuid"}),
          make({"socket", "sendto", "close"})};
}

inline Vocabulary FuzzVocab() {
  return Vocabulary({"clone", "execve", "setuid", "exit_group", "mmap", "getpid", "brk", "futex",
                     "kill", "openat", "open", "read", "write", "close", "getuid", "lsetxattr",
                     "setxattr", "socket", "sendto"});
}

}  // namespace seqattack::testing

#endif  // SEQATTACK_TESTS_SUPPORT_H_
