#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "seqattack/errors.h"
#include "seqattack/sequence.h"
#include "seqattack/synth.h"
#include "seqattack/trace_io.h"
#include "support.h"

using namespace seqattack;
using namespace seqattack::testing;
namespace fs = std::filesystem;

namespace {

fs::path TempDir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("seqattack_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

AttackRecord MakeRecord(std::vector<BehaviorId> original, std::vector<BehaviorId> adversarial,
                        std::vector<std::size_t> positions, bool success = true) {
  AttackRecord r;
  r.original.tokens = std::move(original);
  r.adversarial.tokens = std::move(adversarial);
  r.inserted_positions = std::move(positions);
  r.success = success;
  return r;
}

}  // namespace

TEST_CASE("vocabulary keeps the pad id last and reserved") {
  const auto v = LetterVocab(3);
  CHECK(v.size() == 4);
  CHECK(v.pad_id() == 3);
  CHECK_FALSE(v.is_behavior(v.pad_id()));
  CHECK(v.id("b") == 1);
  CHECK(v.name(2) == "c");
  CHECK_THROWS_AS(Vocabulary({"a", "a"}), ConfigError);
  CHECK_THROWS_AS(Vocabulary({"__pad__"}), ConfigError);
  CHECK_THROWS_AS(v.id("zzz"), LookupError);
}

TEST_CASE("one-hot: tokens then pad rows") {
  const auto v = LetterVocab(3);
  const Eigen::MatrixXd m = OneHotEncode(Seq({2, 0}), v, 3);
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 4);
  CHECK(m(0, 2) == 1.0);
  CHECK(m(1, 0) == 1.0);
  CHECK(m(2, 3) == 1.0);
  for (int r = 0; r < 3; ++r) CHECK(m.row(r).sum() == 1.0);
}

TEST_CASE("one-hot truncates the tail") {
  const auto v = LetterVocab(3);
  const Eigen::MatrixXd m = OneHotEncode(Seq({1, 1, 1, 1}), v, 2);
  CHECK(m.rows() == 2);
  CHECK(m(0, 1) == 1.0);
  CHECK(m(1, 1) == 1.0);
}

TEST_CASE("one-hot single token puts pad column last") {
  const auto v = LetterVocab(2);
  const Eigen::MatrixXd m = OneHotEncode(Seq({0}), v, 1);
  Eigen::MatrixXd expect(1, 3);
  expect << 1, 0, 0;
  CHECK(m == expect);
}

TEST_CASE("one-hot rejects invalid ids and names them") {
  const auto v = LetterVocab(3);
  try {
    OneHotEncode(Seq({0, 7}), v, 4);
    FAIL("expected an encoding error");
  } catch (const EncodingError& e) {
    CHECK(std::string(e.what()).find('7') != std::string::npos);
  }
  CHECK_THROWS_AS(OneHotEncode(Seq({v.pad_id()}), v, 4), EncodingError);
}

TEST_CASE("one-hot rows are stochastic on random sequences") {
  const auto v = LetterVocab(7);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<BehaviorId> tokens(1 + rng() % 30);
    for (auto& x : tokens) x = static_cast<BehaviorId>(rng() % 7);
    const auto m = OneHotEncode(Seq(tokens), v, 20);
    for (int r = 0; r < m.rows(); ++r) CHECK(m.row(r).sum() == 1.0);
  }
}

TEST_CASE("window grouping") {
  std::vector<BehaviorId> trace(10, 0);
  CHECK(WindowGroup(trace, Label::kBenign, 5, 5).size() == 2);

  trace.assign(12, 1);
  auto w = WindowGroup(trace, Label::kMalicious, 5, 5);
  REQUIRE(w.size() == 2);  // 2-token remainder < 2.5 dropped
  CHECK(w[1].label == Label::kMalicious);

  trace.assign(8, 1);
  w = WindowGroup(trace, Label::kBenign, 5, 5);
  REQUIRE(w.size() == 2);  // 3-token remainder >= 2.5 kept
  CHECK(w[0].size() == 5);
  CHECK(w[1].size() == 3);

  CHECK(WindowGroup({}, Label::kBenign, 5, 5).empty());
  CHECK_THROWS_AS(WindowGroup(trace, Label::kBenign, 0, 5), ConfigError);
}

TEST_CASE("success rate examples") {
  std::vector<AttackRecord> r(4, MakeRecord({0}, {0}, {}, true));
  r[3].success = false;
  CHECK(SuccessRate(r) == 0.75);
  std::vector<AttackRecord> none(5, MakeRecord({0}, {0}, {}, false));
  CHECK(SuccessRate(none) == 0.0);
  std::vector<AttackRecord> all(3, MakeRecord({0}, {0}, {}, true));
  CHECK(SuccessRate(all) == 1.0);
  CHECK_THROWS_AS(SuccessRate(std::vector<AttackRecord>{}), MetricError);
}

TEST_CASE("perturbation rate examples") {
  // clone execve setuid exit_group with openat, read, close inserted
  std::vector<AttackRecord> one = {MakeRecord({0, 1, 2, 3}, {0, 4, 1, 5, 6, 2, 3}, {1, 3, 4})};
  CHECK(PerturbationRate(one) == 0.75);
  std::vector<AttackRecord> zero = {MakeRecord({0, 1}, {0, 1}, {})};
  CHECK(PerturbationRate(zero) == 0.0);
  std::vector<AttackRecord> two = {MakeRecord({0, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0}, {0}),
                                   MakeRecord({0, 0, 0, 0, 0}, {1, 1, 0, 0, 0, 0, 0}, {0, 1})};
  CHECK(PerturbationRate(two) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK_THROWS_AS(PerturbationRate(std::vector<AttackRecord>{}), MetricError);
}

TEST_CASE("insertion-only invariant and PR consistency") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 200; ++t) {
    std::vector<BehaviorId> orig(1 + rng() % 15);
    for (auto& x : orig) x = static_cast<BehaviorId>(rng() % 5);
    std::vector<BehaviorId> adv;
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i <= orig.size(); ++i) {
      while (rng() % 3 == 0) {
        pos.push_back(adv.size());
        adv.push_back(static_cast<BehaviorId>(rng() % 5));
      }
      if (i < orig.size()) adv.push_back(orig[i]);
    }
    auto r = MakeRecord(orig, adv, pos);
    CHECK(SatisfiesInsertionOnly(r));
    CHECK(RemovePositions(adv, pos) == orig);
    std::vector<AttackRecord> one = {r};
    CHECK(PerturbationRate(one) ==
          doctest::Approx(static_cast<double>(adv.size() - orig.size()) / orig.size()));
  }
  CHECK_FALSE(SatisfiesInsertionOnly(MakeRecord({0, 1}, {1, 0}, {0})));
  CHECK_FALSE(SatisfiesInsertionOnly(MakeRecord({0}, {2, 2, 0}, {1, 0})));
}

TEST_CASE("trace files with a label sidecar") {
  const auto dir = TempDir("traces");
  const auto v = LetterVocab(4);
  {
    std::ofstream(dir / "one.traces") << "1 2 3\n";
    std::ofstream(dir / "one.labels") << "1\n";
  }
  auto seqs = LoadTraces(dir / "one.traces", v);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].tokens == std::vector<BehaviorId>{1, 2, 3});
  CHECK(seqs[0].label == Label::kMalicious);

  std::ofstream(dir / "bad.traces") << "0 1\n2 9\n";
  std::ofstream(dir / "bad.labels") << "0\n0\n";
  try {
    LoadTraces(dir / "bad.traces", v);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }

  std::ofstream(dir / "empty.traces").flush();
  CHECK(LoadTraces(dir / "empty.traces", v, Label::kBenign).empty());
}

TEST_CASE("trace and vocabulary round trip") {
  const auto dir = TempDir("roundtrip");
  const auto v = LetterVocab(6);
  std::mt19937_64 rng(3);
  std::vector<BehaviorSequence> seqs;
  for (int i = 0; i < 100; ++i) {
    BehaviorSequence s;
    s.tokens.resize(1 + rng() % 25);
    for (auto& x : s.tokens) x = static_cast<BehaviorId>(rng() % 6);
    s.label = LabelFromInt(static_cast<int>(rng() % 2));
    seqs.push_back(s);
  }
  SaveTraces(seqs, dir / "r.traces");
  auto back = LoadTraces(dir / "r.traces", v);
  REQUIRE(back.size() == seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    CHECK(back[i].tokens == seqs[i].tokens);
    CHECK(back[i].label == seqs[i].label);
  }
  SaveVocabulary(v, dir / "v.json");
  CHECK(LoadVocabulary(dir / "v.json") == v);
}

TEST_CASE("synthetic corpus") {
  SynthConfig c;
  c.seed = 4;
  c.n_benign = 50;
  c.n_malicious = 50;
  const auto a = SynthDataset(c);
  const auto b = SynthDataset(c);
  CHECK(a.sequences == b.sequences);

  for (const auto& s : a.sequences) {
    if (s.label != Label::kMalicious) continue;
    bool planted = false;
    for (const auto& g : a.planted_grams) planted = planted || ContainsGram(s.tokens, g);
    CHECK(planted);
  }

  c.n_malicious = 0;
  for (const auto& s : SynthDataset(c).sequences) CHECK(s.label == Label::kBenign);

  c.vocab_size = 7;
  CHECK_THROWS_AS(SynthDataset(c), ConfigError);
}

TEST_CASE("decoy tokens are isolated and shared by both classes") {
  SynthConfig c;
  c.seed = 8;
  c.n_benign = 200;
  c.n_malicious = 200;
  c.decoy_tokens = 3;
  c.max_grams_per_sequence = 1;
  c.max_gram_length = 2;
  const auto corpus = SynthDataset(c);
  const auto first_attack = corpus.attack_tokens.front();
  std::size_t benign_with_attack = 0;
  for (const auto& s : corpus.sequences) {
    CHECK(s.size() <= c.length);
    if (s.label != Label::kBenign) continue;
    bool any = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool attack = s.tokens[i] >= first_attack;
      any = any || attack;
      if (attack && i + 1 < s.size()) CHECK(s.tokens[i + 1] < first_attack);
    }
    benign_with_attack += any ? 1 : 0;
  }
  CHECK(benign_with_attack > 50);
}
