#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "seqattack/errors.h"
#include "seqattack/weaver.h"
#include "support.h"

using namespace seqattack;
using namespace seqattack::testing;
using namespace seqattack::weaver;

namespace {

const std::filesystem::path kShare = SEQATTACK_SHARE_DIR;

std::vector<std::string> Words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

MicroProgram Fig1() {
  return ParseProgram(
      "LOC fig1.c:10 EMIT clone\n"
      "LOC fig1.c:12 EMIT execve\n"
      "LOC fig1.c:15 EMIT setuid\n"
      "LOC fig1.c:18 EMIT exit_group\n");
}

}  // namespace

TEST_CASE("execute records locations and occurrences") {
  const auto p = LoadProgram(kShare / "weave/loop.prog");
  const auto t = Execute(p);
  CHECK(t.behaviors() == Words("openat read read read close"));
  CHECK(t.events[2].location == "loop.c:5");
  CHECK(t.events[2].occurrence == 2);
  CHECK_FALSE(t.events[2].injected);
}

TEST_CASE("worked example: plan, instrumentation and round trip") {
  const auto p = Fig1();
  const auto adv = Words("clone openat execve read close setuid exit_group");
  const auto plan = DerivePlan(Execute(p), adv);
  REQUIRE(plan.entries.size() == 2);
  CHECK(plan.entries[0].location == "fig1.c:12");
  CHECK(plan.entries[0].calls.size() == 1);
  CHECK(plan.entries[0].calls[0].behavior == "openat");
  CHECK(plan.entries[0].calls[0].bindings[0].kind == Binding::Kind::kDef);
  CHECK(plan.entries[1].location == "fig1.c:15");
  REQUIRE(plan.entries[1].calls.size() == 2);
  CHECK(plan.entries[1].calls[1].bindings[0].kind == Binding::Kind::kKill);
  CHECK(plan.entries[1].calls[1].bindings[0].handle == plan.entries[0].calls[0].bindings[0].handle);

  const auto inst = Instrument(p, plan);
  CHECK(Execute(inst).behaviors() == adv);
  CHECK(NonInterference(p, inst));
  CHECK(VerifyRoundtrip(p, plan, adv).ok);
}

TEST_CASE("insertions after the last event anchor at the end") {
  const auto p = Fig1();
  auto adv = Words("clone execve setuid exit_group getpid getpid");
  const auto plan = DerivePlan(Execute(p), adv);
  REQUIRE(plan.entries.size() == 1);
  CHECK(plan.entries[0].location == kEndLocation);
  CHECK(VerifyRoundtrip(p, plan, adv).ok);
}

TEST_CASE("empty plan leaves the program alone") {
  const auto p = Fig1();
  const auto adv = Execute(p).behaviors();
  const auto plan = DerivePlan(Execute(p), adv);
  CHECK(plan.empty());
  CHECK(Instrument(p, plan) == p);
}

TEST_CASE("loop hook fires on the chosen occurrence only") {
  const auto p = LoadProgram(kShare / "weave/loop.prog");
  const auto plan = LoadPlan(kShare / "weave/loop.plan");
  const auto inst = Instrument(p, plan);
  CHECK(Execute(inst).behaviors() == Words("openat read getuid read read close"));
  CHECK(NonInterference(p, inst));
}

TEST_CASE("plan for a loop body round trips") {
  const auto p = LoadProgram(kShare / "weave/loop.prog");
  const auto adv = Words("openat read read getuid getuid read close");
  const auto plan = DerivePlan(Execute(p), adv);
  REQUIRE(plan.entries.size() == 1);
  CHECK(plan.entries[0].occurrence == 3);
  CHECK(VerifyRoundtrip(p, plan, adv).ok);
}

TEST_CASE("explicit positions disambiguate the alignment") {
  const auto p = ParseProgram("LOC a.c:1 EMIT read\nLOC a.c:2 EMIT close\n");
  const auto adv = Words("read read close");
  const auto greedy = DerivePlan(Execute(p), adv);
  REQUIRE(greedy.entries.size() == 1);
  CHECK(greedy.entries[0].location == "a.c:2");
  const auto exact = DerivePlan(Execute(p), adv, {0});
  REQUIRE(exact.entries.size() == 1);
  CHECK(exact.entries[0].location == "a.c:1");
  CHECK(VerifyRoundtrip(p, exact, adv).ok);
  CHECK_THROWS_AS(DerivePlan(Execute(p), adv, {2}), PlanError);
}

TEST_CASE("plan derivation rejects non-supersequences") {
  const auto p = Fig1();
  CHECK_THROWS_AS(DerivePlan(Execute(p), Words("clone setuid execve exit_group")), PlanError);
  CHECK_THROWS_AS(DerivePlan(Execute(p), Words("clone execve")), PlanError);
}

TEST_CASE("roundtrip reports the first mismatch") {
  const auto p = Fig1();
  const auto adv = Words("clone openat execve setuid exit_group");
  const auto plan = DerivePlan(Execute(p), adv);
  const auto r = VerifyRoundtrip(p, plan, Words("clone openat execve getpid exit_group"));
  CHECK_FALSE(r.ok);
  CHECK(r.first_mismatch == 3);
  CHECK_FALSE(r.diff.empty());
}

TEST_CASE("argument roles") {
  CHECK(RoleOf("openat") == ArgumentRole::kProducer);
  CHECK(RoleOf("read") == ArgumentRole::kConsumer);
  CHECK(RoleOf("close") == ArgumentRole::kKill);
  CHECK(RoleOf("getuid") == ArgumentRole::kNone);
}

TEST_CASE("program validation and handle checks") {
  CHECK_THROWS_AS(ParseProgram("LOC a.c:1 EMIT x\nLOC a.c:1 EMIT y\n"), ProgramError);
  CHECK_THROWS_AS(ParseProgram("LOC nowhere EMIT x\n"), ProgramError);
  CHECK_THROWS_AS(ParseProgram("LOC a.c:1 LOOP 0\n  LOC a.c:2 EMIT x\nEND\n"), ProgramError);
  CHECK_THROWS_AS(ParseProgram("LOC a.c:1 LOOP 2\n  LOC a.c:2 EMIT x\n"), ProgramError);
  CHECK_THROWS_AS(Execute(ParseProgram("LOC a.c:1 EMIT read use=f\n")), ProgramError);
  CHECK_THROWS_AS(
      Execute(ParseProgram("LOC a.c:1 EMIT openat def=f\nLOC a.c:2 EMIT openat def=f\n")),
      ProgramError);
  std::string deep;
  for (std::size_t d = 0; d <= kMaxLoopDepth; ++d) deep += "LOC d.c:" + std::to_string(d + 1) + " LOOP 1\n";
  deep += "LOC d.c:99 EMIT x\n";
  for (std::size_t d = 0; d <= kMaxLoopDepth; ++d) deep += "END\n";
  CHECK_THROWS_AS(ParseProgram(deep), ProgramError);
}

TEST_CASE("instrumenting against a missing anchor") {
  InsertionPlan plan;
  plan.entries.push_back({"nope.c:1", 1, {{"getuid", {}}}});
  CHECK_THROWS_AS(Instrument(Fig1(), plan), InstrumentationError);
  CHECK_THROWS_AS(ParsePlan("AT a.c:1 OCC x INSERT y\n"), PlanError);
  CHECK_THROWS_AS(LoadProgram("/nonexistent.prog"), MissingArtifactError);
}

TEST_CASE("text formats round trip") {
  const auto p = LoadProgram(kShare / "weave/loop.prog");
  CHECK(ParseProgram(FormatProgram(p)) == p);
  const auto adv = Words("clone openat execve read close setuid exit_group");
  const auto plan = DerivePlan(Execute(Fig1()), adv);
  CHECK(ParsePlan(FormatPlan(plan)) == plan);
  const auto inst = Instrument(Fig1(), plan);
  CHECK(ParseProgram(FormatProgram(inst)) == inst);
}

TEST_CASE("shipped examples round trip") {
  for (const char* name : {"fig1", "case_study", "loop"}) {
    const auto p = LoadProgram(kShare / "weave" / (std::string(name) + ".prog"));
    std::ifstream in(kShare / "weave" / (std::string(name) + ".adv"));
    std::string line;
    std::getline(in, line);
    const auto adv = Words(line);
    CAPTURE(name);
    CHECK(VerifyRoundtrip(p, DerivePlan(Execute(p), adv), adv).ok);
  }
}

TEST_CASE("fuzzed programs round trip with and without positions") {
  const auto vocab = FuzzVocab();
  const auto graphs = FuzzGraphs(vocab);
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const auto fc = MakeFuzzCase(rng, graphs, vocab);
    const auto trace = Execute(fc.program);
    const auto plan = DerivePlan(trace, fc.adversarial, fc.inserted);
    const auto inst = Instrument(fc.program, plan);
    CHECK(Execute(inst).behaviors() == fc.adversarial);
    CHECK(NonInterference(fc.program, inst));
    CHECK(VerifyRoundtrip(fc.program, DerivePlan(trace, fc.adversarial), fc.adversarial).ok);
    CHECK(ParseProgram(FormatProgram(inst)) == inst);
  }
}

TEST_CASE("execute examples") {
  const auto t = Execute(Fig1());
  CHECK(t.behaviors() == Words("clone execve setuid exit_group"));
  for (const auto& e : t.events) CHECK(e.occurrence == 1);

  const auto loop = Execute(ParseProgram("LOC l.c:1 LOOP 3\n  LOC l.c:5 EMIT read\nEND\n"));
  REQUIRE(loop.events.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loop.events[i].location == "l.c:5");
    CHECK(loop.events[i].occurrence == i + 1);
  }
  CHECK(Execute(MicroProgram{}).events.empty());
}

TEST_CASE("case study plan") {
  const auto p = LoadProgram(kShare / "weave/case_study.prog");
  const auto adv = Words(
      "setxattr setxattr openat mmap getuid getuid getpid clone clock_nanosleep restart_syscall "
      "exit_group");
  const auto plan = DerivePlan(Execute(p), adv);
  REQUIRE(plan.entries.size() == 2);
  CHECK(plan.entries[0].location == Execute(p).events[0].location);
  CHECK(plan.entries[1].location == Execute(p).events[2].location);
  CHECK(plan.entries[1].calls.size() == 2);
  CHECK(Execute(Instrument(p, plan)).behaviors() == adv);
  CHECK(VerifyRoundtrip(p, plan, adv).ok);
}

TEST_CASE("a plan anchored at the wrong statement fails verification") {
  const auto p = Fig1();
  const auto adv = Words("clone openat execve setuid exit_group");
  InsertionPlan wrong;
  wrong.entries.push_back({"fig1.c:15", 1, {{"openat", {}}}});
  const auto r = VerifyRoundtrip(p, wrong, adv);
  CHECK_FALSE(r.ok);
  CHECK(r.first_mismatch == 1);
}
