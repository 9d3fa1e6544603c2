#include "seqattack/weaver.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "seqattack/errors.h"

namespace seqattack::weaver {

Statement Statement::Emit(std::string location, std::string behavior,
                          std::vector<std::string> args) {
  Statement s;
  s.kind = Kind::kEmit;
  s.location = std::move(location);
  s.behavior = std::move(behavior);
  s.args = std::move(args);
  return s;
}

Statement Statement::Loop(std::string location, std::size_t count, std::vector<Statement> body) {
  Statement s;
  s.kind = Kind::kLoop;
  s.location = std::move(location);
  s.count = count;
  s.body = std::move(body);
  return s;
}

Statement Statement::Nop(std::string location) {
  Statement s;
  s.kind = Kind::kNop;
  s.location = std::move(location);
  return s;
}

namespace {

bool IsFileLine(std::string_view loc) {
  auto colon = loc.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == loc.size()) return false;
  return std::all_of(loc.begin() + static_cast<long>(colon) + 1, loc.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

void ValidateBody(const std::vector<Statement>& body, std::size_t depth,
                  std::set<std::string>& seen) {
  for (const auto& s : body) {
    if (s.location.empty()) throw ProgramError("statement without a location");
    if (s.kind != Statement::Kind::kHook && !IsFileLine(s.location)) {
      throw ProgramError("location '" + s.location + "' is not file:line");
    }
    if (!seen.insert(s.location).second) {
      throw ProgramError("duplicate location " + s.location);
    }
    switch (s.kind) {
      case Statement::Kind::kEmit:
        if (s.behavior.empty()) throw ProgramError(s.location + ": EMIT without a behavior");
        break;
      case Statement::Kind::kLoop:
        if (s.count < 1) throw ProgramError(s.location + ": loop count must be at least 1");
        if (depth + 1 > kMaxLoopDepth) {
          throw ProgramError(s.location + ": loops nest deeper than " +
                             std::to_string(kMaxLoopDepth));
        }
        ValidateBody(s.body, depth + 1, seen);
        break;
      case Statement::Kind::kHook:
        if (s.occurrence && *s.occurrence == 0) {
          throw ProgramError(s.location + ": occurrences count from 1");
        }
        break;
      case Statement::Kind::kNop:
        break;
    }
  }
}

std::optional<Binding> ParseBinding(std::string_view arg) {
  auto eq = arg.find('=');
  if (eq == std::string_view::npos || eq + 1 == arg.size()) return std::nullopt;
  auto key = arg.substr(0, eq);
  Binding b;
  b.handle = std::string(arg.substr(eq + 1));
  if (key == "def") {
    b.kind = Binding::Kind::kDef;
  } else if (key == "use") {
    b.kind = Binding::Kind::kUse;
  } else if (key == "kill") {
    b.kind = Binding::Kind::kKill;
  } else {
    return std::nullopt;
  }
  return b;
}

std::string BindingText(const Binding& b) {
  switch (b.kind) {
    case Binding::Kind::kDef:
      return "def=" + b.handle;
    case Binding::Kind::kUse:
      return "use=" + b.handle;
    case Binding::Kind::kKill:
      return "kill=" + b.handle;
  }
  return {};
}

class Interpreter {
 public:
  LocatedTrace Run(const MicroProgram& p) {
    Validate(p);
    RunBody(p.statements);
    return std::move(trace_);
  }

 private:
  void RunBody(const std::vector<Statement>& body) {
    for (const auto& s : body) {
      switch (s.kind) {
        case Statement::Kind::kEmit: {
          std::vector<Binding> bindings;
          for (const auto& a : s.args) {
            if (auto b = ParseBinding(a)) bindings.push_back(*b);
          }
          Record(s.behavior, s.location, bindings, false);
          break;
        }
        case Statement::Kind::kLoop:
          for (std::size_t i = 0; i < s.count; ++i) RunBody(s.body);
          break;
        case Statement::Kind::kHook: {
          const std::size_t next = counters_[s.anchor] + 1;
          if (!s.occurrence || *s.occurrence == next) {
            for (const auto& call : s.calls) Record(call.behavior, s.location, call.bindings, true);
          }
          break;
        }
        case Statement::Kind::kNop:
          break;
      }
    }
  }

  void Record(const std::string& behavior, const std::string& location,
              const std::vector<Binding>& bindings, bool injected) {
    for (const auto& b : bindings) {
      bool& live = live_[b.handle];
      switch (b.kind) {
        case Binding::Kind::kDef:
          if (live) throw ProgramError(location + ": handle " + b.handle + " defined while live");
          live = true;
          break;
        case Binding::Kind::kUse:
          if (!live) throw ProgramError(location + ": handle " + b.handle + " used while not live");
          break;
        case Binding::Kind::kKill:
          if (!live) throw ProgramError(location + ": handle " + b.handle + " closed while not live");
          live = false;
          break;
      }
    }
    const std::size_t occ = ++counters_[location];
    trace_.events.push_back({behavior, location, occ, injected});
  }

  std::map<std::string, std::size_t> counters_;
  std::map<std::string, bool> live_;
  LocatedTrace trace_;
};

}  // namespace

void Validate(const MicroProgram& program) {
  std::set<std::string> seen;
  ValidateBody(program.statements, 0, seen);
}

std::vector<std::string> LocatedTrace::behaviors() const {
  std::vector<std::string> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.behavior);
  return out;
}

std::vector<TraceEvent> LocatedTrace::original_events() const {
  std::vector<TraceEvent> out;
  for (const auto& e : events) {
    if (!e.injected) out.push_back(e);
  }
  return out;
}

LocatedTrace Execute(const MicroProgram& program) { return Interpreter().Run(program); }

ArgumentRole RoleOf(std::string_view behavior) {
  static const std::set<std::string, std::less<>> kProducers = {"open", "openat", "creat",
                                                                "socket", "dup", "pipe"};
  static const std::set<std::string, std::less<>> kConsumers = {
      "read",  "write", "readv", "writev", "pread64", "pwrite64",
      "fstat", "lseek", "mmap",  "ioctl",  "fcntl",   "getdents64"};
  if (kProducers.contains(behavior)) return ArgumentRole::kProducer;
  if (kConsumers.contains(behavior)) return ArgumentRole::kConsumer;
  if (behavior == "close") return ArgumentRole::kKill;
  return ArgumentRole::kNone;
}

InsertionPlan DerivePlan(const LocatedTrace& original, const std::vector<std::string>& adversarial) {
  const auto orig = original.original_events();
  std::vector<std::size_t> inserted;
  std::size_t j = 0;
  for (std::size_t i = 0; i < adversarial.size(); ++i) {
    if (j < orig.size() && adversarial[i] == orig[j].behavior) {
      ++j;
    } else {
      inserted.push_back(i);
    }
  }
  if (j != orig.size()) {
    throw PlanError("adversarial sequence does not contain the original trace as a subsequence");
  }
  return DerivePlan(original, adversarial, inserted);
}

InsertionPlan DerivePlan(const LocatedTrace& original, const std::vector<std::string>& adversarial,
                         const std::vector<std::size_t>& inserted_positions) {
  const auto orig = original.original_events();
  std::vector<bool> is_inserted(adversarial.size(), false);
  for (std::size_t k = 0; k < inserted_positions.size(); ++k) {
    const std::size_t p = inserted_positions[k];
    if (p >= adversarial.size() || (k > 0 && p <= inserted_positions[k - 1])) {
      throw PlanError("inserted positions must be increasing and in range");
    }
    is_inserted[p] = true;
  }
  std::size_t j = 0;
  for (std::size_t i = 0; i < adversarial.size(); ++i) {
    if (is_inserted[i]) continue;
    if (j >= orig.size() || adversarial[i] != orig[j].behavior) {
      throw PlanError("removing the inserted positions does not give the original trace");
    }
    ++j;
  }
  if (j != orig.size()) throw PlanError("adversarial sequence drops original events");

  InsertionPlan plan;
  std::vector<std::string> live;  // plan-produced handles, oldest first
  std::size_t next_handle = 1;
  std::size_t orig_index = 0;
  PlanEntry pending;
  for (std::size_t i = 0; i <= adversarial.size(); ++i) {
    if (i < adversarial.size() && is_inserted[i]) {
      InsertedCall call{adversarial[i], {}};
      switch (RoleOf(call.behavior)) {
        case ArgumentRole::kProducer: {
          std::string h = "%h" + std::to_string(next_handle++);
          call.bindings.push_back({Binding::Kind::kDef, h});
          live.push_back(h);
          break;
        }
        case ArgumentRole::kConsumer:
          if (!live.empty()) call.bindings.push_back({Binding::Kind::kUse, live.back()});
          break;
        case ArgumentRole::kKill:
          if (!live.empty()) {
            call.bindings.push_back({Binding::Kind::kKill, live.back()});
            live.pop_back();
          }
          break;
        case ArgumentRole::kNone:
          break;
      }
      pending.calls.push_back(std::move(call));
      continue;
    }
    if (!pending.calls.empty()) {
      if (i < adversarial.size()) {
        pending.location = orig[orig_index].location;
        pending.occurrence = orig[orig_index].occurrence;
      } else {
        pending.location = std::string(kEndLocation);
        pending.occurrence = 1;
      }
      plan.entries.push_back(std::move(pending));
      pending = PlanEntry{};
    }
    if (i < adversarial.size()) ++orig_index;
  }
  return plan;
}

namespace {

bool InsertHook(std::vector<Statement>& body, const std::string& anchor, Statement hook) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i].location == anchor && body[i].kind != Statement::Kind::kHook) {
      body.insert(body.begin() + static_cast<long>(i), std::move(hook));
      return true;
    }
    if (body[i].kind == Statement::Kind::kLoop && InsertHook(body[i].body, anchor, hook)) {
      return true;
    }
  }
  return false;
}

}  // namespace

MicroProgram Instrument(const MicroProgram& program, const InsertionPlan& plan) {
  Validate(program);
  MicroProgram out = program;
  std::map<std::string, std::size_t> hooks_per_anchor;
  for (const auto& entry : plan.entries) {
    Statement hook;
    hook.kind = Statement::Kind::kHook;
    hook.anchor = entry.location;
    hook.occurrence = entry.occurrence;
    hook.calls = entry.calls;
    hook.location = entry.location + "+" + std::to_string(++hooks_per_anchor[entry.location]);
    if (entry.location == kEndLocation) {
      out.statements.push_back(std::move(hook));
    } else if (!InsertHook(out.statements, entry.location, hook)) {
      throw InstrumentationError("plan references missing location " + entry.location);
    }
  }
  try {
    Validate(out);
  } catch (const ProgramError& e) {
    throw InstrumentationError(std::string("instrumented program is malformed: ") + e.what());
  }
  return out;
}

RoundtripResult VerifyRoundtrip(const MicroProgram& program, const InsertionPlan& plan,
                                const std::vector<std::string>& adversarial) {
  RoundtripResult result;
  std::vector<std::string> got;
  try {
    got = Execute(Instrument(program, plan)).behaviors();
  } catch (const Error& e) {
    result.diff = e.what();
    result.first_mismatch = 0;
    return result;
  }
  const std::size_t n = std::min(got.size(), adversarial.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (got[i] != adversarial[i]) {
      result.first_mismatch = i;
      result.diff = "position " + std::to_string(i) + ": expected " + adversarial[i] + ", got " +
                    got[i];
      return result;
    }
  }
  if (got.size() != adversarial.size()) {
    result.first_mismatch = n;
    result.diff = "length differs: expected " + std::to_string(adversarial.size()) + ", got " +
                  std::to_string(got.size());
    return result;
  }
  result.ok = true;
  return result;
}

bool NonInterference(const MicroProgram& program, const MicroProgram& instrumented) {
  return Execute(program).original_events() == Execute(instrumented).original_events();
}

namespace {

std::vector<std::string> SplitWords(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

bool IsBlankOrComment(std::string_view line) {
  auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string_view::npos || line[pos] == '#';
}

std::size_t ParseCount(const std::string& word, const std::string& what, std::size_t line,
                       bool plan) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(word, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != word.size() || word.empty() || word[0] == '-') {
    std::string msg = "line " + std::to_string(line) + ": bad " + what + " '" + word + "'";
    if (plan) throw PlanError(msg);
    throw ProgramError(msg);
  }
  return static_cast<std::size_t>(v);
}

// behavior(def=h,use=g) -> InsertedCall
InsertedCall ParseCall(const std::string& word, std::size_t line, bool plan) {
  auto fail = [&](const std::string& msg) {
    std::string full = "line " + std::to_string(line) + ": " + msg;
    if (plan) throw PlanError(full);
    throw ProgramError(full);
  };
  InsertedCall call;
  auto open = word.find('(');
  if (open == std::string::npos) {
    call.behavior = word;
  } else {
    if (word.back() != ')') fail("unterminated binding list in '" + word + "'");
    call.behavior = word.substr(0, open);
    std::string inner = word.substr(open + 1, word.size() - open - 2);
    std::size_t start = 0;
    while (start <= inner.size()) {
      auto comma = inner.find(',', start);
      std::string part = inner.substr(start, comma == std::string::npos ? std::string::npos
                                                                         : comma - start);
      auto b = ParseBinding(part);
      if (!b) fail("bad binding '" + part + "'");
      call.bindings.push_back(*b);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (call.behavior.empty()) fail("empty behavior name");
  return call;
}

std::string CallText(const InsertedCall& call) {
  std::string out = call.behavior;
  if (!call.bindings.empty()) {
    out += '(';
    for (std::size_t i = 0; i < call.bindings.size(); ++i) {
      if (i) out += ',';
      out += BindingText(call.bindings[i]);
    }
    out += ')';
  }
  return out;
}

std::string OccText(const std::optional<std::size_t>& occ) {
  return occ ? std::to_string(*occ) : "*";
}

void FormatBody(const std::vector<Statement>& body, std::size_t depth, std::string& out) {
  const std::string indent(depth * 2, ' ');
  for (const auto& s : body) {
    out += indent + "LOC " + s.location + ' ';
    switch (s.kind) {
      case Statement::Kind::kEmit:
        out += "EMIT " + s.behavior;
        for (const auto& a : s.args) out += ' ' + a;
        out += '\n';
        break;
      case Statement::Kind::kLoop:
        out += "LOOP " + std::to_string(s.count) + '\n';
        FormatBody(s.body, depth + 1, out);
        out += indent + "END\n";
        break;
      case Statement::Kind::kNop:
        out += "NOP\n";
        break;
      case Statement::Kind::kHook:
        out += "HOOK " + s.anchor + " OCC " + OccText(s.occurrence) + " CALL";
        for (const auto& c : s.calls) out += ' ' + CallText(c);
        out += '\n';
        break;
    }
  }
}

}  // namespace

MicroProgram ParseProgram(std::string_view text) {
  MicroProgram program;
  std::vector<std::vector<Statement>*> stack = {&program.statements};
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ProgramError("line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    if (IsBlankOrComment(raw)) continue;
    auto words = SplitWords(raw);
    if (words[0] == "END") {
      if (words.size() != 1) fail("END takes no arguments");
      if (stack.size() == 1) fail("END without a matching LOOP");
      stack.pop_back();
      continue;
    }
    if (words[0] != "LOC" || words.size() < 3) fail("expected 'LOC file:line <KIND> ...'");
    const std::string& loc = words[1];
    const std::string& kind = words[2];
    if (kind == "EMIT") {
      if (words.size() < 4) fail("EMIT needs a behavior");
      stack.back()->push_back(Statement::Emit(
          loc, words[3], std::vector<std::string>(words.begin() + 4, words.end())));
    } else if (kind == "LOOP") {
      if (words.size() != 4) fail("LOOP takes exactly one count");
      std::size_t n = ParseCount(words[3], "loop count", line_no, false);
      stack.back()->push_back(Statement::Loop(loc, n, {}));
      stack.push_back(&stack.back()->back().body);
    } else if (kind == "NOP") {
      if (words.size() != 3) fail("NOP takes no arguments");
      stack.back()->push_back(Statement::Nop(loc));
    } else if (kind == "HOOK") {
      if (words.size() < 7 || words[4] != "OCC" || words[6] != "CALL") {
        fail("expected 'LOC <loc> HOOK <anchor> OCC <k|*> CALL <calls...>'");
      }
      Statement hook;
      hook.kind = Statement::Kind::kHook;
      hook.location = loc;
      hook.anchor = words[3];
      if (words[5] != "*") hook.occurrence = ParseCount(words[5], "occurrence", line_no, false);
      for (std::size_t i = 7; i < words.size(); ++i) {
        hook.calls.push_back(ParseCall(words[i], line_no, false));
      }
      stack.back()->push_back(std::move(hook));
    } else {
      fail("unknown statement kind '" + kind + "'");
    }
  }
  if (stack.size() != 1) throw ProgramError("unterminated LOOP at end of file");
  Validate(program);
  return program;
}

std::string FormatProgram(const MicroProgram& program) {
  std::string out;
  FormatBody(program.statements, 0, out);
  return out;
}

InsertionPlan ParsePlan(std::string_view text) {
  InsertionPlan plan;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw PlanError("line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    if (IsBlankOrComment(raw)) continue;
    auto words = SplitWords(raw);
    if (words[0] != "AT") fail("unknown directive '" + words[0] + "'");
    if (words.size() < 6 || words[2] != "OCC" || words[4] != "INSERT") {
      fail("expected 'AT <loc> OCC <k|*> INSERT <behavior>...'");
    }
    PlanEntry entry;
    entry.location = words[1];
    if (words[3] != "*") {
      entry.occurrence = ParseCount(words[3], "occurrence", line_no, true);
      if (*entry.occurrence == 0) fail("occurrences count from 1");
    }
    for (std::size_t i = 5; i < words.size(); ++i) {
      entry.calls.push_back(ParseCall(words[i], line_no, true));
    }
    plan.entries.push_back(std::move(entry));
  }
  return plan;
}

std::string FormatPlan(const InsertionPlan& plan) {
  std::string out;
  for (const auto& e : plan.entries) {
    out += "AT " + e.location + " OCC " + OccText(e.occurrence) + " INSERT";
    for (const auto& c : e.calls) out += ' ' + CallText(c);
    out += '\n';
  }
  return out;
}

namespace {

std::string ReadAll(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

MicroProgram LoadProgram(const std::filesystem::path& path) { return ParseProgram(ReadAll(path)); }

InsertionPlan LoadPlan(const std::filesystem::path& path) { return ParsePlan(ReadAll(path)); }

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace seqattack::weaver
