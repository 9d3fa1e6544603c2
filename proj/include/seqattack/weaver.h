#ifndef SEQATTACK_WEAVER_H_
#define SEQATTACK_WEAVER_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seqattack::weaver {

// Synthetic anchor for insertions after the last original event.
inline constexpr std::string_view kEndLocation = "<end>";

struct Binding {
  enum class Kind { kDef, kUse, kKill };
  Kind kind = Kind::kUse;
  std::string handle;

  bool operator==(const Binding&) const = default;
};

// One behavior emitted by a hook, with its handle bindings.
struct InsertedCall {
  std::string behavior;
  std::vector<Binding> bindings;

  bool operator==(const InsertedCall&) const = default;
};

struct Statement {
  enum class Kind { kEmit, kLoop, kNop, kHook };

  Kind kind = Kind::kNop;
  std::string location;  // "file:line", unique within a program

  // kEmit
  std::string behavior;
  std::vector<std::string> args;  // "def=h", "use=h", "kill=h" are bindings
  // kLoop
  std::size_t count = 1;
  std::vector<Statement> body;
  // kHook: fires before the anchor's next hit when that hit is the
  // `occurrence`-th (every hit when unset).
  std::string anchor;
  std::optional<std::size_t> occurrence;
  std::vector<InsertedCall> calls;

  static Statement Emit(std::string location, std::string behavior,
                        std::vector<std::string> args = {});
  static Statement Loop(std::string location, std::size_t count, std::vector<Statement> body);
  static Statement Nop(std::string location);

  bool operator==(const Statement&) const = default;
};

struct MicroProgram {
  std::vector<Statement> statements;

  bool operator==(const MicroProgram&) const = default;
};

inline constexpr std::size_t kMaxLoopDepth = 4;

// Throws ProgramError on duplicate or malformed locations, zero loop
// counts or nesting deeper than kMaxLoopDepth.
void Validate(const MicroProgram& program);

struct TraceEvent {
  std::string behavior;
  std::string location;
  std::size_t occurrence = 0;  // 1-based per location
  bool injected = false;       // emitted by a hook

  bool operator==(const TraceEvent&) const = default;
};

struct LocatedTrace {
  std::vector<TraceEvent> events;

  std::vector<std::string> behaviors() const;
  // Events that came from original statements.
  std::vector<TraceEvent> original_events() const;
};

// Deterministic interpreter. Tracks handle bindings and throws ProgramError
// on a def of a live handle or a use/kill of a handle that is not live.
LocatedTrace Execute(const MicroProgram& program);

struct PlanEntry {
  std::string location;                  // anchor statement or kEndLocation
  std::optional<std::size_t> occurrence;  // unset = every hit
  std::vector<InsertedCall> calls;

  bool operator==(const PlanEntry&) const = default;
};

struct InsertionPlan {
  std::vector<PlanEntry> entries;

  bool empty() const { return entries.empty(); }
  bool operator==(const InsertionPlan&) const = default;
};

// Producer / consumer / kill families used for argument bindings.
enum class ArgumentRole { kNone, kProducer, kConsumer, kKill };
ArgumentRole RoleOf(std::string_view behavior);

// Aligns `adversarial` against the trace (greedy leftmost), anchors each
// inserted run to the next original event and binds handles. Throws
// PlanError when the original is not a subsequence of `adversarial`.
InsertionPlan DerivePlan(const LocatedTrace& original, const std::vector<std::string>& adversarial);
// Same, with the inserted positions given explicitly (e.g. from an attack
// record). Throws PlanError if removing them does not give the original.
InsertionPlan DerivePlan(const LocatedTrace& original, const std::vector<std::string>& adversarial,
                         const std::vector<std::size_t>& inserted_positions);

// Places one guarded hook per entry directly before its anchor statement
// (end-anchored hooks go last). Throws InstrumentationError for unknown
// anchors.
MicroProgram Instrument(const MicroProgram& program, const InsertionPlan& plan);

struct RoundtripResult {
  bool ok = false;
  std::optional<std::size_t> first_mismatch;
  std::string diff;

  explicit operator bool() const { return ok; }
};

RoundtripResult VerifyRoundtrip(const MicroProgram& program, const InsertionPlan& plan,
                                const std::vector<std::string>& adversarial);

// Original-statement events of the instrumented run equal the original
// trace.
bool NonInterference(const MicroProgram& program, const MicroProgram& instrumented);

// Text formats.
MicroProgram ParseProgram(std::string_view text);
std::string FormatProgram(const MicroProgram& program);
InsertionPlan ParsePlan(std::string_view text);
std::string FormatPlan(const InsertionPlan& plan);

MicroProgram LoadProgram(const std::filesystem::path& path);
InsertionPlan LoadPlan(const std::filesystem::path& path);
void WriteText(const std::filesystem::path& path, const std::string& text);

}  // namespace seqattack::weaver

#endif  // SEQATTACK_WEAVER_H_
