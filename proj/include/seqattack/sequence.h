#ifndef SEQATTACK_SEQUENCE_H_
#define SEQATTACK_SEQUENCE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace seqattack {

using BehaviorId = std::int32_t;

enum class Label : std::uint8_t { kBenign = 0, kMalicious = 1 };

inline int ToInt(Label l) { return static_cast<int>(l); }
Label LabelFromInt(int v);

// Symbol universe for behavior tokens. Real behaviors occupy ids
// 0..num_behaviors()-1; the pad token is always the last id.
class Vocabulary {
 public:
  static constexpr std::string_view kPadName = "__pad__";

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> behavior_names);

  // Size including the pad entry; this is the one-hot width.
  std::size_t size() const { return names_.size() + 1; }
  std::size_t num_behaviors() const { return names_.size(); }
  BehaviorId pad_id() const { return static_cast<BehaviorId>(names_.size()); }

  bool is_behavior(BehaviorId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < names_.size();
  }

  BehaviorId id(std::string_view name) const;
  std::optional<BehaviorId> find(std::string_view name) const;
  const std::string& name(BehaviorId id) const;
  const std::vector<std::string>& behavior_names() const { return names_; }

  // FNV-1a over the ordered names; checkpoints use it to refuse loading
  // against a different symbol universe.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, BehaviorId> index_;
};

struct BehaviorSequence {
  std::vector<BehaviorId> tokens;
  Label label = Label::kBenign;
  std::string origin;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const BehaviorSequence&) const = default;
};

// Throws EncodingError if the sequence is empty or holds a non-behavior id.
void Validate(const BehaviorSequence& seq, const Vocabulary& vocab);

struct AttackRecord {
  std::string id;
  BehaviorSequence original;
  BehaviorSequence adversarial;
  std::vector<std::size_t> inserted_positions;  // indices into adversarial
  bool success = false;
  std::size_t queries = 0;
  std::optional<std::size_t> graph_index;
};

// Removes the tokens at the given (strictly increasing) positions.
std::vector<BehaviorId> RemovePositions(std::span<const BehaviorId> tokens,
                                        std::span<const std::size_t> positions);

// Insertion-only invariant: positions strictly increasing, in range, and
// deleting them from the adversarial tokens yields the original tokens.
bool SatisfiesInsertionOnly(const AttackRecord& record);

// Relaxed one-hot view the classifiers consume: `rows` is max_len x |V|,
// `length` counts the real (non-pad) rows at the top.
struct EncodedSequence {
  Eigen::MatrixXd rows;
  std::size_t length = 0;
};

// Row i is the indicator of token i; rows past the sequence are the pad
// indicator; sequences longer than max_len lose their tail.
Eigen::MatrixXd OneHotEncode(const BehaviorSequence& seq, const Vocabulary& vocab,
                             std::size_t max_len);
EncodedSequence EncodeView(std::span<const BehaviorId> tokens, const Vocabulary& vocab,
                           std::size_t max_len);

// Fixed-window grouping of a raw trace. Full windows start at
// 0, stride, 2*stride, ...; the window after the last full one is kept
// when at least window/2 tokens remain.
std::vector<BehaviorSequence> WindowGroup(std::span<const BehaviorId> trace, Label label,
                                          std::size_t window, std::size_t stride,
                                          std::string_view origin = {});

// Fraction of records whose adversarial output was labeled benign.
double SuccessRate(std::span<const AttackRecord> records);

// Mean over records of inserted / original length. May exceed 1.
double PerturbationRate(std::span<const AttackRecord> records);

}  // namespace seqattack

#endif  // SEQATTACK_SEQUENCE_H_
