#include "seqattack/sequence.h"

#include <algorithm>

#include "seqattack/errors.h"

namespace seqattack {

Label LabelFromInt(int v) {
  if (v == 0) return Label::kBenign;
  if (v == 1) return Label::kMalicious;
  throw EncodingError("label must be 0 or 1, got " + std::to_string(v));
}

Vocabulary::Vocabulary(std::vector<std::string> behavior_names)
    : names_(std::move(behavior_names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ConfigError("empty behavior name at id " + std::to_string(i));
    if (names_[i] == kPadName) throw ConfigError("behavior name collides with the pad token");
    auto [it, inserted] = index_.emplace(names_[i], static_cast<BehaviorId>(i));
    if (!inserted) throw ConfigError("duplicate behavior name '" + names_[i] + "'");
  }
}

std::optional<BehaviorId> Vocabulary::find(std::string_view name) const {
  if (name == kPadName) return pad_id();
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

BehaviorId Vocabulary::id(std::string_view name) const {
  auto found = find(name);
  if (!found) throw LookupError("unknown behavior '" + std::string(name) + "'");
  return *found;
}

const std::string& Vocabulary::name(BehaviorId id) const {
  static const std::string pad{kPadName};
  if (id == pad_id()) return pad;
  if (!is_behavior(id)) throw LookupError("behavior id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& n : names_) {
    for (char c : n) mix(static_cast<unsigned char>(c));
    mix(0);
  }
  return h;
}

void Validate(const BehaviorSequence& seq, const Vocabulary& vocab) {
  if (seq.tokens.empty()) throw EncodingError("behavior sequence is empty");
  for (BehaviorId t : seq.tokens) {
    if (!vocab.is_behavior(t)) {
      throw EncodingError("invalid behavior id " + std::to_string(t));
    }
  }
}

std::vector<BehaviorId> RemovePositions(std::span<const BehaviorId> tokens,
                                        std::span<const std::size_t> positions) {
  std::vector<BehaviorId> out;
  out.reserve(tokens.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (next < positions.size() && positions[next] == i) {
      ++next;
      continue;
    }
    out.push_back(tokens[i]);
  }
  return out;
}

bool SatisfiesInsertionOnly(const AttackRecord& record) {
  const auto& pos = record.inserted_positions;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (pos[i] >= record.adversarial.tokens.size()) return false;
    if (i > 0 && pos[i] <= pos[i - 1]) return false;
  }
  return RemovePositions(record.adversarial.tokens, pos) == record.original.tokens;
}

EncodedSequence EncodeView(std::span<const BehaviorId> tokens, const Vocabulary& vocab,
                           std::size_t max_len) {
  if (max_len == 0) throw EncodingError("max_len must be positive");
  EncodedSequence out;
  out.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(max_len),
                                   static_cast<Eigen::Index>(vocab.size()));
  out.length = std::min(tokens.size(), max_len);
  for (std::size_t i = 0; i < max_len; ++i) {
    BehaviorId t = vocab.pad_id();
    if (i < out.length) {
      t = tokens[i];
      if (!vocab.is_behavior(t)) throw EncodingError("invalid behavior id " + std::to_string(t));
    }
    out.rows(static_cast<Eigen::Index>(i), t) = 1.0;
  }
  // Ids past the truncation point must still be valid.
  for (std::size_t i = out.length; i < tokens.size(); ++i) {
    if (!vocab.is_behavior(tokens[i])) {
      throw EncodingError("invalid behavior id " + std::to_string(tokens[i]));
    }
  }
  return out;
}

Eigen::MatrixXd OneHotEncode(const BehaviorSequence& seq, const Vocabulary& vocab,
                             std::size_t max_len) {
  return EncodeView(seq.tokens, vocab, max_len).rows;
}

std::vector<BehaviorSequence> WindowGroup(std::span<const BehaviorId> trace, Label label,
                                          std::size_t window, std::size_t stride,
                                          std::string_view origin) {
  if (window == 0 || stride == 0) throw ConfigError("window and stride must be positive");
  std::vector<BehaviorSequence> out;
  auto emit = [&](std::size_t begin, std::size_t end) {
    BehaviorSequence s;
    s.tokens.assign(trace.begin() + static_cast<std::ptrdiff_t>(begin),
                    trace.begin() + static_cast<std::ptrdiff_t>(end));
    s.label = label;
    s.origin = std::string(origin) + "@" + std::to_string(begin);
    out.push_back(std::move(s));
  };
  std::size_t start = 0;
  for (; start + window <= trace.size(); start += stride) emit(start, start + window);
  if (start < trace.size() && 2 * (trace.size() - start) >= window) emit(start, trace.size());
  return out;
}

double SuccessRate(std::span<const AttackRecord> records) {
  if (records.empty()) throw MetricError("success rate is undefined on an empty record set");
  auto hits = std::count_if(records.begin(), records.end(),
                            [](const AttackRecord& r) { return r.success; });
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double PerturbationRate(std::span<const AttackRecord> records) {
  if (records.empty()) {
    throw MetricError("perturbation rate is undefined on an empty record set");
  }
  double total = 0.0;
  for (const auto& r : records) {
    if (r.original.tokens.empty()) throw MetricError("record '" + r.id + "' has empty original");
    total += static_cast<double>(r.inserted_positions.size()) /
             static_cast<double>(r.original.tokens.size());
  }
  return total / static_cast<double>(records.size());
}

}  // namespace seqattack
