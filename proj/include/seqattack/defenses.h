#ifndef SEQATTACK_DEFENSES_H_
#define SEQATTACK_DEFENSES_H_

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "seqattack/classifier.h"
#include "seqattack/training.h"

namespace seqattack {

// Total map from behavior id to a group representative. Pad maps to pad.
class SqueezeMap {
 public:
  // Identity over `vocab`.
  explicit SqueezeMap(const Vocabulary& vocab);
  // `groups` lists behavior-name groups; the first name of each group is
  // its representative. Unknown names raise ConfigError.
  SqueezeMap(const Vocabulary& vocab, const std::vector<std::vector<std::string>>& groups);

  // Throws ConfigError for ids outside the vocabulary.
  BehaviorId operator()(BehaviorId b) const;
  const Vocabulary& vocabulary() const { return vocab_; }
  // Representatives that differ from their key.
  std::size_t merged_count() const;
  // Throws ConfigError unless map(map(x)) == map(x) and pad -> pad.
  void CheckIdempotent() const;

  // |V| x |V| 0/1 matrix M with M(x, map(x)) = 1.
  Eigen::MatrixXd Matrix() const;

  // JSON object name -> representative name; unlisted names map to
  // themselves.
  void Save(const std::filesystem::path& path) const;
  static SqueezeMap Load(const std::filesystem::path& path, const Vocabulary& vocab);

 private:
  void Set(BehaviorId from, BehaviorId to);

  Vocabulary vocab_;
  std::vector<BehaviorId> map_;  // indexed by id, pad included
};

// Syscall families that are interchangeable for detection purposes
// (write/writev, read/readv, ...). Only names present in `vocab` take part.
SqueezeMap DefaultSqueezeMap(const Vocabulary& vocab);

BehaviorSequence Squeeze(const BehaviorSequence& seq, const SqueezeMap& map);

// Squeezes its input before handing it to the wrapped model; the one-hot
// view is multiplied by the map matrix so gradients still reach the
// original positions.
class SqueezedClassifier final : public SequenceClassifier {
 public:
  SqueezedClassifier(std::shared_ptr<const SequenceClassifier> inner, SqueezeMap map);

  std::string tag() const override { return inner_->tag() + "+squeeze"; }
  const Vocabulary& vocabulary() const override { return inner_->vocabulary(); }
  std::size_t max_len() const override { return inner_->max_len(); }
  bool trained() const override { return inner_->trained(); }
  nn::Var Logits(nn::Tape& tape, nn::Var input, std::size_t length) const override;

  const SequenceClassifier& inner() const { return *inner_; }
  const SqueezeMap& map() const { return map_; }

 private:
  std::shared_ptr<const SequenceClassifier> inner_;
  SqueezeMap map_;
  Eigen::MatrixXd matrix_;
};

// Trains a fresh model of `config` on squeezed data and wraps it so that
// inference squeezes too.
std::unique_ptr<SqueezedClassifier> FitSqueezed(const ModelConfig& config, const Vocabulary& vocab,
                                                std::span<const BehaviorSequence> data,
                                                const SqueezeMap& map, const FitOptions& options,
                                                FitReport* report = nullptr);

// Retrains `config` from scratch on clean data plus every adversarial
// sequence relabeled malicious. Same seed and no records reproduce the
// plain Fit result exactly.
std::unique_ptr<NeuralClassifier> AdversarialRetrain(const ModelConfig& config,
                                                     const Vocabulary& vocab,
                                                     std::span<const BehaviorSequence> clean,
                                                     std::span<const AttackRecord> records,
                                                     const FitOptions& options,
                                                     FitReport* report = nullptr);

}  // namespace seqattack

#endif  // SEQATTACK_DEFENSES_H_
