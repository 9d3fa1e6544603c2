#ifndef SEQATTACK_CLASSIFIER_H_
#define SEQATTACK_CLASSIFIER_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqattack/nn/tape.h"
#include "seqattack/sequence.h"

namespace seqattack {

// Probability floor inside the cross-entropy loss.
inline constexpr double kProbabilityFloor = 1e-7;

struct Probabilities {
  double benign = 0.5;
  double malicious = 0.5;

  Label verdict() const { return malicious > 0.5 ? Label::kMalicious : Label::kBenign; }
};

// Differentiable two-class scorer (class 0 = benign, class 1 = malicious).
// Implementations map a relaxed one-hot view to logits; everything else
// (probabilities, loss, input gradients) derives from that.
class SequenceClassifier {
 public:
  virtual ~SequenceClassifier() = default;

  virtual std::string tag() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
  virtual std::size_t max_len() const = 0;

  // `input` is max_len x |V|; only its first `length` rows are real.
  // Returns a 1 x 2 logits row.
  virtual nn::Var Logits(nn::Tape& tape, nn::Var input, std::size_t length) const = 0;

  // Whether the model went through training (the DQN refuses untrained
  // surrogates).
  virtual bool trained() const { return true; }

  virtual Probabilities PredictProba(std::span<const BehaviorId> tokens) const;
};

Probabilities PredictProba(const SequenceClassifier& model, const BehaviorSequence& seq);
Label Predict(const SequenceClassifier& model, std::span<const BehaviorId> tokens);

// -log max(p_y, kProbabilityFloor).
double LossFromProbability(double p_y);
double Loss(const SequenceClassifier& model, std::span<const BehaviorId> tokens, Label y);

// d loss / d input over the full max_len x |V| view.
Eigen::MatrixXd InputGradient(const SequenceClassifier& model, const EncodedSequence& view,
                              Label y);

// Per-position L2 norm of the input gradient across the vocabulary axis;
// one entry per row of the max_len view, pad rows reported as 0.
std::vector<double> PositionGradients(const SequenceClassifier& model,
                                      std::span<const BehaviorId> tokens, Label y);

// Argmax over the first `valid` entries, ties to the lowest index. Throws
// PositionError when no non-pad position exists.
std::size_t ArgmaxNonPad(std::span<const double> magnitudes, std::size_t valid);

// Non-pad positions ordered by descending magnitude, ties by index.
std::vector<std::size_t> RankPositions(std::span<const double> magnitudes, std::size_t valid);

std::size_t VulnerablePosition(const SequenceClassifier& model,
                               std::span<const BehaviorId> tokens, Label y);

enum class Architecture { kRecurrent, kConvolutional, kAttention, kAutoencoder };

std::string_view ArchitectureTag(Architecture arch);
Architecture ParseArchitecture(std::string_view tag);

struct ModelConfig {
  Architecture architecture = Architecture::kRecurrent;
  std::size_t max_len = 40;
  std::size_t embed_dim = 16;
  std::size_t hidden = 32;         // recurrent width
  std::size_t conv_filters = 16;
  std::size_t model_width = 32;    // attention
  std::size_t heads = 2;
  std::size_t ffn_width = 64;
  std::size_t bottleneck = 8;      // autoencoder
  double threshold_quantile = 0.95;
  double anomaly_temperature = 0.5;  // autoencoder score pooling
};

// Trainable classifier with owned parameters. Concrete architectures are
// created through Create().
class NeuralClassifier : public SequenceClassifier {
 public:
  static std::unique_ptr<NeuralClassifier> Create(const ModelConfig& config,
                                                  const Vocabulary& vocab);

  std::string tag() const override { return std::string(ArchitectureTag(config_.architecture)); }
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t max_len() const override { return config_.max_len; }
  bool trained() const override { return heldout_accuracy_.has_value(); }

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  // Re-draws every parameter from `seed` and clears the trained marker.
  void Initialize(std::uint64_t seed);

  // Objective minimized by training. Defaults to the floored cross-entropy
  // against `label`.
  virtual nn::Var TrainingLoss(nn::Tape& tape, nn::Var input, std::size_t length,
                               Label label) const;
  // Reconstruction-style models only ever see benign sequences.
  virtual bool TrainsOnBenignOnly() const { return false; }
  // Post-training hook given benign validation sequences.
  virtual void Calibrate(std::span<const BehaviorSequence> /*benign_validation*/) {}

  std::vector<nn::Parameter>& parameters() { return params_; }
  const std::vector<nn::Parameter>& parameters() const { return params_; }
  std::vector<nn::Parameter*> parameter_ptrs();

  std::optional<double> heldout_accuracy() const { return heldout_accuracy_; }
  void set_heldout_accuracy(std::optional<double> acc) { heldout_accuracy_ = acc; }

  // Architecture-specific scalars that are not trained by gradient descent
  // (e.g. the autoencoder threshold). Serialized with the weights.
  std::map<std::string, double>& extras() { return extras_; }
  const std::map<std::string, double>& extras() const { return extras_; }

  // Self-describing JSON checkpoint: architecture tag, vocabulary hash,
  // max_len, seed, config, extras and weights.
  void Save(const std::filesystem::path& path) const;
  static std::unique_ptr<NeuralClassifier> Load(const std::filesystem::path& path,
                                                const Vocabulary& vocab);

 protected:
  NeuralClassifier(const ModelConfig& config, const Vocabulary& vocab)
      : config_(config), vocab_(vocab) {}

  virtual void Build(std::mt19937_64& rng) = 0;
  const nn::Parameter& param(std::string_view name) const;

  std::vector<nn::Parameter> params_;
  std::map<std::string, double> extras_;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  std::uint64_t seed_ = 0;
  std::optional<double> heldout_accuracy_;
};

}  // namespace seqattack

#endif  // SEQATTACK_CLASSIFIER_H_
