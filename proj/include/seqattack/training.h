#ifndef SEQATTACK_TRAINING_H_
#define SEQATTACK_TRAINING_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "seqattack/classifier.h"
#include "seqattack/nn/adam.h"

namespace seqattack {

struct FitOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.2;
  nn::AdamConfig adam;
};

struct FitReport {
  std::vector<double> epoch_loss;  // mean training objective per epoch
  double heldout_accuracy = 0.0;
  std::size_t train_size = 0;
  std::size_t heldout_size = 0;
};

// Re-initializes `model` from options.seed, trains on a seeded 80/20 split
// and stores the held-out accuracy on the model. Throws TrainingError when
// `data` lacks one of the two classes.
FitReport Fit(NeuralClassifier& model, std::span<const BehaviorSequence> data,
              const FitOptions& options);

// Shuffled minibatch training on all of `data` without any split or class
// checks. Leaves the trained marker untouched.
std::vector<double> TrainSupervised(NeuralClassifier& model,
                                    std::span<const BehaviorSequence> data,
                                    const FitOptions& options);

double Accuracy(const SequenceClassifier& model, std::span<const BehaviorSequence> data);

// Hard-label black box.
using LabelOracle = std::function<Label(const BehaviorSequence&)>;

struct DistillResult {
  std::unique_ptr<NeuralClassifier> surrogate;
  double agreement = 0.0;  // on held-out probes
  std::size_t queries = 0;
  std::size_t train_probes = 0;
  std::size_t heldout_probes = 0;
};

// Labels every probe with `target`, trains a surrogate on 80% of them and
// measures agreement on the rest. Throws ConfigError for an empty probe set.
DistillResult DistillSurrogate(const LabelOracle& target, std::span<const BehaviorSequence> probes,
                               const ModelConfig& config, const Vocabulary& vocab,
                               const FitOptions& options);

// Deterministic split of indices 0..n-1 (train, heldout).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> SplitIndices(
    std::size_t n, double holdout_fraction, std::uint64_t seed);

}  // namespace seqattack

#endif  // SEQATTACK_TRAINING_H_
