#include "seqattack/training.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "seqattack/errors.h"

namespace seqattack {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> SplitIndices(
    std::size_t n, double holdout_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5eed511770ULL);
  std::shuffle(order.begin(), order.end(), rng);
  auto heldout = static_cast<std::size_t>(holdout_fraction * static_cast<double>(n));
  if (n >= 2 && holdout_fraction > 0.0) heldout = std::clamp<std::size_t>(heldout, 1, n - 1);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<long>(heldout));
  std::vector<std::size_t> train(order.begin() + static_cast<long>(heldout), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

std::vector<double> TrainSupervised(NeuralClassifier& model,
                                    std::span<const BehaviorSequence> data,
                                    const FitOptions& options) {
  std::vector<double> losses;
  if (data.empty()) return losses;
  std::vector<EncodedSequence> views;
  views.reserve(data.size());
  for (const auto& s : data) views.push_back(EncodeView(s.tokens, model.vocabulary(), model.max_len()));

  nn::Adam adam(options.adam);
  auto params = model.parameter_ptrs();
  for (auto* p : params) p->zero_grad();
  std::mt19937_64 rng(options.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      for (std::size_t k = start; k < end; ++k) {
        const auto& view = views[order[k]];
        nn::Tape tape(true);
        nn::Var input = tape.constant(view.rows);
        nn::Var loss = model.TrainingLoss(tape, input, view.length, data[order[k]].label);
        total += loss.scalar();
        tape.backward(loss);
        tape.accumulate_into(params);
      }
      adam.step(params, static_cast<double>(end - start));
    }
    losses.push_back(total / static_cast<double>(order.size()));
  }
  return losses;
}

double Accuracy(const SequenceClassifier& model, std::span<const BehaviorSequence> data) {
  if (data.empty()) throw MetricError("accuracy of an empty set");
  std::size_t hits = 0;
  for (const auto& s : data) hits += Predict(model, s.tokens) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

std::vector<BehaviorSequence> Gather(std::span<const BehaviorSequence> data,
                                     const std::vector<std::size_t>& idx) {
  std::vector<BehaviorSequence> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

std::vector<BehaviorSequence> BenignOnly(const std::vector<BehaviorSequence>& data) {
  std::vector<BehaviorSequence> out;
  for (const auto& s : data) {
    if (s.label == Label::kBenign) out.push_back(s);
  }
  return out;
}

}  // namespace

FitReport Fit(NeuralClassifier& model, std::span<const BehaviorSequence> data,
              const FitOptions& options) {
  bool has_benign = false;
  bool has_malicious = false;
  for (const auto& s : data) {
    (s.label == Label::kBenign ? has_benign : has_malicious) = true;
  }
  if (!has_benign || !has_malicious) {
    throw TrainingError("training data must contain both classes");
  }
  model.Initialize(options.seed);
  auto [train_idx, test_idx] = SplitIndices(data.size(), options.holdout_fraction, options.seed);
  auto train = Gather(data, train_idx);
  auto heldout = Gather(data, test_idx);
  if (heldout.empty()) heldout = train;

  FitReport report;
  report.train_size = train.size();
  report.heldout_size = heldout.size();
  if (model.TrainsOnBenignOnly()) {
    auto benign_train = BenignOnly(train);
    report.epoch_loss = TrainSupervised(model, benign_train, options);
    auto benign_val = BenignOnly(heldout);
    model.Calibrate(benign_val.empty() ? benign_train : benign_val);
  } else {
    report.epoch_loss = TrainSupervised(model, train, options);
  }
  report.heldout_accuracy = Accuracy(model, heldout);
  model.set_heldout_accuracy(report.heldout_accuracy);
  return report;
}

DistillResult DistillSurrogate(const LabelOracle& target, std::span<const BehaviorSequence> probes,
                               const ModelConfig& config, const Vocabulary& vocab,
                               const FitOptions& options) {
  if (probes.empty()) throw ConfigError("distillation needs a positive probe budget");
  DistillResult result;
  std::vector<BehaviorSequence> labeled(probes.begin(), probes.end());
  for (auto& s : labeled) {
    s.label = target(s);
    ++result.queries;
  }
  auto [train_idx, test_idx] = SplitIndices(labeled.size(), options.holdout_fraction, options.seed);
  auto train = Gather(labeled, train_idx);
  auto heldout = Gather(labeled, test_idx);
  if (heldout.empty()) heldout = train;
  result.train_probes = train.size();
  result.heldout_probes = heldout.size();

  result.surrogate = NeuralClassifier::Create(config, vocab);
  result.surrogate->Initialize(options.seed);
  if (result.surrogate->TrainsOnBenignOnly()) {
    TrainSupervised(*result.surrogate, BenignOnly(train), options);
    auto benign = BenignOnly(heldout);
    if (benign.empty()) benign = BenignOnly(train);
    if (!benign.empty()) result.surrogate->Calibrate(benign);
  } else {
    TrainSupervised(*result.surrogate, train, options);
  }
  result.agreement = Accuracy(*result.surrogate, heldout);
  result.surrogate->set_heldout_accuracy(result.agreement);
  return result;
}

}  // namespace seqattack
