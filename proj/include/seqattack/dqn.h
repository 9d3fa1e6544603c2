#ifndef SEQATTACK_DQN_H_
#define SEQATTACK_DQN_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seqattack/classifier.h"
#include "seqattack/nn/adam.h"

namespace seqattack {

// Pure insertion: b lands at 1-based position p, 1 <= p <= len + 1.
std::vector<BehaviorId> Insert(std::span<const BehaviorId> tokens, BehaviorId b, std::size_t p);

// alpha * (1 - 2 * loss(s', benign)) against the surrogate.
double Reward(const SequenceClassifier& surrogate, std::span<const BehaviorId> next_state,
              double alpha = 1.0);
double RewardFromLoss(double benign_loss, double alpha = 1.0);

double TdTarget(double reward, bool terminal, double gamma, double max_next_q);

struct Transition {
  std::vector<BehaviorId> state;
  BehaviorId action = 0;
  double reward = 0.0;
  std::vector<BehaviorId> next_state;
  bool terminal = false;
};

class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }
  // Uniform with replacement.
  std::vector<std::size_t> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

struct QAgentConfig {
  double gamma = 0.9;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  double anneal_fraction = 0.5;  // share of rollouts over which epsilon decays
  std::size_t replay_capacity = 10000;
  std::size_t batch_size = 32;
  std::size_t sync_every = 100;  // gradient steps between target refreshes
  double alpha = 1.0;
  double max_steps_fraction = 0.25;  // T = ceil(fraction * len)
  std::size_t max_len = 40;
  std::size_t embed_dim = 16;
  std::size_t hidden = 32;
  nn::AdamConfig adam;
};

// Estimated and target Q-networks over sequence states; one output per
// non-pad behavior.
class QAgent {
 public:
  QAgent(const Vocabulary& vocab, QAgentConfig config = {}, std::uint64_t seed = 0);

  const Vocabulary& vocabulary() const { return vocab_; }
  const QAgentConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t num_actions() const { return vocab_.num_behaviors(); }

  std::vector<double> QValues(std::span<const BehaviorId> state) const;
  std::vector<double> TargetQValues(std::span<const BehaviorId> state) const;
  // r if terminal, else r + gamma * max_a' Qhat(s', a').
  double TdTarget(double reward, std::span<const BehaviorId> next_state, bool terminal) const;

  // One descent step on the mean of (y_j - Q(s_j, a_j))^2. Syncs the target
  // network every sync_every steps. Returns the batch loss.
  double GradientStep(std::span<const Transition* const> batch);
  void SyncTarget();
  std::size_t gradient_steps() const { return gradient_steps_; }

  std::vector<nn::Parameter>& parameters() { return params_; }
  const std::vector<nn::Parameter>& parameters() const { return params_; }
  const std::vector<nn::Parameter>& target_parameters() const { return target_; }

  void Save(const std::filesystem::path& path) const;
  static QAgent Load(const std::filesystem::path& path, const Vocabulary& vocab);

 private:
  nn::Var Forward(nn::Tape& tape, std::span<const BehaviorId> state,
                  const std::vector<nn::Parameter>& params) const;
  std::vector<double> Evaluate(std::span<const BehaviorId> state,
                               const std::vector<nn::Parameter>& params) const;

  Vocabulary vocab_;
  QAgentConfig config_;
  std::uint64_t seed_;
  std::vector<nn::Parameter> params_;
  std::vector<nn::Parameter> target_;  // values only
  nn::Adam adam_;
  std::size_t gradient_steps_ = 0;
};

// Epsilon-greedy over `allowed` (all behaviors when empty); ties by lowest
// id. Throws ActionError when `allowed` was given but is empty.
BehaviorId SelectAction(std::span<const double> q_values, double epsilon,
                        const std::optional<std::vector<BehaviorId>>& allowed,
                        std::mt19937_64& rng);
BehaviorId SelectAction(const QAgent& agent, std::span<const BehaviorId> state, double epsilon,
                        const std::optional<std::vector<BehaviorId>>& allowed,
                        std::mt19937_64& rng);

// `allowed` sorted by Q descending, ties by id.
std::vector<BehaviorId> GreedyRanking(std::span<const double> q_values,
                                      std::span<const BehaviorId> allowed);
std::vector<BehaviorId> GreedyRanking(const QAgent& agent, std::span<const BehaviorId> state,
                                      std::span<const BehaviorId> allowed);

struct EpisodeLog {
  std::size_t episode = 0;
  std::size_t pass = 0;
  std::size_t sequence = 0;
  std::size_t steps = 0;
  double total_reward = 0.0;
  bool success = false;
  double epsilon = 0.0;
};

struct DqnTrainOptions {
  std::size_t passes = 10;  // M: sweeps over the training sequences
  std::uint64_t seed = 0;
  // Restricts exploration and exploitation to these behaviors when set.
  std::optional<std::vector<BehaviorId>> allowed;
};

// Runs one rollout per (pass, sequence): insert at the vulnerable position,
// reward from the surrogate, replay, target sync, stop once benign.
// Throws ConfigError for an untrained surrogate or an empty sequence list.
std::vector<EpisodeLog> Train(QAgent& agent, const SequenceClassifier& surrogate,
                              std::span<const BehaviorSequence> sequences,
                              const DqnTrainOptions& options);

// Epsilon for rollout `k` of `total` under the linear schedule.
double EpsilonAt(const QAgentConfig& config, std::size_t k, std::size_t total);

void SaveEpisodeLog(std::span<const EpisodeLog> log, const std::filesystem::path& path);

}  // namespace seqattack

#endif  // SEQATTACK_DQN_H_
