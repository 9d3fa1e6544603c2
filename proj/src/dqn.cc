#include "seqattack/dqn.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "seqattack/errors.h"
#include "seqattack/nn/layers.h"

namespace seqattack {

std::vector<BehaviorId> Insert(std::span<const BehaviorId> tokens, BehaviorId b, std::size_t p) {
  if (p < 1 || p > tokens.size() + 1) {
    throw PositionError("insert position " + std::to_string(p) + " outside 1.." +
                        std::to_string(tokens.size() + 1));
  }
  std::vector<BehaviorId> out;
  out.reserve(tokens.size() + 1);
  out.insert(out.end(), tokens.begin(), tokens.begin() + static_cast<long>(p - 1));
  out.push_back(b);
  out.insert(out.end(), tokens.begin() + static_cast<long>(p - 1), tokens.end());
  return out;
}

double RewardFromLoss(double benign_loss, double alpha) { return alpha * (1.0 - 2.0 * benign_loss); }

double Reward(const SequenceClassifier& surrogate, std::span<const BehaviorId> next_state,
              double alpha) {
  return RewardFromLoss(Loss(surrogate, next_state, Label::kBenign), alpha);
}

double TdTarget(double reward, bool terminal, double gamma, double max_next_q) {
  return terminal ? reward : reward + gamma * max_next_q;
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayMemory::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<std::size_t> ReplayMemory::sample(std::size_t n, std::mt19937_64& rng) const {
  std::vector<std::size_t> out;
  if (items_.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pick(rng));
  return out;
}

QAgent::QAgent(const Vocabulary& vocab, QAgentConfig config, std::uint64_t seed)
    : vocab_(vocab), config_(config), seed_(seed), adam_(config.adam) {
  if (vocab.num_behaviors() == 0) throw ConfigError("agent needs a non-empty vocabulary");
  if (config.gamma < 0.0 || config.gamma >= 1.0) throw ConfigError("gamma must lie in [0, 1)");
  if (config.batch_size == 0 || config.sync_every == 0 || config.max_len == 0) {
    throw ConfigError("batch size, sync period and max_len must be positive");
  }
  std::mt19937_64 rng(seed);
  const auto v = static_cast<Eigen::Index>(vocab.size());
  const auto e = static_cast<Eigen::Index>(config.embed_dim);
  const auto h = static_cast<Eigen::Index>(config.hidden);
  params_.push_back(nn::MakeParameter("embed", nn::GlorotUniform(v, e, rng)));
  nn::AddLstmParameters(params_, "lstm", e, h, rng);
  params_.push_back(nn::MakeParameter(
      "out.w", nn::GlorotUniform(h, static_cast<Eigen::Index>(num_actions()), rng)));
  params_.push_back(
      nn::MakeParameter("out.b", nn::Matrix::Zero(1, static_cast<Eigen::Index>(num_actions()))));
  SyncTarget();
}

void QAgent::SyncTarget() {
  target_.clear();
  for (const auto& p : params_) {
    nn::Parameter copy;
    copy.name = p.name;
    copy.value = p.value;
    target_.push_back(std::move(copy));
  }
}

nn::Var QAgent::Forward(nn::Tape& tape, std::span<const BehaviorId> state,
                        const std::vector<nn::Parameter>& params) const {
  EncodedSequence view = EncodeView(state, vocab_, config_.max_len);
  nn::Matrix x = view.length == 0 ? nn::Matrix::Zero(1, view.rows.cols())
                                  : nn::Matrix(view.rows.topRows(static_cast<Eigen::Index>(view.length)));
  nn::Var embedded = nn::MatMul(tape.constant(std::move(x)), tape.param(params[0]));
  nn::LstmLayer layer{&params[1], &params[2], &params[3],
                      static_cast<Eigen::Index>(config_.hidden)};
  nn::Var pooled = nn::LstmMeanPool(tape, embedded, layer);
  return nn::Add(nn::MatMul(pooled, tape.param(params[4])), tape.param(params[5]));
}

std::vector<double> QAgent::Evaluate(std::span<const BehaviorId> state,
                                     const std::vector<nn::Parameter>& params) const {
  nn::Tape tape;
  nn::Var q = Forward(tape, state, params);
  const auto& row = q.value();
  return std::vector<double>(row.data(), row.data() + row.size());
}

std::vector<double> QAgent::QValues(std::span<const BehaviorId> state) const {
  return Evaluate(state, params_);
}

std::vector<double> QAgent::TargetQValues(std::span<const BehaviorId> state) const {
  return Evaluate(state, target_);
}

double QAgent::TdTarget(double reward, std::span<const BehaviorId> next_state,
                        bool terminal) const {
  if (terminal) return reward;
  auto q = TargetQValues(next_state);
  return seqattack::TdTarget(reward, false, config_.gamma, *std::max_element(q.begin(), q.end()));
}

double QAgent::GradientStep(std::span<const Transition* const> batch) {
  if (batch.empty()) return 0.0;
  std::vector<nn::Parameter*> ptrs;
  for (auto& p : params_) ptrs.push_back(&p);
  double total = 0.0;
  for (const Transition* t : batch) {
    const double y = TdTarget(t->reward, t->next_state, t->terminal);
    nn::Tape tape(true);
    nn::Var q = Forward(tape, t->state, params_);
    nn::Var diff = nn::AddScalar(nn::Pick(q, 0, t->action), -y);
    nn::Var loss = nn::Square(diff);
    total += loss.scalar();
    tape.backward(loss);
    tape.accumulate_into(ptrs);
  }
  adam_.step(ptrs, static_cast<double>(batch.size()));
  ++gradient_steps_;
  if (gradient_steps_ % config_.sync_every == 0) SyncTarget();
  return total / static_cast<double>(batch.size());
}

namespace {

nlohmann::json MatrixJson(const nn::Matrix& m) {
  std::vector<double> data;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

void ReadMatrix(const nlohmann::json& j, nn::Matrix& into) {
  auto data = j.at("data").get<std::vector<double>>();
  if (j.at("rows").get<Eigen::Index>() != into.rows() ||
      j.at("cols").get<Eigen::Index>() != into.cols() ||
      static_cast<Eigen::Index>(data.size()) != into.size()) {
    throw ParseError("agent checkpoint shape mismatch", 0);
  }
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < into.rows(); ++r) {
    for (Eigen::Index c = 0; c < into.cols(); ++c) into(r, c) = data[k++];
  }
}

}  // namespace

void QAgent::Save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = "seqattack-agent";
  j["version"] = 1;
  j["vocab_hash"] = vocab_.hash();
  j["seed"] = seed_;
  j["gradient_steps"] = gradient_steps_;
  j["config"] = {{"gamma", config_.gamma},
                 {"epsilon_start", config_.epsilon_start},
                 {"epsilon_end", config_.epsilon_end},
                 {"anneal_fraction", config_.anneal_fraction},
                 {"replay_capacity", config_.replay_capacity},
                 {"batch_size", config_.batch_size},
                 {"sync_every", config_.sync_every},
                 {"alpha", config_.alpha},
                 {"max_steps_fraction", config_.max_steps_fraction},
                 {"max_len", config_.max_len},
                 {"embed_dim", config_.embed_dim},
                 {"hidden", config_.hidden},
                 {"learning_rate", config_.adam.learning_rate}};
  j["parameters"] = nlohmann::ordered_json::object();
  j["target"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    j["parameters"][params_[i].name] = MatrixJson(params_[i].value);
    j["target"][target_[i].name] = MatrixJson(target_[i].value);
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

QAgent QAgent::Load(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("format") != "seqattack-agent") throw ParseError(path.string() + ": not an agent", 0);
    if (j.at("vocab_hash").get<std::uint64_t>() != vocab.hash()) {
      throw ConfigError(path.string() + " was trained against a different vocabulary");
    }
    const auto& jc = j.at("config");
    QAgentConfig c;
    c.gamma = jc.at("gamma");
    c.epsilon_start = jc.at("epsilon_start");
    c.epsilon_end = jc.at("epsilon_end");
    c.anneal_fraction = jc.at("anneal_fraction");
    c.replay_capacity = jc.at("replay_capacity");
    c.batch_size = jc.at("batch_size");
    c.sync_every = jc.at("sync_every");
    c.alpha = jc.at("alpha");
    c.max_steps_fraction = jc.at("max_steps_fraction");
    c.max_len = jc.at("max_len");
    c.embed_dim = jc.at("embed_dim");
    c.hidden = jc.at("hidden");
    c.adam.learning_rate = jc.at("learning_rate");
    QAgent agent(vocab, c, j.at("seed").get<std::uint64_t>());
    for (std::size_t i = 0; i < agent.params_.size(); ++i) {
      ReadMatrix(j.at("parameters").at(agent.params_[i].name), agent.params_[i].value);
      ReadMatrix(j.at("target").at(agent.target_[i].name), agent.target_[i].value);
    }
    agent.gradient_steps_ = j.at("gradient_steps");
    return agent;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

BehaviorId SelectAction(std::span<const double> q_values, double epsilon,
                        const std::optional<std::vector<BehaviorId>>& allowed,
                        std::mt19937_64& rng) {
  std::vector<BehaviorId> choices;
  if (allowed) {
    if (allowed->empty()) throw ActionError("allowed action set is empty");
    choices = *allowed;
    std::sort(choices.begin(), choices.end());
    choices.erase(std::unique(choices.begin(), choices.end()), choices.end());
    for (BehaviorId b : choices) {
      if (b < 0 || static_cast<std::size_t>(b) >= q_values.size()) {
        throw ActionError("action " + std::to_string(b) + " is not a behavior");
      }
    }
  } else {
    if (q_values.empty()) throw ActionError("no actions available");
    for (std::size_t i = 0; i < q_values.size(); ++i) choices.push_back(static_cast<BehaviorId>(i));
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (epsilon > 0.0 && coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
    return choices[pick(rng)];
  }
  BehaviorId best = choices.front();
  for (BehaviorId b : choices) {
    if (q_values[static_cast<std::size_t>(b)] > q_values[static_cast<std::size_t>(best)]) best = b;
  }
  return best;
}

BehaviorId SelectAction(const QAgent& agent, std::span<const BehaviorId> state, double epsilon,
                        const std::optional<std::vector<BehaviorId>>& allowed,
                        std::mt19937_64& rng) {
  if (allowed && allowed->empty()) throw ActionError("allowed action set is empty");
  auto q = agent.QValues(state);
  return SelectAction(q, epsilon, allowed, rng);
}

std::vector<BehaviorId> GreedyRanking(std::span<const double> q_values,
                                      std::span<const BehaviorId> allowed) {
  std::vector<BehaviorId> out(allowed.begin(), allowed.end());
  for (BehaviorId b : out) {
    if (b < 0 || static_cast<std::size_t>(b) >= q_values.size()) {
      throw ActionError("action " + std::to_string(b) + " is not a behavior");
    }
  }
  std::sort(out.begin(), out.end());
  std::stable_sort(out.begin(), out.end(), [&](BehaviorId a, BehaviorId b) {
    return q_values[static_cast<std::size_t>(a)] > q_values[static_cast<std::size_t>(b)];
  });
  return out;
}

std::vector<BehaviorId> GreedyRanking(const QAgent& agent, std::span<const BehaviorId> state,
                                      std::span<const BehaviorId> allowed) {
  auto q = agent.QValues(state);
  return GreedyRanking(q, allowed);
}

double EpsilonAt(const QAgentConfig& config, std::size_t k, std::size_t total) {
  const double span = config.anneal_fraction * static_cast<double>(total);
  if (span <= 0.0) return config.epsilon_end;
  const double frac = std::min(1.0, static_cast<double>(k) / span);
  return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start);
}

std::vector<EpisodeLog> Train(QAgent& agent, const SequenceClassifier& surrogate,
                              std::span<const BehaviorSequence> sequences,
                              const DqnTrainOptions& options) {
  if (!surrogate.trained()) throw ConfigError("surrogate has not been trained");
  if (sequences.empty()) throw ConfigError("DQN training needs at least one sequence");
  const QAgentConfig& cfg = agent.config();
  ReplayMemory replay(cfg.replay_capacity);
  std::mt19937_64 rng(options.seed);
  std::vector<EpisodeLog> log;
  const std::size_t total = options.passes * sequences.size();

  for (std::size_t pass = 0; pass < options.passes; ++pass) {
    for (std::size_t k = 0; k < sequences.size(); ++k) {
      EpisodeLog entry;
      entry.episode = log.size();
      entry.pass = pass;
      entry.sequence = k;
      entry.epsilon = EpsilonAt(cfg, entry.episode, total);
      std::vector<BehaviorId> state = sequences[k].tokens;
      const auto limit = static_cast<std::size_t>(
          std::ceil(cfg.max_steps_fraction * static_cast<double>(state.size())));
      entry.success = Predict(surrogate, state) == Label::kBenign;
      for (std::size_t step = 0; step < limit && !entry.success; ++step) {
        const std::size_t pos = VulnerablePosition(surrogate, state, Label::kMalicious);
        const BehaviorId action = SelectAction(agent, state, entry.epsilon, options.allowed, rng);
        std::vector<BehaviorId> next = Insert(state, action, pos + 1);
        const Probabilities p = surrogate.PredictProba(next);
        const double reward = RewardFromLoss(LossFromProbability(p.benign), cfg.alpha);
        const bool terminal = p.verdict() == Label::kBenign;
        replay.push({state, action, reward, next, terminal});
        entry.total_reward += reward;
        ++entry.steps;
        if (replay.size() >= cfg.batch_size) {
          auto idx = replay.sample(cfg.batch_size, rng);
          std::vector<const Transition*> batch;
          for (auto i : idx) batch.push_back(&replay[i]);
          agent.GradientStep(batch);
        }
        state = std::move(next);
        entry.success = terminal;
      }
      log.push_back(entry);
    }
  }
  return log;
}

void SaveEpisodeLog(std::span<const EpisodeLog> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : log) {
    nlohmann::ordered_json j = {{"episode", e.episode},       {"pass", e.pass},
                                {"sequence", e.sequence},     {"steps", e.steps},
                                {"total_reward", e.total_reward}, {"success", e.success},
                                {"epsilon", e.epsilon}};
    out << j.dump() << '\n';
  }
}

}  // namespace seqattack
