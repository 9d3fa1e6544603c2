#include "seqattack/defenses.h"

#include <fstream>

#include <json.hpp>

#include "seqattack/errors.h"

namespace seqattack {

SqueezeMap::SqueezeMap(const Vocabulary& vocab) : vocab_(vocab), map_(vocab.size()) {
  for (std::size_t i = 0; i < map_.size(); ++i) map_[i] = static_cast<BehaviorId>(i);
}

SqueezeMap::SqueezeMap(const Vocabulary& vocab, const std::vector<std::vector<std::string>>& groups)
    : SqueezeMap(vocab) {
  for (const auto& group : groups) {
    if (group.empty()) continue;
    auto rep = vocab_.find(group.front());
    if (!rep) throw ConfigError("squeeze group names unknown behavior '" + group.front() + "'");
    for (const auto& name : group) {
      auto id = vocab_.find(name);
      if (!id) throw ConfigError("squeeze group names unknown behavior '" + name + "'");
      Set(*id, *rep);
    }
  }
  CheckIdempotent();
}

void SqueezeMap::Set(BehaviorId from, BehaviorId to) { map_[static_cast<std::size_t>(from)] = to; }

BehaviorId SqueezeMap::operator()(BehaviorId b) const {
  if (b < 0 || static_cast<std::size_t>(b) >= map_.size()) {
    throw ConfigError("squeeze map has no entry for token " + std::to_string(b));
  }
  return map_[static_cast<std::size_t>(b)];
}

std::size_t SqueezeMap::merged_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < map_.size(); ++i) n += map_[i] != static_cast<BehaviorId>(i) ? 1 : 0;
  return n;
}

void SqueezeMap::CheckIdempotent() const {
  if (map_.back() != vocab_.pad_id()) throw ConfigError("squeeze map must send pad to pad");
  for (std::size_t i = 0; i < map_.size(); ++i) {
    BehaviorId r = map_[i];
    if (r < 0 || static_cast<std::size_t>(r) >= map_.size()) {
      throw ConfigError("squeeze representative out of range");
    }
    if (r == vocab_.pad_id() && i + 1 != map_.size()) {
      throw ConfigError("only pad may map to pad");
    }
    if (map_[static_cast<std::size_t>(r)] != r) {
      throw ConfigError("squeeze map is not idempotent at '" + vocab_.name(static_cast<BehaviorId>(i)) + "'");
    }
  }
}

Eigen::MatrixXd SqueezeMap::Matrix() const {
  const auto n = static_cast<Eigen::Index>(map_.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, map_[static_cast<std::size_t>(i)]) = 1.0;
  return m;
}

void SqueezeMap::Save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i + 1 < map_.size(); ++i) {
    j[vocab_.name(static_cast<BehaviorId>(i))] = vocab_.name(map_[i]);
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

SqueezeMap SqueezeMap::Load(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  if (!j.is_object()) throw ParseError(path.string() + ": expected a JSON object", 0);
  SqueezeMap m(vocab);
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto from = vocab.find(it.key());
    auto to = vocab.find(it.value().get<std::string>());
    if (!from || !to) throw ConfigError("squeeze map names an unknown behavior");
    m.Set(*from, *to);
  }
  m.CheckIdempotent();
  return m;
}

SqueezeMap DefaultSqueezeMap(const Vocabulary& vocab) {
  static const std::vector<std::vector<std::string>> kFamilies = {
      {"read", "readv", "pread64"},   {"write", "writev", "pwrite64"},
      {"open", "openat"},             {"stat", "fstat", "lstat"},
      {"setxattr", "lsetxattr"},      {"poll", "select", "epoll_wait"},
      {"getpid", "gettid"},           {"setuid", "setgid"},
  };
  std::vector<std::vector<std::string>> present;
  for (const auto& family : kFamilies) {
    std::vector<std::string> group;
    for (const auto& name : family) {
      if (vocab.find(name)) group.push_back(name);
    }
    if (group.size() >= 2) present.push_back(std::move(group));
  }
  return SqueezeMap(vocab, present);
}

BehaviorSequence Squeeze(const BehaviorSequence& seq, const SqueezeMap& map) {
  BehaviorSequence out = seq;
  for (auto& t : out.tokens) t = map(t);
  return out;
}

SqueezedClassifier::SqueezedClassifier(std::shared_ptr<const SequenceClassifier> inner,
                                       SqueezeMap map)
    : inner_(std::move(inner)), map_(std::move(map)), matrix_(map_.Matrix()) {
  if (!(map_.vocabulary() == inner_->vocabulary())) {
    throw ConfigError("squeeze map and model disagree on the vocabulary");
  }
}

nn::Var SqueezedClassifier::Logits(nn::Tape& tape, nn::Var input, std::size_t length) const {
  return inner_->Logits(tape, nn::MatMul(input, tape.constant(matrix_)), length);
}

std::unique_ptr<SqueezedClassifier> FitSqueezed(const ModelConfig& config, const Vocabulary& vocab,
                                                std::span<const BehaviorSequence> data,
                                                const SqueezeMap& map, const FitOptions& options,
                                                FitReport* report) {
  std::vector<BehaviorSequence> squeezed;
  squeezed.reserve(data.size());
  for (const auto& s : data) squeezed.push_back(Squeeze(s, map));
  std::shared_ptr<NeuralClassifier> model = NeuralClassifier::Create(config, vocab);
  FitReport r = Fit(*model, squeezed, options);
  if (report) *report = r;
  return std::make_unique<SqueezedClassifier>(std::move(model), map);
}

std::unique_ptr<NeuralClassifier> AdversarialRetrain(const ModelConfig& config,
                                                     const Vocabulary& vocab,
                                                     std::span<const BehaviorSequence> clean,
                                                     std::span<const AttackRecord> records,
                                                     const FitOptions& options,
                                                     FitReport* report) {
  std::vector<BehaviorSequence> data(clean.begin(), clean.end());
  for (const auto& r : records) {
    BehaviorSequence adv = r.adversarial;
    adv.label = Label::kMalicious;
    data.push_back(std::move(adv));
  }
  auto model = NeuralClassifier::Create(config, vocab);
  FitReport rep = Fit(*model, data, options);
  if (report) *report = rep;
  return model;
}

}  // namespace seqattack
