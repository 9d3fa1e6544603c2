#include "seqattack/classifier.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "seqattack/errors.h"

namespace seqattack {

namespace {

Probabilities FromLogits(const nn::Matrix& logits) {
  double z0 = logits(0, 0);
  double z1 = logits(0, 1);
  double mx = std::max(z0, z1);
  double e0 = std::exp(z0 - mx);
  double e1 = std::exp(z1 - mx);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace

Probabilities SequenceClassifier::PredictProba(std::span<const BehaviorId> tokens) const {
  EncodedSequence view = EncodeView(tokens, vocabulary(), max_len());
  nn::Tape tape;
  nn::Var input = tape.constant(std::move(view.rows));
  return FromLogits(Logits(tape, input, view.length).value());
}

Probabilities PredictProba(const SequenceClassifier& model, const BehaviorSequence& seq) {
  return model.PredictProba(seq.tokens);
}

Label Predict(const SequenceClassifier& model, std::span<const BehaviorId> tokens) {
  return model.PredictProba(tokens).verdict();
}

double LossFromProbability(double p_y) { return -std::log(std::max(p_y, kProbabilityFloor)); }

double Loss(const SequenceClassifier& model, std::span<const BehaviorId> tokens, Label y) {
  Probabilities p = model.PredictProba(tokens);
  return LossFromProbability(y == Label::kBenign ? p.benign : p.malicious);
}

Eigen::MatrixXd InputGradient(const SequenceClassifier& model, const EncodedSequence& view,
                              Label y) {
  nn::Tape tape;
  nn::Var input = tape.input(view.rows);
  nn::Var logits = model.Logits(tape, input, view.length);
  nn::Var loss = nn::FlooredCrossEntropy(logits, ToInt(y), kProbabilityFloor);
  tape.backward(loss);
  if (input.grad().size() == 0) return Eigen::MatrixXd::Zero(view.rows.rows(), view.rows.cols());
  return input.grad();
}

std::vector<double> PositionGradients(const SequenceClassifier& model,
                                      std::span<const BehaviorId> tokens, Label y) {
  EncodedSequence view = EncodeView(tokens, model.vocabulary(), model.max_len());
  Eigen::MatrixXd grad = InputGradient(model, view, y);
  std::vector<double> out(model.max_len(), 0.0);
  for (std::size_t i = 0; i < view.length; ++i) {
    out[i] = grad.row(static_cast<Eigen::Index>(i)).norm();
  }
  return out;
}

std::size_t ArgmaxNonPad(std::span<const double> magnitudes, std::size_t valid) {
  valid = std::min(valid, magnitudes.size());
  if (valid == 0) throw PositionError("no non-pad position to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < valid; ++i) {
    if (magnitudes[i] > magnitudes[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> RankPositions(std::span<const double> magnitudes, std::size_t valid) {
  valid = std::min(valid, magnitudes.size());
  std::vector<std::size_t> order(valid);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return magnitudes[a] > magnitudes[b];
  });
  return order;
}

std::size_t VulnerablePosition(const SequenceClassifier& model,
                               std::span<const BehaviorId> tokens, Label y) {
  auto mags = PositionGradients(model, tokens, y);
  return ArgmaxNonPad(mags, std::min(tokens.size(), model.max_len()));
}

std::string_view ArchitectureTag(Architecture arch) {
  switch (arch) {
    case Architecture::kRecurrent:
      return "recurrent";
    case Architecture::kConvolutional:
      return "convolutional";
    case Architecture::kAttention:
      return "attention";
    case Architecture::kAutoencoder:
      return "autoencoder";
  }
  return "unknown";
}

Architecture ParseArchitecture(std::string_view tag) {
  for (auto a : {Architecture::kRecurrent, Architecture::kConvolutional, Architecture::kAttention,
                 Architecture::kAutoencoder}) {
    if (ArchitectureTag(a) == tag) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(tag) + "'");
}

void NeuralClassifier::Initialize(std::uint64_t seed) {
  seed_ = seed;
  params_.clear();
  extras_.clear();
  heldout_accuracy_.reset();
  std::mt19937_64 rng(seed);
  Build(rng);
}

nn::Var NeuralClassifier::TrainingLoss(nn::Tape& tape, nn::Var input, std::size_t length,
                                       Label label) const {
  return nn::FlooredCrossEntropy(Logits(tape, input, length), ToInt(label), kProbabilityFloor);
}

std::vector<nn::Parameter*> NeuralClassifier::parameter_ptrs() {
  std::vector<nn::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

const nn::Parameter& NeuralClassifier::param(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw LookupError("model has no parameter '" + std::string(name) + "'");
}

namespace {

nlohmann::ordered_json ConfigToJson(const ModelConfig& c) {
  return {{"max_len", c.max_len},         {"embed_dim", c.embed_dim},
          {"hidden", c.hidden},           {"conv_filters", c.conv_filters},
          {"model_width", c.model_width}, {"heads", c.heads},
          {"ffn_width", c.ffn_width},     {"bottleneck", c.bottleneck},
          {"threshold_quantile", c.threshold_quantile},
          {"anomaly_temperature", c.anomaly_temperature}};
}

}  // namespace

void NeuralClassifier::Save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = "seqattack-model";
  j["version"] = 1;
  j["architecture"] = tag();
  j["vocab_hash"] = vocab_.hash();
  j["vocab_size"] = vocab_.size();
  j["max_len"] = config_.max_len;
  j["seed"] = seed_;
  j["config"] = ConfigToJson(config_);
  if (heldout_accuracy_) {
    j["heldout_accuracy"] = *heldout_accuracy_;
  } else {
    j["heldout_accuracy"] = nullptr;
  }
  j["extras"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : extras_) j["extras"][k] = v;
  j["parameters"] = nlohmann::ordered_json::array();
  for (const auto& p : params_) {
    nlohmann::ordered_json entry;
    entry["name"] = p.name;
    entry["rows"] = p.value.rows();
    entry["cols"] = p.value.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) data.push_back(p.value(r, c));
    }
    entry["data"] = std::move(data);
    j["parameters"].push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

std::unique_ptr<NeuralClassifier> NeuralClassifier::Load(const std::filesystem::path& path,
                                                         const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format") != "seqattack-model") throw ParseError(path.string() + ": not a model", 0);
    if (j.at("vocab_hash").get<std::uint64_t>() != vocab.hash()) {
      throw ConfigError(path.string() + " was trained against a different vocabulary");
    }
    ModelConfig c;
    c.architecture = ParseArchitecture(j.at("architecture").get<std::string>());
    const auto& jc = j.at("config");
    c.max_len = jc.at("max_len");
    c.embed_dim = jc.at("embed_dim");
    c.hidden = jc.at("hidden");
    c.conv_filters = jc.at("conv_filters");
    c.model_width = jc.at("model_width");
    c.heads = jc.at("heads");
    c.ffn_width = jc.at("ffn_width");
    c.bottleneck = jc.at("bottleneck");
    c.threshold_quantile = jc.at("threshold_quantile");
    c.anomaly_temperature = jc.at("anomaly_temperature");
    auto model = Create(c, vocab);
    model->Initialize(j.at("seed").get<std::uint64_t>());
    for (const auto& entry : j.at("parameters")) {
      auto name = entry.at("name").get<std::string>();
      auto it = std::find_if(model->params_.begin(), model->params_.end(),
                             [&](const nn::Parameter& p) { return p.name == name; });
      if (it == model->params_.end()) throw ParseError("unexpected parameter " + name, 0);
      auto data = entry.at("data").get<std::vector<double>>();
      if (entry.at("rows").get<Eigen::Index>() != it->value.rows() ||
          entry.at("cols").get<Eigen::Index>() != it->value.cols() ||
          static_cast<Eigen::Index>(data.size()) != it->value.size()) {
        throw ParseError("shape mismatch for parameter " + name, 0);
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < it->value.rows(); ++r) {
        for (Eigen::Index col = 0; col < it->value.cols(); ++col) it->value(r, col) = data[k++];
      }
    }
    for (auto it = j.at("extras").begin(); it != j.at("extras").end(); ++it) {
      model->extras_[it.key()] = it.value().get<double>();
    }
    if (!j.at("heldout_accuracy").is_null()) {
      model->heldout_accuracy_ = j.at("heldout_accuracy").get<double>();
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

}  // namespace seqattack
