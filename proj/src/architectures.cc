#include <algorithm>
#include <cmath>

#include "seqattack/classifier.h"
#include "seqattack/errors.h"
#include "seqattack/nn/adam.h"
#include "seqattack/nn/layers.h"

namespace seqattack {

namespace {

using nn::GlorotUniform;
using nn::MakeParameter;
using nn::Matrix;
using nn::Tape;
using nn::Var;

Eigen::Index Dim(std::size_t n) { return static_cast<Eigen::Index>(n); }

// Real rows of the view; a zero row stands in for an empty sequence so the
// pooled features stay well defined.
Var RealRows(Tape& tape, Var input, std::size_t length) {
  if (length == 0) return tape.constant(Matrix::Zero(1, input.cols()));
  return nn::SliceRows(input, 0, Dim(std::min<std::size_t>(length, input.rows())));
}

// Same-padded 1-D convolution over rows as one matmul on shifted copies.
Var Conv1d(Tape& tape, Var x, const nn::Parameter& w, const nn::Parameter& b, int width) {
  std::vector<Var> shifted;
  for (int k = -(width / 2); k <= width / 2; ++k) shifted.push_back(nn::ShiftRows(x, k));
  return nn::Add(nn::MatMul(nn::ConcatCols(shifted), tape.param(w)), tape.param(b));
}

class RecurrentClassifier final : public NeuralClassifier {
 public:
  RecurrentClassifier(const ModelConfig& c, const Vocabulary& v) : NeuralClassifier(c, v) {}

  Var Logits(Tape& tape, Var input, std::size_t length) const override {
    Var x = RealRows(tape, input, length);
    Var embedded = nn::MatMul(x, tape.param(param("embed")));
    nn::LstmLayer layer{&param("lstm.wx"), &param("lstm.wh"), &param("lstm.b"),
                        Dim(config().hidden)};
    Var pooled = nn::LstmMeanPool(tape, embedded, layer);
    return nn::Add(nn::MatMul(pooled, tape.param(param("out.w"))), tape.param(param("out.b")));
  }

 protected:
  void Build(std::mt19937_64& rng) override {
    const auto v = Dim(vocabulary().size());
    const auto e = Dim(config().embed_dim);
    const auto h = Dim(config().hidden);
    params_.push_back(MakeParameter("embed", GlorotUniform(v, e, rng)));
    nn::AddLstmParameters(params_, "lstm", e, h, rng);
    params_.push_back(MakeParameter("out.w", GlorotUniform(h, 2, rng)));
    params_.push_back(MakeParameter("out.b", Matrix::Zero(1, 2)));
  }
};

class ConvolutionalClassifier final : public NeuralClassifier {
 public:
  ConvolutionalClassifier(const ModelConfig& c, const Vocabulary& v) : NeuralClassifier(c, v) {}

  Var Logits(Tape& tape, Var input, std::size_t length) const override {
    Var x = RealRows(tape, input, length);
    Var embedded = nn::MatMul(x, tape.param(param("embed")));
    Var c1 = nn::Relu(Conv1d(tape, embedded, param("conv3.w"), param("conv3.b"), 3));
    Var c2 = nn::Relu(Conv1d(tape, c1, param("conv5.w"), param("conv5.b"), 5));
    Var pooled = nn::MeanRows(c2);
    return nn::Add(nn::MatMul(pooled, tape.param(param("out.w"))), tape.param(param("out.b")));
  }

 protected:
  void Build(std::mt19937_64& rng) override {
    const auto v = Dim(vocabulary().size());
    const auto e = Dim(config().embed_dim);
    const auto f = Dim(config().conv_filters);
    params_.push_back(MakeParameter("embed", GlorotUniform(v, e, rng)));
    params_.push_back(MakeParameter("conv3.w", GlorotUniform(3 * e, f, rng)));
    params_.push_back(MakeParameter("conv3.b", Matrix::Zero(1, f)));
    params_.push_back(MakeParameter("conv5.w", GlorotUniform(5 * f, f, rng)));
    params_.push_back(MakeParameter("conv5.b", Matrix::Zero(1, f)));
    params_.push_back(MakeParameter("out.w", GlorotUniform(f, 2, rng)));
    params_.push_back(MakeParameter("out.b", Matrix::Zero(1, 2)));
  }
};

class AttentionClassifier final : public NeuralClassifier {
 public:
  AttentionClassifier(const ModelConfig& c, const Vocabulary& v) : NeuralClassifier(c, v) {}

  Var Logits(Tape& tape, Var input, std::size_t length) const override {
    const auto width = Dim(config().model_width);
    const auto heads = Dim(config().heads);
    const auto head_dim = width / heads;
    Var x = RealRows(tape, input, length);
    Var h = nn::Add(nn::MatMul(x, tape.param(param("embed"))),
                    tape.constant(nn::SinusoidalPositions(x.rows(), width)));

    Var q = nn::MatMul(h, tape.param(param("attn.q")));
    Var k = nn::MatMul(h, tape.param(param("attn.k")));
    Var val = nn::MatMul(h, tape.param(param("attn.v")));
    std::vector<Var> outs;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (Eigen::Index i = 0; i < heads; ++i) {
      Var qi = nn::SliceCols(q, i * head_dim, head_dim);
      Var ki = nn::SliceCols(k, i * head_dim, head_dim);
      Var vi = nn::SliceCols(val, i * head_dim, head_dim);
      Var weights = nn::RowSoftmax(nn::Scale(nn::MatMul(qi, nn::Transpose(ki)), inv_sqrt));
      outs.push_back(nn::MatMul(weights, vi));
    }
    Var attended = nn::MatMul(nn::ConcatCols(outs), tape.param(param("attn.o")));
    Var h1 = nn::LayerNormRows(nn::Add(h, attended), tape.param(param("ln1.g")),
                               tape.param(param("ln1.b")));
    Var ffn = nn::Add(nn::MatMul(nn::Relu(nn::Add(nn::MatMul(h1, tape.param(param("ffn.w1"))),
                                                  tape.param(param("ffn.b1")))),
                                 tape.param(param("ffn.w2"))),
                      tape.param(param("ffn.b2")));
    Var h2 = nn::LayerNormRows(nn::Add(h1, ffn), tape.param(param("ln2.g")),
                               tape.param(param("ln2.b")));
    Var pooled = nn::MeanRows(h2);
    return nn::Add(nn::MatMul(pooled, tape.param(param("out.w"))), tape.param(param("out.b")));
  }

 protected:
  void Build(std::mt19937_64& rng) override {
    const auto v = Dim(vocabulary().size());
    const auto w = Dim(config().model_width);
    const auto f = Dim(config().ffn_width);
    if (config().heads == 0 || config().model_width % config().heads != 0) {
      throw ConfigError("attention width must be a multiple of the head count");
    }
    params_.push_back(MakeParameter("embed", GlorotUniform(v, w, rng)));
    params_.push_back(MakeParameter("attn.q", GlorotUniform(w, w, rng)));
    params_.push_back(MakeParameter("attn.k", GlorotUniform(w, w, rng)));
    params_.push_back(MakeParameter("attn.v", GlorotUniform(w, w, rng)));
    params_.push_back(MakeParameter("attn.o", GlorotUniform(w, w, rng)));
    params_.push_back(MakeParameter("ln1.g", Matrix::Ones(1, w)));
    params_.push_back(MakeParameter("ln1.b", Matrix::Zero(1, w)));
    params_.push_back(MakeParameter("ffn.w1", GlorotUniform(w, f, rng)));
    params_.push_back(MakeParameter("ffn.b1", Matrix::Zero(1, f)));
    params_.push_back(MakeParameter("ffn.w2", GlorotUniform(f, w, rng)));
    params_.push_back(MakeParameter("ffn.b2", Matrix::Zero(1, w)));
    params_.push_back(MakeParameter("ln2.g", Matrix::Ones(1, w)));
    params_.push_back(MakeParameter("ln2.b", Matrix::Zero(1, w)));
    params_.push_back(MakeParameter("out.w", GlorotUniform(w, 2, rng)));
    params_.push_back(MakeParameter("out.b", Matrix::Zero(1, 2)));
  }
};

// Reconstructs each position together with its two neighbours through a
// small bottleneck. The anomaly score is the reconstruction error measured
// against the (relaxed) input itself, so it stays differentiable in X.
class AutoencoderClassifier final : public NeuralClassifier {
 public:
  AutoencoderClassifier(const ModelConfig& c, const Vocabulary& v) : NeuralClassifier(c, v) {}

  Var Logits(Tape& tape, Var input, std::size_t length) const override {
    Var err = AnomalyScore(tape, input, length);
    const double thr = extras().at("threshold");
    const double scale = extras().at("scale");
    Var z = nn::Scale(nn::AddScalar(err, -thr), 1.0 / scale);
    Var parts[] = {tape.constant(Matrix::Zero(1, 1)), z};
    return nn::ConcatCols(parts);
  }

  Var TrainingLoss(Tape& tape, Var input, std::size_t length, Label) const override {
    return ReconstructionError(tape, input, length);
  }

  bool TrainsOnBenignOnly() const override { return true; }

  void Calibrate(std::span<const BehaviorSequence> benign) override {
    if (benign.empty()) throw TrainingError("autoencoder calibration needs benign sequences");
    std::vector<double> errors;
    for (const auto& s : benign) {
      EncodedSequence view = EncodeView(s.tokens, vocabulary(), max_len());
      Tape tape;
      Var input = tape.constant(std::move(view.rows));
      errors.push_back(AnomalyScore(tape, input, view.length).scalar());
    }
    std::sort(errors.begin(), errors.end());
    const double q = config().threshold_quantile;
    const double pos = q * static_cast<double>(errors.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, errors.size() - 1);
    const double thr = errors[lo] + (pos - static_cast<double>(lo)) * (errors[hi] - errors[lo]);
    double mean = 0.0;
    for (double e : errors) mean += e;
    mean /= static_cast<double>(errors.size());
    double var = 0.0;
    for (double e : errors) var += (e - mean) * (e - mean);
    const double sd = std::sqrt(var / static_cast<double>(errors.size()));
    extras_["threshold"] = thr;
    extras_["scale"] = std::max(sd, 1e-3);
  }

 protected:
  void Build(std::mt19937_64& rng) override {
    const auto v = Dim(vocabulary().size());
    const auto b = Dim(config().bottleneck);
    params_.push_back(MakeParameter("enc.w", GlorotUniform(3 * v, b, rng)));
    params_.push_back(MakeParameter("enc.b", Matrix::Zero(1, b)));
    params_.push_back(MakeParameter("dec.w", GlorotUniform(b, 3 * v, rng)));
    params_.push_back(MakeParameter("dec.b", Matrix::Zero(1, 3 * v)));
    extras_["threshold"] = 0.0;
    extras_["scale"] = 1.0;
  }

 private:
  // Per-position reconstruction error (rows x 1).
  Var PositionErrors(Tape& tape, Var input, std::size_t length) const {
    const auto v = Dim(vocabulary().size());
    Var x = RealRows(tape, input, length);
    Var ctx_parts[] = {nn::ShiftRows(x, -1), x, nn::ShiftRows(x, 1)};
    Var context = nn::ConcatCols(ctx_parts);
    Var code = nn::Tanh(nn::Add(nn::MatMul(context, tape.param(param("enc.w"))),
                                tape.param(param("enc.b"))));
    Var decoded =
        nn::Add(nn::MatMul(code, tape.param(param("dec.w"))), tape.param(param("dec.b")));
    Var total = nn::SoftmaxCrossEntropyPerRow(nn::SliceCols(decoded, 0, v),
                                              nn::SliceCols(context, 0, v));
    for (Eigen::Index block = 1; block < 3; ++block) {
      total = nn::Add(total, nn::SoftmaxCrossEntropyPerRow(nn::SliceCols(decoded, block * v, v),
                                                           nn::SliceCols(context, block * v, v)));
    }
    return total;
  }

  Var ReconstructionError(Tape& tape, Var input, std::size_t length) const {
    if (length == 0) return tape.constant(Matrix::Zero(1, 1));
    return nn::MeanRows(PositionErrors(tape, input, length));
  }

  // Smooth maximum of the position errors, so one badly reconstructed
  // region is not averaged away.
  Var AnomalyScore(Tape& tape, Var input, std::size_t length) const {
    if (length == 0) return tape.constant(Matrix::Zero(1, 1));
    const double tau = config().anomaly_temperature;
    Var e = PositionErrors(tape, input, length);
    return nn::Scale(nn::Log(nn::MeanRows(nn::Exp(nn::Scale(e, 1.0 / tau)))), tau);
  }
};

}  // namespace

std::unique_ptr<NeuralClassifier> NeuralClassifier::Create(const ModelConfig& config,
                                                           const Vocabulary& vocab) {
  if (config.max_len == 0) throw ConfigError("max_len must be positive");
  if (vocab.num_behaviors() == 0) throw ConfigError("empty vocabulary");
  std::unique_ptr<NeuralClassifier> model;
  switch (config.architecture) {
    case Architecture::kRecurrent:
      model.reset(new RecurrentClassifier(config, vocab));
      break;
    case Architecture::kConvolutional:
      model.reset(new ConvolutionalClassifier(config, vocab));
      break;
    case Architecture::kAttention:
      model.reset(new AttentionClassifier(config, vocab));
      break;
    case Architecture::kAutoencoder:
      model.reset(new AutoencoderClassifier(config, vocab));
      break;
  }
  model->Initialize(0);
  return model;
}

}  // namespace seqattack
