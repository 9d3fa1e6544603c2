#ifndef SEQATTACK_NN_ADAM_H_
#define SEQATTACK_NN_ADAM_H_

#include <cstdint>
#include <random>
#include <span>

#include "seqattack/nn/tape.h"

namespace seqattack::nn {

struct AdamConfig {
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update from the accumulated grads (scaled by 1/batch) and
  // zeroes them.
  void step(std::span<Parameter*> params, double batch = 1.0);

  std::int64_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
};

// Glorot-uniform initialization.
Matrix GlorotUniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

Parameter MakeParameter(std::string name, Matrix value);

}  // namespace seqattack::nn

#endif  // SEQATTACK_NN_ADAM_H_
