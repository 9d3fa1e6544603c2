#include "seqattack/nn/adam.h"

#include <cmath>

namespace seqattack::nn {

void Adam::step(std::span<Parameter*> params, double batch) {
  ++t_;
  double norm_sq = 0.0;
  for (Parameter* p : params) norm_sq += p->grad.squaredNorm();
  double scale = 1.0 / batch;
  const double norm = std::sqrt(norm_sq) * scale;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) scale *= config_.clip_norm / norm;

  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (Parameter* p : params) {
    Matrix g = p->grad * scale;
    p->m = config_.beta1 * p->m + (1.0 - config_.beta1) * g;
    p->v = config_.beta2 * p->v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p->value.array() -= config_.learning_rate * (p->m.array() / bc1) /
                        ((p->v.array() / bc2).sqrt() + config_.epsilon);
    p->grad.setZero();
  }
}

Matrix GlorotUniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Parameter MakeParameter(std::string name, Matrix value) {
  Parameter p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(value.rows(), value.cols());
  p.m = Matrix::Zero(value.rows(), value.cols());
  p.v = Matrix::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  return p;
}

}  // namespace seqattack::nn
