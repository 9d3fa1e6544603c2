#include "seqattack/nn/tape.h"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace seqattack::nn {

const Matrix& Var::value() const { return tape_->value(index_); }
const Matrix& Var::grad() const { return tape_->grad(index_); }

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::input(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::param(const Parameter& p) {
  Var v = push(p.value, track_parameters_, nullptr);
  nodes_.back().param = &p;
  return v;
}

Matrix& Tape::grad_ref(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var output) {
  if (output.rows() != 1 || output.cols() != 1) {
    throw std::logic_error("backward() expects a scalar output");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_ref(output.index()).setOnes();
  for (int i = output.index(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

void Tape::accumulate_into(std::span<Parameter*> params) const {
  for (const auto& n : nodes_) {
    if (n.param == nullptr || n.grad.size() == 0) continue;
    for (Parameter* p : params) {
      if (p == n.param) {
        p->grad += n.grad;
        break;
      }
    }
  }
}

namespace {

bool AnyGrad(Var a) { return a.tape()->requires_grad(a.index()); }
bool AnyGrad(Var a, Var b) { return AnyGrad(a) || AnyGrad(b); }

void Accumulate(Tape& t, Var v, const Matrix& g) {
  if (t.requires_grad(v.index())) t.grad_ref(v.index()) += g;
}

}  // namespace

Var MatMul(Var a, Var b) {
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), AnyGrad(a, b), [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.index())) t.grad_ref(a.index()).noalias() += g * b.value().transpose();
    if (t.requires_grad(b.index())) t.grad_ref(b.index()).noalias() += a.value().transpose() * g;
  });
}

Var Add(Var a, Var b) {
  Tape& t = *a.tape();
  const bool broadcast = b.rows() == 1 && a.rows() != 1;
  if (b.cols() != a.cols() || (!broadcast && b.rows() != a.rows())) {
    throw std::logic_error("Add: shape mismatch");
  }
  Matrix out =
      broadcast ? Matrix(a.value().rowwise() + b.value().row(0)) : Matrix(a.value() + b.value());
  return t.push(std::move(out), AnyGrad(a, b), [a, b, broadcast](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Accumulate(t, a, g);
    if (broadcast) {
      Accumulate(t, b, g.colwise().sum());
    } else {
      Accumulate(t, b, g);
    }
  });
}

Var Sub(Var a, Var b) { return Add(a, Scale(b, -1.0)); }

Var Mul(Var a, Var b) {
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), AnyGrad(a, b), [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Accumulate(t, a, g.cwiseProduct(b.value()));
    Accumulate(t, b, g.cwiseProduct(a.value()));
  });
}

Var Scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value() * s, AnyGrad(a),
                [a, s](Tape& t, int self) { Accumulate(t, a, t.grad(self) * s); });
}

Var AddScalar(Var a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value().array() + s, AnyGrad(a),
                [a](Tape& t, int self) { Accumulate(t, a, t.grad(self)); });
}

Var Tanh(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().tanh();
  return t.push(std::move(out), AnyGrad(a), [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    Accumulate(t, a, t.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var Sigmoid(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  });
  return t.push(std::move(out), AnyGrad(a), [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    Accumulate(t, a, t.grad(self).cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var Relu(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseMax(0.0);
  return t.push(std::move(out), AnyGrad(a), [a](Tape& t, int self) {
    Matrix mask = (a.value().array() > 0.0).cast<double>();
    Accumulate(t, a, t.grad(self).cwiseProduct(mask));
  });
}

Var Exp(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().exp();
  return t.push(std::move(out), AnyGrad(a), [a](Tape& t, int self) {
    Accumulate(t, a, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var Log(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().log();
  return t.push(std::move(out), AnyGrad(a), [a](Tape& t, int self) {
    Accumulate(t, a, t.grad(self).cwiseQuotient(a.value()));
  });
}

Var Square(Var a) {
  Tape& t = *a.tape();
  return t.push(a.value().array().square(), AnyGrad(a), [a](Tape& t, int self) {
    Accumulate(t, a, 2.0 * t.grad(self).cwiseProduct(a.value()));
  });
}

Var Transpose(Var a) {
  Tape& t = *a.tape();
  return t.push(a.value().transpose(), AnyGrad(a),
                [a](Tape& t, int self) { Accumulate(t, a, t.grad(self).transpose()); });
}

Var SliceRows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape();
  assert(start >= 0 && start + count <= a.rows());
  return t.push(a.value().middleRows(start, count), AnyGrad(a),
                [a, start, count](Tape& t, int self) {
                  if (t.requires_grad(a.index())) {
                    t.grad_ref(a.index()).middleRows(start, count) += t.grad(self);
                  }
                });
}

Var SliceCols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape();
  assert(start >= 0 && start + count <= a.cols());
  return t.push(a.value().middleCols(start, count), AnyGrad(a),
                [a, start, count](Tape& t, int self) {
                  if (t.requires_grad(a.index())) {
                    t.grad_ref(a.index()).middleCols(start, count) += t.grad(self);
                  }
                });
}

Var ConcatRows(std::span<const Var> parts) {
  Tape& t = *parts.front().tape();
  Eigen::Index rows = 0;
  bool any = false;
  for (Var p : parts) {
    rows += p.rows();
    any = any || AnyGrad(p);
  }
  Matrix out(rows, parts.front().cols());
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.push(std::move(out), any, [saved](Tape& t, int self) {
    Eigen::Index r = 0;
    for (Var p : saved) {
      if (t.requires_grad(p.index())) t.grad_ref(p.index()) += t.grad(self).middleRows(r, p.rows());
      r += p.rows();
    }
  });
}

Var ConcatCols(std::span<const Var> parts) {
  Tape& t = *parts.front().tape();
  Eigen::Index cols = 0;
  bool any = false;
  for (Var p : parts) {
    cols += p.cols();
    any = any || AnyGrad(p);
  }
  Matrix out(parts.front().rows(), cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.push(std::move(out), any, [saved](Tape& t, int self) {
    Eigen::Index c = 0;
    for (Var p : saved) {
      if (t.requires_grad(p.index())) t.grad_ref(p.index()) += t.grad(self).middleCols(c, p.cols());
      c += p.cols();
    }
  });
}

Var Sum(Var a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), AnyGrad(a), [a](Tape& t, int self) {
    Accumulate(t, a, Matrix::Constant(a.rows(), a.cols(), t.grad(self)(0, 0)));
  });
}

Var MeanRows(Var a) {
  Tape& t = *a.tape();
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() / n;
  return t.push(std::move(out), AnyGrad(a), [a, n](Tape& t, int self) {
    if (t.requires_grad(a.index())) {
      t.grad_ref(a.index()).rowwise() += t.grad(self).row(0) / n;
    }
  });
}

Var Pick(Var a, Eigen::Index r, Eigen::Index c) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value()(r, c);
  return t.push(std::move(out), AnyGrad(a), [a, r, c](Tape& t, int self) {
    if (t.requires_grad(a.index())) t.grad_ref(a.index())(r, c) += t.grad(self)(0, 0);
  });
}

Var RowSoftmax(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return t.push(std::move(out), AnyGrad(a), [a](Tape& t, int self) {
    const Matrix& s = t.value(self);
    const Matrix& g = t.grad(self);
    Eigen::VectorXd dots = g.cwiseProduct(s).rowwise().sum();
    Matrix d = s.cwiseProduct(g - dots.replicate(1, g.cols()));
    Accumulate(t, a, d);
  });
}

Var LayerNormRows(Var a, Var gain, Var bias, double eps) {
  Tape& t = *a.tape();
  const Eigen::Index cols = a.cols();
  Matrix normed(a.rows(), cols);
  Eigen::VectorXd inv_std(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double mean = a.value().row(r).mean();
    Eigen::RowVectorXd centered = a.value().row(r).array() - mean;
    double var = centered.squaredNorm() / static_cast<double>(cols);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normed.row(r) = centered * inv_std(r);
  }
  Matrix out = (normed.array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array();
  const bool any = AnyGrad(a) || AnyGrad(gain) || AnyGrad(bias);
  return t.push(std::move(out), any, [a, gain, bias, normed, inv_std, cols](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Accumulate(t, gain, g.cwiseProduct(normed).colwise().sum());
    Accumulate(t, bias, g.colwise().sum());
    if (!t.requires_grad(a.index())) return;
    Matrix dy = g.array().rowwise() * gain.value().row(0).array();
    Matrix dx(dy.rows(), dy.cols());
    const double n = static_cast<double>(cols);
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      double mean_dy = dy.row(r).sum() / n;
      double mean_dy_y = dy.row(r).dot(normed.row(r)) / n;
      dx.row(r) = inv_std(r) * (dy.row(r).array() - mean_dy - normed.row(r).array() * mean_dy_y);
    }
    t.grad_ref(a.index()) += dx;
  });
}

Var MaskColumns(Var a, Eigen::Index valid_cols) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  if (valid_cols < out.cols()) out.rightCols(out.cols() - valid_cols).setConstant(-1e9);
  return t.push(std::move(out), AnyGrad(a), [a, valid_cols](Tape& t, int self) {
    if (!t.requires_grad(a.index())) return;
    t.grad_ref(a.index()).leftCols(valid_cols) += t.grad(self).leftCols(valid_cols);
  });
}

Var FlooredCrossEntropy(Var logits, int y, double floor) {
  Tape& t = *logits.tape();
  Eigen::RowVectorXd z = logits.value().row(0);
  double mx = z.maxCoeff();
  Eigen::RowVectorXd p = (z.array() - mx).exp();
  p /= p.sum();
  const bool floored = !(p(y) > floor);
  Matrix out(1, 1);
  out(0, 0) = -std::log(floored ? floor : p(y));
  return t.push(std::move(out), AnyGrad(logits), [logits, y, p, floored](Tape& t, int self) {
    if (floored) return;
    Eigen::RowVectorXd d = p;
    d(y) -= 1.0;
    Accumulate(t, logits, d * t.grad(self)(0, 0));
  });
}

Var SoftmaxCrossEntropyPerRow(Var logits, Var targets) {
  Tape& t = *logits.tape();
  const Matrix& z = logits.value();
  Matrix probs(z.rows(), z.cols());
  Matrix logp(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double mx = z.row(r).maxCoeff();
    Eigen::RowVectorXd shifted = z.row(r).array() - mx;
    double lse = std::log(shifted.array().exp().sum());
    logp.row(r) = shifted.array() - lse;
    probs.row(r) = logp.row(r).array().exp();
  }
  Matrix out = -targets.value().cwiseProduct(logp).rowwise().sum();
  return t.push(std::move(out), AnyGrad(logits, targets),
                [logits, targets, probs, logp](Tape& t, int self) {
                  const Eigen::VectorXd g = t.grad(self).col(0);
                  const Matrix& tv = targets.value();
                  if (t.requires_grad(logits.index())) {
                    Eigen::VectorXd mass = tv.rowwise().sum();
                    Matrix d = (probs.array().colwise() * mass.array()).matrix() - tv;
                    t.grad_ref(logits.index()) += (d.array().colwise() * g.array()).matrix();
                  }
                  Accumulate(t, targets, -(logp.array().colwise() * g.array()).matrix());
                });
}

Var SoftmaxCrossEntropyRows(Var logits, Var targets) {
  return MeanRows(SoftmaxCrossEntropyPerRow(logits, targets));
}

}  // namespace seqattack::nn
