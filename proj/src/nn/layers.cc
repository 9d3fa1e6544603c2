#include "seqattack/nn/layers.h"

#include <cmath>

#include "seqattack/nn/adam.h"

namespace seqattack::nn {

Var ShiftRows(Var a, Eigen::Index offset) {
  Tape& t = *a.tape();
  const Eigen::Index n = a.rows();
  if (offset == 0) return a;
  if (std::abs(offset) >= n) return t.constant(Matrix::Zero(n, a.cols()));
  Var zeros = t.constant(Matrix::Zero(std::abs(offset), a.cols()));
  if (offset > 0) {
    Var parts[] = {SliceRows(a, offset, n - offset), zeros};
    return ConcatRows(parts);
  }
  Var parts[] = {zeros, SliceRows(a, 0, n + offset)};
  return ConcatRows(parts);
}

Var LstmMeanPool(Tape& tape, Var embedded, const LstmLayer& layer) {
  const Eigen::Index h = layer.hidden;
  Var wh = tape.param(*layer.w_h);
  Var projected = Add(MatMul(embedded, tape.param(*layer.w_x)), tape.param(*layer.b));
  Var hidden = tape.constant(Matrix::Zero(1, h));
  Var cell = tape.constant(Matrix::Zero(1, h));
  std::vector<Var> states;
  states.reserve(static_cast<std::size_t>(embedded.rows()));
  for (Eigen::Index step = 0; step < embedded.rows(); ++step) {
    Var z = Add(SliceRows(projected, step, 1), MatMul(hidden, wh));
    Var in_gate = Sigmoid(SliceCols(z, 0, h));
    Var forget_gate = Sigmoid(SliceCols(z, h, h));
    Var candidate = Tanh(SliceCols(z, 2 * h, h));
    Var out_gate = Sigmoid(SliceCols(z, 3 * h, h));
    cell = Add(Mul(forget_gate, cell), Mul(in_gate, candidate));
    hidden = Mul(out_gate, Tanh(cell));
    states.push_back(hidden);
  }
  return MeanRows(ConcatRows(states));
}

void AddLstmParameters(std::vector<Parameter>& params, const std::string& prefix,
                       Eigen::Index input_dim, Eigen::Index hidden, std::mt19937_64& rng) {
  params.push_back(MakeParameter(prefix + ".wx", GlorotUniform(input_dim, 4 * hidden, rng)));
  params.push_back(MakeParameter(prefix + ".wh", GlorotUniform(hidden, 4 * hidden, rng)));
  Matrix bias = Matrix::Zero(1, 4 * hidden);
  bias.middleCols(hidden, hidden).setOnes();
  params.push_back(MakeParameter(prefix + ".b", std::move(bias)));
}

Matrix SinusoidalPositions(Eigen::Index rows, Eigen::Index width) {
  Matrix pe(rows, width);
  for (Eigen::Index pos = 0; pos < rows; ++pos) {
    for (Eigen::Index i = 0; i < width; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace seqattack::nn
