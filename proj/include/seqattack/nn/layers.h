#ifndef SEQATTACK_NN_LAYERS_H_
#define SEQATTACK_NN_LAYERS_H_

#include <random>
#include <string>
#include <vector>

#include "seqattack/nn/tape.h"

namespace seqattack::nn {

// Row r of the result is row r + offset of `a`, zero where that falls
// outside [0, rows).
Var ShiftRows(Var a, Eigen::Index offset);

// Single-layer LSTM over an embedded sequence (rows = time steps), mean
// pooled over the steps. Returns 1 x hidden.
struct LstmLayer {
  const Parameter* w_x;  // embed x 4H (gate order i, f, g, o)
  const Parameter* w_h;  // H x 4H
  const Parameter* b;    // 1 x 4H
  Eigen::Index hidden;
};
Var LstmMeanPool(Tape& tape, Var embedded, const LstmLayer& layer);

// Appends LSTM parameters named prefix.{wx,wh,b}; forget-gate bias starts at 1.
void AddLstmParameters(std::vector<Parameter>& params, const std::string& prefix,
                       Eigen::Index input_dim, Eigen::Index hidden, std::mt19937_64& rng);

Matrix SinusoidalPositions(Eigen::Index rows, Eigen::Index width);

}  // namespace seqattack::nn

#endif  // SEQATTACK_NN_LAYERS_H_
