#ifndef SEQATTACK_NN_TAPE_H_
#define SEQATTACK_NN_TAPE_H_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace seqattack::nn {

using Matrix = Eigen::MatrixXd;

// Trainable tensor with its gradient accumulator and Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int index() const { return index_; }

 private:
  Tape* tape_ = nullptr;
  int index_ = -1;
};

// Reverse-mode tape over dense double matrices. Parameters enter as leaves;
// when the tape is built with track_parameters=false they are treated as
// constants, so read-only models can be differentiated w.r.t. their inputs
// from several threads at once.
class Tape {
 public:
  explicit Tape(bool track_parameters = false) : track_parameters_(track_parameters) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var input(Matrix value);  // leaf that receives a gradient
  Var param(const Parameter& p);

  // Seeds d(output)/d(output) = 1 for a 1x1 output and propagates.
  void backward(Var output);

  // Adds the parameter gradients gathered by backward() into the Parameter
  // accumulators. Only meaningful with track_parameters=true.
  void accumulate_into(std::span<Parameter*> params) const;

  // Internal node construction used by the op functions.
  using Backward = std::function<void(Tape&, int)>;
  Var push(Matrix value, bool requires_grad, Backward backward);
  const Matrix& value(int i) const { return nodes_[static_cast<std::size_t>(i)].value; }
  const Matrix& grad(int i) const { return nodes_[static_cast<std::size_t>(i)].grad; }
  Matrix& grad_ref(int i);
  bool requires_grad(int i) const { return nodes_[static_cast<std::size_t>(i)].requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    const Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool track_parameters_;
};

// Ops. Shapes follow the usual row-vector convention (x * W).
Var MatMul(Var a, Var b);
Var Add(Var a, Var b);  // b may be a 1 x cols row broadcast over a's rows
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);  // elementwise
Var Scale(Var a, double s);
Var AddScalar(Var a, double s);
Var Tanh(Var a);
Var Sigmoid(Var a);
Var Relu(Var a);
Var Exp(Var a);
Var Log(Var a);
Var Square(Var a);
Var Transpose(Var a);
Var SliceRows(Var a, Eigen::Index start, Eigen::Index count);
Var SliceCols(Var a, Eigen::Index start, Eigen::Index count);
Var ConcatRows(std::span<const Var> parts);
Var ConcatCols(std::span<const Var> parts);
Var Sum(Var a);       // 1 x 1
Var MeanRows(Var a);  // 1 x cols
Var Pick(Var a, Eigen::Index r, Eigen::Index c);  // 1 x 1
Var RowSoftmax(Var a);
// Row-wise layer normalization followed by gain/bias (both 1 x cols).
Var LayerNormRows(Var a, Var gain, Var bias, double eps = 1e-5);
// Rows [0, valid) keep their values; masked rows are replaced by -1e9 before
// a row softmax over columns (used for attention over padded keys).
Var MaskColumns(Var a, Eigen::Index valid_cols);
// -log(max(softmax(logits)_y, floor)) for a 1 x k logits row. The gradient
// is zero when the floor is active.
Var FlooredCrossEntropy(Var logits, int y, double floor);
// Column of -sum_j target(r, j) * log softmax(logits)(r, j), one entry per
// row. Differentiable in both arguments.
Var SoftmaxCrossEntropyPerRow(Var logits, Var targets);
// Mean of the above over rows.
Var SoftmaxCrossEntropyRows(Var logits, Var targets);

}  // namespace seqattack::nn

#endif  // SEQATTACK_NN_TAPE_H_
