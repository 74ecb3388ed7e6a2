#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "vdfp/nn/tensor.hpp"

namespace vdfp::nn {

/// A trainable matrix with its accumulated gradient.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  /// Projected onto the nonnegative orthant after every optimizer step.
  bool nonnegative = false;

  Parameter() = default;
  Parameter(std::string n, Mat v, bool nonneg = false)
      : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())),
        nonnegative(nonneg) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Non-owning list of parameters, in a stable order defined by the owner.
using ParamList = std::vector<Parameter*>;

void zero_grad(const ParamList& params);
std::size_t count_scalars(const ParamList& params);
/// Flattens values (or grads) in list order.
Vec flatten_values(const ParamList& params);
Vec flatten_grads(const ParamList& params);
void assign_values(const ParamList& params, const Vec& flat);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Scalar value of a 1x1 node.
  double item() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode automatic differentiation over dense matrices.
///
/// Nodes are appended in evaluation order, so a reverse sweep is a valid
/// topological order. Parameter leaves accumulate straight into
/// Parameter::grad; everything else keeps its gradient on the tape.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& out_grad, const Mat& out_value)>;

  enum class Mode { kGrad, kNoGrad };

  /// kNoGrad records values only; parameters are treated as constants, which
  /// makes inference passes cheap.
  explicit Tape(Mode mode = Mode::kGrad) : grad_enabled_(mode == Mode::kGrad) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// Leaf whose gradient is tracked and readable through grad().
  Var input(Mat value);
  /// Leaf referencing a parameter; the parameter must outlive the tape.
  Var param(Parameter& p);
  /// Later param() leaves for these parameters are treated as constants.
  void freeze(const ParamList& params);

  /// Records an op. The backward closure receives this node's gradient and value.
  Var record(Mat value, std::initializer_list<Var> parents, Backward backward);
  Var record(Mat value, std::span<const Var> parents, Backward backward);

  const Mat& value(Var v) const;
  /// Gradient reached during backward(); an empty matrix if none did.
  const Mat& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  template <class Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += g;
    } else if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and sweeps backwards.
  void backward(Var loss);
  /// Seeds an arbitrary upstream gradient of the same shape as `out`.
  void backward(Var out, const Mat& seed);

  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  void sweep(int from);

  std::vector<Node> nodes_;
  std::vector<const Parameter*> frozen_;
  Mat empty_;
  bool grad_enabled_ = true;
};

inline const Mat& Var::value() const { return tape_->value(*this); }

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);
/// x W^T + b, with W stored (out x in) and b (1 x out).
Var linear(Var x, Var weight, Var bias);
Var linear_nobias(Var x, Var weight);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Elementwise product with a constant (e.g. a dropout mask).
Var mul(Var a, const Mat& c);
Var add_row(Var x, Var row);
Var add_row(Var x, const RowVec& row);
Var mul_row(Var x, Var row);
Var mul_row(Var x, const RowVec& row);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var one_minus(Var x);

Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
Var square(Var x);
/// Gradient passes only where lo < x < hi.
Var clamp(Var x, double lo, double hi);
Var minimum(Var a, Var b);

Var sum(Var x);
Var mean(Var x);
/// Per-row sum, (B x n) -> (B x 1).
Var row_sum(Var x);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
/// Row-major reshape; element order is preserved.
Var reshape(Var x, Eigen::Index rows, Eigen::Index cols);

}  // namespace vdfp::nn
