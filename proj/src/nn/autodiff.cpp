#include "vdfp/nn/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace vdfp::nn {

void zero_grad(const ParamList& params) {
  for (Parameter* p : params) p->zero_grad();
}

std::size_t count_scalars(const ParamList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Vec flatten_values(const ParamList& params) {
  Vec out(static_cast<Eigen::Index>(count_scalars(params)));
  Eigen::Index at = 0;
  for (const Parameter* p : params) {
    out.segment(at, p->value.size()) = p->value.reshaped<Eigen::RowMajor>();
    at += p->value.size();
  }
  return out;
}

Vec flatten_grads(const ParamList& params) {
  Vec out(static_cast<Eigen::Index>(count_scalars(params)));
  Eigen::Index at = 0;
  for (const Parameter* p : params) {
    if (p->grad.size() == p->value.size()) {
      out.segment(at, p->value.size()) = p->grad.reshaped<Eigen::RowMajor>();
    } else {
      out.segment(at, p->value.size()).setZero();
    }
    at += p->value.size();
  }
  return out;
}

void assign_values(const ParamList& params, const Vec& flat) {
  if (flat.size() != static_cast<Eigen::Index>(count_scalars(params))) {
    throw std::invalid_argument("assign_values: size mismatch");
  }
  Eigen::Index at = 0;
  for (Parameter* p : params) {
    p->value.reshaped<Eigen::RowMajor>() = flat.segment(at, p->value.size());
    at += p->value.size();
  }
}

// ---- Tape -----------------------------------------------------------------

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::input(Mat value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  const bool frozen = std::find(frozen_.begin(), frozen_.end(), &p) != frozen_.end();
  n.param = frozen ? nullptr : &p;
  n.requires_grad = grad_enabled_ && !frozen;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::freeze(const ParamList& params) { frozen_.insert(frozen_.end(), params.begin(), params.end()); }

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Mat value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    assert(p.tape_ == this);
    if (nodes_[p.id_].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Mat& Tape::value(Var v) const {
  const Node& n = nodes_[v.id_];
  return n.external != nullptr ? *n.external : n.value;
}

const Mat& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  if (n.param != nullptr) return n.param->grad;
  return n.has_grad ? n.grad : empty_;
}

void Tape::backward(Var loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be 1x1");
  }
  backward(loss, Mat::Ones(1, 1));
}

void Tape::backward(Var out, const Mat& seed) {
  if (seed.rows() != out.rows() || seed.cols() != out.cols()) {
    throw std::invalid_argument("Tape::backward: seed shape mismatch");
  }
  accumulate(out, seed);
  sweep(out.id_);
}

void Tape::sweep(int from) {
  for (int i = from; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad, n.external != nullptr ? *n.external : n.value);
  }
}

// ---- ops ------------------------------------------------------------------

namespace {

Tape& tape_of(Var a) { return *a.tape(); }

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  Mat out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g, const Mat&) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var linear(Var x, Var weight, Var bias) {
  Tape& t = tape_of(x);
  Mat out = x.value() * weight.value().transpose();
  out.rowwise() += bias.value().row(0);
  return t.record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape& t, const Mat& g, const Mat&) {
    if (t.requires_grad(x)) t.accumulate(x, g * weight.value());
    if (t.requires_grad(weight)) t.accumulate(weight, g.transpose() * x.value());
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

Var linear_nobias(Var x, Var weight) {
  Tape& t = tape_of(x);
  Mat out = x.value() * weight.value().transpose();
  return t.record(std::move(out), {x, weight}, [x, weight](Tape& t, const Mat& g, const Mat&) {
    if (t.requires_grad(x)) t.accumulate(x, g * weight.value());
    if (t.requires_grad(weight)) t.accumulate(weight, g.transpose() * x.value());
  });
}

Var add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  Mat out = a.value() + b.value();
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  Mat out = a.value() - b.value();
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "mul");
  Mat out = a.value().cwiseProduct(b.value());
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g, const Mat&) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var mul(Var a, const Mat& c) {
  check_same_shape(a.value(), c, "mul");
  Mat out = a.value().cwiseProduct(c);
  return tape_of(a).record(std::move(out), {a},
                           [a, c](Tape& t, const Mat& g, const Mat&) { t.accumulate(a, g.cwiseProduct(c)); });
}

Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw std::invalid_argument("add_row: shape");
  Mat out = x.value();
  out.rowwise() += row.value().row(0);
  return tape_of(x).record(std::move(out), {x, row}, [x, row](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(x, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var add_row(Var x, const RowVec& row) {
  if (row.size() != x.cols()) throw std::invalid_argument("add_row: shape");
  Mat out = x.value();
  out.rowwise() += row;
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat&) { t.accumulate(x, g); });
}

Var mul_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw std::invalid_argument("mul_row: shape");
  Mat out = x.value().array().rowwise() * row.value().row(0).array();
  return tape_of(x).record(std::move(out), {x, row}, [x, row](Tape& t, const Mat& g, const Mat&) {
    if (t.requires_grad(x)) {
      Mat gx = g.array().rowwise() * row.value().row(0).array();
      t.accumulate(x, gx);
    }
    if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(x.value()).colwise().sum());
  });
}

Var mul_row(Var x, const RowVec& row) {
  if (row.size() != x.cols()) throw std::invalid_argument("mul_row: shape");
  Mat out = x.value().array().rowwise() * row.array();
  return tape_of(x).record(std::move(out), {x}, [x, row](Tape& t, const Mat& g, const Mat&) {
    Mat gx = g.array().rowwise() * row.array();
    t.accumulate(x, gx);
  });
}

Var scale(Var x, double c) {
  Mat out = c * x.value();
  return tape_of(x).record(std::move(out), {x}, [x, c](Tape& t, const Mat& g, const Mat&) { t.accumulate(x, c * g); });
}

Var add_scalar(Var x, double c) {
  Mat out = x.value().array() + c;
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat&) { t.accumulate(x, g); });
}

Var one_minus(Var x) {
  Mat out = 1.0 - x.value().array();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat&) { t.accumulate(x, -g); });
}

Var relu(Var x) {
  Mat out = x.value().cwiseMax(0.0);
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat&) {
    Mat gx = (x.value().array() > 0.0).select(g, 0.0);
    t.accumulate(x, gx);
  });
}

Var leaky_relu(Var x, double slope) {
  Mat out = (x.value().array() > 0.0).select(x.value(), slope * x.value());
  return tape_of(x).record(std::move(out), {x}, [x, slope](Tape& t, const Mat& g, const Mat&) {
    Mat gx = (x.value().array() > 0.0).select(g, slope * g);
    t.accumulate(x, gx);
  });
}

Var sigmoid(Var x) {
  Mat out = (1.0 + (-x.value().array()).exp()).inverse();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat& y) {
    Mat gx = g.array() * y.array() * (1.0 - y.array());
    t.accumulate(x, gx);
  });
}

Var tanh(Var x) {
  Mat out = x.value().array().tanh();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat& y) {
    Mat gx = g.array() * (1.0 - y.array().square());
    t.accumulate(x, gx);
  });
}

Var exp(Var x) {
  Mat out = x.value().array().exp();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat& y) {
    t.accumulate(x, g.cwiseProduct(y));
  });
}

Var square(Var x) {
  Mat out = x.value().array().square();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(x, 2.0 * g.cwiseProduct(x.value()));
  });
}

Var clamp(Var x, double lo, double hi) {
  Mat out = x.value().cwiseMax(lo).cwiseMin(hi);
  return tape_of(x).record(std::move(out), {x}, [x, lo, hi](Tape& t, const Mat& g, const Mat&) {
    const auto& v = x.value().array();
    Mat gx = (v > lo && v < hi).select(g, 0.0);
    t.accumulate(x, gx);
  });
}

Var minimum(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "minimum");
  Mat out = a.value().cwiseMin(b.value());
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g, const Mat&) {
    // Ties route the gradient to the first argument.
    const auto take_a = (a.value().array() <= b.value().array());
    if (t.requires_grad(a)) t.accumulate(a, Mat(take_a.select(g, 0.0)));
    if (t.requires_grad(b)) t.accumulate(b, Mat(take_a.select(0.0, g)));
  });
}

Var sum(Var x) {
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(x, Mat::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  Mat out(1, 1);
  out(0, 0) = x.value().sum() / n;
  return tape_of(x).record(std::move(out), {x}, [x, n](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(x, Mat::Constant(x.rows(), x.cols(), g(0, 0) / n));
  });
}

Var row_sum(Var x) {
  Mat out = x.value().rowwise().sum();
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, const Mat& g, const Mat&) {
    Mat gx = g.col(0).replicate(1, x.cols());
    t.accumulate(x, gx);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return tape_of(parts.front())
      .record(std::move(out), parts, [saved](Tape& t, const Mat& g, const Mat&) {
        Eigen::Index at = 0;
        for (const Var& p : saved) {
          if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, p.cols()));
          at += p.cols();
        }
      });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != x.value().size()) throw std::invalid_argument("reshape: size mismatch");
  Mat out = x.value().reshaped<Eigen::RowMajor>(rows, cols);
  const Eigen::Index r0 = x.rows();
  const Eigen::Index c0 = x.cols();
  return tape_of(x).record(std::move(out), {x}, [x, r0, c0](Tape& t, const Mat& g, const Mat&) {
    Mat gx = g.reshaped<Eigen::RowMajor>(r0, c0);
    t.accumulate(x, gx);
  });
}

}  // namespace vdfp::nn
