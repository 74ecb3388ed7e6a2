#include "vdfp/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace vdfp::nn {

Linear::Linear(const std::string& name, int in, int out, Rng& rng, bool with_bias)
    : has_bias_(with_bias) {
  if (in <= 0 || out <= 0) throw std::invalid_argument("Linear: dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Mat w(out, in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  weight = Parameter(name + ".weight", std::move(w));
  Mat b = Mat::Zero(1, out);
  if (with_bias) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-bound, bound);
  }
  bias = Parameter(name + ".bias", std::move(b));
}

Var Linear::operator()(Tape& tape, Var x) {
  if (has_bias_) return linear(x, tape.param(weight), tape.param(bias));
  return linear_nobias(x, tape.param(weight));
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

Mlp::Mlp(const std::string& name, int in, const std::vector<int>& hidden, int out, Rng& rng,
         Activation output)
    : output_(output) {
  int prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(name + ".l" + std::to_string(i), prev, hidden[i], rng);
    prev = hidden[i];
  }
  layers_.emplace_back(name + ".l" + std::to_string(hidden.size()), prev, out, rng);
}

Var Mlp::operator()(Tape& tape, Var x) {
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = relu(layers_[i](tape, h));
  h = layers_.back()(tape, h);
  switch (output_) {
    case Activation::kRelu:
      return relu(h);
    case Activation::kTanh:
      return nn::tanh(h);
    case Activation::kNone:
      break;
  }
  return h;
}

Mat Mlp::forward(const Mat& x) {
  Tape tape(Tape::Mode::kNoGrad);
  return (*this)(tape, tape.constant(x)).value();
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(layers_.front().in());
  for (const Linear& l : layers_) w.push_back(l.out());
  return w;
}

void Mlp::collect(ParamList& out) {
  for (Linear& l : layers_) l.collect(out);
}

ParamList Mlp::params() {
  ParamList p;
  collect(p);
  return p;
}

void polyak_update(const ParamList& target, const ParamList& online, double rate) {
  if (target.size() != online.size()) throw std::invalid_argument("polyak_update: size mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i]->value = (1.0 - rate) * target[i]->value + rate * online[i]->value;
  }
}

}  // namespace vdfp::nn
