#pragma once

#include <string>
#include <vector>

#include "vdfp/nn/autodiff.hpp"
#include "vdfp/nn/rng.hpp"

namespace vdfp::nn {

/// Fully connected layer y = x W^T + b, W stored (out x in).
///
/// Weights and bias start uniform in +-1/sqrt(in).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, bool with_bias = true);

  Var operator()(Tape& tape, Var x);

  int in() const { return static_cast<int>(weight.value.cols()); }
  int out() const { return static_cast<int>(weight.value.rows()); }
  bool has_bias() const { return has_bias_; }
  void collect(ParamList& out);

  Parameter weight;
  Parameter bias;

 private:
  bool has_bias_ = true;
};

enum class Activation { kNone, kRelu, kTanh };

/// Plain feed-forward stack: ReLU between layers, `output` at the end.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, int in, const std::vector<int>& hidden, int out, Rng& rng,
      Activation output = Activation::kNone);

  Var operator()(Tape& tape, Var x);
  /// Inference-only evaluation (no gradient tracking).
  Mat forward(const Mat& x);

  int in() const { return layers_.front().in(); }
  int out() const { return layers_.back().out(); }
  std::vector<int> widths() const;
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }
  void collect(ParamList& out);
  ParamList params();

 private:
  std::vector<Linear> layers_;
  Activation output_ = Activation::kNone;
};

/// target <- (1 - rate) target + rate online, parameter by parameter.
void polyak_update(const ParamList& target, const ParamList& online, double rate);

}  // namespace vdfp::nn
