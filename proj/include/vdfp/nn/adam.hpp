#pragma once

#include <cstdint>
#include <vector>

#include "vdfp/nn/autodiff.hpp"

namespace vdfp::nn {

/// Adam over a caller-supplied parameter list.
///
/// Moment buffers are matched to the list by position, so the owner must
/// pass its parameters in the same order on every step. Parameters flagged
/// nonnegative are clipped at zero after the update. Gradients are zeroed.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options opts) : opts_(opts) {}
  explicit Adam(double lr) { opts_.lr = lr; }

  void step(const ParamList& params);

  const Options& options() const { return opts_; }
  std::int64_t steps() const { return t_; }

  template <class Archive>
  void serialize(Archive& ar) {
    ar(opts_.lr, opts_.beta1, opts_.beta2, opts_.eps, t_, m_, v_);
  }

 private:
  Options opts_;
  std::int64_t t_ = 0;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
};

void project_nonnegative(const ParamList& params);

}  // namespace vdfp::nn
