#pragma once

#include <string>
#include <vector>

#include "vdfp/nn/adam.hpp"
#include "vdfp/nn/autodiff.hpp"
#include "vdfp/nn/layers.hpp"
#include "vdfp/repr.hpp"
#include "vdfp/trajstore.hpp"

namespace vdfp::ret {

enum class ReturnKind { kLinear, kLeakyRelu, kIcnn, kNeIcnn };

std::string to_string(ReturnKind kind);
ReturnKind parse_return_kind(std::string_view s);

struct ReturnModelConfig {
  ReturnKind kind = ReturnKind::kLinear;
  /// Negative-side slope for kLeakyRelu, in (0, 1].
  double leaky_slope = 0.2;
  /// Hidden widths of the ICNN variants.
  std::vector<int> icnn_hidden{64, 64};
  double lr = 5e-4;

  void validate() const;
};

/// The trajectory return function U: m -> scalar.
///
/// linear:     u.m + b
/// leaky_relu: leaky(u.m + b), convex and nondecreasing in the affine score
/// icnn:       z1 = relu(A0 m + b0), z_{k+1} = relu(W_k z_k + A_k m + b_k),
///             U = w_L.z_L + a_L.m + b_L with every W nonnegative
/// ne_icnn:    the same stack fed [m, -m] with every weight nonnegative
class ReturnHead {
 public:
  ReturnHead() = default;
  ReturnHead(const ReturnModelConfig& cfg, int repr_dim, Rng& init);

  /// (B x repr_dim) -> (B x 1)
  nn::Var operator()(nn::Tape& tape, nn::Var m);
  double evaluate(const Vec& m);
  Vec evaluate(const Mat& m);

  /// Clips the constrained weights at zero.
  void project();
  /// Midpoint probe U((m1+m2)/2) <= (U(m1)+U(m2))/2 + 1e-6 on `trials`
  /// random pairs drawn from N(0, scale^2 I).
  bool certify_convexity(int trials, Rng& rng, double scale = 3.0);

  ReturnKind kind() const { return cfg_.kind; }
  const ReturnModelConfig& config() const { return cfg_; }
  int repr_dim() const { return repr_dim_; }
  nn::ParamList params();

  /// Affine part (linear and leaky kinds).
  nn::Linear& affine() { return affine_; }
  /// Hidden-to-hidden (and hidden-to-output) weights of the ICNN kinds.
  std::vector<nn::Linear>& z_layers() { return z_layers_; }
  /// Input passthrough layers of the ICNN kinds, one per hidden layer plus output.
  std::vector<nn::Linear>& m_layers() { return m_layers_; }

 private:
  ReturnModelConfig cfg_;
  int repr_dim_ = 0;
  nn::Linear affine_;
  std::vector<nn::Linear> z_layers_;
  std::vector<nn::Linear> m_layers_;
};

struct ReturnBatch {
  trajstore::PaddedBatch inputs;
  Vec labels;
};

/// Pads sampled segments and attaches their discounted-return labels.
ReturnBatch make_return_batch(const std::vector<trajstore::Segment>& segments, int max_len, double gamma);

/// Joint parameters omega = encoder f + head U, trained on the MSE between
/// U(f(tau)) and the segment's discounted return.
class ReturnModel {
 public:
  ReturnModel() = default;
  ReturnModel(const repr::ReprConfig& repr_cfg, const ReturnModelConfig& cfg, int feature_dim, Rng& init);

  /// Mean squared error in train mode (dropout active) on the given tape.
  nn::Var loss(nn::Tape& tape, const ReturnBatch& batch, Rng& dropout);
  /// One Adam step on omega; returns the pre-step loss. Throws
  /// DivergenceError on a non-finite loss.
  double train_step(const ReturnBatch& batch, Rng& dropout);

  /// Eval-mode U(f(tau)) per segment.
  Vec predict(const trajstore::PaddedBatch& inputs);

  repr::TrajectoryEncoder& encoder() { return encoder_; }
  ReturnHead& head() { return head_; }
  nn::Adam& optimizer() { return adam_; }
  nn::ParamList params();
  std::int64_t updates() const { return adam_.steps(); }

 private:
  repr::TrajectoryEncoder encoder_;
  ReturnHead head_;
  nn::Adam adam_;
};

}  // namespace vdfp::ret
