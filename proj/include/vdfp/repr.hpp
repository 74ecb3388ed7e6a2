#pragma once

#include <span>
#include <vector>

#include "vdfp/nn/autodiff.hpp"
#include "vdfp/nn/layers.hpp"
#include "vdfp/nn/rng.hpp"
#include "vdfp/trajstore.hpp"

namespace vdfp::repr {

struct ReprConfig {
  std::vector<int> filter_heights{1, 2, 4, 8, 16, 32, 64};
  std::vector<int> filter_counts{20, 20, 10, 10, 5, 5, 5};
  int repr_dim = 100;
  double dropout_prob = 0.2;
  /// Rows merged by the aggregation layer; 1 disables it.
  int agg_factor = 1;

  void validate() const;
  int total_filters() const;
};

/// Convolution over valid windows followed by max-pooling, for one bank of
/// filters of a single height.
///
/// `rows` stacks B padded segments of `rows_per_segment` rows each;
/// `valid[b]` real rows lead segment b. Feature f of segment b is
/// max(0, max_j w_f . x_{j:j+h-1} + b_f) over the windows lying entirely
/// inside the valid prefix, or 0 when there is no such window.
/// `filters` is (count x h*W) with each row laid out window-row-major.
nn::Var conv_maxpool(nn::Var rows, std::span<const int> valid, int rows_per_segment, nn::Var filters,
                     nn::Var bias, int height);

/// Convolutional trajectory encoder f: padded (s,a) segment -> m.
///
/// conv banks -> masked max-pool -> concat c -> highway
/// g = sigmoid(Hc), out = g * relu(Hc) + (1 - g) * relu(c) -> dropout
/// (train mode only) -> affine map to repr_dim. With agg_factor > 1 a shared
/// ReLU layer first folds every agg_factor consecutive rows into one.
class TrajectoryEncoder {
 public:
  TrajectoryEncoder() = default;
  TrajectoryEncoder(const ReprConfig& cfg, int feature_dim, Rng& init);

  /// (B x repr_dim). `dropout_rng` is required in train mode.
  nn::Var forward(nn::Tape& tape, const trajstore::PaddedBatch& batch, bool train_mode,
                  Rng* dropout_rng = nullptr);
  /// Eval-mode encoding, a pure function of the parameters.
  Mat encode(const trajstore::PaddedBatch& batch);
  Vec encode(const trajstore::PaddedSegment& segment);

  /// Max-pooled conv features c (B x total_filters), before the highway.
  Mat conv_features(const trajstore::PaddedBatch& batch);
  /// Folds (64*agg x W) rows into (64 x W); identity when agg_factor == 1.
  Mat aggregate(const Mat& long_rows);

  const ReprConfig& config() const { return cfg_; }
  int feature_dim() const { return feature_dim_; }
  nn::ParamList params();

  struct Bank {
    int height = 1;
    nn::Parameter filters;  // count x (height * feature_dim)
    nn::Parameter bias;     // 1 x count
  };
  std::vector<Bank>& banks() { return banks_; }
  nn::Linear& highway() { return highway_; }
  nn::Linear& output() { return output_; }
  nn::Linear& aggregation() { return aggregation_; }

 private:
  nn::Var aggregate(nn::Tape& tape, nn::Var rows, int batch_size);
  nn::Var pooled(nn::Tape& tape, nn::Var rows, std::span<const int> valid, int rows_per_segment);
  std::vector<int> valid_after_aggregation(const trajstore::PaddedBatch& batch) const;

  ReprConfig cfg_;
  int feature_dim_ = 0;
  std::vector<Bank> banks_;
  nn::Linear highway_;
  nn::Linear output_;
  nn::Linear aggregation_;
};

}  // namespace vdfp::repr
