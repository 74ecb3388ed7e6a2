#include "vdfp/repr.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vdfp::repr {

void ReprConfig::validate() const {
  if (filter_heights.empty() || filter_heights.size() != filter_counts.size()) {
    throw std::invalid_argument("ReprConfig: filter_heights and filter_counts must be nonempty and equal length");
  }
  for (std::size_t i = 0; i < filter_heights.size(); ++i) {
    if (filter_heights[i] < 1 || filter_counts[i] < 1) {
      throw std::invalid_argument("ReprConfig: filter heights and counts must be positive");
    }
  }
  if (repr_dim < 1) throw std::invalid_argument("ReprConfig: repr_dim must be >= 1");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw std::invalid_argument("ReprConfig: dropout_prob in [0,1)");
  if (agg_factor < 1) throw std::invalid_argument("ReprConfig: agg_factor must be >= 1");
}

int ReprConfig::total_filters() const { return std::accumulate(filter_counts.begin(), filter_counts.end(), 0); }

// ---- conv op -----------------------------------------------------------------

namespace {

using Windows = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
using MutableWindow = Eigen::Map<RowVec>;

}  // namespace

nn::Var conv_maxpool(nn::Var rows, std::span<const int> valid, int rows_per_segment, nn::Var filters,
                     nn::Var bias, int height) {
  const Mat& x = rows.value();
  const Mat& w = filters.value();
  const Eigen::Index width = x.cols();
  const Eigen::Index count = w.rows();
  const auto batch = static_cast<Eigen::Index>(valid.size());
  if (x.rows() != batch * rows_per_segment) throw std::invalid_argument("conv_maxpool: row count mismatch");
  if (w.cols() != height * width) throw std::invalid_argument("conv_maxpool: filter width mismatch");
  if (bias.value().rows() != 1 || bias.value().cols() != count) throw std::invalid_argument("conv_maxpool: bias shape");

  Mat out = Mat::Zero(batch, count);
  // Winning window start per (segment, filter); -1 when the pooled value is 0.
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax =
      Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Constant(batch, count, -1);

  for (Eigen::Index b = 0; b < batch; ++b) {
    const int n = valid[static_cast<std::size_t>(b)];
    if (n < 0 || n > rows_per_segment) throw std::invalid_argument("conv_maxpool: invalid length");
    const int windows = n - height + 1;
    if (windows < 1) continue;
    // Window j is the contiguous run of height*width values starting at row j.
    const Windows patches(x.data() + b * rows_per_segment * width, windows, height * width,
                          Eigen::OuterStride<>(width));
    Mat z = patches * w.transpose();
    z.rowwise() += bias.value().row(0);
    for (Eigen::Index f = 0; f < count; ++f) {
      Eigen::Index best = 0;
      const double m = z.col(f).maxCoeff(&best);
      if (m > 0.0) {
        out(b, f) = m;
        argmax(b, f) = static_cast<int>(best);
      }
    }
  }

  return rows.tape()->record(
      std::move(out), {rows, filters, bias},
      [rows, filters, bias, argmax, rows_per_segment, height](nn::Tape& t, const Mat& g, const Mat&) {
        const Mat& x = rows.value();
        const Mat& w = filters.value();
        const Eigen::Index width = x.cols();
        const bool need_x = t.requires_grad(rows);
        const bool need_w = t.requires_grad(filters);
        const bool need_b = t.requires_grad(bias);
        Mat gx;
        Mat gw;
        Mat gb;
        if (need_x) gx = Mat::Zero(x.rows(), x.cols());
        if (need_w) gw = Mat::Zero(w.rows(), w.cols());
        if (need_b) gb = Mat::Zero(1, w.rows());
        for (Eigen::Index b = 0; b < argmax.rows(); ++b) {
          for (Eigen::Index f = 0; f < argmax.cols(); ++f) {
            const int j = argmax(b, f);
            if (j < 0) continue;
            const double gf = g(b, f);
            const Eigen::Index offset = (b * rows_per_segment + j) * width;
            if (need_w) {
              gw.row(f) += gf * Eigen::Map<const RowVec>(x.data() + offset, height * width);
            }
            if (need_b) gb(0, f) += gf;
            if (need_x) MutableWindow(gx.data() + offset, height * width) += gf * w.row(f);
          }
        }
        if (need_x) t.accumulate(rows, gx);
        if (need_w) t.accumulate(filters, gw);
        if (need_b) t.accumulate(bias, gb);
      });
}

// ---- encoder -------------------------------------------------------------------

TrajectoryEncoder::TrajectoryEncoder(const ReprConfig& cfg, int feature_dim, Rng& init)
    : cfg_(cfg), feature_dim_(feature_dim) {
  cfg_.validate();
  if (feature_dim < 1) throw std::invalid_argument("TrajectoryEncoder: feature_dim must be positive");
  for (std::size_t i = 0; i < cfg_.filter_heights.size(); ++i) {
    const int h = cfg_.filter_heights[i];
    const int c = cfg_.filter_counts[i];
    const int fan_in = h * feature_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat w(c, fan_in);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = init.uniform(-bound, bound);
    Mat b(1, c);
    for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = init.uniform(-bound, bound);
    const std::string name = "encoder.conv" + std::to_string(i);
    banks_.push_back(Bank{h, nn::Parameter(name + ".weight", std::move(w)), nn::Parameter(name + ".bias", std::move(b))});
  }
  const int n = cfg_.total_filters();
  highway_ = nn::Linear("encoder.highway", n, n, init);
  output_ = nn::Linear("encoder.out", n, cfg_.repr_dim, init);
  if (cfg_.agg_factor > 1) {
    aggregation_ = nn::Linear("encoder.aggregate", cfg_.agg_factor * feature_dim, feature_dim, init);
  }
}

nn::ParamList TrajectoryEncoder::params() {
  nn::ParamList p;
  if (cfg_.agg_factor > 1) aggregation_.collect(p);
  for (Bank& b : banks_) {
    p.push_back(&b.filters);
    p.push_back(&b.bias);
  }
  highway_.collect(p);
  output_.collect(p);
  return p;
}

std::vector<int> TrajectoryEncoder::valid_after_aggregation(const trajstore::PaddedBatch& batch) const {
  std::vector<int> valid(batch.lengths);
  if (cfg_.agg_factor > 1) {
    for (int& v : valid) v = (v + cfg_.agg_factor - 1) / cfg_.agg_factor;
  }
  return valid;
}

nn::Var TrajectoryEncoder::aggregate(nn::Tape& tape, nn::Var rows, int batch_size) {
  const Eigen::Index grouped = rows.rows() / cfg_.agg_factor;
  (void)batch_size;
  nn::Var folded = nn::reshape(rows, grouped, rows.cols() * cfg_.agg_factor);
  return nn::relu(aggregation_(tape, folded));
}

nn::Var TrajectoryEncoder::pooled(nn::Tape& tape, nn::Var rows, std::span<const int> valid, int rows_per_segment) {
  std::vector<nn::Var> parts;
  parts.reserve(banks_.size());
  for (Bank& bank : banks_) {
    parts.push_back(conv_maxpool(rows, valid, rows_per_segment, tape.param(bank.filters), tape.param(bank.bias),
                                 bank.height));
  }
  return nn::concat_cols(parts);
}

nn::Var TrajectoryEncoder::forward(nn::Tape& tape, const trajstore::PaddedBatch& batch, bool train_mode,
                                   Rng* dropout_rng) {
  if (batch.rows.cols() != feature_dim_) throw std::invalid_argument("encode: feature width mismatch");
  const int b = batch.batch_size();
  int rows_per_segment = batch.rows_per_segment;
  for (int len : batch.lengths) {
    if (len < 1 || len > rows_per_segment) throw std::invalid_argument("encode: segment length outside padded rows");
  }
  nn::Var rows = tape.constant(batch.rows);
  if (cfg_.agg_factor > 1) {
    if (rows_per_segment != 64 * cfg_.agg_factor) {
      throw std::invalid_argument("encode: padded length must be 64 * agg_factor when aggregating");
    }
    rows = aggregate(tape, rows, b);
    rows_per_segment = 64;
  }
  const std::vector<int> valid = valid_after_aggregation(batch);
  nn::Var c = pooled(tape, rows, valid, rows_per_segment);

  nn::Var hc = highway_(tape, c);
  nn::Var gate = nn::sigmoid(hc);
  nn::Var joint = nn::add(nn::mul(gate, nn::relu(hc)), nn::mul(nn::one_minus(gate), nn::relu(c)));
  if (train_mode && cfg_.dropout_prob > 0.0) {
    if (dropout_rng == nullptr) throw std::invalid_argument("encode: train mode needs a dropout stream");
    const double keep = 1.0 - cfg_.dropout_prob;
    Mat mask(joint.rows(), joint.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
    }
    joint = nn::mul(joint, mask);
  }
  return output_(tape, joint);
}

Mat TrajectoryEncoder::encode(const trajstore::PaddedBatch& batch) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  return forward(tape, batch, false).value();
}

Vec TrajectoryEncoder::encode(const trajstore::PaddedSegment& segment) {
  trajstore::PaddedBatch b = trajstore::pad_batch(std::span<const trajstore::PaddedSegment>(&segment, 1));
  return encode(b).row(0).transpose();
}

Mat TrajectoryEncoder::conv_features(const trajstore::PaddedBatch& batch) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  nn::Var rows = tape.constant(batch.rows);
  int rows_per_segment = batch.rows_per_segment;
  if (cfg_.agg_factor > 1) {
    rows = aggregate(tape, rows, batch.batch_size());
    rows_per_segment = 64;
  }
  const std::vector<int> valid = valid_after_aggregation(batch);
  return pooled(tape, rows, valid, rows_per_segment).value();
}

Mat TrajectoryEncoder::aggregate(const Mat& long_rows) {
  if (cfg_.agg_factor == 1) return long_rows;
  if (long_rows.rows() % cfg_.agg_factor != 0) {
    throw std::invalid_argument("aggregate: row count not divisible by agg_factor");
  }
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  return aggregate(tape, tape.constant(long_rows), 1).value();
}

}  // namespace vdfp::repr
