#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles/oracles.hpp"
#include "support/gradcheck.hpp"
#include "vdfp/repr.hpp"

using namespace vdfp;
using namespace vdfp::repr;
using trajstore::PaddedBatch;

namespace {

Mat random_rows(int rows, int width, Rng& rng) {
  Mat m(rows, width);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

PaddedBatch single(const Mat& rows, int length, int padded_rows) {
  PaddedBatch b;
  b.rows = Mat::Zero(padded_rows, rows.cols());
  b.rows.topRows(length) = rows.topRows(length);
  b.lengths = {length};
  b.rows_per_segment = padded_rows;
  return b;
}

std::vector<oracles::ConvFilter> oracle_filters(TrajectoryEncoder& enc) {
  std::vector<oracles::ConvFilter> out;
  const int w = enc.feature_dim();
  for (auto& bank : enc.banks()) {
    for (Eigen::Index f = 0; f < bank.filters.value.rows(); ++f) {
      oracles::ConvFilter c;
      c.height = bank.height;
      c.weight = oracles::Matrix(bank.height, w);
      for (int r = 0; r < bank.height; ++r) {
        for (int k = 0; k < w; ++k) c.weight(r, k) = bank.filters.value(f, r * w + k);
      }
      c.bias = bank.bias.value(0, f);
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("repr") {
  TEST_CASE("config validation and defaults") {
    ReprConfig c;
    CHECK(c.total_filters() == 75);
    CHECK(c.repr_dim == 100);
    CHECK(c.dropout_prob == 0.2);
    c.filter_counts.pop_back();
    CHECK_THROWS(c.validate());
    ReprConfig d;
    d.repr_dim = 0;
    CHECK_THROWS(d.validate());
  }

  TEST_CASE("zero input, single height-1 filter, zero bias: output is the affine bias") {
    Rng rng(1);
    ReprConfig c;
    c.filter_heights = {1};
    c.filter_counts = {1};
    c.repr_dim = 5;
    TrajectoryEncoder enc(c, 3, rng);
    enc.banks()[0].bias.value.setZero();
    const Vec m = enc.encode(single(Mat::Zero(1, 3), 1, 4)).transpose();
    // Conv feature 0 makes the highway output relu(H0 + b_H) gated; compute it.
    const double hb = enc.highway().bias.value(0, 0);
    const double g = 1.0 / (1.0 + std::exp(-hb));
    const double joint = g * std::max(hb, 0.0);
    const Vec expected = (enc.output().weight.value.col(0) * joint + enc.output().bias.value.transpose());
    CHECK((m - expected).norm() < 1e-12);
    enc.highway().bias.value.setZero();
    const Vec m0 = enc.encode(single(Mat::Zero(1, 3), 1, 4)).transpose();
    CHECK((m0 - enc.output().bias.value.transpose()).norm() == 0.0);
  }

  TEST_CASE("output has repr_dim entries for every length 1..L") {
    Rng rng(2);
    TrajectoryEncoder enc(ReprConfig{}, 6, rng);
    const Mat rows = random_rows(64, 6, rng);
    for (int len = 1; len <= 64; ++len) {
      const Mat m = enc.encode(single(rows, len, 64));
      CHECK(m.rows() == 1);
      CHECK(m.cols() == 100);
      CHECK(m.allFinite());
    }
  }

  TEST_CASE("conv features match the naive window oracle (heights {1,2}, 1000 segments of length <= 8)") {
    Rng rng(3);
    ReprConfig c;
    c.filter_heights = {1, 2};
    c.filter_counts = {4, 3};
    TrajectoryEncoder enc(c, 5, rng);
    const auto filters = oracle_filters(enc);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int len = 1 + static_cast<int>(rng.index(8));
      const Mat rows = random_rows(8, 5, rng);
      const Vec got = enc.conv_features(single(rows, len, 8)).row(0).transpose();
      const Vec want = oracles::naive_conv_features(rows, len, filters);
      worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("default banks match the oracle, tall filters pool to zero on short segments") {
    Rng rng(4);
    TrajectoryEncoder enc(ReprConfig{}, 4, rng);
    const auto filters = oracle_filters(enc);
    for (int trial = 0; trial < 50; ++trial) {
      const int len = 1 + static_cast<int>(rng.index(64));
      const Mat rows = random_rows(64, 4, rng);
      const Vec got = enc.conv_features(single(rows, len, 64)).row(0).transpose();
      CHECK((got - oracles::naive_conv_features(rows, len, filters)).cwiseAbs().maxCoeff() <= 1e-9);
      if (len < 64) CHECK(got.tail(5).isZero());
    }
  }

  TEST_CASE("padding invariance: extra zero rows never change the output") {
    Rng rng(5);
    TrajectoryEncoder enc(ReprConfig{}, 3, rng);
    for (int trial = 0; trial < 40; ++trial) {
      const int len = 1 + static_cast<int>(rng.index(40));
      const Mat rows = random_rows(40, 3, rng);
      const Mat a = enc.encode(single(rows, len, 40));
      const Mat b = enc.encode(single(rows, len, 64));
      CHECK(a == b);
    }
  }

  TEST_CASE("batched encoding equals per-segment encoding") {
    Rng rng(6);
    TrajectoryEncoder enc(ReprConfig{}, 3, rng);
    PaddedBatch b;
    b.rows_per_segment = 16;
    b.rows = Mat::Zero(3 * 16, 3);
    std::vector<Mat> parts;
    for (int i = 0; i < 3; ++i) {
      const int len = 4 + 5 * i;
      parts.push_back(random_rows(len, 3, rng));
      b.rows.middleRows(i * 16, len) = parts.back();
      b.lengths.push_back(len);
    }
    const Mat all = enc.encode(b);
    for (int i = 0; i < 3; ++i) {
      const Mat one = enc.encode(single(parts[static_cast<std::size_t>(i)], b.lengths[static_cast<std::size_t>(i)], 16));
      CHECK((all.row(i) - one.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("eval mode is deterministic, train mode applies dropout") {
    Rng rng(7);
    TrajectoryEncoder enc(ReprConfig{}, 3, rng);
    const auto b = single(random_rows(10, 3, rng), 10, 16);
    CHECK(enc.encode(b) == enc.encode(b));
    Rng drop(1);
    nn::Tape t1(nn::Tape::Mode::kNoGrad);
    nn::Tape t2(nn::Tape::Mode::kNoGrad);
    const Mat x = enc.forward(t1, b, true, &drop).value();
    const Mat y = enc.forward(t2, b, true, &drop).value();
    CHECK(x != y);
    nn::Tape t3(nn::Tape::Mode::kNoGrad);
    CHECK_THROWS(enc.forward(t3, b, true, nullptr));
  }

  TEST_CASE("input validation") {
    Rng rng(8);
    TrajectoryEncoder enc(ReprConfig{}, 3, rng);
    CHECK_THROWS(enc.encode(single(random_rows(4, 4, rng), 4, 8)));
    PaddedBatch b = single(random_rows(4, 3, rng), 4, 8);
    b.lengths[0] = 9;
    CHECK_THROWS(enc.encode(b));
  }

  TEST_CASE("encoder gradients match finite differences") {
    Rng rng(9);
    ReprConfig c;
    c.filter_heights = {1, 2, 3};
    c.filter_counts = {2, 2, 1};
    c.repr_dim = 3;
    c.dropout_prob = 0.0;
    TrajectoryEncoder enc(c, 2, rng);
    PaddedBatch b;
    b.rows_per_segment = 5;
    b.rows = random_rows(10, 2, rng);
    b.rows.row(9).setZero();
    b.lengths = {5, 4};
    const nn::ParamList params = enc.params();
    auto build = [&](nn::Tape& t) { return nn::sum(nn::square(enc.forward(t, b, false))); };
    const auto cmp = testing_support::compare_gradients(params, build);
    CHECK(cmp.relative_error() < 1e-6);
  }
}

TEST_SUITE("aggregate") {
  TEST_CASE("agg_factor 1 is the identity") {
    Rng rng(10);
    TrajectoryEncoder enc(ReprConfig{}, 3, rng);
    const Mat x = random_rows(64, 3, rng);
    CHECK(enc.aggregate(x) == x);
  }

  TEST_CASE("agg_factor 4 folds 256 rows into 64") {
    Rng rng(11);
    ReprConfig c;
    c.agg_factor = 4;
    TrajectoryEncoder enc(c, 3, rng);
    const Mat y = enc.aggregate(random_rows(256, 3, rng));
    CHECK(y.rows() == 64);
    CHECK(y.cols() == 3);
    CHECK((y.array() >= 0.0).all());
    CHECK_THROWS(enc.aggregate(random_rows(255, 3, rng)));
  }

  TEST_CASE("zero input and zero bias give zero rows") {
    Rng rng(12);
    ReprConfig c;
    c.agg_factor = 4;
    TrajectoryEncoder enc(c, 3, rng);
    enc.aggregation().bias.value.setZero();
    CHECK(enc.aggregate(Mat::Zero(256, 3)).isZero());
  }

  TEST_CASE("aggregating encoder handles L = 256 segments") {
    Rng rng(13);
    ReprConfig c;
    c.agg_factor = 4;
    TrajectoryEncoder enc(c, 3, rng);
    for (int len : {1, 3, 4, 5, 100, 256}) {
      const Mat m = enc.encode(single(random_rows(256, 3, rng), len, 256));
      CHECK(m.cols() == 100);
      CHECK(m.allFinite());
    }
    CHECK_THROWS(enc.encode(single(random_rows(64, 3, rng), 10, 64)));
  }
}
