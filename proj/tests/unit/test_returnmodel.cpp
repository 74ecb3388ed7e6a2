#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "support/gradcheck.hpp"
#include "vdfp/errors.hpp"
#include "vdfp/returnmodel.hpp"

using namespace vdfp;
using namespace vdfp::ret;

namespace {

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Vec random_vec(int n, Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal(0.0, scale);
  return v;
}

ReturnModelConfig kind_cfg(ReturnKind k) {
  ReturnModelConfig c;
  c.kind = k;
  c.icnn_hidden = {12, 8};
  return c;
}

std::shared_ptr<trajstore::ReplayBuffer> buffer_of(const std::vector<std::vector<double>>& rewards, int sd = 2,
                                                    int ad = 1) {
  auto buf = std::make_shared<trajstore::ReplayBuffer>(100000);
  Rng rng(5);
  for (const auto& ep_rewards : rewards) {
    trajstore::Episode ep;
    for (double r : ep_rewards) ep.push_back({random_vec(sd, rng), random_vec(ad, rng), r});
    buf->store_episode(ep);
  }
  return buf;
}

repr::ReprConfig small_repr() {
  repr::ReprConfig c;
  c.filter_heights = {1, 2, 4};
  c.filter_counts = {6, 4, 2};
  c.repr_dim = 8;
  return c;
}

}  // namespace

TEST_SUITE("returnmodel") {
  TEST_CASE("kind names round-trip; bad configs are rejected") {
    for (auto k : {ReturnKind::kLinear, ReturnKind::kLeakyRelu, ReturnKind::kIcnn, ReturnKind::kNeIcnn}) {
      CHECK(parse_return_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_return_kind("quadratic"), std::invalid_argument);
    ReturnModelConfig c;
    c.leaky_slope = 0.0;
    CHECK_THROWS(c.validate());
    c.leaky_slope = 1.5;
    CHECK_THROWS(c.validate());
    ReturnModelConfig d = kind_cfg(ReturnKind::kIcnn);
    d.icnn_hidden.clear();
    CHECK_THROWS(d.validate());
  }

  TEST_CASE("linear kind is u.m + b") {
    Rng rng(1);
    ReturnHead head(ReturnModelConfig{}, 5, rng);
    const Vec m = random_vec(5, rng);
    const double want = head.affine().weight.value.row(0).dot(m.transpose().row(0)) + head.affine().bias.value(0, 0);
    CHECK(head.evaluate(m) == doctest::Approx(want).epsilon(1e-14));
  }

  TEST_CASE("leaky_relu with slope 1 equals linear with the same weights") {
    Rng rng(2);
    ReturnHead lin(ReturnModelConfig{}, 6, rng);
    ReturnModelConfig c;
    c.kind = ReturnKind::kLeakyRelu;
    c.leaky_slope = 1.0;
    ReturnHead leaky(c, 6, rng);
    leaky.affine().weight.value = lin.affine().weight.value;
    leaky.affine().bias.value = lin.affine().bias.value;
    for (int i = 0; i < 50; ++i) {
      const Vec m = random_vec(6, rng, 3.0);
      CHECK(leaky.evaluate(m) == lin.evaluate(m));
    }
  }

  TEST_CASE("affine-combination identity for the linear kind") {
    Rng rng(3);
    ReturnHead head(ReturnModelConfig{}, 4, rng);
    for (int i = 0; i < 200; ++i) {
      const Vec a = random_vec(4, rng, 5.0), b = random_vec(4, rng, 5.0);
      const double lam = rng.uniform();
      const double lhs = head.evaluate(Vec(lam * a + (1 - lam) * b));
      const double rhs = lam * head.evaluate(a) + (1 - lam) * head.evaluate(b);
      CHECK(std::abs(lhs - rhs) <= 1e-9);
    }
  }

  TEST_CASE("convex kinds pass the midpoint probe, before and after training") {
    for (auto k : {ReturnKind::kLinear, ReturnKind::kLeakyRelu, ReturnKind::kIcnn, ReturnKind::kNeIcnn}) {
      CAPTURE(to_string(k));
      Rng rng(4);
      ReturnHead head(kind_cfg(k), 6, rng);
      Rng probe(40);
      CHECK(head.certify_convexity(10000, probe));
      // Gradient steps on an arbitrary target push weights negative; the
      // projection must restore the constraint.
      nn::Adam opt(0.05);
      for (int step = 0; step < 50; ++step) {
        nn::Tape tape;
        const Mat m = random_mat(16, 6, rng);
        nn::Var out = head(tape, tape.constant(m));
        tape.backward(nn::mean(nn::square(nn::add_scalar(out, -3.0))));
        opt.step(head.params());
      }
      Rng probe2(41);
      CHECK(head.certify_convexity(10000, probe2));
    }
  }

  TEST_CASE("head gradients match finite differences for every kind") {
    for (auto k : {ReturnKind::kLinear, ReturnKind::kLeakyRelu, ReturnKind::kIcnn, ReturnKind::kNeIcnn}) {
      CAPTURE(to_string(k));
      Rng rng(6);
      ReturnHead head(kind_cfg(k), 5, rng);
      const Mat m = random_mat(7, 5, rng);
      auto cmp = testing_support::compare_gradients(head.params(), [&](nn::Tape& t) {
        return nn::mean(nn::square(head(t, t.constant(m))));
      });
      CHECK(cmp.relative_error() <= 1e-6);
    }
  }

  TEST_CASE("return labels: [1,1,1] with gamma 0.5 is 1.75; gamma 0 is the first reward") {
    auto buf = buffer_of({{1.0, 1.0, 1.0}});
    const trajstore::Segment seg = buf->segment_at(0, 64);
    const ReturnBatch b = make_return_batch({seg}, 64, 0.5);
    CHECK(b.labels[0] == 1.75);
    auto buf2 = buffer_of({{-2.5, 4.0, 9.0}});
    CHECK(make_return_batch({buf2->segment_at(0, 64)}, 64, 0.0).labels[0] == -2.5);
    CHECK(b.inputs.rows_per_segment == 64);
    CHECK(b.inputs.lengths == std::vector<int>{3});
  }

  TEST_CASE("batch of identical segments: loss equals the single squared error") {
    Rng rng(7);
    ReturnModel model(small_repr(), ReturnModelConfig{}, 3, rng);
    auto buf = buffer_of({{0.5, -1.0, 2.0, 0.25}});
    const trajstore::Segment seg = buf->segment_at(1, 16);
    const ReturnBatch one = make_return_batch({seg}, 16, 0.9);
    const ReturnBatch many = make_return_batch({seg, seg, seg, seg}, 16, 0.9);
    const double pred = model.predict(one.inputs)[0];
    repr::ReprConfig no_dropout = small_repr();
    no_dropout.dropout_prob = 0.0;
    Rng r2(7);
    ReturnModel det(no_dropout, ReturnModelConfig{}, 3, r2);
    Rng d1(1), d2(2);
    nn::Tape t1, t2;
    const double l1 = det.loss(t1, one, d1).item();
    const double l4 = det.loss(t2, many, d2).item();
    CHECK(l4 == doctest::Approx(l1).epsilon(1e-14));
    const double p = det.predict(one.inputs)[0];
    CHECK(l1 == doctest::Approx((p - one.labels[0]) * (p - one.labels[0])).epsilon(1e-12));
    CHECK(std::isfinite(pred));
  }

  TEST_CASE("zero-reward segments: the loss can be driven to ~0") {
    Rng rng(8);
    ReturnModel model(small_repr(), ReturnModelConfig{}, 3, rng);
    auto buf = buffer_of({std::vector<double>(30, 0.0), std::vector<double>(20, 0.0)});
    Rng sample(9), dropout(10);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 600; ++step) {
      const auto segs = buf->sample_segments(32, 16, sample);
      last = model.train_step(make_return_batch(segs, 16, 0.99), dropout);
      if (step == 0) first = last;
    }
    CHECK(last < 1e-3);
    CHECK(last < first);
    CHECK(model.updates() == 600);
  }

  TEST_CASE("joint loss gradient matches finite differences (dropout off)") {
    Rng rng(11);
    repr::ReprConfig rc = small_repr();
    rc.dropout_prob = 0.0;
    ReturnModel model(rc, kind_cfg(ReturnKind::kIcnn), 3, rng);
    auto buf = buffer_of({{1.0, -0.5, 0.3, 2.0, 0.1, -1.0}});
    Rng s(12);
    const ReturnBatch b = make_return_batch(buf->sample_segments(5, 8, s), 8, 0.9);
    auto cmp = testing_support::compare_gradients(model.params(), [&](nn::Tape& t) {
      Rng d(3);
      return model.loss(t, b, d);
    });
    CHECK(cmp.relative_error() <= 1e-5);
  }

  TEST_CASE("non-finite loss raises DivergenceError") {
    Rng rng(13);
    ReturnModel model(small_repr(), ReturnModelConfig{}, 3, rng);
    auto buf = buffer_of({{std::numeric_limits<double>::infinity(), 1.0}});
    Rng d(1);
    CHECK_THROWS_AS(model.train_step(make_return_batch({buf->segment_at(0, 8)}, 8, 0.9), d), DivergenceError);
  }
}
