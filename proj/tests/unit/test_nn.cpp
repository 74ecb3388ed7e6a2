#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "support/gradcheck.hpp"
#include "vdfp/nn/adam.hpp"
#include "vdfp/nn/autodiff.hpp"
#include "vdfp/nn/layers.hpp"
#include "vdfp/nn/rng.hpp"
#include "vdfp/nn/serialize.hpp"

using namespace vdfp;
using testing_support::compare_gradients;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("rng") {
  TEST_CASE("same key and counter give the same stream") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) CHECK(a() == b());
    Rng c(42, a.counter());
    CHECK(c() == a());
  }

  TEST_CASE("named splits are independent of each other and of the parent") {
    Rng root(7);
    Rng x = root.split("env");
    Rng y = root.split("init");
    CHECK(x.key() != y.key());
    CHECK(x.key() != root.key());
    CHECK(root.split("env") == x);
  }

  TEST_CASE("normal draws have unit moments") {
    Rng r(3);
    const int n = 200000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
  }

  TEST_CASE("index covers the range uniformly") {
    Rng r(11);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[r.index(7)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  }
}

TEST_SUITE("autodiff") {
  TEST_CASE("elementwise and reduction ops match finite differences") {
    Rng rng(1);
    nn::Parameter a("a", random_mat(3, 4, rng));
    nn::Parameter b("b", random_mat(3, 4, rng));
    nn::Parameter row("row", random_mat(1, 4, rng));
    nn::ParamList params{&a, &b, &row};
    const Mat mask = random_mat(3, 4, rng);

    auto build = [&](nn::Tape& t) {
      nn::Var x = t.param(a);
      nn::Var y = t.param(b);
      nn::Var r = t.param(row);
      nn::Var u = nn::add(nn::mul(nn::sigmoid(x), nn::tanh(y)), nn::leaky_relu(nn::sub(x, y), 0.3));
      u = nn::add_row(nn::mul_row(u, r), r);
      u = nn::add(u, nn::scale(nn::exp(nn::scale(x, 0.2)), 0.5));
      u = nn::add(u, nn::mul(nn::one_minus(nn::relu(y)), mask));
      u = nn::add(u, nn::minimum(x, y));
      u = nn::add(u, nn::clamp(y, -0.5, 0.5));
      nn::Var rs = nn::row_sum(nn::square(u));
      return nn::add(nn::mean(rs), nn::sum(nn::add_scalar(nn::reshape(u, 2, 6), 1.0)));
    };
    const auto cmp = compare_gradients(params, build);
    CHECK(cmp.relative_error() < 1e-6);
  }

  TEST_CASE("matmul, linear and concat match finite differences") {
    Rng rng(2);
    nn::Parameter x("x", random_mat(5, 3, rng));
    nn::Parameter w("w", random_mat(4, 3, rng));
    nn::Parameter bias("bias", random_mat(1, 4, rng));
    nn::Parameter v("v", random_mat(4, 2, rng));
    nn::ParamList params{&x, &w, &bias, &v};
    auto build = [&](nn::Tape& t) {
      nn::Var h = nn::linear(t.param(x), t.param(w), t.param(bias));
      nn::Var k = nn::linear_nobias(t.param(x), t.param(w));
      nn::Var c = nn::concat_cols({h, k, t.param(x)});
      nn::Var p = nn::matmul(h, t.param(v));
      return nn::add(nn::sum(nn::square(c)), nn::sum(nn::tanh(p)));
    };
    CHECK(compare_gradients(params, build).relative_error() < 1e-6);
  }

  TEST_CASE("no-grad tape leaves parameter gradients untouched") {
    Rng rng(3);
    nn::Parameter a("a", random_mat(2, 2, rng));
    nn::Tape t(nn::Tape::Mode::kNoGrad);
    nn::Var y = nn::sum(nn::square(t.param(a)));
    CHECK_FALSE(t.requires_grad(y));
    CHECK(a.grad.isZero());
  }

  TEST_CASE("input leaves expose their gradient") {
    nn::Tape t;
    nn::Var x = t.input(Mat::Constant(1, 3, 2.0));
    t.backward(nn::sum(nn::square(x)));
    CHECK(t.grad(x).isApprox(Mat::Constant(1, 3, 4.0)));
  }
}

TEST_SUITE("layers") {
  TEST_CASE("linear init lies within +-1/sqrt(in)") {
    Rng rng(4);
    nn::Linear l("l", 16, 8, rng);
    CHECK(l.weight.value.cwiseAbs().maxCoeff() <= 0.25);
    CHECK(l.bias.value.cwiseAbs().maxCoeff() <= 0.25);
    CHECK(l.weight.name == "l.weight");
  }

  TEST_CASE("mlp widths and output activation") {
    Rng rng(5);
    nn::Mlp m("m", 3, {200, 100}, 2, rng, nn::Activation::kTanh);
    CHECK(m.widths() == std::vector<int>{3, 200, 100, 2});
    const Mat y = m.forward(random_mat(10, 3, rng, 10.0));
    CHECK(y.cwiseAbs().maxCoeff() <= 1.0);
  }

  TEST_CASE("polyak with rate 1 copies the online network") {
    Rng rng(6);
    nn::Mlp a("a", 3, {4}, 2, rng);
    nn::Mlp b("b", 3, {4}, 2, rng);
    nn::polyak_update(b.params(), a.params(), 1.0);
    CHECK(nn::flatten_values(b.params()) == nn::flatten_values(a.params()));
  }

  TEST_CASE("polyak with a small rate moves a fraction of the way") {
    nn::Parameter t("t", Mat::Zero(1, 1));
    nn::Parameter o("o", Mat::Constant(1, 1, 10.0));
    nn::polyak_update({&t}, {&o}, 1e-3);
    CHECK(t.value(0, 0) == doctest::Approx(0.01));
  }
}

TEST_SUITE("adam") {
  TEST_CASE("minimises a quadratic") {
    nn::Parameter p("p", Mat::Constant(1, 3, 5.0));
    nn::Adam opt(0.1);
    for (int i = 0; i < 500; ++i) {
      nn::Tape t;
      t.backward(nn::sum(nn::square(nn::add_scalar(t.param(p), -1.0))));
      opt.step({&p});
    }
    CHECK((p.value.array() - 1.0).abs().maxCoeff() < 1e-3);
  }

  TEST_CASE("first step moves every coordinate by lr") {
    nn::Parameter p("p", Mat::Constant(1, 2, 0.0));
    p.grad << 3.0, -0.5;
    nn::Adam opt(0.01);
    opt.step({&p});
    CHECK(p.value(0, 0) == doctest::Approx(-0.01));
    CHECK(p.value(0, 1) == doctest::Approx(0.01));
    CHECK(p.grad.isZero());
  }

  TEST_CASE("nonnegative parameters are projected after the step") {
    nn::Parameter p("p", Mat::Constant(1, 2, 0.001), true);
    p.grad << 1.0, -1.0;
    nn::Adam opt(0.01);
    opt.step({&p});
    CHECK(p.value(0, 0) == 0.0);
    CHECK(p.value(0, 1) > 0.0);
  }
}

TEST_SUITE("serialize") {
  TEST_CASE("parameters round-trip bit-exactly") {
    Rng rng(8);
    nn::Mlp a("net", 3, {5}, 2, rng);
    nn::Mlp b("net", 3, {5}, 2, rng);
    std::stringstream ss;
    {
      cereal::BinaryOutputArchive ar(ss);
      nn::save_params(ar, a.params());
    }
    cereal::BinaryInputArchive ar(ss);
    nn::commit_params(b.params(), nn::read_params(ar, b.params()));
    CHECK(nn::flatten_values(b.params()) == nn::flatten_values(a.params()));
  }

  TEST_CASE("shape mismatch is rejected before anything is assigned") {
    Rng rng(9);
    nn::Mlp a("net", 3, {5}, 2, rng);
    nn::Mlp b("net", 3, {6}, 2, rng);
    const Vec before = nn::flatten_values(b.params());
    std::stringstream ss;
    {
      cereal::BinaryOutputArchive ar(ss);
      nn::save_params(ar, a.params());
    }
    cereal::BinaryInputArchive ar(ss);
    CHECK_THROWS_AS(nn::read_params(ar, b.params()), std::runtime_error);
    CHECK(nn::flatten_values(b.params()) == before);
  }

  TEST_CASE("adam state round-trips") {
    nn::Parameter p("p", Mat::Constant(1, 2, 1.0));
    nn::Adam opt(0.01);
    p.grad << 1.0, 2.0;
    opt.step({&p});
    std::stringstream ss;
    {
      cereal::BinaryOutputArchive ar(ss);
      ar(opt);
    }
    nn::Adam copy;
    cereal::BinaryInputArchive ar(ss);
    ar(copy);
    CHECK(copy.steps() == 1);
    CHECK(copy.options().lr == 0.01);
  }
}
