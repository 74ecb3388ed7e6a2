#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles/oracles.hpp"

using namespace oracles;

TEST_SUITE("oracles") {
  TEST_CASE("fixture validates; malformed MDPs are rejected") {
    FiniteMDP m = two_state_fixture(5, 0.9);
    CHECK_NOTHROW(m.validate());
    m.transition[0](0) = 0.9;
    CHECK_THROWS(m.validate());
    FiniteMDP big;
    big.n_states = 6;
    big.n_actions = 1;
    CHECK_THROWS(big.validate());
  }

  TEST_CASE("backward induction: Q_1 = r and each stage satisfies the Bellman recursion") {
    const FiniteMDP m = two_state_fixture(6, 0.8);
    const Policy pi = two_state_policy();
    const auto stages = exact_q_stages(m, pi);
    REQUIRE(stages.size() == 7);
    CHECK(stages[0].isZero(0.0));
    CHECK((stages[1] - m.reward).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t h = 1; h < stages.size(); ++h) {
      for (int s = 0; s < 2; ++s) {
        for (int a = 0; a < 2; ++a) {
          double next = 0.0;
          for (int sp = 0; sp < 2; ++sp) {
            next += m.next(s, a)(sp) * (pi.row(sp).dot(stages[h - 1].row(sp)));
          }
          CHECK(stages[h](s, a) == doctest::Approx(m.reward(s, a) + 0.8 * next).epsilon(1e-12));
        }
      }
    }
    CHECK((exact_q(m, pi) - stages.back()).norm() == 0.0);
  }

  TEST_CASE("a long horizon approaches the infinite-horizon solve") {
    const FiniteMDP m = two_state_fixture(400, 0.9);
    const Policy pi = two_state_policy();
    CHECK((exact_q(m, pi) - analytic_q(m, pi)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("occupancy rows sum to 1/(1-gamma) and reproduce Q through the reward") {
    const FiniteMDP m = two_state_fixture(1, 0.75);
    const Policy pi = two_state_policy();
    const Matrix occ = analytic_occupancy(m, pi);
    Vector r(4);
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) r(s * 2 + a) = m.reward(s, a);
    }
    const Vector q = occ * r;
    const Matrix qa = analytic_q(m, pi);
    for (int i = 0; i < 4; ++i) {
      CHECK(occ.row(i).sum() == doctest::Approx(4.0).epsilon(1e-12));
      CHECK(q(i) == doctest::Approx(qa(i / 2, i % 2)).epsilon(1e-12));
    }
  }

  TEST_CASE("Monte Carlo Q agrees with backward induction") {
    const FiniteMDP m = two_state_fixture(15, 0.9);
    const Policy pi = two_state_policy();
    const Matrix q = exact_q(m, pi);
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) {
        const Estimate e = mc_q_estimate(m, pi, s, a, 20000, 7 + s * 2 + a);
        CHECK(std::abs(e.mean - q(s, a)) <= 4.0 * e.stderr_);
      }
    }
  }

  TEST_CASE("occupancy features sum to the discounted step count; Jensen gap of an affine U is zero") {
    const FiniteMDP m = two_state_fixture(10, 0.9);
    std::mt19937_64 gen(3);
    const Rollout r = rollout(m, two_state_policy(), 1, 0, gen);
    CHECK(r.states.size() == 10);
    CHECK(r.states.front() == 1);
    CHECK(r.actions.front() == 0);
    const Vector f = discounted_occupancy_features(m, r);
    CHECK(f.sum() == doctest::Approx((1.0 - std::pow(0.9, 10)) / 0.1).epsilon(1e-12));
    const auto affine = [](const Vector& v) { return 2.0 * v(0) - v(3) + 1.0; };
    const Estimate g = mc_jensen_gap(m, two_state_policy(), discounted_occupancy_features, affine, 0, 1, 2000, 4);
    CHECK(std::abs(g.mean) < 1e-9);
  }

  TEST_CASE("finite differences of a cubic") {
    const auto f = [](const Vector& x) { return x(0) * x(0) * x(1) + std::pow(x(1), 3); };
    Vector x(2);
    x << 0.7, -1.3;
    const Vector g = finite_difference_gradient(f, x, 1e-5);
    CHECK(g(0) == doctest::Approx(2 * 0.7 * -1.3).epsilon(1e-8));
    CHECK(g(1) == doctest::Approx(0.49 + 3 * 1.69).epsilon(1e-8));
  }

  TEST_CASE("discounted return and direct GAE on hand-worked cases") {
    CHECK(reversed_discounted_return({1.0, 1.0, 1.0}, 0.5) == 1.75);
    CHECK(reversed_discounted_return({3.0, 8.0}, 0.0) == 3.0);
    const std::vector<double> r{1.0, 2.0};
    const std::vector<double> v{0.5, 1.0, 4.0};
    const std::vector<bool> d{false, false};
    const auto a0 = gae_direct(r, v, d, 0.5, 0.0);
    CHECK(a0[0] == 1.0 + 0.5 * 1.0 - 0.5);
    CHECK(a0[1] == 2.0 + 0.5 * 4.0 - 1.0);
    const auto a1 = gae_direct(r, v, d, 0.5, 1.0);
    CHECK(a1[0] == doctest::Approx(1.0 + 0.5 * 2.0 + 0.25 * 4.0 - 0.5));
    // A done flag cuts the bootstrap and the sum.
    const auto cut = gae_direct(r, v, {true, false}, 0.5, 1.0);
    CHECK(cut[0] == 1.0 - 0.5);
  }

  TEST_CASE("naive convolution: hand example and the no-window rule") {
    Matrix x(3, 2);
    x << 1, 2, 3, 4, -5, 6;
    ConvFilter f1{1, Matrix::Ones(1, 2), -1.0};
    ConvFilter f2{2, Matrix::Ones(2, 2), 0.0};
    ConvFilter f3{4, Matrix::Ones(4, 2), 0.0};
    const Vector c = naive_conv_features(x, 3, {f1, f2, f3});
    CHECK(c(0) == 6.0);   // rows: 2, 6, 0 after bias
    CHECK(c(1) == 10.0);  // windows: 10, 8
    CHECK(c(2) == 0.0);   // no window of height 4
    CHECK(naive_conv_features(x, 1, {f2})(0) == 0.0);
  }

  TEST_CASE("Monte Carlo KL is close to the textbook closed form") {
    Vector mu(2), sigma(2);
    mu << 0.5, -1.0;
    sigma << 0.8, 1.3;
    double closed = 0.0;
    for (int i = 0; i < 2; ++i) closed += std::log(1.0 / sigma(i)) + (sigma(i) * sigma(i) + mu(i) * mu(i) - 1.0) / 2.0;
    const Estimate e = gaussian_kl_mc(mu, sigma, 200000, 9);
    CHECK(std::abs(e.mean - closed) <= 4.0 * e.stderr_);
  }

  TEST_CASE("KS and chi-square helpers") {
    std::vector<double> a{0.1, 0.4, 0.7, 0.9};
    CHECK(ks_statistic(a, a) == 0.0);
    CHECK(ks_statistic({0.0, 0.1}, {5.0, 6.0}) == 1.0);
    CHECK(ks_critical(100, 100, 0.05) > ks_critical(1000, 1000, 0.05));
    CHECK(chi_square_uniform({10, 10, 10}) == 0.0);
    CHECK(chi_square_uniform({30, 0, 0}) == doctest::Approx(60.0));
  }

  TEST_CASE("PD controller pushes toward the origin and saturates") {
    Vector s(4);
    s << 0.1, -0.2, 0.0, 0.0;
    const Vector a = point_mass_pd(s);
    CHECK(a(0) < 0.0);
    CHECK(a(1) > 0.0);
    s << 5.0, -5.0, 0.0, 0.0;
    const Vector sat = point_mass_pd(s);
    CHECK(sat(0) == -1.0);
    CHECK(sat(1) == 1.0);
  }
}
