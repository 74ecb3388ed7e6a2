#pragma once

// Brute-force reference implementations used by the test suites.
//
// Nothing here includes or links the vdfp library: every routine is a
// second, deliberately naive implementation written against plain Eigen
// types and std::mt19937_64 so that agreement with the main code is
// meaningful.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---- finite MDPs ---------------------------------------------------------------

struct FiniteMDP {
  int n_states = 0;
  int n_actions = 0;
  /// transition[s * n_actions + a](s') = P(s' | s, a)
  std::vector<Vector> transition;
  Matrix reward;  // n_states x n_actions, expected immediate reward
  /// Optional reward noise: r = reward(s,a) + reward_noise * N(0,1).
  double reward_noise = 0.0;
  double gamma = 0.9;
  int horizon = 1;

  const Vector& next(int s, int a) const { return transition[static_cast<std::size_t>(s * n_actions + a)]; }
  /// Throws std::invalid_argument unless sizes are consistent, sizes are at
  /// most 5 and every row sums to 1 within 1e-12.
  void validate() const;
};

/// pi(a | s), rows sum to one.
using Policy = Matrix;

/// Two states, two actions, stochastic transitions. Used by the Lemma 1 and
/// baseline fixed-point checks.
FiniteMDP two_state_fixture(int horizon, double gamma);
/// A stochastic policy with full support for two_state_fixture.
Policy two_state_policy();

/// Finite-horizon Q by backward induction: returns Q_T where
/// Q_h(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) sum_a' pi(a'|s') Q_{h-1}(s',a'),
/// Q_0 = 0.
Matrix exact_q(const FiniteMDP& mdp, const Policy& pi);
/// All stages Q_0..Q_T for recursion checks.
std::vector<Matrix> exact_q_stages(const FiniteMDP& mdp, const Policy& pi);

/// Infinite-horizon Q^pi from (I - gamma P_pi) q = r over state-action pairs.
Matrix analytic_q(const FiniteMDP& mdp, const Policy& pi);
/// Infinite-horizon discounted state-action occupancy
/// M = (I - gamma P_pi)^-1, row (s*nA + a).
Matrix analytic_occupancy(const FiniteMDP& mdp, const Policy& pi);

struct Rollout {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
};

/// One horizon-long rollout starting from (s, a), following pi afterwards.
Rollout rollout(const FiniteMDP& mdp, const Policy& pi, int s, int a, std::mt19937_64& gen);

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Estimate mc_q_estimate(const FiniteMDP& mdp, const Policy& pi, int s, int a, int n_rollouts,
                       std::uint64_t seed);

using FeatureMap = std::function<Vector(const FiniteMDP&, const Rollout&)>;

/// sum_t gamma^t e_{(s_t, a_t)}, length n_states * n_actions.
Vector discounted_occupancy_features(const FiniteMDP& mdp, const Rollout& r);

struct VectorEstimate {
  Vector mean;
  Vector stderr_;
};

VectorEstimate mc_repr_expectation(const FiniteMDP& mdp, const Policy& pi, const FeatureMap& f, int s, int a,
                                   int n_rollouts, std::uint64_t seed);

/// Jensen gap check for a scalar function of the features: returns
/// mean_i U(m_i) - U(mean_i m_i) and the standard error of mean_i U(m_i).
Estimate mc_jensen_gap(const FiniteMDP& mdp, const Policy& pi, const FeatureMap& f,
                       const std::function<double(const Vector&)>& U, int s, int a, int n_rollouts,
                       std::uint64_t seed);

// ---- calculus ------------------------------------------------------------------

/// Central differences, one coordinate at a time.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double step);

// ---- sequences -------------------------------------------------------------------

/// G = r_k; G = r_i + gamma G for i = k-1 .. 0.
double reversed_discounted_return(const std::vector<double>& rewards, double gamma);

/// A_t = sum_l (gamma lambda)^l delta_{t+l} by an explicit double sum, with
/// delta_t = r_t + gamma (1 - done_t) V_{t+1} - V_t. `values` has one more
/// entry than `rewards` (the bootstrap value after the last step).
std::vector<double> gae_direct(const std::vector<double>& rewards, const std::vector<double>& values,
                               const std::vector<bool>& dones, double gamma, double lambda);

// ---- convolution ---------------------------------------------------------------------

struct ConvFilter {
  int height = 1;
  Matrix weight;  // height x width
  double bias = 0.0;
};

/// For each filter: max(0, max over windows fully inside rows[0, length) of
/// sum_{r,c} weight(r,c) * x(j+r, c) + bias), or 0 with no window.
Vector naive_conv_features(const Matrix& x, int length, const std::vector<ConvFilter>& filters);

// ---- distributions -------------------------------------------------------------------

/// Monte Carlo KL(N(mu, diag sigma^2) || N(0, I)) via the log-density ratio.
Estimate gaussian_kl_mc(const Vector& mu, const Vector& sigma, int n, std::uint64_t seed);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b);
/// Critical value at level alpha (asymptotic).
double ks_critical(std::size_t n, std::size_t m, double alpha);

/// Pearson chi-square statistic of counts against a uniform expectation.
double chi_square_uniform(const std::vector<std::int64_t>& counts);

// ---- control -------------------------------------------------------------------------

/// PD controller for a point mass with state (p, v): a = clip(-kp p - kd v, -1, 1).
Vector point_mass_pd(const Vector& state, double kp = 2.0, double kd = 2.5);

}  // namespace oracles
