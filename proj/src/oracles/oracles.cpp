#include "oracles/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracles {

void FiniteMDP::validate() const {
  if (n_states < 1 || n_actions < 1 || n_states > 5 || n_actions > 5) {
    throw std::invalid_argument("FiniteMDP: sizes must be in [1, 5]");
  }
  if (static_cast<int>(transition.size()) != n_states * n_actions) {
    throw std::invalid_argument("FiniteMDP: transition table size");
  }
  for (const Vector& row : transition) {
    if (row.size() != n_states) throw std::invalid_argument("FiniteMDP: transition row length");
    if ((row.array() < 0.0).any()) throw std::invalid_argument("FiniteMDP: negative probability");
    if (std::abs(row.sum() - 1.0) > 1e-12) throw std::invalid_argument("FiniteMDP: row does not sum to 1");
  }
  if (reward.rows() != n_states || reward.cols() != n_actions) throw std::invalid_argument("FiniteMDP: reward shape");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("FiniteMDP: gamma outside [0,1]");
  if (horizon < 1) throw std::invalid_argument("FiniteMDP: horizon must be >= 1");
}

FiniteMDP two_state_fixture(int horizon, double gamma) {
  FiniteMDP m;
  m.n_states = 2;
  m.n_actions = 2;
  m.transition.resize(4);
  m.transition[0] = (Vector(2) << 0.7, 0.3).finished();  // s0,a0
  m.transition[1] = (Vector(2) << 0.2, 0.8).finished();  // s0,a1
  m.transition[2] = (Vector(2) << 0.6, 0.4).finished();  // s1,a0
  m.transition[3] = (Vector(2) << 0.1, 0.9).finished();  // s1,a1
  m.reward = Matrix(2, 2);
  m.reward << 1.0, 0.0, -0.5, 2.0;
  m.gamma = gamma;
  m.horizon = horizon;
  m.validate();
  return m;
}

Policy two_state_policy() {
  Policy p(2, 2);
  p << 0.6, 0.4, 0.3, 0.7;
  return p;
}

std::vector<Matrix> exact_q_stages(const FiniteMDP& mdp, const Policy& pi) {
  mdp.validate();
  std::vector<Matrix> stages;
  stages.push_back(Matrix::Zero(mdp.n_states, mdp.n_actions));
  for (int h = 1; h <= mdp.horizon; ++h) {
    const Matrix& prev = stages.back();
    Vector v(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      double acc = 0.0;
      for (int a = 0; a < mdp.n_actions; ++a) acc += pi(s, a) * prev(s, a);
      v(s) = acc;
    }
    Matrix q(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        double expect = 0.0;
        for (int sp = 0; sp < mdp.n_states; ++sp) expect += mdp.next(s, a)(sp) * v(sp);
        q(s, a) = mdp.reward(s, a) + mdp.gamma * expect;
      }
    }
    stages.push_back(q);
  }
  return stages;
}

Matrix exact_q(const FiniteMDP& mdp, const Policy& pi) { return exact_q_stages(mdp, pi).back(); }

namespace {

Matrix policy_transition(const FiniteMDP& mdp, const Policy& pi) {
  const int n = mdp.n_states * mdp.n_actions;
  Matrix p = Matrix::Zero(n, n);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int sp = 0; sp < mdp.n_states; ++sp) {
        for (int ap = 0; ap < mdp.n_actions; ++ap) {
          p(s * mdp.n_actions + a, sp * mdp.n_actions + ap) = mdp.next(s, a)(sp) * pi(sp, ap);
        }
      }
    }
  }
  return p;
}

int sample_categorical(const Eigen::Ref<const Vector>& probs, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(gen);
  double c = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    c += probs(i);
    if (x < c) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

Matrix analytic_occupancy(const FiniteMDP& mdp, const Policy& pi) {
  const int n = mdp.n_states * mdp.n_actions;
  const Matrix a = Matrix::Identity(n, n) - mdp.gamma * policy_transition(mdp, pi);
  return a.fullPivLu().solve(Matrix::Identity(n, n));
}

Matrix analytic_q(const FiniteMDP& mdp, const Policy& pi) {
  const int n = mdp.n_states * mdp.n_actions;
  Vector r(n);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) r(s * mdp.n_actions + a) = mdp.reward(s, a);
  }
  const Matrix a = Matrix::Identity(n, n) - mdp.gamma * policy_transition(mdp, pi);
  const Vector q = a.fullPivLu().solve(r);
  Matrix out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int b = 0; b < mdp.n_actions; ++b) out(s, b) = q(s * mdp.n_actions + b);
  }
  return out;
}

Rollout rollout(const FiniteMDP& mdp, const Policy& pi, int s, int a, std::mt19937_64& gen) {
  Rollout r;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int t = 0; t < mdp.horizon; ++t) {
    r.states.push_back(s);
    r.actions.push_back(a);
    double reward = mdp.reward(s, a);
    if (mdp.reward_noise > 0.0) reward += mdp.reward_noise * noise(gen);
    r.rewards.push_back(reward);
    s = sample_categorical(mdp.next(s, a), gen);
    a = sample_categorical(pi.row(s).transpose(), gen);
  }
  return r;
}

Estimate mc_q_estimate(const FiniteMDP& mdp, const Policy& pi, int s, int a, int n_rollouts, std::uint64_t seed) {
  if (n_rollouts < 1) throw std::invalid_argument("mc_q_estimate: n_rollouts must be >= 1");
  std::mt19937_64 gen(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n_rollouts; ++i) {
    const Rollout r = rollout(mdp, pi, s, a, gen);
    double g = 0.0;
    double disc = 1.0;
    for (double x : r.rewards) {
      g += disc * x;
      disc *= mdp.gamma;
    }
    sum += g;
    sum_sq += g * g;
  }
  const double n = n_rollouts;
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

Vector discounted_occupancy_features(const FiniteMDP& mdp, const Rollout& r) {
  Vector m = Vector::Zero(mdp.n_states * mdp.n_actions);
  double disc = 1.0;
  for (std::size_t t = 0; t < r.states.size(); ++t) {
    m(r.states[t] * mdp.n_actions + r.actions[t]) += disc;
    disc *= mdp.gamma;
  }
  return m;
}

VectorEstimate mc_repr_expectation(const FiniteMDP& mdp, const Policy& pi, const FeatureMap& f, int s, int a,
                                   int n_rollouts, std::uint64_t seed) {
  if (n_rollouts < 1) throw std::invalid_argument("mc_repr_expectation: n_rollouts must be >= 1");
  std::mt19937_64 gen(seed);
  Vector sum;
  Vector sum_sq;
  for (int i = 0; i < n_rollouts; ++i) {
    const Vector m = f(mdp, rollout(mdp, pi, s, a, gen));
    if (i == 0) {
      sum = Vector::Zero(m.size());
      sum_sq = Vector::Zero(m.size());
    }
    sum += m;
    sum_sq += m.cwiseProduct(m);
  }
  const double n = n_rollouts;
  VectorEstimate e;
  e.mean = sum / n;
  if (n > 1) {
    const Vector var = ((sum_sq - n * e.mean.cwiseProduct(e.mean)) / (n - 1)).cwiseMax(0.0);
    e.stderr_ = (var / n).cwiseSqrt();
  } else {
    e.stderr_ = Vector::Zero(sum.size());
  }
  return e;
}

Estimate mc_jensen_gap(const FiniteMDP& mdp, const Policy& pi, const FeatureMap& f,
                       const std::function<double(const Vector&)>& U, int s, int a, int n_rollouts,
                       std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Vector msum;
  double usum = 0.0;
  double usq = 0.0;
  for (int i = 0; i < n_rollouts; ++i) {
    const Vector m = f(mdp, rollout(mdp, pi, s, a, gen));
    if (i == 0) msum = Vector::Zero(m.size());
    msum += m;
    const double u = U(m);
    usum += u;
    usq += u * u;
  }
  const double n = n_rollouts;
  const double umean = usum / n;
  const double var = n > 1 ? std::max(0.0, (usq - n * umean * umean) / (n - 1)) : 0.0;
  return {umean - U(msum / n), std::sqrt(var / n)};
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be positive");
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const double up = f(probe);
    probe(i) = x(i) - step;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2.0 * step);
  }
  return g;
}

double reversed_discounted_return(const std::vector<double>& rewards, double gamma) {
  double g = 0.0;
  for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) g = *it + gamma * g;
  return g;
}

std::vector<double> gae_direct(const std::vector<double>& rewards, const std::vector<double>& values,
                               const std::vector<bool>& dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) throw std::invalid_argument("gae_direct: size mismatch");
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = dones[t] ? 0.0 : values[t + 1];
    delta[t] = rewards[t] + gamma * next - values[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      adv[t] += w * delta[l];
      if (dones[l]) break;
      w *= gamma * lambda;
    }
  }
  return adv;
}

Vector naive_conv_features(const Matrix& x, int length, const std::vector<ConvFilter>& filters) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(filters.size()));
  for (std::size_t f = 0; f < filters.size(); ++f) {
    const ConvFilter& filt = filters[f];
    bool any = false;
    double best = 0.0;
    for (int j = 0; j + filt.height <= length; ++j) {
      double z = filt.bias;
      for (int r = 0; r < filt.height; ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) z += filt.weight(r, c) * x(j + r, c);
      }
      z = std::max(z, 0.0);
      if (!any || z > best) best = z;
      any = true;
    }
    out(static_cast<Eigen::Index>(f)) = any ? best : 0.0;
  }
  return out;
}

Estimate gaussian_kl_mc(const Vector& mu, const Vector& sigma, int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double log_ratio = 0.0;
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
      const double e = normal(gen);
      const double z = mu(k) + sigma(k) * e;
      // log q(z) - log p(z); the 2 pi terms cancel.
      log_ratio += -std::log(sigma(k)) - 0.5 * e * e + 0.5 * z * z;
    }
    sum += log_ratio;
    sum_sq += log_ratio * log_ratio;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1));
  return {mean, std::sqrt(var / n)};
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_critical(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  return c * std::sqrt((dn + dm) / (dn * dm));
}

double chi_square_uniform(const std::vector<std::int64_t>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double chi = 0.0;
  for (auto c : counts) {
    const double diff = static_cast<double>(c) - expected;
    chi += diff * diff / expected;
  }
  return chi;
}

Vector point_mass_pd(const Vector& state, double kp, double kd) {
  const Eigen::Index half = state.size() / 2;
  Vector a(half);
  for (Eigen::Index i = 0; i < half; ++i) {
    a(i) = std::clamp(-kp * state(i) - kd * state(half + i), -1.0, 1.0);
  }
  return a;
}

}  // namespace oracles
