#include "vdfp/envs.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <numbers>

namespace vdfp::envs {

void EnvSpec::validate() const {
  if (state_dim <= 0 || action_dim <= 0) throw std::invalid_argument(name + ": dimensions must be positive");
  if (action_low.size() != action_dim || action_high.size() != action_dim) {
    throw std::invalid_argument(name + ": action bounds have wrong length");
  }
  for (int i = 0; i < action_dim; ++i) {
    if (!std::isfinite(action_low[i]) || !std::isfinite(action_high[i]) || !(action_low[i] < action_high[i])) {
      throw std::invalid_argument(name + ": action bounds must be finite with low < high");
    }
  }
  if (max_episode_steps < 1) throw std::invalid_argument(name + ": max_episode_steps must be >= 1");
}

nlohmann::json EnvSpec::to_json() const {
  return {
      {"name", name},
      {"state_dim", state_dim},
      {"action_dim", action_dim},
      {"action_low", std::vector<double>(action_low.data(), action_low.data() + action_low.size())},
      {"action_high", std::vector<double>(action_high.data(), action_high.data() + action_high.size())},
      {"max_episode_steps", max_episode_steps},
      {"reward_low", reward_low},
      {"reward_high", reward_high},
      {"start_region", start_region},
  };
}

void DelayConfig::validate() const {
  if (d < 0) throw std::invalid_argument("delay: d must be nonnegative");
  if (mode != DelayMode::kNone && d < 1) throw std::invalid_argument("delay: d must be >= 1 when a delay mode is set");
}

std::string to_string(DelayMode mode) {
  switch (mode) {
    case DelayMode::kNone:
      return "none";
    case DelayMode::kAccumulate:
      return "accumulate";
    case DelayMode::kShift:
      return "shift";
  }
  return "none";
}

DelayMode parse_delay_mode(std::string_view s) {
  if (s == "none") return DelayMode::kNone;
  if (s == "accumulate") return DelayMode::kAccumulate;
  if (s == "shift") return DelayMode::kShift;
  throw std::invalid_argument("unknown delay mode '" + std::string(s) + "'");
}

// ---- BasicEnv ---------------------------------------------------------------

BasicEnv::BasicEnv(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Vec BasicEnv::reset(std::uint64_t seed) {
  Rng rng(seed);
  state_ = initial_state(rng);
  steps_ = 0;
  started_ = true;
  done_ = false;
  return state_;
}

StepResult BasicEnv::step(const Vec& action) {
  if (!started_) throw UsageError(spec_.name + ": step() before reset()");
  if (done_) throw UsageError(spec_.name + ": step() on a finished episode");
  if (action.size() != spec_.action_dim) throw std::invalid_argument(spec_.name + ": action has wrong dimension");

  Vec a = action;
  bool clipped = false;
  for (int i = 0; i < spec_.action_dim; ++i) {
    if (!std::isfinite(a[i])) throw std::invalid_argument(spec_.name + ": non-finite action");
    if (a[i] < spec_.action_low[i] || a[i] > spec_.action_high[i]) {
      a[i] = std::clamp(a[i], spec_.action_low[i], spec_.action_high[i]);
      clipped = true;
    }
  }
  if (clipped) ++clipped_;

  StepResult r;
  r.reward = advance(state_, a);
  ++steps_;
  done_ = steps_ >= spec_.max_episode_steps;
  r.done = done_;
  r.next_state = state_;
  return r;
}

// ---- PointMass2D ----------------------------------------------------------

namespace {

EnvSpec point_mass_spec() {
  EnvSpec s;
  s.name = "point_mass_2d";
  s.state_dim = 4;
  s.action_dim = 2;
  s.action_low = Vec::Constant(2, -1.0);
  s.action_high = Vec::Constant(2, 1.0);
  s.max_episode_steps = 200;
  s.reward_low = -(std::sqrt(2.0) * PointMass2D::kArena) - 0.01 * 2.0;
  s.reward_high = 0.0;
  s.start_region = "position uniform in [-1,1]^2, velocity 0; goal at the origin; arena [-2,2]^2";
  return s;
}

EnvSpec double_integrator_spec() {
  EnvSpec s;
  s.name = "double_integrator_1d";
  s.state_dim = 2;
  s.action_dim = 1;
  s.action_low = Vec::Constant(1, -1.0);
  s.action_high = Vec::Constant(1, 1.0);
  s.max_episode_steps = 100;
  constexpr double lim = DoubleIntegrator1D::kLimit;
  s.reward_low = -(lim * lim + 0.1 * lim * lim + 0.01);
  s.reward_high = 0.0;
  s.start_region = "x uniform in [-2,2], v = 0; state clamped to [-4,4]^2";
  return s;
}

EnvSpec pendulum_spec() {
  EnvSpec s;
  s.name = "pendulum_stabilize";
  s.state_dim = 3;
  s.action_dim = 1;
  s.action_low = Vec::Constant(1, -PendulumStabilize::kMaxTorque);
  s.action_high = Vec::Constant(1, PendulumStabilize::kMaxTorque);
  s.max_episode_steps = 200;
  constexpr double w = PendulumStabilize::kMaxSpeed;
  constexpr double u = PendulumStabilize::kMaxTorque;
  s.reward_low = -(std::numbers::pi * std::numbers::pi + 0.1 * w * w + 0.001 * u * u);
  s.reward_high = 0.0;
  s.start_region = "angle uniform in [-pi,pi], angular velocity uniform in [-1,1]";
  return s;
}

}  // namespace

PointMass2D::PointMass2D() : BasicEnv(point_mass_spec()) {}

Vec PointMass2D::initial_state(Rng& rng) {
  Vec s = Vec::Zero(4);
  s[0] = rng.uniform(-kStart, kStart);
  s[1] = rng.uniform(-kStart, kStart);
  return s;
}

double PointMass2D::advance(Vec& s, const Vec& a) {
  for (int i = 0; i < 2; ++i) {
    double v = std::clamp(s[2 + i] + kDt * a[i], -kMaxSpeed, kMaxSpeed);
    double p = s[i] + kDt * v;
    if (p > kArena || p < -kArena) {
      p = std::clamp(p, -kArena, kArena);
      v = 0.0;
    }
    s[i] = p;
    s[2 + i] = v;
  }
  return -s.head<2>().norm() - 0.01 * a.squaredNorm();
}

// ---- DoubleIntegrator1D ------------------------------------------------------

DoubleIntegrator1D::DoubleIntegrator1D() : BasicEnv(double_integrator_spec()) {}

Vec DoubleIntegrator1D::initial_state(Rng& rng) {
  Vec s = Vec::Zero(2);
  s[0] = rng.uniform(-kStart, kStart);
  return s;
}

double DoubleIntegrator1D::advance(Vec& s, const Vec& a) {
  const double u = a[0];
  const double v = std::clamp(s[1] + kDt * u, -kLimit, kLimit);
  const double x = std::clamp(s[0] + kDt * v, -kLimit, kLimit);
  s[0] = x;
  s[1] = v;
  return -(x * x + 0.1 * v * v + 0.01 * u * u);
}

// ---- PendulumStabilize -------------------------------------------------------

PendulumStabilize::PendulumStabilize() : BasicEnv(pendulum_spec()) {}

double PendulumStabilize::angle() const { return std::atan2(state()[1], state()[0]); }

Vec PendulumStabilize::initial_state(Rng& rng) {
  theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const double omega = rng.uniform(-1.0, 1.0);
  Vec s(3);
  s << std::cos(theta_), std::sin(theta_), omega;
  return s;
}

double PendulumStabilize::advance(Vec& s, const Vec& a) {
  const double u = a[0];
  const double omega = s[2];
  const double wrapped = std::remainder(theta_, 2.0 * std::numbers::pi);
  const double cost = wrapped * wrapped + 0.1 * omega * omega + 0.001 * u * u;

  // Unit mass and length: theta'' = 3g/2 sin(theta) + 3u.
  double next_omega = omega + (1.5 * kGravity * std::sin(theta_) + 3.0 * u) * kDt;
  next_omega = std::clamp(next_omega, -kMaxSpeed, kMaxSpeed);
  theta_ += next_omega * kDt;
  s << std::cos(theta_), std::sin(theta_), next_omega;
  return -cost;
}

// ---- delay wrapper -------------------------------------------------------------

DelayedRewardEnv::DelayedRewardEnv(std::unique_ptr<Env> inner, DelayConfig cfg)
    : inner_(std::move(inner)), cfg_(cfg) {
  if (!inner_) throw std::invalid_argument("wrap_delay: null env");
  cfg_.validate();
}

Vec DelayedRewardEnv::reset(std::uint64_t seed) {
  pending_ = 0.0;
  queue_.clear();
  queue_head_ = 0;
  return inner_->reset(seed);
}

StepResult DelayedRewardEnv::step(const Vec& action) {
  const int t = inner_->elapsed_steps();
  StepResult r = inner_->step(action);
  const double base = r.reward;
  switch (cfg_.mode) {
    case DelayMode::kNone:
      break;
    case DelayMode::kAccumulate: {
      pending_ += base;
      if ((t + 1) % cfg_.d == 0 || r.done) {
        r.reward = pending_;
        pending_ = 0.0;
      } else {
        r.reward = 0.0;
      }
      break;
    }
    case DelayMode::kShift: {
      queue_.push_back(base);
      double emitted = 0.0;
      if (t >= cfg_.d) emitted = queue_[queue_head_++];
      if (r.done) {
        while (queue_head_ < queue_.size()) emitted += queue_[queue_head_++];
      }
      r.reward = emitted;
      break;
    }
  }
  return r;
}

std::unique_ptr<Env> wrap_delay(std::unique_ptr<Env> env, const DelayConfig& cfg) {
  return std::make_unique<DelayedRewardEnv>(std::move(env), cfg);
}

std::vector<double> delay_rewards(std::span<const double> base, const DelayConfig& cfg) {
  cfg.validate();
  const std::size_t n = base.size();
  std::vector<double> out(n, 0.0);
  if (cfg.mode == DelayMode::kNone) {
    out.assign(base.begin(), base.end());
    return out;
  }
  const auto d = static_cast<std::size_t>(cfg.d);
  if (cfg.mode == DelayMode::kAccumulate) {
    double pending = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      pending += base[t];
      if ((t + 1) % d == 0 || t + 1 == n) {
        out[t] = pending;
        pending = 0.0;
      }
    }
    return out;
  }
  std::size_t next = 0;  // first base reward not yet emitted
  for (std::size_t t = 0; t < n; ++t) {
    if (t >= d) out[t] = base[next++];
    if (t + 1 == n) {
      while (next < n) out[t] += base[next++];
    }
  }
  return out;
}

// ---- registry -------------------------------------------------------------------

namespace {

const std::map<std::string, std::function<std::unique_ptr<Env>()>, std::less<>>& factories() {
  static const std::map<std::string, std::function<std::unique_ptr<Env>()>, std::less<>> f = {
      {"point_mass_2d", [] { return std::make_unique<PointMass2D>(); }},
      {"double_integrator_1d", [] { return std::make_unique<DoubleIntegrator1D>(); }},
      {"pendulum_stabilize", [] { return std::make_unique<PendulumStabilize>(); }},
  };
  return f;
}

}  // namespace

std::vector<std::string> env_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : factories()) names.push_back(name);
  return names;
}

std::unique_ptr<Env> make_env(std::string_view name) {
  const auto it = factories().find(name);
  if (it == factories().end()) throw std::invalid_argument("unknown env '" + std::string(name) + "'");
  return it->second();
}

EnvSpec env_spec(std::string_view name) { return make_env(name)->spec(); }

nlohmann::json registry_json() {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& name : env_names()) j.push_back(env_spec(name).to_json());
  return j;
}

}  // namespace vdfp::envs
