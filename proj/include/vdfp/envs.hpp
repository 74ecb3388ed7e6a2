#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "vdfp/nn/rng.hpp"
#include "vdfp/nn/tensor.hpp"

namespace vdfp::envs {

/// Stepping a finished episode, or similar misuse of the env protocol.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  Vec action_low;
  Vec action_high;
  int max_episode_steps = 1;
  /// Every emitted base reward lies in [reward_low, reward_high].
  double reward_low = 0.0;
  double reward_high = 0.0;
  std::string start_region;

  void validate() const;
  Vec action_center() const { return 0.5 * (action_high + action_low); }
  Vec action_half_range() const { return 0.5 * (action_high - action_low); }
  nlohmann::json to_json() const;
};

struct StepResult {
  Vec next_state;
  double reward = 0.0;
  bool done = false;
};

enum class DelayMode { kNone, kAccumulate, kShift };

struct DelayConfig {
  DelayMode mode = DelayMode::kNone;
  int d = 0;

  void validate() const;
};

std::string to_string(DelayMode mode);
DelayMode parse_delay_mode(std::string_view s);

class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  /// Deterministic in `seed`; zeroes the step counter.
  virtual Vec reset(std::uint64_t seed) = 0;
  /// Out-of-bounds actions are clipped and counted. Throws UsageError when
  /// the episode is already done or reset() was never called.
  virtual StepResult step(const Vec& action) = 0;
  /// Steps taken since the last reset.
  virtual int elapsed_steps() const = 0;
  /// Number of actions that had to be clipped since construction.
  virtual std::int64_t clipped_actions() const = 0;
};

/// Shared bookkeeping for the built-in environments: action clipping,
/// horizon handling and the done-state guard.
class BasicEnv : public Env {
 public:
  explicit BasicEnv(EnvSpec spec);

  const EnvSpec& spec() const override { return spec_; }
  Vec reset(std::uint64_t seed) final;
  StepResult step(const Vec& action) final;
  int elapsed_steps() const override { return steps_; }
  std::int64_t clipped_actions() const override { return clipped_; }

  const Vec& state() const { return state_; }

 protected:
  virtual Vec initial_state(Rng& rng) = 0;
  /// Advances state_ in place under an in-bounds action; returns the reward.
  virtual double advance(Vec& state, const Vec& action) = 0;

 private:
  EnvSpec spec_;
  Vec state_;
  int steps_ = 0;
  bool started_ = false;
  bool done_ = false;
  std::int64_t clipped_ = 0;
};

/// 2-D point mass pushed toward the origin.
/// State (px, py, vx, vy), action = force in [-1, 1]^2, horizon 200.
/// Reward -||p' - goal|| - 0.01 ||a||^2 on the post-step position.
class PointMass2D final : public BasicEnv {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kArena = 2.0;
  static constexpr double kStart = 1.0;
  static constexpr double kMaxSpeed = 2.0;

  PointMass2D();

 protected:
  Vec initial_state(Rng& rng) override;
  double advance(Vec& state, const Vec& action) override;
};

/// 1-D double integrator. State (x, v), action u in [-1, 1], horizon 100.
/// Reward -(x'^2 + 0.1 v'^2 + 0.01 u^2).
class DoubleIntegrator1D final : public BasicEnv {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kLimit = 4.0;
  static constexpr double kStart = 2.0;

  DoubleIntegrator1D();

 protected:
  Vec initial_state(Rng& rng) override;
  double advance(Vec& state, const Vec& action) override;
};

/// Torque-limited pendulum with the classic swing-up cost
/// angle^2 + 0.1 omega^2 + 0.001 u^2 (evaluated before the step).
/// State (cos, sin, omega), torque in [-2, 2], horizon 200.
class PendulumStabilize final : public BasicEnv {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kGravity = 10.0;

  PendulumStabilize();

  double angle() const;

 protected:
  Vec initial_state(Rng& rng) override;
  double advance(Vec& state, const Vec& action) override;

 private:
  // The observation is (cos, sin, omega); the raw angle is tracked separately.
  double theta_ = 0.0;
};

/// Reward-delaying decorator. See DelayConfig for the two protocols.
class DelayedRewardEnv final : public Env {
 public:
  DelayedRewardEnv(std::unique_ptr<Env> inner, DelayConfig cfg);

  const EnvSpec& spec() const override { return inner_->spec(); }
  Vec reset(std::uint64_t seed) override;
  StepResult step(const Vec& action) override;
  int elapsed_steps() const override { return inner_->elapsed_steps(); }
  std::int64_t clipped_actions() const override { return inner_->clipped_actions(); }

  const DelayConfig& config() const { return cfg_; }
  Env& inner() { return *inner_; }

 private:
  std::unique_ptr<Env> inner_;
  DelayConfig cfg_;
  double pending_ = 0.0;
  std::vector<double> queue_;  // shift mode: base rewards not yet emitted
  std::size_t queue_head_ = 0;
};

/// Accumulate: the sum of the last d base rewards is emitted whenever
/// (t+1) mod d == 0, plus any remainder at the terminal step.
/// Shift: step t emits base reward t-d; the terminal step also emits every
/// base reward still outstanding.
std::unique_ptr<Env> wrap_delay(std::unique_ptr<Env> env, const DelayConfig& cfg);

/// Offline version of the wrapper over one complete episode.
std::vector<double> delay_rewards(std::span<const double> base, const DelayConfig& cfg);

std::vector<std::string> env_names();
/// Throws std::invalid_argument for unknown names.
std::unique_ptr<Env> make_env(std::string_view name);
EnvSpec env_spec(std::string_view name);
/// Machine-readable records for every registered env.
nlohmann::json registry_json();

}  // namespace vdfp::envs
