#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "vdfp/dynamics.hpp"
#include "vdfp/envs.hpp"
#include "vdfp/nn/autodiff.hpp"
#include "vdfp/repr.hpp"
#include "vdfp/returnmodel.hpp"

namespace cereal {
class BinaryOutputArchive;
class BinaryInputArchive;
}  // namespace cereal

namespace vdfp::agents {

enum class AgentKind { kVdDdpg, kVdPpo, kDdpg, kPpo, kDdsr };

std::string to_string(AgentKind k);
AgentKind parse_agent_kind(std::string_view s);
std::vector<std::string> agent_names();
bool is_on_policy(AgentKind k);

/// Hyperparameters shared by every agent; fields that do not apply to an
/// agent are ignored by it. Use defaults_for() for the per-agent values.
struct AgentConfig {
  double gamma = 0.99;
  double actor_lr = 2.5e-4;
  double critic_lr = 1e-3;  // VAE, SR network, Q or V network
  double return_lr = 5e-4;  // return model, or DDSR reward vector
  int batch_size = 64;
  std::int64_t buffer_steps = 100000;
  /// Exploration std as a fraction of each action half-range.
  double exploration_sigma = 0.1;
  double target_update = 1e-3;
  std::int64_t collect_steps = 5000;
  std::int64_t pretrain_steps = 15000;
  int return_every_pretrain = 10;
  int return_every = 50;
  int max_len = 64;
  std::vector<int> actor_hidden{200, 100};
  std::vector<int> critic_hidden{200, 100};
  /// Abort when the batch mean |value estimate| exceeds this.
  double divergence_bound = 1e6;

  // on-policy
  double gae_lambda = 0.95;
  double ppo_clip = 0.2;
  int ppo_epochs = 10;
  int update_every_episodes = 5;
  double init_log_std = -0.5;
  /// VD-PPO: VAE passes over the update batch per epoch, and their minibatch size.
  int vae_passes = 4;
  int vae_batch = 64;

  /// VD-DDPG ablation: replace the VAE by the deterministic MLP predictor.
  bool mlp_dynamics = false;

  repr::ReprConfig repr;
  ret::ReturnModelConfig ret;
  dynamics::VAEConfig vae;

  void validate() const;
};

/// Table defaults per agent (learning rates, batch sizes, collection phase).
AgentConfig defaults_for(AgentKind kind);

/// Per-episode training diagnostics; NaN where not applicable or not updated.
struct StepLosses {
  double recon_loss = std::numeric_limits<double>::quiet_NaN();
  double kl_loss = std::numeric_limits<double>::quiet_NaN();
  double return_loss = std::numeric_limits<double>::quiet_NaN();
  double actor_objective = std::numeric_limits<double>::quiet_NaN();
};

/// Running means of the losses reported since the last take().
class LossAccumulator {
 public:
  void add_recon(double v) { add(0, v); }
  void add_kl(double v) { add(1, v); }
  void add_return(double v) { add(2, v); }
  void add_actor(double v) { add(3, v); }
  StepLosses take();

  template <class Archive>
  void serialize(Archive& ar) {
    ar(sum_, count_);
  }

 private:
  void add(int i, double v) {
    sum_[static_cast<std::size_t>(i)] += v;
    ++count_[static_cast<std::size_t>(i)];
  }
  std::vector<double> sum_ = std::vector<double>(4, 0.0);
  std::vector<std::int64_t> count_ = std::vector<std::int64_t>(4, 0);
};

/// Structural summary used to check that the off-policy agents differ only
/// in their critics.
struct AgentDescription {
  std::string name;
  std::vector<int> actor_widths;
  std::string actor_output;  // e.g. "tanh-scaled"
  double exploration_sigma = 0.0;
  std::int64_t collect_steps = 0;
  std::string critic;
  bool has_target_networks = false;
  std::vector<std::string> parameter_names;

  nlohmann::json to_json() const;
};

/// A learning agent driven one environment step at a time.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual AgentKind kind() const = 0;
  std::string name() const { return to_string(kind()); }

  /// Action for state s. With explore=true this is the behaviour action
  /// (noise, random collection, or a policy sample); explore=false is the
  /// deterministic/mean action.
  virtual Vec act(const Vec& s, bool explore) = 0;

  /// Feeds back one transition and runs whatever updates are scheduled at
  /// this step. `terminal` is true only for a true environment termination
  /// (not a horizon cut).
  virtual void observe(const Vec& s, const Vec& a, double reward, const Vec& next_state, bool done,
                       bool terminal) = 0;

  /// Losses accumulated since the previous call.
  StepLosses take_losses() { return losses_.take(); }

  virtual AgentDescription describe() = 0;
  /// Every trainable (and target) parameter, in a stable order.
  virtual nn::ParamList parameters() = 0;

  virtual void save(cereal::BinaryOutputArchive& ar) = 0;
  virtual void load(cereal::BinaryInputArchive& ar) = 0;

  std::int64_t steps_observed() const { return steps_; }

 protected:
  LossAccumulator losses_;
  std::int64_t steps_ = 0;
};

/// Builds an agent for an environment; every random stream derives from `seed`.
std::unique_ptr<Agent> make_agent(AgentKind kind, const envs::EnvSpec& spec, const AgentConfig& cfg,
                                  std::uint64_t seed);

}  // namespace vdfp::agents
