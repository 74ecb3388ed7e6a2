#pragma once

#include <cstdint>
#include <vector>

#include "vdfp/dynamics.hpp"
#include "vdfp/envs.hpp"
#include "vdfp/nn/adam.hpp"
#include "vdfp/nn/layers.hpp"
#include "vdfp/returnmodel.hpp"

namespace vdfp::agents {

/// pi_theta(s) = center + half_range * tanh(net(s)), net = S -> 200 -> 100 -> A.
class DeterministicActor {
 public:
  DeterministicActor() = default;
  DeterministicActor(const std::string& name, const envs::EnvSpec& spec, const std::vector<int>& hidden,
                     Rng& init);

  nn::Var operator()(nn::Tape& tape, nn::Var states);
  Mat forward(const Mat& states);
  Vec action(const Vec& s);
  /// pi(s) + N(0, (sigma * half_range)^2), clipped to the bounds.
  Vec explore(const Vec& s, double sigma, Rng& rng);
  Vec random_action(Rng& rng) const;

  nn::Mlp& net() { return net_; }
  nn::ParamList params() { return net_.params(); }
  const Vec& low() const { return low_; }
  const Vec& high() const { return high_; }

 private:
  nn::Mlp net_;
  RowVec center_;
  RowVec half_;
  Vec low_;
  Vec high_;
};

/// Diagonal Gaussian policy with a state-independent log std.
/// The mean uses the same tanh-scaled network as DeterministicActor.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(const envs::EnvSpec& spec, const std::vector<int>& hidden, double init_log_std, Rng& init);

  nn::Var mean(nn::Tape& tape, nn::Var states) { return actor_(tape, states); }
  /// log pi(a|s) per row, (B x 1).
  nn::Var log_prob(nn::Tape& tape, nn::Var states, const Mat& actions);
  /// Raw (unclipped) sample; the environment clips.
  Vec sample(const Vec& s, Rng& rng);
  Vec mean_action(const Vec& s) { return actor_.action(s); }

  nn::Parameter& log_std() { return log_std_; }
  DeterministicActor& actor() { return actor_; }
  nn::ParamList params();

 private:
  DeterministicActor actor_;
  nn::Parameter log_std_;
};

/// Q(s, a): S -> 200, [h, a] -> 100, -> 1 (action enters at the second layer).
class QCritic {
 public:
  QCritic() = default;
  QCritic(const std::string& name, int state_dim, int action_dim, const std::vector<int>& hidden, Rng& init);

  nn::Var operator()(nn::Tape& tape, nn::Var states, nn::Var actions);
  Vec evaluate(const Mat& states, const Mat& actions);
  nn::ParamList params();

 private:
  nn::Linear l1_;
  nn::Linear l2_;
  nn::Linear out_;
};

/// Flat FIFO of transitions for the TD baselines.
class TransitionBuffer {
 public:
  explicit TransitionBuffer(std::int64_t capacity = 100000) : capacity_(capacity) {}

  void add(const Vec& s, const Vec& a, double r, const Vec& s2, bool terminal);
  std::int64_t size() const { return size_; }
  std::int64_t capacity() const { return capacity_; }

  struct Batch {
    Mat s;
    Mat a;
    Vec r;
    Mat s2;
    Vec not_terminal;
  };
  Batch sample(int n, Rng& rng) const;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(capacity_, size_, next_, s_, a_, r_, s2_, nt_);
  }

 private:
  std::int64_t capacity_;
  std::int64_t size_ = 0;
  std::int64_t next_ = 0;
  Mat s_;
  Mat a_;
  Vec r_;
  Mat s2_;
  Vec nt_;
};

/// One TD step for a Q critic: y = r + gamma * nt * Q_target(s2, a2);
/// returns the pre-step mean squared TD error.
double q_td_step(QCritic& critic, QCritic& target, nn::Adam& opt, const TransitionBuffer::Batch& b,
                 const Mat& next_actions, double gamma);

/// psi(phi): the successor-representation network, repr -> 200 -> 100 -> repr.
/// One TD step towards phi + gamma * nt * psi_target(phi2); returns the
/// pre-step loss (mean over the batch of the squared error norm).
double sr_td_step(nn::Mlp& sr, nn::Mlp& sr_target, nn::Adam& opt, const Mat& phi, const Mat& phi_next,
                  const Vec& not_terminal, double gamma);

/// Generalised advantage estimates by the backward recursion
/// A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}.
/// `values` carries one bootstrap entry after the last step.
std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<bool>& dones, double gamma, double lambda);

/// VD-PPO advantage before normalisation: sampled return minus V(s).
Vec return_advantages(const Vec& returns, const Vec& values);

/// PPO clipped surrogate per sample: min(ratio * A, clip(ratio, 1-eps, 1+eps) * A).
nn::Var clipped_surrogate(nn::Var ratio, const Mat& advantages, double eps);

/// Per-sample U(P(s_i, pi(s_i), eps_i)), (B x 1).
nn::Var vdfp_values(nn::Tape& tape, DeterministicActor& actor, dynamics::ConditionalVAE& vae, ret::ReturnHead& head,
                    const Mat& states, const Mat& eps);

/// Value-decomposed policy objective mean_i U(P(s_i, pi(s_i), eps_i)), with
/// the latent noise eps fixed. Returns the objective node on `tape`.
nn::Var vdfp_objective(nn::Tape& tape, DeterministicActor& actor, dynamics::ConditionalVAE& vae,
                       ret::ReturnHead& head, const Mat& states, const Mat& eps);

/// Gradient of vdfp_objective w.r.t. the actor parameters, flattened in
/// actor.params() order. VAE and head parameters are left untouched,
/// gradients included.
Vec vdfp_policy_gradient(DeterministicActor& actor, dynamics::ConditionalVAE& vae, ret::ReturnHead& head,
                         const Mat& states, const Mat& eps);

}  // namespace vdfp::agents
