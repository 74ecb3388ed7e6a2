// Value-decomposed DDPG: actor trained through U(P(s, pi(s), eps_g)).

#include <cmath>

#include "detail.hpp"

namespace vdfp::agents::detail {

namespace {

class VdDdpgAgent final : public Agent {
 public:
  VdDdpgAgent(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed)
      : spec_(spec), cfg_(cfg), buffer_(cfg.buffer_steps) {
    const Rng master(seed);
    Rng init = master.split("init");
    explore_ = master.split("explore");
    sample_ = master.split("sample");
    dropout_ = master.split("dropout");
    vae_noise_ = master.split("vae_noise");
    eps_ = master.split("eps_g");

    const int feat = spec.state_dim + spec.action_dim;
    actor_ = DeterministicActor("actor", spec, cfg.actor_hidden, init);
    actor_opt_ = nn::Adam(cfg.actor_lr);
    ret::ReturnModelConfig rc = cfg.ret;
    rc.lr = cfg.return_lr;
    returns_ = ret::ReturnModel(cfg.repr, rc, feat, init);
    if (cfg.mlp_dynamics) {
      mlp_ = dynamics::MlpPredictor(feat, cfg.repr.repr_dim, init, cfg.critic_lr);
    } else {
      dynamics::VAEConfig vc = cfg.vae;
      vc.lr = cfg.critic_lr;
      vae_ = dynamics::ConditionalVAE(vc, feat, cfg.repr.repr_dim, init);
    }
  }

  AgentKind kind() const override { return AgentKind::kVdDdpg; }

  Vec act(const Vec& s, bool explore) override {
    if (!explore) return actor_.action(s);
    if (steps_ < cfg_.collect_steps) return actor_.random_action(explore_);
    return actor_.explore(s, cfg_.exploration_sigma, explore_);
  }

  void observe(const Vec& s, const Vec& a, double reward, const Vec&, bool done, bool) override {
    episode_.push_back({s, a, reward});
    ++steps_;
    if (done) {
      buffer_.store_episode(episode_);
      episode_.clear();
    }
    const std::int64_t t = steps_;
    if (buffer_.empty() || t <= cfg_.collect_steps) return;
    const bool pretraining = t <= cfg_.collect_steps + cfg_.pretrain_steps;
    const int every = pretraining ? cfg_.return_every_pretrain : cfg_.return_every;
    if (t % every == 0) train_return();
    const auto segs = buffer_.sample_segments(cfg_.batch_size, cfg_.max_len, sample_);
    const Mat anchors = anchor_rows(segs);
    train_dynamics(segs, anchors);
    if (!pretraining) train_actor(anchors.leftCols(spec_.state_dim));
  }

  AgentDescription describe() override {
    AgentDescription d;
    d.name = name();
    d.actor_widths = actor_.net().widths();
    d.actor_output = "tanh-scaled";
    d.exploration_sigma = cfg_.exploration_sigma;
    d.collect_steps = cfg_.collect_steps;
    d.critic = "vdfp(conv-repr, return=" + ret::to_string(cfg_.ret.kind) + ", dynamics=" +
               (cfg_.mlp_dynamics ? std::string("mlp") : "vae/" + dynamics::to_string(cfg_.vae.conditioning)) +
               ")";
    d.has_target_networks = false;
    d.parameter_names = names_of(parameters());
    return d;
  }

  nn::ParamList parameters() override {
    nn::ParamList p = actor_.params();
    for (auto* q : returns_.params()) p.push_back(q);
    for (auto* q : dynamics_params()) p.push_back(q);
    return p;
  }

  void save(cereal::BinaryOutputArchive& ar) override {
    write_tag(ar, "vd_ddpg/1");
    nn::save_params(ar, parameters());
    ar(actor_opt_, returns_.optimizer(), dynamics_opt());
    ar(explore_, sample_, dropout_, vae_noise_, eps_);
    save_buffer(ar, buffer_);
    save_episode(ar, episode_);
    ar(steps_, losses_);
  }

  void load(cereal::BinaryInputArchive& ar) override {
    expect_tag(ar, "vd_ddpg/1");
    const nn::ParamList params = parameters();
    auto staged = nn::read_params(ar, params);
    nn::Adam actor_opt, ret_opt, dyn_opt;
    ar(actor_opt, ret_opt, dyn_opt);
    Rng explore, sample, dropout, vae_noise, eps;
    ar(explore, sample, dropout, vae_noise, eps);
    trajstore::ReplayBuffer buffer(cfg_.buffer_steps);
    load_buffer(ar, buffer);
    trajstore::Episode episode = load_episode(ar);
    std::int64_t steps = 0;
    LossAccumulator losses;
    ar(steps, losses);

    nn::commit_params(params, std::move(staged));
    actor_opt_ = actor_opt;
    returns_.optimizer() = ret_opt;
    dynamics_opt() = dyn_opt;
    explore_ = explore;
    sample_ = sample;
    dropout_ = dropout;
    vae_noise_ = vae_noise;
    eps_ = eps;
    buffer_ = std::move(buffer);
    episode_ = std::move(episode);
    steps_ = steps;
    losses_ = losses;
  }

 private:
  nn::ParamList dynamics_params() { return cfg_.mlp_dynamics ? mlp_.params() : vae_.params(); }
  nn::Adam& dynamics_opt() { return cfg_.mlp_dynamics ? mlp_.optimizer() : vae_.optimizer(); }

  void train_return() {
    const auto segs = buffer_.sample_segments(cfg_.batch_size, cfg_.max_len, sample_);
    const auto batch = ret::make_return_batch(segs, cfg_.max_len, cfg_.gamma);
    losses_.add_return(returns_.train_step(batch, dropout_));
  }

  // VAE targets are eval-mode encodings, held constant.
  void train_dynamics(const std::vector<trajstore::Segment>& segs, const Mat& anchors) {
    const auto padded = trajstore::pad_batch(segs, cfg_.max_len, cfg_.repr.agg_factor);
    const Mat m = returns_.encoder().encode(padded);
    if (cfg_.mlp_dynamics) {
      losses_.add_recon(mlp_.train_step(m, anchors));
      return;
    }
    const dynamics::ElboLosses l = vae_.elbo_step(m, anchors, vae_noise_);
    losses_.add_recon(l.recon);
    losses_.add_kl(l.kl);
  }

  void train_actor(const Mat& states) {
    nn::Tape tape;
    tape.freeze(returns_.head().params());
    nn::Var u;
    if (cfg_.mlp_dynamics) {
      tape.freeze(mlp_.params());
      nn::Var s = tape.constant(states);
      u = returns_.head()(tape, mlp_(tape, nn::concat_cols({s, actor_(tape, s)})));
    } else {
      tape.freeze(vae_.params());
      const Mat eps = vae_.sample_clipped_noise(states.rows(), vae_.config().clip_c, eps_);
      u = vdfp_values(tape, actor_, vae_, returns_.head(), states, eps);
    }
    guard_values("U", u.value().cwiseAbs().mean(), cfg_.divergence_bound);
    nn::Var objective = nn::mean(u);
    losses_.add_actor(objective.item());
    tape.backward(nn::scale(objective, -1.0));
    actor_opt_.step(actor_.params());
  }

  envs::EnvSpec spec_;
  AgentConfig cfg_;
  Rng explore_, sample_, dropout_, vae_noise_, eps_;
  DeterministicActor actor_;
  nn::Adam actor_opt_;
  ret::ReturnModel returns_;
  dynamics::ConditionalVAE vae_;
  dynamics::MlpPredictor mlp_;
  trajstore::ReplayBuffer buffer_;
  trajstore::Episode episode_;
};

}  // namespace

std::unique_ptr<Agent> make_vd_ddpg(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed) {
  return std::make_unique<VdDdpgAgent>(spec, cfg, seed);
}

}  // namespace vdfp::agents::detail
