// PPO with GAE, and its value-decomposed variant VD-PPO.

#include <cmath>
#include <numeric>

#include "detail.hpp"

namespace vdfp::agents::detail {

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  return idx;
}

Mat gather_rows(const Mat& m, std::span<const std::size_t> idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Vec gather(const Vec& v, std::span<const std::size_t> idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(idx[i])];
  return out;
}

Vec normalized(Vec adv) {
  if (adv.size() < 2) return adv;
  const double mean = adv.mean();
  const double sd = std::sqrt((adv.array() - mean).square().sum() / static_cast<double>(adv.size() - 1));
  return (adv.array() - mean) / (sd + 1e-8);
}

Vec old_log_probs(GaussianPolicy& policy, const Mat& states, const Mat& actions) {
  nn::Tape tape(nn::Tape::Mode::kNoGrad);
  return policy.log_prob(tape, tape.constant(states), actions).value().col(0);
}

/// One pass over the samples in shuffled minibatches; returns the mean
/// clipped surrogate.
double policy_epoch(GaussianPolicy& policy, nn::Adam& opt, const Mat& states, const Mat& actions,
                    const Vec& old_logp, const Vec& adv, int batch, double clip, Rng& rng) {
  const auto idx = shuffled(static_cast<std::size_t>(states.rows()), rng);
  double total = 0.0;
  int count = 0;
  for (std::size_t lo = 0; lo < idx.size(); lo += static_cast<std::size_t>(batch)) {
    const std::span<const std::size_t> part(idx.data() + lo, std::min(idx.size() - lo, static_cast<std::size_t>(batch)));
    nn::Tape tape;
    nn::Var lp = policy.log_prob(tape, tape.constant(gather_rows(states, part)), gather_rows(actions, part));
    nn::Var ratio = nn::exp(nn::add(lp, tape.constant(Mat(-gather(old_logp, part)))));
    nn::Var surrogate = nn::mean(clipped_surrogate(ratio, Mat(gather(adv, part)), clip));
    total += surrogate.item();
    ++count;
    tape.backward(nn::scale(surrogate, -1.0));
    opt.step(policy.params());
  }
  return total / std::max(count, 1);
}

struct Rollout {
  std::vector<Vec> states, actions;
  std::vector<double> rewards;
  std::vector<bool> dones;

  void clear() {
    states.clear();
    actions.clear();
    rewards.clear();
    dones.clear();
  }
  Mat state_matrix() const { return stack(states); }
  Mat action_matrix() const { return stack(actions); }
  static Mat stack(const std::vector<Vec>& v) {
    Mat m(static_cast<Eigen::Index>(v.size()), v.front().size());
    for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return m;
  }
  template <class Archive>
  void serialize(Archive& ar) {
    ar(states, actions, rewards, dones);
  }
};

class PpoAgent final : public Agent {
 public:
  PpoAgent(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed) : spec_(spec), cfg_(cfg) {
    const Rng master(seed);
    Rng init = master.split("init");
    explore_ = master.split("explore");
    sample_ = master.split("sample");
    policy_ = GaussianPolicy(spec, cfg.actor_hidden, cfg.init_log_std, init);
    value_ = nn::Mlp("value", spec.state_dim, cfg.critic_hidden, 1, init);
    policy_opt_ = nn::Adam(cfg.actor_lr);
    value_opt_ = nn::Adam(cfg.critic_lr);
  }

  AgentKind kind() const override { return AgentKind::kPpo; }

  Vec act(const Vec& s, bool explore) override {
    return explore ? policy_.sample(s, explore_) : policy_.mean_action(s);
  }

  void observe(const Vec& s, const Vec& a, double reward, const Vec& next_state, bool done, bool terminal) override {
    ++steps_;
    // A horizon cut bootstraps from V(s_T) by folding it into the last reward.
    if (done && !terminal) reward += cfg_.gamma * value_.forward(Mat(next_state.transpose()))(0, 0);
    rollout_.states.push_back(s);
    rollout_.actions.push_back(a);
    rollout_.rewards.push_back(reward);
    rollout_.dones.push_back(done);
    if (done && ++episodes_ % cfg_.update_every_episodes == 0) update();
  }

  AgentDescription describe() override {
    AgentDescription d;
    d.name = name();
    d.actor_widths = policy_.actor().net().widths();
    d.actor_output = "tanh-scaled gaussian mean";
    d.critic = "v(s) gae";
    d.parameter_names = names_of(parameters());
    return d;
  }

  nn::ParamList parameters() override {
    nn::ParamList p = policy_.params();
    value_.collect(p);
    return p;
  }

  void save(cereal::BinaryOutputArchive& ar) override {
    write_tag(ar, "ppo/1");
    nn::save_params(ar, parameters());
    ar(policy_opt_, value_opt_, explore_, sample_, rollout_, episodes_, steps_, losses_);
  }

  void load(cereal::BinaryInputArchive& ar) override {
    expect_tag(ar, "ppo/1");
    const nn::ParamList params = parameters();
    auto staged = nn::read_params(ar, params);
    nn::Adam policy_opt, value_opt;
    Rng explore, sample;
    Rollout rollout;
    std::int64_t episodes = 0, steps = 0;
    LossAccumulator losses;
    ar(policy_opt, value_opt, explore, sample, rollout, episodes, steps, losses);
    nn::commit_params(params, std::move(staged));
    policy_opt_ = policy_opt;
    value_opt_ = value_opt;
    explore_ = explore;
    sample_ = sample;
    rollout_ = std::move(rollout);
    episodes_ = episodes;
    steps_ = steps;
    losses_ = losses;
  }

 private:
  void update() {
    const Mat states = rollout_.state_matrix();
    const Mat actions = rollout_.action_matrix();
    const std::size_t n = rollout_.rewards.size();
    const Vec v = value_.forward(states).col(0);
    guard_values("V", v.cwiseAbs().mean(), cfg_.divergence_bound);
    std::vector<double> values(v.data(), v.data() + v.size());
    values.push_back(0.0);  // every rollout ends on a done step
    const auto adv_raw = gae(rollout_.rewards, values, rollout_.dones, cfg_.gamma, cfg_.gae_lambda);
    const Vec adv_vec = Eigen::Map<const Vec>(adv_raw.data(), static_cast<Eigen::Index>(n));
    const Vec returns = adv_vec + v;
    const Vec adv = normalized(adv_vec);
    const Vec old_logp = old_log_probs(policy_, states, actions);

    for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
      losses_.add_actor(policy_epoch(policy_, policy_opt_, states, actions, old_logp, adv, cfg_.batch_size,
                                     cfg_.ppo_clip, sample_));
    }
    for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
      const auto idx = shuffled(n, sample_);
      for (std::size_t lo = 0; lo < n; lo += static_cast<std::size_t>(cfg_.batch_size)) {
        const std::span<const std::size_t> part(idx.data() + lo,
                                                std::min(n - lo, static_cast<std::size_t>(cfg_.batch_size)));
        nn::Tape tape;
        nn::Var pred = value_(tape, tape.constant(gather_rows(states, part)));
        nn::Var loss = nn::mean(nn::square(nn::sub(pred, tape.constant(Mat(gather(returns, part))))));
        losses_.add_return(loss.item());
        tape.backward(loss);
        value_opt_.step(value_.params());
      }
    }
    rollout_.clear();
  }

  envs::EnvSpec spec_;
  AgentConfig cfg_;
  Rng explore_, sample_;
  GaussianPolicy policy_;
  nn::Mlp value_;
  nn::Adam policy_opt_, value_opt_;
  Rollout rollout_;
  std::int64_t episodes_ = 0;
};

// V(s) = U(P(s, eps_g)) with a state-conditioned VAE; advantages are the
// discounted return to the end of the episode minus V(s).
class VdPpoAgent final : public Agent {
 public:
  VdPpoAgent(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed)
      : spec_(spec), cfg_(cfg), store_(cfg.buffer_steps), batch_(cfg.buffer_steps) {
    const Rng master(seed);
    Rng init = master.split("init");
    explore_ = master.split("explore");
    sample_ = master.split("sample");
    dropout_ = master.split("dropout");
    vae_noise_ = master.split("vae_noise");
    eps_ = master.split("eps_g");
    policy_ = GaussianPolicy(spec, cfg.actor_hidden, cfg.init_log_std, init);
    policy_opt_ = nn::Adam(cfg.actor_lr);
    ret::ReturnModelConfig rc = cfg.ret;
    rc.lr = cfg.return_lr;
    returns_ = ret::ReturnModel(cfg.repr, rc, spec.state_dim + spec.action_dim, init);
    dynamics::VAEConfig vc = cfg.vae;
    vc.lr = cfg.critic_lr;
    vae_ = dynamics::ConditionalVAE(vc, spec.state_dim, cfg.repr.repr_dim, init);
  }

  AgentKind kind() const override { return AgentKind::kVdPpo; }

  Vec act(const Vec& s, bool explore) override {
    return explore ? policy_.sample(s, explore_) : policy_.mean_action(s);
  }

  void observe(const Vec& s, const Vec& a, double reward, const Vec&, bool done, bool) override {
    ++steps_;
    episode_.push_back({s, a, reward});
    if (!done) return;
    store_.store_episode(episode_);
    batch_.store_episode(episode_);
    episode_.clear();
    for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
      const auto segs = store_.sample_segments(cfg_.batch_size, cfg_.max_len, sample_);
      losses_.add_return(returns_.train_step(ret::make_return_batch(segs, cfg_.max_len, cfg_.gamma), dropout_));
    }
    if (++episodes_ % cfg_.update_every_episodes == 0) update();
  }

  /// V(s) for a batch of states, with fresh clipped latent noise.
  Vec state_values(const Mat& states) {
    return returns_.head().evaluate(vae_.predict(states, vae_.config().clip_c, eps_));
  }

  AgentDescription describe() override {
    AgentDescription d;
    d.name = name();
    d.actor_widths = policy_.actor().net().widths();
    d.actor_output = "tanh-scaled gaussian mean";
    d.critic = "vdfp v(s)=U(P(s,eps_g)), return=" + ret::to_string(cfg_.ret.kind);
    d.parameter_names = names_of(parameters());
    return d;
  }

  nn::ParamList parameters() override {
    nn::ParamList p = policy_.params();
    for (auto* q : returns_.params()) p.push_back(q);
    for (auto* q : vae_.params()) p.push_back(q);
    return p;
  }

  void save(cereal::BinaryOutputArchive& ar) override {
    write_tag(ar, "vd_ppo/1");
    nn::save_params(ar, parameters());
    ar(policy_opt_, returns_.optimizer(), vae_.optimizer());
    ar(explore_, sample_, dropout_, vae_noise_, eps_);
    save_buffer(ar, store_);
    save_buffer(ar, batch_);
    save_episode(ar, episode_);
    ar(episodes_, steps_, losses_);
  }

  void load(cereal::BinaryInputArchive& ar) override {
    expect_tag(ar, "vd_ppo/1");
    const nn::ParamList params = parameters();
    auto staged = nn::read_params(ar, params);
    nn::Adam policy_opt, ret_opt, vae_opt;
    ar(policy_opt, ret_opt, vae_opt);
    Rng explore, sample, dropout, vae_noise, eps;
    ar(explore, sample, dropout, vae_noise, eps);
    trajstore::ReplayBuffer store(cfg_.buffer_steps), batch(cfg_.buffer_steps);
    load_buffer(ar, store);
    load_buffer(ar, batch);
    trajstore::Episode episode = load_episode(ar);
    std::int64_t episodes = 0, steps = 0;
    LossAccumulator losses;
    ar(episodes, steps, losses);

    nn::commit_params(params, std::move(staged));
    policy_opt_ = policy_opt;
    returns_.optimizer() = ret_opt;
    vae_.optimizer() = vae_opt;
    explore_ = explore;
    sample_ = sample;
    dropout_ = dropout;
    vae_noise_ = vae_noise;
    eps_ = eps;
    store_ = std::move(store);
    batch_ = std::move(batch);
    episode_ = std::move(episode);
    episodes_ = episodes;
    steps_ = steps;
    losses_ = losses;
  }

 private:
  void update() {
    const auto n = batch_.size_steps();
    Mat states(n, spec_.state_dim), actions(n, spec_.action_dim);
    Vec returns(n);
    for (std::int64_t i = 0; i < n; ++i) {
      // The whole rest of the episode, not just the first max_len steps.
      const trajstore::Segment seg = batch_.segment_at(i, spec_.max_episode_steps);
      states.row(i) = seg.state(0);
      actions.row(i) = seg.action(0);
      returns[i] = trajstore::discounted_return(seg, cfg_.gamma);
    }
    const Vec old_logp = old_log_probs(policy_, states, actions);
    const Mat reprs = encode_all(n);

    for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
      train_vae(reprs, states);
      const Vec v = state_values(states);
      guard_values("V", v.cwiseAbs().mean(), cfg_.divergence_bound);
      const Vec adv = normalized(return_advantages(returns, v));
      losses_.add_actor(policy_epoch(policy_, policy_opt_, states, actions, old_logp, adv, cfg_.batch_size,
                                     cfg_.ppo_clip, sample_));
    }
    batch_.clear();
  }

  // cfg_.vae_passes shuffled passes over B in minibatches of cfg_.vae_batch.
  void train_vae(const Mat& reprs, const Mat& states) {
    const auto batch = static_cast<std::size_t>(cfg_.vae_batch);
    for (int pass = 0; pass < cfg_.vae_passes; ++pass) {
      const auto order = shuffled(static_cast<std::size_t>(states.rows()), sample_);
      for (std::size_t lo = 0; lo < order.size(); lo += batch) {
        const std::span<const std::size_t> part(order.data() + lo, std::min(order.size() - lo, batch));
        const dynamics::ElboLosses l = vae_.elbo_step(gather_rows(reprs, part), gather_rows(states, part), vae_noise_);
        losses_.add_recon(l.recon);
        losses_.add_kl(l.kl);
      }
    }
  }

  // f(tau) for every sample of B; the encoder is not trained during an update.
  Mat encode_all(std::int64_t n) {
    Mat out(n, cfg_.repr.repr_dim);
    constexpr std::int64_t kChunk = 256;
    for (std::int64_t lo = 0; lo < n; lo += kChunk) {
      std::vector<trajstore::Segment> segs;
      for (std::int64_t i = lo; i < std::min(n, lo + kChunk); ++i) segs.push_back(batch_.segment_at(i, cfg_.max_len));
      out.middleRows(lo, static_cast<Eigen::Index>(segs.size())) =
          returns_.encoder().encode(trajstore::pad_batch(segs, cfg_.max_len, cfg_.repr.agg_factor));
    }
    return out;
  }

  envs::EnvSpec spec_;
  AgentConfig cfg_;
  Rng explore_, sample_, dropout_, vae_noise_, eps_;
  GaussianPolicy policy_;
  nn::Adam policy_opt_;
  ret::ReturnModel returns_;
  dynamics::ConditionalVAE vae_;
  trajstore::ReplayBuffer store_;  // D
  trajstore::ReplayBuffer batch_;  // B, emptied after each policy update
  trajstore::Episode episode_;
  std::int64_t episodes_ = 0;
};

}  // namespace

std::unique_ptr<Agent> make_ppo(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed) {
  return std::make_unique<PpoAgent>(spec, cfg, seed);
}

std::unique_ptr<Agent> make_vd_ppo(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed) {
  return std::make_unique<VdPpoAgent>(spec, cfg, seed);
}

}  // namespace vdfp::agents::detail
