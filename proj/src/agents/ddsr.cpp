// DDSR baseline: DDPG whose critic is the factored Q = psi(phi(s, a)) . w.

#include <cmath>

#include "detail.hpp"

namespace vdfp::agents::detail {

namespace {

constexpr int kReprDim = 100;

class DdsrAgent final : public Agent {
 public:
  DdsrAgent(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed)
      : spec_(spec), cfg_(cfg), buffer_(cfg.buffer_steps) {
    const Rng master(seed);
    Rng init = master.split("init");
    explore_ = master.split("explore");
    sample_ = master.split("sample");
    const int feat = spec.state_dim + spec.action_dim;
    actor_ = DeterministicActor("actor", spec, cfg.actor_hidden, init);
    phi_ = nn::Mlp("ddsr.phi", feat, {200, 100}, kReprDim, init);
    recon_ = nn::Mlp("ddsr.recon", kReprDim, {100, 200}, feat, init);
    sr_ = nn::Mlp("ddsr.sr", kReprDim, {200, 100}, kReprDim, init);
    nn::Linear w("ddsr.reward", kReprDim, 1, init, false);
    reward_ = w.weight;
    actor_target_ = DeterministicActor("actor_target", spec, cfg.actor_hidden, init);
    sr_target_ = nn::Mlp("ddsr.sr_target", kReprDim, {200, 100}, kReprDim, init);
    nn::polyak_update(actor_target_.params(), actor_.params(), 1.0);
    nn::polyak_update(sr_target_.params(), sr_.params(), 1.0);
    actor_opt_ = nn::Adam(cfg.actor_lr);
    model_opt_ = nn::Adam(cfg.critic_lr);
    sr_opt_ = nn::Adam(cfg.critic_lr);
    reward_opt_ = nn::Adam(cfg.return_lr);
  }

  AgentKind kind() const override { return AgentKind::kDdsr; }

  Vec act(const Vec& s, bool explore) override {
    if (!explore) return actor_.action(s);
    if (steps_ < cfg_.collect_steps) return actor_.random_action(explore_);
    return actor_.explore(s, cfg_.exploration_sigma, explore_);
  }

  void observe(const Vec& s, const Vec& a, double reward, const Vec& next_state, bool, bool terminal) override {
    buffer_.add(s, a, reward, next_state, terminal);
    ++steps_;
    if (steps_ <= cfg_.collect_steps) return;
    const auto b = buffer_.sample(cfg_.batch_size, sample_);
    Mat x(b.s.rows(), b.s.cols() + b.a.cols());
    x << b.s, b.a;
    train_model(x, b.r);

    Mat x2(b.s2.rows(), x.cols());
    x2 << b.s2, actor_target_.forward(b.s2);
    losses_.add_return(
        sr_td_step(sr_, sr_target_, sr_opt_, phi_.forward(x), phi_.forward(x2), b.not_terminal, cfg_.gamma));

    nn::Tape tape;
    tape.freeze(phi_.params());
    tape.freeze(sr_.params());
    tape.freeze({&reward_});
    nn::Var s_var = tape.constant(b.s);
    nn::Var psi = sr_(tape, phi_(tape, nn::concat_cols({s_var, actor_(tape, s_var)})));
    nn::Var q = nn::linear_nobias(psi, tape.param(reward_));
    guard_values("Q", q.value().cwiseAbs().mean(), cfg_.divergence_bound);
    nn::Var objective = nn::mean(q);
    losses_.add_actor(objective.item());
    tape.backward(nn::scale(objective, -1.0));
    actor_opt_.step(actor_.params());

    nn::polyak_update(sr_target_.params(), sr_.params(), cfg_.target_update);
    nn::polyak_update(actor_target_.params(), actor_.params(), cfg_.target_update);
  }

  AgentDescription describe() override {
    AgentDescription d;
    d.name = name();
    d.actor_widths = actor_.net().widths();
    d.actor_output = "tanh-scaled";
    d.exploration_sigma = cfg_.exploration_sigma;
    d.collect_steps = cfg_.collect_steps;
    d.critic = "sr(phi(s,a)).w";
    d.has_target_networks = true;
    d.parameter_names = names_of(parameters());
    return d;
  }

  nn::ParamList parameters() override {
    nn::ParamList p = actor_.params();
    for (auto* q : phi_.params()) p.push_back(q);
    for (auto* q : recon_.params()) p.push_back(q);
    for (auto* q : sr_.params()) p.push_back(q);
    p.push_back(&reward_);
    for (auto* q : actor_target_.params()) p.push_back(q);
    for (auto* q : sr_target_.params()) p.push_back(q);
    return p;
  }

  void save(cereal::BinaryOutputArchive& ar) override {
    write_tag(ar, "ddsr/1");
    nn::save_params(ar, parameters());
    ar(actor_opt_, model_opt_, sr_opt_, reward_opt_, explore_, sample_, buffer_, steps_, losses_);
  }

  void load(cereal::BinaryInputArchive& ar) override {
    expect_tag(ar, "ddsr/1");
    const nn::ParamList params = parameters();
    auto staged = nn::read_params(ar, params);
    nn::Adam actor_opt, model_opt, sr_opt, reward_opt;
    Rng explore, sample;
    TransitionBuffer buffer;
    std::int64_t steps = 0;
    LossAccumulator losses;
    ar(actor_opt, model_opt, sr_opt, reward_opt, explore, sample, buffer, steps, losses);
    if (buffer.capacity() != cfg_.buffer_steps) throw std::runtime_error("checkpoint: buffer capacity differs");
    nn::commit_params(params, std::move(staged));
    actor_opt_ = actor_opt;
    model_opt_ = model_opt;
    sr_opt_ = sr_opt;
    reward_opt_ = reward_opt;
    explore_ = explore;
    sample_ = sample;
    buffer_ = std::move(buffer);
    steps_ = steps;
    losses_ = losses;
  }

 private:
  // Representation, reconstruction and the reward vector share one loss:
  // ||x - recon(phi(x))||^2 + (r - phi(x).w)^2.
  void train_model(const Mat& x, const Vec& r) {
    nn::Tape tape;
    nn::Var phi = phi_(tape, tape.constant(x));
    nn::Var rec = recon_(tape, phi);
    const double inv_b = 1.0 / static_cast<double>(x.rows());
    nn::Var rec_loss = nn::scale(nn::sum(nn::square(nn::sub(rec, tape.constant(x)))), inv_b);
    nn::Var r_hat = nn::linear_nobias(phi, tape.param(reward_));
    nn::Var r_loss = nn::mean(nn::square(nn::sub(r_hat, tape.constant(Mat(r)))));
    losses_.add_recon(rec_loss.item());
    tape.backward(nn::add(rec_loss, r_loss));
    nn::ParamList model = phi_.params();
    recon_.collect(model);
    model_opt_.step(model);
    reward_opt_.step({&reward_});
  }

  envs::EnvSpec spec_;
  AgentConfig cfg_;
  Rng explore_, sample_;
  DeterministicActor actor_, actor_target_;
  nn::Mlp phi_, recon_, sr_, sr_target_;
  nn::Parameter reward_;
  nn::Adam actor_opt_, model_opt_, sr_opt_, reward_opt_;
  TransitionBuffer buffer_;
};

}  // namespace

std::unique_ptr<Agent> make_ddsr(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed) {
  return std::make_unique<DdsrAgent>(spec, cfg, seed);
}

}  // namespace vdfp::agents::detail
