// DDPG baseline: TD critic with soft-updated target networks.

#include "detail.hpp"

namespace vdfp::agents::detail {

namespace {

class DdpgAgent final : public Agent {
 public:
  DdpgAgent(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed)
      : spec_(spec), cfg_(cfg), buffer_(cfg.buffer_steps) {
    const Rng master(seed);
    Rng init = master.split("init");
    explore_ = master.split("explore");
    sample_ = master.split("sample");
    actor_ = DeterministicActor("actor", spec, cfg.actor_hidden, init);
    critic_ = QCritic("critic", spec.state_dim, spec.action_dim, cfg.critic_hidden, init);
    // Targets start as exact copies of the online networks.
    actor_target_ = DeterministicActor("actor_target", spec, cfg.actor_hidden, init);
    critic_target_ = QCritic("critic_target", spec.state_dim, spec.action_dim, cfg.critic_hidden, init);
    nn::polyak_update(actor_target_.params(), actor_.params(), 1.0);
    nn::polyak_update(critic_target_.params(), critic_.params(), 1.0);
    actor_opt_ = nn::Adam(cfg.actor_lr);
    critic_opt_ = nn::Adam(cfg.critic_lr);
  }

  AgentKind kind() const override { return AgentKind::kDdpg; }

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
    losses_.add_return(q_td_step(critic_, critic_target_, critic_opt_, b, actor_target_.forward(b.s2), cfg_.gamma));

    nn::Tape tape;
    tape.freeze(critic_.params());
    nn::Var s_var = tape.constant(b.s);
    nn::Var q = critic_(tape, s_var, actor_(tape, s_var));
    guard_values("Q", q.value().cwiseAbs().mean(), cfg_.divergence_bound);
    nn::Var objective = nn::mean(q);
    losses_.add_actor(objective.item());
    tape.backward(nn::scale(objective, -1.0));
    actor_opt_.step(actor_.params());

    nn::polyak_update(critic_target_.params(), critic_.params(), cfg_.target_update);
    nn::polyak_update(actor_target_.params(), actor_.params(), cfg_.target_update);
  }

  AgentDescription describe() override {
    AgentDescription d;
    d.name = name();
    d.actor_widths = actor_.net().widths();
    d.actor_output = "tanh-scaled";
    d.exploration_sigma = cfg_.exploration_sigma;
    d.collect_steps = cfg_.collect_steps;
    d.critic = "q(s,a) td";
    d.has_target_networks = true;
    d.parameter_names = names_of(parameters());
    return d;
  }

  nn::ParamList parameters() override {
    nn::ParamList p = actor_.params();
    for (auto* q : critic_.params()) p.push_back(q);
    for (auto* q : actor_target_.params()) p.push_back(q);
    for (auto* q : critic_target_.params()) p.push_back(q);
    return p;
  }

  void save(cereal::BinaryOutputArchive& ar) override {
    write_tag(ar, "ddpg/1");
    nn::save_params(ar, parameters());
    ar(actor_opt_, critic_opt_, explore_, sample_, buffer_, steps_, losses_);
  }

  void load(cereal::BinaryInputArchive& ar) override {
    expect_tag(ar, "ddpg/1");
    const nn::ParamList params = parameters();
    auto staged = nn::read_params(ar, params);
    nn::Adam actor_opt, critic_opt;
    Rng explore, sample;
    TransitionBuffer buffer;
    std::int64_t steps = 0;
    LossAccumulator losses;
    ar(actor_opt, critic_opt, explore, sample, buffer, steps, losses);
    if (buffer.capacity() != cfg_.buffer_steps) throw std::runtime_error("checkpoint: buffer capacity differs");
    nn::commit_params(params, std::move(staged));
    actor_opt_ = actor_opt;
    critic_opt_ = critic_opt;
    explore_ = explore;
    sample_ = sample;
    buffer_ = std::move(buffer);
    steps_ = steps;
    losses_ = losses;
  }

 private:
  envs::EnvSpec spec_;
  AgentConfig cfg_;
  Rng explore_, sample_;
  DeterministicActor actor_, actor_target_;
  QCritic critic_, critic_target_;
  nn::Adam actor_opt_, critic_opt_;
  TransitionBuffer buffer_;
};

}  // namespace

std::unique_ptr<Agent> make_ddpg(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed) {
  return std::make_unique<DdpgAgent>(spec, cfg, seed);
}

}  // namespace vdfp::agents::detail
