#include "vdfp/agents/agent.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "detail.hpp"
#include "vdfp/errors.hpp"

namespace vdfp::agents {

namespace {

struct KindName {
  AgentKind kind;
  const char* name;
};

constexpr KindName kKinds[] = {
    {AgentKind::kVdDdpg, "vd_ddpg"}, {AgentKind::kVdPpo, "vd_ppo"}, {AgentKind::kDdpg, "ddpg"},
    {AgentKind::kPpo, "ppo"},        {AgentKind::kDdsr, "ddsr"},
};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("AgentConfig: " + what);
}

}  // namespace

std::string to_string(AgentKind k) {
  for (const auto& kn : kKinds) {
    if (kn.kind == k) return kn.name;
  }
  throw std::invalid_argument("unknown agent kind");
}

AgentKind parse_agent_kind(std::string_view s) {
  for (const auto& kn : kKinds) {
    if (s == kn.name) return kn.kind;
  }
  throw std::invalid_argument("unknown agent '" + std::string(s) + "'");
}

std::vector<std::string> agent_names() {
  std::vector<std::string> out;
  for (const auto& kn : kKinds) out.emplace_back(kn.name);
  return out;
}

bool is_on_policy(AgentKind k) { return k == AgentKind::kPpo || k == AgentKind::kVdPpo; }

void AgentConfig::validate() const {
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(actor_lr > 0 && critic_lr > 0 && return_lr > 0, "learning rates must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(buffer_steps >= 1, "buffer_steps must be positive");
  require(exploration_sigma >= 0.0, "exploration_sigma must be nonnegative");
  require(target_update > 0.0 && target_update <= 1.0, "target_update must lie in (0, 1]");
  require(collect_steps >= 0 && pretrain_steps >= 0, "phase lengths must be nonnegative");
  require(return_every_pretrain >= 1 && return_every >= 1, "return-model intervals must be positive");
  require(max_len >= 1, "max_len must be positive");
  require(actor_hidden.size() == 2 && critic_hidden.size() == 2, "hidden layer lists need two widths");
  for (int w : actor_hidden) require(w >= 1, "hidden widths must be positive");
  for (int w : critic_hidden) require(w >= 1, "hidden widths must be positive");
  require(divergence_bound > 0.0, "divergence_bound must be positive");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]");
  require(ppo_clip > 0.0 && ppo_clip < 1.0, "ppo_clip must lie in (0, 1)");
  require(ppo_epochs >= 1 && update_every_episodes >= 1, "ppo_epochs and update_every_episodes must be positive");
  require(vae_passes >= 1 && vae_batch >= 1, "vae_passes and vae_batch must be positive");
  require(std::isfinite(init_log_std), "init_log_std must be finite");
  repr.validate();
  ret.validate();
  vae.validate();
  require(repr.agg_factor == trajstore::agg_factor_for(max_len),
          "repr agg_factor must equal max_len / 64 for max_len > 64, else 1");
}

AgentConfig defaults_for(AgentKind kind) {
  AgentConfig c;
  switch (kind) {
    case AgentKind::kVdDdpg:
      break;
    case AgentKind::kDdsr:
      c.collect_steps = 10000;
      c.pretrain_steps = 0;
      break;
    case AgentKind::kDdpg:
      c.actor_lr = 1e-4;
      c.collect_steps = 10000;
      c.pretrain_steps = 0;
      break;
    case AgentKind::kPpo:
    case AgentKind::kVdPpo:
      c.actor_lr = 1e-4;
      c.batch_size = 256;
      c.collect_steps = 0;
      c.pretrain_steps = 0;
      c.exploration_sigma = 0.0;
      break;
  }
  return c;
}

StepLosses LossAccumulator::take() {
  StepLosses out;
  double* fields[] = {&out.recon_loss, &out.kl_loss, &out.return_loss, &out.actor_objective};
  for (std::size_t i = 0; i < 4; ++i) {
    if (count_[i] > 0) *fields[i] = sum_[i] / static_cast<double>(count_[i]);
    sum_[i] = 0.0;
    count_[i] = 0;
  }
  return out;
}

nlohmann::json AgentDescription::to_json() const {
  return nlohmann::json{{"name", name},
                        {"actor_widths", actor_widths},
                        {"actor_output", actor_output},
                        {"exploration_sigma", exploration_sigma},
                        {"collect_steps", collect_steps},
                        {"critic", critic},
                        {"has_target_networks", has_target_networks},
                        {"parameter_names", parameter_names}};
}

std::unique_ptr<Agent> make_agent(AgentKind kind, const envs::EnvSpec& spec, const AgentConfig& cfg,
                                  std::uint64_t seed) {
  spec.validate();
  cfg.validate();
  switch (kind) {
    case AgentKind::kVdDdpg: return detail::make_vd_ddpg(spec, cfg, seed);
    case AgentKind::kDdpg: return detail::make_ddpg(spec, cfg, seed);
    case AgentKind::kDdsr: return detail::make_ddsr(spec, cfg, seed);
    case AgentKind::kPpo: return detail::make_ppo(spec, cfg, seed);
    case AgentKind::kVdPpo: return detail::make_vd_ppo(spec, cfg, seed);
  }
  throw std::invalid_argument("unknown agent kind");
}

namespace detail {

void save_buffer(cereal::BinaryOutputArchive& ar, const trajstore::ReplayBuffer& buf) {
  const std::uint64_t n = buf.num_episodes();
  ar(buf.capacity_steps(), n);
  for (std::size_t i = 0; i < buf.num_episodes(); ++i) {
    const auto& ep = buf.episode(i);
    ar(ep.state_dim, ep.action_dim, ep.features, ep.rewards);
  }
}

void load_buffer(cereal::BinaryInputArchive& ar, trajstore::ReplayBuffer& buf) {
  std::int64_t capacity = 0;
  std::uint64_t n = 0;
  ar(capacity, n);
  if (capacity != buf.capacity_steps()) throw std::runtime_error("checkpoint: replay buffer capacity differs");
  if (!buf.empty()) throw std::logic_error("load_buffer: target buffer is not empty");
  for (std::uint64_t i = 0; i < n; ++i) {
    trajstore::StoredEpisode ep;
    ar(ep.state_dim, ep.action_dim, ep.features, ep.rewards);
    buf.store(std::move(ep));
  }
}

void save_episode(cereal::BinaryOutputArchive& ar, const trajstore::Episode& ep) {
  const std::uint64_t n = ep.size();
  ar(n);
  for (const auto& t : ep) ar(t.state, t.action, t.reward);
}

trajstore::Episode load_episode(cereal::BinaryInputArchive& ar) {
  std::uint64_t n = 0;
  ar(n);
  trajstore::Episode ep(n);
  for (auto& t : ep) ar(t.state, t.action, t.reward);
  return ep;
}

void write_tag(cereal::BinaryOutputArchive& ar, const std::string& tag) { ar(tag); }

void expect_tag(cereal::BinaryInputArchive& ar, const std::string& tag) {
  std::string got;
  ar(got);
  if (got != tag) throw std::runtime_error("checkpoint: expected " + tag + " state, found " + got);
}

Mat anchor_rows(const std::vector<trajstore::Segment>& segs) {
  const auto& first = segs.front().episode();
  Mat out(static_cast<Eigen::Index>(segs.size()), first.state_dim + first.action_dim);
  for (std::size_t i = 0; i < segs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = segs[i].features().row(0);
  return out;
}

void guard_values(const char* what, double mean_abs, double bound) {
  if (!std::isfinite(mean_abs) || mean_abs > bound) {
    std::ostringstream os;
    os << "divergence: mean |" << what << "| = " << mean_abs << " exceeds bound " << bound;
    throw DivergenceError(os.str());
  }
}

std::vector<std::string> names_of(const nn::ParamList& params) {
  std::vector<std::string> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->name);
  return out;
}

}  // namespace detail

}  // namespace vdfp::agents
