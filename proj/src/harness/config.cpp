#include "vdfp/harness/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace vdfp::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError(fmt::format("config: key '{}' expects {}, got '{}'", key, want, value));
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::vector<int> parse_ints(std::string_view key, std::string_view v) {
  std::vector<int> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_number<int>(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v = v.substr(comma + 1);
  }
  if (out.empty()) bad_value(key, v, "a comma-separated integer list");
  return out;
}

std::string join(const std::vector<int>& xs) { return fmt::format("{}", fmt::join(xs, ",")); }

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
};

template <class T>
Field number(T agents::AgentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return fmt::format("{}", c.agent_cfg.*member); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            c.agent_cfg.*member = parse_number<T>(k, v);
          }};
}

Field ints(std::vector<int> agents::AgentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return join(c.agent_cfg.*member); },
          [member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            c.agent_cfg.*member = parse_ints(k, v);
          }};
}

// Ordered: to_text() emits keys in this order.
const std::vector<std::pair<std::string, Field>>& fields() {
  using agents::AgentConfig;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"agent",
       {[](const ExperimentConfig& c) { return agents::to_string(c.agent); },
        [](ExperimentConfig& c, std::string_view, std::string_view v) {
          try {
            c.set_agent(agents::parse_agent_kind(v));
          } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
          }
        }}},
      {"env",
       {[](const ExperimentConfig& c) { return c.env; },
        [](ExperimentConfig& c, std::string_view, std::string_view v) { c.env = std::string(v); }}},
      {"delay_mode",
       {[](const ExperimentConfig& c) { return envs::to_string(c.delay.mode); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          try {
            c.delay.mode = envs::parse_delay_mode(v);
          } catch (const std::invalid_argument&) {
            bad_value(k, v, "none, accumulate or shift");
          }
        }}},
      {"delay_steps",
       {[](const ExperimentConfig& c) { return std::to_string(c.delay.d); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.delay.d = parse_number<int>(k, v); }}},
      {"seed",
       {[](const ExperimentConfig& c) { return std::to_string(c.seed); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.seed = parse_number<std::uint64_t>(k, v);
        }}},
      {"total_steps",
       {[](const ExperimentConfig& c) { return std::to_string(c.total_steps); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.total_steps = parse_number<std::int64_t>(k, v);
        }}},
      {"out",
       {[](const ExperimentConfig& c) { return c.out; },
        [](ExperimentConfig& c, std::string_view, std::string_view v) { c.out = std::string(v); }}},
      {"checkpoint_every",
       {[](const ExperimentConfig& c) { return std::to_string(c.checkpoint_every); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.checkpoint_every = parse_number<int>(k, v);
        }}},
      {"gamma", number(&AgentConfig::gamma)},
      {"actor_lr", number(&AgentConfig::actor_lr)},
      {"critic_lr", number(&AgentConfig::critic_lr)},
      {"return_lr", number(&AgentConfig::return_lr)},
      {"batch_size", number(&AgentConfig::batch_size)},
      {"buffer_steps", number(&AgentConfig::buffer_steps)},
      {"exploration_sigma", number(&AgentConfig::exploration_sigma)},
      {"target_update", number(&AgentConfig::target_update)},
      {"collect_steps", number(&AgentConfig::collect_steps)},
      {"pretrain_steps", number(&AgentConfig::pretrain_steps)},
      {"return_every_pretrain", number(&AgentConfig::return_every_pretrain)},
      {"return_every", number(&AgentConfig::return_every)},
      {"max_len",
       {[](const ExperimentConfig& c) { return std::to_string(c.agent_cfg.max_len); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.max_len = parse_number<int>(k, v);
          try {
            c.agent_cfg.repr.agg_factor = trajstore::agg_factor_for(c.agent_cfg.max_len);
          } catch (const std::invalid_argument&) {
            bad_value(k, v, "a length <= 64 or a multiple of 64");
          }
        }}},
      {"actor_hidden", ints(&AgentConfig::actor_hidden)},
      {"critic_hidden", ints(&AgentConfig::critic_hidden)},
      {"divergence_bound", number(&AgentConfig::divergence_bound)},
      {"gae_lambda", number(&AgentConfig::gae_lambda)},
      {"ppo_clip", number(&AgentConfig::ppo_clip)},
      {"ppo_epochs", number(&AgentConfig::ppo_epochs)},
      {"update_every_episodes", number(&AgentConfig::update_every_episodes)},
      {"init_log_std", number(&AgentConfig::init_log_std)},
      {"vae_passes", number(&AgentConfig::vae_passes)},
      {"vae_batch", number(&AgentConfig::vae_batch)},
      {"mlp_dynamics",
       {[](const ExperimentConfig& c) { return std::string(c.agent_cfg.mlp_dynamics ? "true" : "false"); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.mlp_dynamics = parse_bool(k, v);
        }}},
      {"repr.filter_heights",
       {[](const ExperimentConfig& c) { return join(c.agent_cfg.repr.filter_heights); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.repr.filter_heights = parse_ints(k, v);
        }}},
      {"repr.filter_counts",
       {[](const ExperimentConfig& c) { return join(c.agent_cfg.repr.filter_counts); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.repr.filter_counts = parse_ints(k, v);
        }}},
      {"repr.repr_dim",
       {[](const ExperimentConfig& c) { return std::to_string(c.agent_cfg.repr.repr_dim); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.repr.repr_dim = parse_number<int>(k, v);
        }}},
      {"repr.dropout_prob",
       {[](const ExperimentConfig& c) { return fmt::format("{}", c.agent_cfg.repr.dropout_prob); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.repr.dropout_prob = parse_number<double>(k, v);
        }}},
      {"return.kind",
       {[](const ExperimentConfig& c) { return ret::to_string(c.agent_cfg.ret.kind); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          try {
            c.agent_cfg.ret.kind = ret::parse_return_kind(v);
          } catch (const std::invalid_argument&) {
            bad_value(k, v, "linear, leaky_relu, icnn or ne_icnn");
          }
        }}},
      {"return.leaky_slope",
       {[](const ExperimentConfig& c) { return fmt::format("{}", c.agent_cfg.ret.leaky_slope); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.ret.leaky_slope = parse_number<double>(k, v);
        }}},
      {"return.icnn_hidden",
       {[](const ExperimentConfig& c) { return join(c.agent_cfg.ret.icnn_hidden); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.ret.icnn_hidden = parse_ints(k, v);
        }}},
      {"vae.z_dim",
       {[](const ExperimentConfig& c) { return std::to_string(c.agent_cfg.vae.z_dim); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.vae.z_dim = parse_number<int>(k, v);
        }}},
      {"vae.beta",
       {[](const ExperimentConfig& c) { return fmt::format("{}", c.agent_cfg.vae.beta); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.vae.beta = parse_number<double>(k, v);
        }}},
      {"vae.clip_c",
       {[](const ExperimentConfig& c) { return fmt::format("{}", c.agent_cfg.vae.clip_c); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.vae.clip_c = parse_number<double>(k, v);
        }}},
      {"vae.conditioning",
       {[](const ExperimentConfig& c) { return dynamics::to_string(c.agent_cfg.vae.conditioning); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          try {
            c.agent_cfg.vae.conditioning = dynamics::parse_conditioning(v);
          } catch (const std::invalid_argument&) {
            bad_value(k, v, "product or concat");
          }
        }}},
      {"vae.width_scale",
       {[](const ExperimentConfig& c) { return fmt::format("{}", c.agent_cfg.vae.width_scale); },
        [](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.agent_cfg.vae.width_scale = parse_number<double>(k, v);
        }}},
  };
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError(fmt::format("config: unknown key '{}'", key));
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void ExperimentConfig::set_agent(agents::AgentKind kind) {
  agent = kind;
  agent_cfg = agents::defaults_for(kind);
}

void ExperimentConfig::set(std::string_view key, std::string_view value) { field(key).set(*this, key, trim(value)); }

std::string ExperimentConfig::get(std::string_view key) const { return field(key).get(*this); }

void ExperimentConfig::validate() const {
  try {
    envs::env_spec(env);
  } catch (const std::invalid_argument&) {
    throw ConfigError(fmt::format("config: unknown env '{}' (known: {})", env, fmt::join(envs::env_names(), ", ")));
  }
  if (total_steps < 0) throw ConfigError("config: total_steps must be nonnegative");
  if (checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be nonnegative");
  try {
    delay.validate();
    agent_cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [name, f] : fields()) out += fmt::format("{} = {}\n", name, f.get(*this));
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("config line {}: expected key = value", line_no));
    out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  const auto pairs = parse_pairs(text);
  std::map<std::string, int> seen;
  for (const auto& [k, v] : pairs) {
    if (++seen[k] > 1) throw ConfigError(fmt::format("config: key '{}' given twice", k));
    field(k);  // rejects unknown keys before anything is applied
  }
  ExperimentConfig c;
  if (seen.count("agent") != 0) {
    for (const auto& [k, v] : pairs) {
      if (k == "agent") c.set(k, v);
    }
  }
  for (const auto& [k, v] : pairs) {
    if (k != "agent") c.set(k, v);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ExperimentConfig::is_run_control_key(std::string_view key) {
  return key == "total_steps" || key == "out" || key == "checkpoint_every";
}

}  // namespace vdfp::harness
