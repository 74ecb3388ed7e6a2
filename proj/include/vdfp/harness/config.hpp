#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vdfp/agents/agent.hpp"
#include "vdfp/envs.hpp"

namespace vdfp::harness {

/// Bad config text, unknown key, or a value that fails validation.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Everything a run needs. Text form is one `key = value` per line, `#`
/// starts a comment, and lists are comma separated (`actor_hidden = 200,100`).
///
/// `agent` is applied before every other key so the per-agent defaults sit
/// underneath whatever the file overrides.
struct ExperimentConfig {
  std::string env = "point_mass_2d";
  agents::AgentKind agent = agents::AgentKind::kVdDdpg;
  envs::DelayConfig delay;
  std::int64_t total_steps = 50000;
  std::uint64_t seed = 0;
  std::string out;
  /// Save a checkpoint every this many episodes (0 = never).
  int checkpoint_every = 0;
  agents::AgentConfig agent_cfg = agents::defaults_for(agents::AgentKind::kVdDdpg);

  /// Switches the agent and resets agent_cfg to that agent's defaults.
  void set_agent(agents::AgentKind kind);
  /// Throws ConfigError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  void validate() const;

  /// Every key in a fixed order; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::string& path);

  /// Keys that may differ between a checkpoint and the run resuming it.
  static bool is_run_control_key(std::string_view key);
};

/// Documented key list, in to_text() order.
const std::vector<std::string>& config_keys();

/// (key, value) pairs of a config text, in file order. Throws ConfigError.
std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view text);

}  // namespace vdfp::harness
