#pragma once
// Shared plumbing for the agent implementations; not part of the public API.

#include <cereal/archives/binary.hpp>
#include <memory>

#include "vdfp/agents/agent.hpp"
#include "vdfp/agents/components.hpp"
#include "vdfp/nn/serialize.hpp"
#include "vdfp/trajstore.hpp"

namespace vdfp::agents::detail {

std::unique_ptr<Agent> make_vd_ddpg(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed);
std::unique_ptr<Agent> make_ddpg(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed);
std::unique_ptr<Agent> make_ddsr(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed);
std::unique_ptr<Agent> make_ppo(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed);
std::unique_ptr<Agent> make_vd_ppo(const envs::EnvSpec& spec, const AgentConfig& cfg, std::uint64_t seed);

void save_buffer(cereal::BinaryOutputArchive& ar, const trajstore::ReplayBuffer& buf);
/// Replaces the contents of `buf` (which must be empty).
void load_buffer(cereal::BinaryInputArchive& ar, trajstore::ReplayBuffer& buf);

void save_episode(cereal::BinaryOutputArchive& ar, const trajstore::Episode& ep);
trajstore::Episode load_episode(cereal::BinaryInputArchive& ar);

/// Stores an archive-level tag and checks it on load, so a checkpoint from
/// one agent kind can never be read into another.
void write_tag(cereal::BinaryOutputArchive& ar, const std::string& tag);
void expect_tag(cereal::BinaryInputArchive& ar, const std::string& tag);

/// Anchor (s (+) a) rows of a segment batch.
Mat anchor_rows(const std::vector<trajstore::Segment>& segs);

/// Throws DivergenceError if the batch mean |value| exceeds the bound or is non-finite.
void guard_values(const char* what, double mean_abs, double bound);

/// Parameter names of a list, for describe().
std::vector<std::string> names_of(const nn::ParamList& params);

}  // namespace vdfp::agents::detail
