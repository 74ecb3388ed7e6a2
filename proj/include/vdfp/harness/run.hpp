#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "vdfp/agents/agent.hpp"
#include "vdfp/envs.hpp"
#include "vdfp/harness/config.hpp"

namespace vdfp::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One CSV row per finished episode.
struct LogRow {
  std::int64_t global_step = 0;  // env steps taken when the episode ended
  std::int64_t episode_index = 0;
  double episode_return = 0.0;
  double recon_loss = std::numeric_limits<double>::quiet_NaN();
  double kl_loss = std::numeric_limits<double>::quiet_NaN();
  double return_loss = std::numeric_limits<double>::quiet_NaN();
  double actor_objective = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const LogRow& a, const LogRow& b);
};

std::string csv_header();
/// Shortest round-trip formatting, so reading a row back is exact.
std::string to_csv(const LogRow& row);
LogRow parse_csv_row(const std::string& line);
std::vector<LogRow> read_log(std::istream& is);
std::vector<LogRow> read_log_file(const std::string& path);

/// Trailing moving average; the first window-1 entries average what exists.
std::vector<double> moving_average(const std::vector<double>& xs, int window = 100);

struct Summary {
  std::int64_t episodes = 0;
  /// Max and mean over episodes of the 100-episode moving average, and its
  /// final value (mean return of the last 100 episodes). NaN with no episodes.
  double max_avg100 = std::numeric_limits<double>::quiet_NaN();
  double mean_avg100 = std::numeric_limits<double>::quiet_NaN();
  double final_avg100 = std::numeric_limits<double>::quiet_NaN();

  nlohmann::json to_json() const;
  static Summary from_json(const nlohmann::json& j);
};

Summary summarize(const std::vector<LogRow>& rows);

struct RunRecord {
  ExperimentConfig config;
  std::vector<LogRow> rows;
  Summary summary;
};

/// Seed for the environment reset of a given episode.
std::uint64_t episode_seed(std::uint64_t seed, std::int64_t episode_index);

/// Owns the env and agent of one run and steps them episode by episode.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);
  ~Trainer();
  Trainer(Trainer&&) noexcept;
  Trainer& operator=(Trainer&&) noexcept;

  /// Trains until total_steps env steps, calling `on_row` after every
  /// finished episode and `on_episode_end` after that (checkpoint hook). A
  /// partially played episode at the step limit is not logged.
  void run(const std::function<void(const LogRow&)>& on_row = {},
           const std::function<void(Trainer&)>& on_episode_end = {});

  void save_checkpoint(std::ostream& os);
  void save_checkpoint(const std::string& path);
  /// Restores agent state, counters and rows. Throws on a version or config
  /// mismatch; on any error this Trainer is left unchanged.
  void load_checkpoint(std::istream& is);
  void load_checkpoint(const std::string& path);

  const ExperimentConfig& config() const { return cfg_; }
  const std::vector<LogRow>& rows() const { return rows_; }
  agents::Agent& agent() { return *agent_; }
  std::int64_t global_step() const { return global_step_; }
  std::int64_t episode_index() const { return episode_index_; }

 private:
  ExperimentConfig cfg_;
  std::unique_ptr<envs::Env> env_;
  std::unique_ptr<agents::Agent> agent_;
  std::vector<LogRow> rows_;
  std::int64_t global_step_ = 0;
  std::int64_t episode_index_ = 0;
};

struct RunOptions {
  /// Resume from this checkpoint file instead of starting fresh.
  std::string resume_from;
  std::function<void(const LogRow&)> on_row;
};

/// Validates, trains, and (when cfg.out is set) writes config.txt, log.csv
/// (flushed per row) and summary.json to cfg.out, plus checkpoint.bin every
/// checkpoint_every episodes. On an
/// abort the partial log stays on disk and the exception propagates.
RunRecord run(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Mean undiscounted return of `policy` over `episodes` episodes of the
/// undelayed env, with reset seeds derived from `seed`.
double evaluate_policy(const std::string& env, const std::function<Vec(const Vec&)>& policy, int episodes,
                       std::uint64_t seed);

}  // namespace vdfp::harness
