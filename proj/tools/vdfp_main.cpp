// Command-line front end: run, sweep, plot, verify.

#include <fmt/format.h>
#include <spawn.h>
#include <sys/wait.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "vdfp/errors.hpp"
#include "vdfp/harness/report.hpp"
#include "vdfp/harness/run.hpp"
#include "vdfp/verify/criteria.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace vdfp;
using namespace vdfp::harness;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInvalid = 2, kDiverged = 3 };

// Flags shared by run and sweep; unset flags leave the config file's value.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> env, agent, delay_mode, out;
  std::optional<int> delay_steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file");
    app->add_option("--env", env, "environment name");
    app->add_option("--agent", agent, "vd_ddpg, vd_ppo, ddpg, ppo or ddsr");
    app->add_option("--delay-mode", delay_mode, "none, accumulate or shift");
    app->add_option("--delay-steps", delay_steps, "delay step d");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--steps", steps, "total environment steps");
    app->add_option("--out", out, "output directory");
    app->add_option("--set", sets, "extra key=value override (repeatable)");
  }

  ExperimentConfig build() const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
    if (agent) c.set("agent", *agent);
    if (env) c.env = *env;
    if (delay_mode) c.set("delay_mode", *delay_mode);
    if (delay_steps) c.delay.d = *delay_steps;
    if (seed) c.seed = *seed;
    if (steps) c.total_steps = *steps;
    if (out) c.out = *out;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const DivergenceError& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

int cmd_run(const ConfigFlags& flags, const std::string& resume, bool quiet) {
  const ExperimentConfig cfg = flags.build();
  RunOptions opts;
  opts.resume_from = resume;
  if (!quiet) {
    opts.on_row = [](const LogRow& r) {
      if (r.episode_index % 10 == 0) {
        std::cerr << fmt::format("step {:>8}  episode {:>5}  return {:.3f}\n", r.global_step, r.episode_index,
                                 r.episode_return);
      }
    };
  }
  const RunRecord rec = run(cfg, opts);
  std::cout << rec.summary.to_json().dump() << '\n';
  return kOk;
}

Band band_of(const std::vector<fs::path>& run_dirs) {
  std::vector<Curve> curves;
  for (const auto& d : run_dirs) curves.push_back(smoothed_curve(read_log_file((d / "log.csv").string())));
  return aggregate(curves);
}

int cmd_sweep(const ConfigFlags& flags, int seeds, int jobs) {
  ExperimentConfig cfg = flags.build();
  if (cfg.out.empty()) throw ConfigError("sweep needs --out");
  if (seeds < 1) throw ConfigError("--seeds must be positive");
  fs::create_directories(cfg.out);
  const std::string base_config = (fs::path(cfg.out) / "sweep_config.txt").string();
  std::ofstream(base_config) << cfg.to_text();
  const std::string self = fs::read_symlink("/proc/self/exe").string();

  std::vector<fs::path> dirs;
  std::vector<std::vector<std::string>> commands;
  for (int k = 0; k < seeds; ++k) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
    dirs.push_back(fs::path(cfg.out) / fmt::format("seed_{}", seed));
    commands.push_back({self, "run", "--quiet", "--config", base_config, "--seed", std::to_string(seed), "--out",
                        dirs.back().string()});
  }
  // Runs are independent processes; launch up to `jobs` at a time.
  int failures = 0;
  std::vector<pid_t> running;
  auto reap = [&] {
    int status = 0;
    waitpid(running.front(), &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
    running.erase(running.begin());
  };
  for (const auto& cmd : commands) {
    if (static_cast<int>(running.size()) >= std::max(jobs, 1)) reap();
    std::vector<char*> argv;
    for (const auto& a : cmd) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0) throw std::runtime_error("spawn failed");
    running.push_back(pid);
    std::cerr << "started seed " << cmd[6] << " -> " << cmd.back() << '\n';
  }
  while (!running.empty()) reap();

  nlohmann::json summary = nlohmann::json::object();
  std::vector<fs::path> done;
  for (const auto& d : dirs) {
    if (!fs::exists(d / "summary.json")) continue;
    std::ifstream in(d / "summary.json");
    summary[d.filename().string()] = nlohmann::json::parse(in);
    done.push_back(d);
  }
  if (!done.empty()) std::ofstream(fs::path(cfg.out) / "aggregate.csv") << band_csv(band_of(done));
  std::ofstream(fs::path(cfg.out) / "summary.json") << summary.dump(2) << '\n';
  std::cout << summary.dump() << '\n';
  return failures == 0 ? kOk : kFailure;
}

// A plot input is either a run directory (has log.csv) or a sweep directory
// (has seed_* run directories).
int cmd_plot(const std::vector<std::string>& inputs, const std::string& out) {
  std::map<std::string, std::vector<Series>> by_env;
  for (const auto& in : inputs) {
    std::vector<fs::path> runs;
    if (fs::exists(fs::path(in) / "log.csv")) {
      runs.push_back(in);
    } else {
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_directory() && fs::exists(e.path() / "log.csv")) runs.push_back(e.path());
      }
      std::sort(runs.begin(), runs.end());
    }
    if (runs.empty()) throw std::invalid_argument("plot: no runs under " + in);
    const ExperimentConfig cfg = ExperimentConfig::load((runs.front() / "config.txt").string());
    std::string label = agents::to_string(cfg.agent);
    if (cfg.delay.mode != envs::DelayMode::kNone) label += fmt::format(" ({} d={})", envs::to_string(cfg.delay.mode), cfg.delay.d);
    by_env[cfg.env].push_back({label, band_of(runs)});
  }
  fs::create_directories(out);
  for (const auto& [env, series] : by_env) {
    const fs::path file = fs::path(out) / (env + ".svg");
    std::ofstream(file) << render_svg(env, series);
    std::cout << file.string() << '\n';
  }
  return kOk;
}

int cmd_verify(const std::vector<int>& ids, bool learning, int seeds, long long steps) {
  verify::Options opts;
  opts.include_learning = learning;
  opts.seeds = seeds;
  opts.steps = steps;
  const auto results = verify::run(ids, opts, std::cout);
  for (const auto& r : results) {
    if (!r.passed) return kFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value decomposition with future prediction: training and verification"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  std::string resume;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "train one agent");
  run_flags.attach(run_cmd);
  run_cmd->add_option("--resume", resume, "checkpoint to continue from");
  run_cmd->add_flag("--quiet", quiet, "no progress lines");

  ConfigFlags sweep_flags;
  int seeds = 5;
  int jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "run consecutive seeds as separate processes and aggregate");
  sweep_flags.attach(sweep_cmd);
  sweep_cmd->add_option("--seeds", seeds, "number of seeds, starting at --seed");
  sweep_cmd->add_option("--jobs", jobs, "concurrent runs");

  std::vector<std::string> plot_inputs;
  std::string plot_out = "plots";
  auto* plot_cmd = app.add_subcommand("plot", "smoothed return curves with half-std bands, one SVG per env");
  plot_cmd->add_option("inputs", plot_inputs, "run or sweep directories")->required();
  plot_cmd->add_option("--out", plot_out, "output directory");

  std::vector<int> ids;
  bool learning = false;
  int verify_seeds = 5;
  long long verify_steps = 50000;
  auto* verify_cmd = app.add_subcommand("verify", "run the oracle and property checks");
  verify_cmd->add_option("--criterion", ids, "criterion numbers (default: all)");
  verify_cmd->add_flag("--learning", learning, "include the multi-seed learning comparisons");
  verify_cmd->add_option("--seeds", verify_seeds, "seeds per learning comparison");
  verify_cmd->add_option("--steps", verify_steps, "environment steps per learning run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  if (run_cmd->parsed()) return guarded([&] { return cmd_run(run_flags, resume, quiet); });
  if (sweep_cmd->parsed()) return guarded([&] { return cmd_sweep(sweep_flags, seeds, jobs); });
  if (plot_cmd->parsed()) return guarded([&] { return cmd_plot(plot_inputs, plot_out); });
  return guarded([&] { return cmd_verify(ids, learning, verify_seeds, verify_steps); });
}
