#include "vdfp/harness/run.hpp"

#include <fmt/format.h>

#include <cereal/archives/binary.hpp>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>

#include "vdfp/nn/serialize.hpp"

namespace vdfp::harness {

namespace {

constexpr char kMagic[] = "VDFP-CHECKPOINT";

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::runtime_error("log: bad number '" + s + "'");
  return v;
}

std::unique_ptr<envs::Env> build_env(const ExperimentConfig& cfg) {
  return envs::wrap_delay(envs::make_env(cfg.env), cfg.delay);
}

}  // namespace

bool operator==(const LogRow& a, const LogRow& b) {
  return a.global_step == b.global_step && a.episode_index == b.episode_index &&
         same(a.episode_return, b.episode_return) && same(a.recon_loss, b.recon_loss) &&
         same(a.kl_loss, b.kl_loss) && same(a.return_loss, b.return_loss) &&
         same(a.actor_objective, b.actor_objective);
}

std::string csv_header() {
  return "global_step,episode_index,episode_return,recon_loss,kl_loss,return_loss,actor_objective";
}

std::string to_csv(const LogRow& r) {
  return fmt::format("{},{},{},{},{},{},{}", r.global_step, r.episode_index, r.episode_return, r.recon_loss,
                     r.kl_loss, r.return_loss, r.actor_objective);
}

LogRow parse_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() != 7) throw std::runtime_error("log: expected 7 columns in '" + line + "'");
  LogRow r;
  r.global_step = std::stoll(cells[0]);
  r.episode_index = std::stoll(cells[1]);
  r.episode_return = parse_double(cells[2]);
  r.recon_loss = parse_double(cells[3]);
  r.kl_loss = parse_double(cells[4]);
  r.return_loss = parse_double(cells[5]);
  r.actor_objective = parse_double(cells[6]);
  return r;
}

std::vector<LogRow> read_log(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != csv_header()) throw std::runtime_error("log: missing or unexpected header");
  std::vector<LogRow> rows;
  while (std::getline(is, line)) {
    if (!line.empty()) rows.push_back(parse_csv_row(line));
  }
  return rows;
}

std::vector<LogRow> read_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log " + path);
  return read_log(in);
}

std::vector<double> moving_average(const std::vector<double>& xs, int window) {
  if (window < 1) throw std::invalid_argument("moving_average: window must be positive");
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - static_cast<std::size_t>(window) : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += xs[j];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

nlohmann::json Summary::to_json() const {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"episodes", episodes},
          {"max_avg100", num(max_avg100)},
          {"mean_avg100", num(mean_avg100)},
          {"final_avg100", num(final_avg100)}};
}

Summary Summary::from_json(const nlohmann::json& j) {
  auto num = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  Summary s;
  s.episodes = j.at("episodes").get<std::int64_t>();
  s.max_avg100 = num(j.at("max_avg100"));
  s.mean_avg100 = num(j.at("mean_avg100"));
  s.final_avg100 = num(j.at("final_avg100"));
  return s;
}

Summary summarize(const std::vector<LogRow>& rows) {
  Summary s;
  s.episodes = static_cast<std::int64_t>(rows.size());
  if (rows.empty()) return s;
  std::vector<double> returns;
  returns.reserve(rows.size());
  for (const auto& r : rows) returns.push_back(r.episode_return);
  const auto ma = moving_average(returns, 100);
  s.max_avg100 = ma.front();
  double total = 0.0;
  for (double v : ma) {
    s.max_avg100 = std::max(s.max_avg100, v);
    total += v;
  }
  s.mean_avg100 = total / static_cast<double>(ma.size());
  s.final_avg100 = ma.back();
  return s;
}

std::uint64_t episode_seed(std::uint64_t seed, std::int64_t episode_index) {
  return Rng(seed).split("env").split(static_cast<std::uint64_t>(episode_index))();
}

Trainer::Trainer(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  env_ = build_env(cfg_);
  agent_ = agents::make_agent(cfg_.agent, env_->spec(), cfg_.agent_cfg, cfg_.seed);
}

Trainer::~Trainer() = default;
Trainer::Trainer(Trainer&&) noexcept = default;
Trainer& Trainer::operator=(Trainer&&) noexcept = default;

void Trainer::run(const std::function<void(const LogRow&)>& on_row,
                  const std::function<void(Trainer&)>& on_episode_end) {
  const int horizon = env_->spec().max_episode_steps;
  while (global_step_ < cfg_.total_steps) {
    Vec s = env_->reset(episode_seed(cfg_.seed, episode_index_));
    double total = 0.0;
    bool done = false;
    while (!done && global_step_ < cfg_.total_steps) {
      const Vec a = agent_->act(s, true);
      const envs::StepResult r = env_->step(a);
      done = r.done;
      const bool terminal = done && env_->elapsed_steps() < horizon;
      agent_->observe(s, a, r.reward, r.next_state, done, terminal);
      total += r.reward;
      s = r.next_state;
      ++global_step_;
    }
    if (!done) break;
    const agents::StepLosses l = agent_->take_losses();
    LogRow row{global_step_, episode_index_, total, l.recon_loss, l.kl_loss, l.return_loss, l.actor_objective};
    rows_.push_back(row);
    ++episode_index_;
    if (on_row) on_row(row);
    if (on_episode_end) on_episode_end(*this);
  }
}

void Trainer::save_checkpoint(std::ostream& os) {
  cereal::BinaryOutputArchive ar(os);
  ar(std::string(kMagic), kCheckpointVersion, cfg_.to_text(), global_step_, episode_index_);
  const std::uint64_t n = rows_.size();
  ar(n);
  for (const auto& r : rows_) {
    ar(r.global_step, r.episode_index, r.episode_return, r.recon_loss, r.kl_loss, r.return_loss, r.actor_objective);
  }
  agent_->save(ar);
}

void Trainer::save_checkpoint(const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp);
    save_checkpoint(os);
  }
  std::filesystem::rename(tmp, path);
}

void Trainer::load_checkpoint(std::istream& is) {
  cereal::BinaryInputArchive ar(is);
  std::string magic;
  ar(magic);
  if (magic != kMagic) throw std::runtime_error("checkpoint: not a checkpoint file");
  std::uint32_t version = 0;
  ar(version);
  if (version != kCheckpointVersion) {
    throw std::runtime_error(fmt::format("checkpoint: version {} is not supported (this build reads version {})",
                                         version, kCheckpointVersion));
  }
  std::string stored_text;
  std::int64_t step = 0;
  std::int64_t episode = 0;
  ar(stored_text, step, episode);
  const ExperimentConfig stored = ExperimentConfig::parse(stored_text);
  for (const auto& key : config_keys()) {
    if (ExperimentConfig::is_run_control_key(key)) continue;
    if (stored.get(key) != cfg_.get(key)) {
      throw std::runtime_error(fmt::format("checkpoint: config mismatch for '{}': checkpoint has '{}', run has '{}'",
                                           key, stored.get(key), cfg_.get(key)));
    }
  }
  std::uint64_t n = 0;
  ar(n);
  std::vector<LogRow> rows(n);
  for (auto& r : rows) {
    ar(r.global_step, r.episode_index, r.episode_return, r.recon_loss, r.kl_loss, r.return_loss, r.actor_objective);
  }
  auto fresh = agents::make_agent(cfg_.agent, env_->spec(), cfg_.agent_cfg, cfg_.seed);
  fresh->load(ar);

  agent_ = std::move(fresh);
  rows_ = std::move(rows);
  global_step_ = step;
  episode_index_ = episode;
}

void Trainer::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  load_checkpoint(is);
}

RunRecord run(const ExperimentConfig& cfg, const RunOptions& opts) {
  Trainer trainer(cfg);
  if (!opts.resume_from.empty()) trainer.load_checkpoint(opts.resume_from);

  std::ofstream log;
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream(cfg.out + "/config.txt") << cfg.to_text();
    log.open(cfg.out + "/log.csv");
    if (!log) throw std::runtime_error("cannot write " + cfg.out + "/log.csv");
    log << csv_header() << '\n';
    for (const auto& r : trainer.rows()) log << to_csv(r) << '\n';
    log.flush();
  }
  auto on_row = [&](const LogRow& row) {
    if (log.is_open()) log << to_csv(row) << '\n' << std::flush;
    if (opts.on_row) opts.on_row(row);
  };
  auto on_end = [&](Trainer& t) {
    if (!cfg.out.empty() && cfg.checkpoint_every > 0 && t.episode_index() % cfg.checkpoint_every == 0) {
      t.save_checkpoint(cfg.out + "/checkpoint.bin");
    }
  };
  trainer.run(on_row, on_end);

  RunRecord rec{trainer.config(), trainer.rows(), summarize(trainer.rows())};
  if (!cfg.out.empty()) std::ofstream(cfg.out + "/summary.json") << rec.summary.to_json().dump(2) << '\n';
  return rec;
}

double evaluate_policy(const std::string& env_name, const std::function<Vec(const Vec&)>& policy, int episodes,
                       std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes must be positive");
  auto env = envs::make_env(env_name);
  const Rng base = Rng(seed).split("eval");
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Vec s = env->reset(base.split(static_cast<std::uint64_t>(e))());
    bool done = false;
    while (!done) {
      const envs::StepResult r = env->step(policy(s));
      total += r.reward;
      s = r.next_state;
      done = r.done;
    }
  }
  return total / episodes;
}

}  // namespace vdfp::harness
