#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vdfp/harness/config.hpp"
#include "vdfp/harness/report.hpp"
#include "vdfp/harness/run.hpp"

using namespace vdfp;
using namespace vdfp::harness;

namespace {

ExperimentConfig small(agents::AgentKind k, std::int64_t steps = 400) {
  ExperimentConfig c;
  c.set_agent(k);
  c.env = "double_integrator_1d";
  c.total_steps = steps;
  c.seed = 5;
  for (const auto& [key, value] : parse_pairs(R"(
      actor_hidden = 16,16
      critic_hidden = 16,16
      collect_steps = 50
      pretrain_steps = 50
      batch_size = 8
      update_every_episodes = 1
      ppo_epochs = 2
      vae.z_dim = 4
      vae.width_scale = 0.05
      repr.filter_heights = 1,2
      repr.filter_counts = 4,4
      repr.repr_dim = 8
  )")) {
    c.set(key, value);
  }
  return c;
}

LogRow row(std::int64_t step, std::int64_t ep, double ret) {
  LogRow r;
  r.global_step = step;
  r.episode_index = ep;
  r.episode_return = ret;
  return r;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vdfp_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config text round-trips and rejects unknown keys") {
    ExperimentConfig c = small(agents::AgentKind::kDdsr);
    c.set("delay_mode", "accumulate");
    c.set("delay_steps", "8");
    const ExperimentConfig back = ExperimentConfig::parse(c.to_text());
    CHECK(back.to_text() == c.to_text());
    CHECK(back.get("actor_hidden") == "16,16");
    CHECK(back.delay.d == 8);
    CHECK_THROWS_AS(c.set("learning_rate", "1"), ConfigError);
    CHECK_THROWS_AS(c.set("gamma", "abc"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("gamma 0.9"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("seed = 1\nseed = 2"), ConfigError);
    CHECK(config_keys().size() > 20);
  }

  TEST_CASE("agent is applied first so file overrides survive") {
    const ExperimentConfig c = ExperimentConfig::parse("actor_lr = 0.003\nagent = ppo\n# comment\n");
    CHECK(c.agent == agents::AgentKind::kPpo);
    CHECK(c.agent_cfg.actor_lr == 0.003);
    CHECK(c.agent_cfg.batch_size == 256);
  }

  TEST_CASE("validation catches bad values") {
    ExperimentConfig c = small(agents::AgentKind::kDdpg);
    c.env = "nope";
    CHECK_THROWS(c.validate());
    ExperimentConfig d = small(agents::AgentKind::kDdpg);
    d.total_steps = -1;
    CHECK_THROWS(d.validate());
    ExperimentConfig e = small(agents::AgentKind::kDdpg);
    e.set("delay_mode", "shift");
    e.set("delay_steps", "0");
    CHECK_THROWS(e.validate());
  }

  TEST_CASE("CSV rows round-trip exactly, NaN included") {
    LogRow r = row(123, 4, 0.1 + 0.2);
    r.kl_loss = 1.0 / 3.0;
    const LogRow back = parse_csv_row(to_csv(r));
    CHECK(back == r);
    CHECK(std::isnan(back.recon_loss));
    std::istringstream is(csv_header() + "\n" + to_csv(r) + "\n" + to_csv(row(200, 5, -1.0)) + "\n");
    CHECK(read_log(is).size() == 2);
    CHECK_THROWS(parse_csv_row("1,2"));
  }

  TEST_CASE("moving average and summary recomputation") {
    CHECK(moving_average({1, 2, 3, 4}, 2) == std::vector<double>{1.0, 1.5, 2.5, 3.5});
    std::vector<LogRow> rows;
    for (int i = 0; i < 250; ++i) rows.push_back(row(10 * (i + 1), i, i < 150 ? 0.0 : 2.0));
    const Summary s = summarize(rows);
    CHECK(s.episodes == 250);
    CHECK(s.final_avg100 == 2.0);
    CHECK(s.max_avg100 == 2.0);
    const auto ma = moving_average([&] {
      std::vector<double> xs;
      for (const auto& r : rows) xs.push_back(r.episode_return);
      return xs;
    }());
    double mean = 0.0;
    for (double v : ma) mean += v;
    CHECK(s.mean_avg100 == doctest::Approx(mean / 250.0).epsilon(1e-14));
    const Summary back = Summary::from_json(s.to_json());
    CHECK(back.final_avg100 == s.final_avg100);
    CHECK(std::isnan(summarize({}).final_avg100));
  }

  TEST_CASE("zero total steps logs nothing") {
    const RunRecord rec = run(small(agents::AgentKind::kDdpg, 0));
    CHECK(rec.rows.empty());
    CHECK(rec.summary.episodes == 0);
  }

  TEST_CASE("same seed, same log; rows are consistent with the step budget") {
    for (auto k : {agents::AgentKind::kVdDdpg, agents::AgentKind::kPpo, agents::AgentKind::kDdsr}) {
      CAPTURE(agents::to_string(k));
      const RunRecord a = run(small(k));
      const RunRecord b = run(small(k));
      REQUIRE(!a.rows.empty());
      CHECK(a.rows == b.rows);
      std::int64_t prev = 0;
      for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].episode_index == static_cast<std::int64_t>(i));
        CHECK(a.rows[i].global_step > prev);
        prev = a.rows[i].global_step;
      }
      CHECK(prev <= 400);
      CHECK(summarize(a.rows).final_avg100 == a.summary.final_avg100);
    }
  }

  TEST_CASE("run writes its artefacts and the summary matches the log on disk") {
    const auto dir = temp_dir("artefacts");
    ExperimentConfig c = small(agents::AgentKind::kDdpg);
    c.out = dir.string();
    c.checkpoint_every = 1;
    const RunRecord rec = run(c);
    for (const char* f : {"config.txt", "log.csv", "summary.json", "checkpoint.bin"}) {
      CHECK(std::filesystem::exists(dir / f));
    }
    const auto rows = read_log_file((dir / "log.csv").string());
    CHECK(rows == rec.rows);
    CHECK(ExperimentConfig::load((dir / "config.txt").string()).to_text() == c.to_text());
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("checkpoint resume matches an uninterrupted run") {
    for (auto k : {agents::AgentKind::kVdDdpg, agents::AgentKind::kDdpg, agents::AgentKind::kVdPpo}) {
      CAPTURE(agents::to_string(k));
      const ExperimentConfig full_cfg = small(k, 600);
      const RunRecord full = run(full_cfg);

      ExperimentConfig first = small(k, 300);
      Trainer t(first);
      t.run();
      std::stringstream ckpt;
      t.save_checkpoint(ckpt);

      Trainer resumed(full_cfg);
      resumed.load_checkpoint(ckpt);
      CHECK(resumed.rows() == t.rows());
      resumed.run();
      CHECK(resumed.rows() == full.rows);
    }
  }

  TEST_CASE("checkpoint mismatches are rejected and leave the trainer unchanged") {
    Trainer a(small(agents::AgentKind::kDdpg, 200));
    a.run();
    std::stringstream ckpt;
    a.save_checkpoint(ckpt);
    const std::string bytes = ckpt.str();

    ExperimentConfig other = small(agents::AgentKind::kDdpg, 200);
    other.set("actor_lr", "0.5");
    Trainer b(other);
    std::istringstream in1(bytes);
    CHECK_THROWS(b.load_checkpoint(in1));
    CHECK(b.rows().empty());
    CHECK(b.global_step() == 0);

    Trainer c(small(agents::AgentKind::kDdsr, 200));
    std::istringstream in2(bytes);
    CHECK_THROWS(c.load_checkpoint(in2));

    std::string bad = bytes;
    bad[0] = static_cast<char>(bad[0] + 1);  // version field
    Trainer d(small(agents::AgentKind::kDdpg, 200));
    std::istringstream in3(bad);
    CHECK_THROWS(d.load_checkpoint(in3));

    std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS(d.load_checkpoint(truncated));
    CHECK(d.episode_index() == 0);
  }

  TEST_CASE("aggregate: identical curves give zero spread; two runs give half the sample std") {
    Curve a{{10, 20, 30}, {1, 2, 3}};
    Band same = aggregate({a, a, a}, 3);
    for (std::size_t i = 0; i < same.x.size(); ++i) CHECK(same.half_std[i] == 0.0);
    CHECK(same.x.back() == 30.0);

    Curve lo{{10, 30}, {0, 0}}, hi{{10, 30}, {2, 2}};
    const Band b = aggregate({lo, hi}, 3);
    for (std::size_t i = 0; i < b.x.size(); ++i) {
      CHECK(b.mean[i] == 1.0);
      CHECK(b.half_std[i] == doctest::Approx(std::sqrt(2.0) / 2.0));
      CHECK(b.n[i] == 2);
    }
    Curve late{{25, 30}, {5, 5}};
    const Band partial = aggregate({a, late}, 3);
    CHECK(partial.n[0] == 1);
    CHECK(partial.half_std[0] == 0.0);
    CHECK(band_csv(b).find("half_std") != std::string::npos);
  }

  TEST_CASE("smoothed curve uses the trailing mean at each episode end") {
    std::vector<LogRow> rows{row(5, 0, 1.0), row(12, 1, 3.0), row(20, 2, 5.0)};
    const Curve c = smoothed_curve(rows, 2);
    CHECK(c.x == std::vector<double>{5, 12, 20});
    CHECK(c.y == std::vector<double>{1.0, 2.0, 4.0});
  }

  TEST_CASE("SVG: a flat series renders, and a single run has no shaded band") {
    Band flat;
    flat.x = {0, 1, 2};
    flat.mean = {3, 3, 3};
    flat.half_std = {0, 0, 0};
    flat.n = {1, 1, 1};
    const std::string svg = render_svg("flat", {{"only", flat}});
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("<polygon") == std::string::npos);
    CHECK(svg.find("nan") == std::string::npos);
  }

  TEST_CASE("evaluate_policy is deterministic and separates good from bad policies") {
    const auto zero = [](const Vec& s) { return Vec::Zero(1).eval(); };
    const auto pd = [](const Vec& s) {
      Vec a(1);
      a(0) = std::clamp(-2.0 * s(0) - 2.5 * s(1), -1.0, 1.0);
      return a;
    };
    const double z1 = evaluate_policy("double_integrator_1d", zero, 5, 3);
    CHECK(z1 == evaluate_policy("double_integrator_1d", zero, 5, 3));
    CHECK(evaluate_policy("double_integrator_1d", pd, 5, 3) > z1);
  }
}
