#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "oracles/oracles.hpp"
#include "vdfp/agents/agent.hpp"
#include "vdfp/agents/components.hpp"
#include "vdfp/errors.hpp"

using namespace vdfp;
using namespace vdfp::agents;

namespace {

envs::EnvSpec spec_of(const char* name) { return envs::make_env(name)->spec(); }

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
  return m;
}

AgentConfig fast(AgentKind k) {
  AgentConfig c = defaults_for(k);
  c.actor_hidden = {16, 16};
  c.critic_hidden = {16, 16};
  c.collect_steps = 20;
  c.pretrain_steps = 20;
  c.batch_size = 8;
  c.max_len = 8;
  c.update_every_episodes = 1;
  c.ppo_epochs = 2;
  c.vae.z_dim = 4;
  c.vae.width_scale = 0.05;
  c.repr.filter_heights = {1, 2};
  c.repr.filter_counts = {4, 4};
  c.repr.repr_dim = 8;
  return c;
}

std::vector<Vec> rollout_actions(AgentKind k, std::uint64_t seed, int steps) {
  auto env = envs::make_env("double_integrator_1d");
  auto agent = make_agent(k, env->spec(), fast(k), seed);
  std::vector<Vec> out;
  Vec s = env->reset(seed);
  for (int t = 0; t < steps; ++t) {
    const Vec a = agent->act(s, true);
    out.push_back(a);
    const auto r = env->step(a);
    agent->observe(s, a, r.reward, r.next_state, r.done, false);
    s = r.done ? env->reset(seed + static_cast<std::uint64_t>(t)) : r.next_state;
  }
  return out;
}

}  // namespace

TEST_SUITE("agents") {
  TEST_CASE("kind names round-trip; config validation") {
    for (const auto& n : agent_names()) CHECK(to_string(parse_agent_kind(n)) == n);
    CHECK_THROWS(parse_agent_kind("sac"));
    CHECK(is_on_policy(AgentKind::kPpo));
    CHECK(is_on_policy(AgentKind::kVdPpo));
    CHECK_FALSE(is_on_policy(AgentKind::kDdsr));
    AgentConfig c = defaults_for(AgentKind::kDdpg);
    CHECK_NOTHROW(c.validate());
    c.gamma = 1.5;
    CHECK_THROWS(c.validate());
    AgentConfig b = defaults_for(AgentKind::kPpo);
    b.batch_size = 0;
    CHECK_THROWS(b.validate());
  }

  TEST_CASE("GAE: lambda 0 is the TD error, lambda 1 is return minus value, and both match the direct sum") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform() * 30);
      std::vector<double> r(n), v(n + 1);
      std::vector<bool> d(n);
      for (int i = 0; i < n; ++i) {
        r[i] = rng.normal();
        d[i] = rng.uniform() < 0.1;
      }
      for (auto& x : v) x = rng.normal();
      const double g = 0.97;
      const auto a0 = gae(r, v, d, g, 0.0);
      const auto a1 = gae(r, v, d, g, 1.0);
      const auto ref = oracles::gae_direct(r, v, d, g, 0.7);
      const auto got = gae(r, v, d, g, 0.7);
      double ret = v[n];
      for (int i = n - 1; i >= 0; --i) {
        const double nt = d[i] ? 0.0 : 1.0;
        CHECK(a0[i] == r[i] + g * nt * v[i + 1] - v[i]);
        ret = r[i] + g * nt * ret;
        CHECK(a1[i] == doctest::Approx(ret - v[i]).epsilon(1e-12));
        CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      }
    }
    CHECK_THROWS(gae({1.0}, {1.0}, {false}, 0.9, 0.9));
  }

  TEST_CASE("return advantages and the clipped surrogate") {
    const Vec ret = (Vec(3) << 1.0, -2.0, 0.5).finished();
    const Vec val = (Vec(3) << 0.25, 1.0, 0.5).finished();
    const Vec adv = return_advantages(ret, val);
    CHECK(adv(0) == 0.75);
    CHECK(adv(1) == -3.0);
    CHECK(adv(2) == 0.0);
    CHECK_THROWS(return_advantages(ret, Vec::Zero(2)));

    nn::Tape tape;
    const Mat ratio = (Mat(4, 1) << 1.5, 0.5, 1.5, 0.5).finished();
    const Mat a = (Mat(4, 1) << 2.0, 2.0, -2.0, -2.0).finished();
    const Mat out = clipped_surrogate(tape.constant(ratio), a, 0.2).value();
    CHECK(out(0) == doctest::Approx(1.2 * 2.0));   // gains capped
    CHECK(out(1) == doctest::Approx(0.5 * 2.0));   // losses kept
    CHECK(out(2) == doctest::Approx(1.5 * -2.0));  // losses kept
    CHECK(out(3) == doctest::Approx(0.8 * -2.0));  // gains capped
  }

  TEST_CASE("polyak update: rate 1 copies, rate 0 keeps") {
    Rng rng(2);
    nn::Mlp online("a", 3, {4}, 2, rng), target("b", 3, {4}, 2, rng);
    const Vec before = nn::flatten_values(target.params());
    nn::polyak_update(target.params(), online.params(), 0.0);
    CHECK(nn::flatten_values(target.params()) == before);
    nn::polyak_update(target.params(), online.params(), 1.0);
    CHECK(nn::flatten_values(target.params()) == nn::flatten_values(online.params()));
  }

  TEST_CASE("transition buffer is a FIFO of fixed capacity") {
    TransitionBuffer buf(3);
    for (int i = 0; i < 5; ++i) {
      buf.add(Vec::Constant(1, i), Vec::Constant(1, i), i, Vec::Constant(1, i + 1), i == 4);
    }
    CHECK(buf.size() == 3);
    Rng rng(3);
    const auto b = buf.sample(200, rng);
    CHECK(b.r.minCoeff() == 2.0);
    CHECK(b.r.maxCoeff() == 4.0);
    for (Eigen::Index i = 0; i < b.r.size(); ++i) {
      CHECK(b.s(i, 0) == b.r(i));
      CHECK(b.s2(i, 0) == b.r(i) + 1.0);
      CHECK(b.not_terminal(i) == (b.r(i) == 4.0 ? 0.0 : 1.0));
    }
  }

  TEST_CASE("terminal transitions: the TD target is the reward alone") {
    Rng rng(4);
    QCritic q("q", 2, 1, {16, 16}, rng), qt("qt", 2, 1, {16, 16}, rng);
    nn::Adam opt(1e-2);
    TransitionBuffer buf(1000);
    for (int i = 0; i < 200; ++i) {
      buf.add(random_mat(2, 1, rng), random_mat(1, 1, rng), 2.0, Vec::Constant(2, 1e3), true);
    }
    Rng sample(5);
    for (int step = 0; step < 800; ++step) {
      const auto b = buf.sample(32, sample);
      q_td_step(q, qt, opt, b, Mat::Constant(32, 1, 1e3), 0.99);
    }
    const auto b = buf.sample(64, sample);
    CHECK((q.evaluate(b.s, b.a).array() - 2.0).abs().maxCoeff() < 0.05);
  }

  TEST_CASE("zero rewards: a Q critic trained by TD stays at 0") {
    Rng rng(6);
    QCritic q("q", 2, 1, {16, 16}, rng), qt("qt", 2, 1, {16, 16}, rng);
    nn::Adam opt(1e-3);
    TransitionBuffer buf(1000);
    for (int i = 0; i < 300; ++i) buf.add(random_mat(2, 1, rng), random_mat(1, 1, rng), 0.0, random_mat(2, 1, rng), false);
    Rng sample(7);
    for (int step = 0; step < 3000; ++step) {
      const auto b = buf.sample(32, sample);
      q_td_step(q, qt, opt, b, random_mat(32, 1, sample), 0.9);
      nn::polyak_update(qt.params(), q.params(), 0.05);
    }
    const Mat s = random_mat(100, 2, rng), a = random_mat(100, 1, rng);
    CHECK(q.evaluate(s, a).cwiseAbs().maxCoeff() < 0.05);
  }

  TEST_CASE("exploration noise has the configured std and respects the bounds") {
    const envs::EnvSpec spec = spec_of("point_mass_2d");
    Rng rng(8);
    DeterministicActor actor("actor", spec, {8}, rng);
    for (auto* p : actor.params()) p->value.setZero();  // pi(s) = centre
    const Vec s = Vec::Zero(spec.state_dim);
    Rng noise(9);
    const int n = 40000;
    Vec sum = Vec::Zero(spec.action_dim), sq = Vec::Zero(spec.action_dim);
    for (int i = 0; i < n; ++i) {
      const Vec a = actor.explore(s, 0.1, noise);
      CHECK(((a.array() >= spec.action_low.array()) && (a.array() <= spec.action_high.array())).all());
      sum += a;
      sq += a.cwiseProduct(a);
    }
    const Vec mean = sum / n;
    const Vec sd = (sq / n - mean.cwiseProduct(mean)).cwiseSqrt();
    for (int i = 0; i < spec.action_dim; ++i) {
      CHECK(sd(i) == doctest::Approx(0.1 * spec.action_half_range()(i)).epsilon(0.02));
    }
    const Vec big = actor.explore(s, 1e6, noise);
    CHECK(((big.array() == spec.action_low.array()) || (big.array() == spec.action_high.array())).all());
  }

  TEST_CASE("off-policy agents share the actor and differ only in the critic") {
    const envs::EnvSpec spec = spec_of("point_mass_2d");
    std::vector<AgentDescription> ds;
    for (auto k : {AgentKind::kVdDdpg, AgentKind::kDdpg, AgentKind::kDdsr}) {
      ds.push_back(make_agent(k, spec, defaults_for(k), 1)->describe());
    }
    for (const auto& d : ds) {
      CHECK(d.actor_widths == ds[0].actor_widths);
      CHECK(d.actor_output == ds[0].actor_output);
      CHECK(d.exploration_sigma == ds[0].exploration_sigma);
    }
    // The collection phase is 5000 steps for VD-DDPG and 10000 for the baselines.
    CHECK(ds[1].collect_steps == ds[2].collect_steps);
    CHECK(ds[0].critic != ds[1].critic);
    CHECK(ds[1].critic != ds[2].critic);
    CHECK_FALSE(ds[0].has_target_networks);
    for (const auto& n : ds[0].parameter_names) CHECK(n.find("target") == std::string::npos);
    CHECK(ds[1].has_target_networks);
    const auto j = ds[0].to_json();
    CHECK(j.at("name") == "vd_ddpg");
  }

  TEST_CASE("every agent acts within bounds and is deterministic in its seed") {
    for (const auto& n : agent_names()) {
      CAPTURE(n);
      const AgentKind k = parse_agent_kind(n);
      const auto a = rollout_actions(k, 11, 120);
      const auto b = rollout_actions(k, 11, 120);
      const auto c = rollout_actions(k, 12, 120);
      REQUIRE(a.size() == b.size());
      bool differs = false;
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        differs = differs || a[i] != c[i];
        if (!is_on_policy(k)) CHECK(a[i].cwiseAbs().maxCoeff() <= 1.0);
      }
      CHECK(differs);
    }
  }

  TEST_CASE("a diverging critic aborts with DivergenceError") {
    const envs::EnvSpec spec = spec_of("double_integrator_1d");
    AgentConfig c = fast(AgentKind::kDdpg);
    c.divergence_bound = 1e-12;
    auto agent = make_agent(AgentKind::kDdpg, spec, c, 3);
    Rng rng(1);
    const Vec s = Vec::Zero(spec.state_dim), a = Vec::Zero(spec.action_dim);
    CHECK_THROWS_AS(
        [&] {
          for (int t = 0; t < 100; ++t) agent->observe(s, a, 1.0, s, false, false);
        }(),
        DivergenceError);
  }
}
