#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "oracles/oracles.hpp"
#include "vdfp/trajstore.hpp"

using namespace vdfp;
using namespace vdfp::trajstore;

namespace {

Episode random_episode(int len, Rng& rng, int sd = 3, int ad = 2) {
  Episode ep;
  for (int t = 0; t < len; ++t) {
    Transition tr;
    tr.state = Vec(sd);
    tr.action = Vec(ad);
    for (int i = 0; i < sd; ++i) tr.state[i] = rng.normal();
    for (int i = 0; i < ad; ++i) tr.action[i] = rng.normal();
    tr.reward = rng.normal();
    ep.push_back(tr);
  }
  return ep;
}

std::vector<double> to_vector(const Segment& s) {
  const auto r = s.rewards();
  return {r.data(), r.data() + r.size()};
}

}  // namespace

TEST_SUITE("buffer") {
  TEST_CASE("one stored episode of length 5 exposes 5 anchors") {
    Rng rng(1);
    ReplayBuffer buf(100);
    const Episode ep = random_episode(5, rng);
    buf.store_episode(ep);
    CHECK(buf.size_steps() == 5);
    std::set<int> starts;
    for (int i = 0; i < 5; ++i) starts.insert(buf.segment_at(i, 64).start());
    CHECK(starts.size() == 5);
  }

  TEST_CASE("rejects empty and inconsistent episodes") {
    Rng rng(2);
    ReplayBuffer buf(100);
    CHECK_THROWS_AS(buf.store_episode(Episode{}), std::invalid_argument);
    buf.store_episode(random_episode(3, rng));
    CHECK_THROWS_AS(buf.store_episode(random_episode(3, rng, 4, 2)), std::invalid_argument);
    CHECK_THROWS_AS(buf.store_episode(random_episode(101, rng)), std::invalid_argument);
    CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
  }

  TEST_CASE("FIFO eviction keeps the step count within capacity") {
    Rng rng(3);
    ReplayBuffer buf(50);
    std::vector<Episode> eps;
    for (int i = 0; i < 11; ++i) {
      eps.push_back(random_episode(5 + (i % 3), rng));
      buf.store_episode(eps.back());
      CHECK(buf.size_steps() <= 50);
    }
    // The newest episode is always kept, the oldest went first.
    CHECK(buf.episode(buf.num_episodes() - 1).rewards[0] == eps.back()[0].reward);
    CHECK(buf.episode(0).rewards[0] != eps.front()[0].reward);
  }

  TEST_CASE("sample_segments argument checks") {
    Rng rng(4);
    ReplayBuffer buf(100);
    CHECK_THROWS(buf.sample_segments(4, 8, rng));
    buf.store_episode(random_episode(4, rng));
    CHECK_THROWS_AS(buf.sample_segments(0, 8, rng), std::invalid_argument);
    CHECK_THROWS_AS(buf.sample_segments(-2, 8, rng), std::invalid_argument);
    CHECK(buf.sample_segments(7, 8, rng).size() == 7);
  }

  TEST_CASE("length-3 episode with L=256 yields segment lengths {3,2,1}") {
    Rng rng(5);
    ReplayBuffer buf(100);
    buf.store_episode(random_episode(3, rng));
    std::set<int> lengths;
    for (const Segment& s : buf.sample_segments(200, 256, rng)) lengths.insert(s.size());
    CHECK(lengths == std::set<int>{1, 2, 3});
  }

  TEST_CASE("L=1 gives single transitions") {
    Rng rng(6);
    ReplayBuffer buf(1000);
    for (int i = 0; i < 5; ++i) buf.store_episode(random_episode(20, rng));
    for (const Segment& s : buf.sample_segments(100, 1, rng)) CHECK(s.size() == 1);
  }

  TEST_CASE("suffix property: segments end at termination or at exactly L") {
    Rng rng(7);
    ReplayBuffer buf(10000);
    for (int i = 0; i < 30; ++i) buf.store_episode(random_episode(1 + static_cast<int>(rng.index(90)), rng));
    for (const Segment& s : buf.sample_segments(2000, 16, rng)) {
      CHECK((s.reaches_episode_end() || s.size() == 16));
      CHECK(s.size() <= 16);
    }
  }

  TEST_CASE("anchor sampling is uniform over stored transitions (chi-square, 1e5 draws)") {
    Rng rng(8);
    ReplayBuffer buf(100000);
    for (int i = 0; i < 100; ++i) buf.store_episode(random_episode(1 + static_cast<int>(rng.index(9)), rng));
    std::map<std::pair<const StoredEpisode*, int>, std::int64_t> counts;
    const auto segs = buf.sample_segments(100000, 4, rng);
    for (const Segment& s : segs) ++counts[{&s.episode(), s.start()}];
    CHECK(static_cast<std::int64_t>(counts.size()) == buf.size_steps());
    std::vector<std::int64_t> c;
    for (auto& [k, v] : counts) c.push_back(v);
    const double chi = oracles::chi_square_uniform(c);
    const double df = static_cast<double>(c.size() - 1);
    // Wilson-Hilferty: z is approximately standard normal under uniformity.
    const double z = (std::cbrt(chi / df) - (1.0 - 2.0 / (9.0 * df))) / std::sqrt(2.0 / (9.0 * df));
    CHECK(std::abs(z) < 4.0);
  }

  TEST_CASE("dump and load round-trip") {
    Rng rng(9);
    ReplayBuffer buf(1000);
    std::vector<Episode> eps{random_episode(4, rng), random_episode(7, rng)};
    for (const auto& e : eps) buf.store_episode(e);
    std::stringstream ss;
    buf.dump(ss);
    const auto loaded = load_episodes(ss);
    REQUIRE(loaded.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
      REQUIRE(loaded[e].size() == eps[e].size());
      for (std::size_t t = 0; t < eps[e].size(); ++t) {
        CHECK(loaded[e][t].state == eps[e][t].state);
        CHECK(loaded[e][t].action == eps[e][t].action);
        CHECK(loaded[e][t].reward == eps[e][t].reward);
      }
    }
    std::stringstream bad("# something else\n");
    CHECK_THROWS(load_episodes(bad));
  }
}

TEST_SUITE("returns") {
  TEST_CASE("geometric sum and gamma = 0") {
    const std::vector<double> r{1, 1, 1};
    CHECK(discounted_return(r, 0.5) == 1.75);
    const std::vector<double> q{3.5, -2, 7};
    CHECK(discounted_return(q, 0.0) == 3.5);
  }

  TEST_CASE("1000 random segments match the reversed-accumulation oracle to 1e-12") {
    Rng rng(10);
    ReplayBuffer buf(100000);
    for (int i = 0; i < 50; ++i) buf.store_episode(random_episode(1 + static_cast<int>(rng.index(200)), rng));
    for (const Segment& s : buf.sample_segments(1000, 256, rng)) {
      const double g = rng.uniform();
      const double a = discounted_return(s, g);
      const double b = oracles::reversed_discounted_return(to_vector(s), g);
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
    }
  }

  TEST_CASE("return labels satisfy the one-step recursion for every stored anchor") {
    Rng rng(11);
    ReplayBuffer buf(10000);
    for (int i = 0; i < 10; ++i) buf.store_episode(random_episode(1 + static_cast<int>(rng.index(60)), rng));
    const double gamma = 0.99;
    const int big = 1 << 20;
    for (std::int64_t i = 0; i < buf.size_steps(); ++i) {
      const Segment s = buf.segment_at(i, big);
      if (s.size() == 1) {
        CHECK(discounted_return(s, gamma) == s.reward(0));
        continue;
      }
      const Segment next = buf.segment_at(i + 1, big);
      const double lhs = discounted_return(s, gamma);
      const double rhs = s.reward(0) + gamma * discounted_return(next, gamma);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_SUITE("padding") {
  TEST_CASE("length-3 segment padded to 64") {
    Rng rng(12);
    ReplayBuffer buf(100);
    buf.store_episode(random_episode(3, rng));
    const Segment s = buf.segment_at(0, 64);
    const PaddedSegment p = pad_to_matrix(s, 64, 1);
    CHECK(p.rows.rows() == 64);
    CHECK(p.rows.cols() == 5);
    CHECK(p.rows.topRows(3) == s.features());
    CHECK(p.rows.bottomRows(61).isZero());
    CHECK(p.mask.head(3).isOnes());
    CHECK(p.mask.tail(61).isZero());
  }

  TEST_CASE("aggregation factor contract") {
    CHECK(agg_factor_for(64) == 1);
    CHECK(agg_factor_for(8) == 1);
    CHECK(agg_factor_for(256) == 4);
    CHECK_THROWS(agg_factor_for(100));
    Rng rng(13);
    ReplayBuffer buf(1000);
    buf.store_episode(random_episode(300, rng));
    const Segment s = buf.segment_at(0, 256);
    CHECK_THROWS(pad_to_matrix(s, 256, 1));
    CHECK(pad_to_matrix(s, 256, 4).rows.rows() == 256);
    CHECK_THROWS_AS(pad_to_matrix(buf.segment_at(0, 300), 256, 4), std::invalid_argument);
  }

  TEST_CASE("mask sum equals segment length for 1000 random segments") {
    Rng rng(14);
    ReplayBuffer buf(100000);
    for (int i = 0; i < 40; ++i) buf.store_episode(random_episode(1 + static_cast<int>(rng.index(100)), rng));
    for (const Segment& s : buf.sample_segments(1000, 64, rng)) {
      const PaddedSegment p = pad_to_matrix(s, 64, 1);
      CHECK(static_cast<int>(p.mask.sum()) == s.size());
      CHECK(p.length == s.size());
    }
  }

  TEST_CASE("batched padding stacks segments") {
    Rng rng(15);
    ReplayBuffer buf(1000);
    buf.store_episode(random_episode(10, rng));
    const auto segs = buf.sample_segments(6, 8, rng);
    const PaddedBatch b = pad_batch(segs, 8, 1);
    CHECK(b.rows.rows() == 48);
    CHECK(b.batch_size() == 6);
    for (int i = 0; i < 6; ++i) {
      CHECK(b.rows.middleRows(i * 8, segs[static_cast<std::size_t>(i)].size()) ==
            segs[static_cast<std::size_t>(i)].features());
    }
  }
}
