#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vdfp::verify {

struct Result {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Options {
  /// Criteria 8, 9 and the learning half of 11 train several agents for
  /// tens of thousands of steps; they are skipped (reported as not run) unless set.
  bool include_learning = true;
  int seeds = 5;
  long long steps = 50000;
};

/// Ids 1..11 in order.
std::vector<int> all_ids();
bool is_learning(int id);

Result check(int id, const Options& opts);

/// Runs the given ids (all when empty), printing one PASS/FAIL line each.
std::vector<Result> run(const std::vector<int>& ids, const Options& opts, std::ostream& out);

}  // namespace vdfp::verify
