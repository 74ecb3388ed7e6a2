#pragma once

#include <string>
#include <vector>

#include "vdfp/harness/run.hpp"

namespace vdfp::harness {

/// A run's return curve: x = global step at episode end, y = 100-episode
/// trailing mean of the episode return.
struct Curve {
  std::vector<double> x;
  std::vector<double> y;
};

Curve smoothed_curve(const std::vector<LogRow>& rows, int window = 100);

/// Mean and half the sample standard deviation across runs, on a shared grid.
struct Band {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> half_std;  // 0 where fewer than two runs have a value
  std::vector<int> n;
};

/// Each curve is read as a step function (its latest value at or before x).
/// The grid has `points` evenly spaced x values ending at the largest x of any
/// curve; grid points before a curve's first episode leave that curve out.
Band aggregate(const std::vector<Curve>& curves, int points = 100);

std::string band_csv(const Band& band);

struct Series {
  std::string label;
  Band band;
};

/// Self-contained SVG line chart: one line per series, shaded +-half_std.
std::string render_svg(const std::string& title, const std::vector<Series>& series);

}  // namespace vdfp::harness
