#pragma once

#include <string>
#include <vector>

#include "stitchlab/envs.hpp"

namespace stitchlab::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Simple line chart with axes and labels.
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label,
                       const std::vector<Series>& series);

// Bar chart with optional error whiskers (lo/hi absolute values).
struct Bar {
  std::string label;
  double value = 0.0;
  double lo = 0.0, hi = 0.0;
  bool has_interval = false;
};
std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<Bar>& bars);

// Maze grid with one or more rollout traces drawn over it.
struct Trace {
  std::vector<envs::Cell> cells;
  std::string color = "#d62728";
};
std::string maze_traces(const envs::MazeSpec& spec,
                        const std::vector<Trace>& traces, envs::Cell start,
                        envs::Cell goal);

}  // namespace stitchlab::svg
