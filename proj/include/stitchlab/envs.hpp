#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stitchlab/rng.hpp"

namespace stitchlab::envs {

enum class LayoutId { kExampleMdp, kGridworld5, kUmaze, kMedium, kLarge };

LayoutId layout_from_name(const std::string& name);
const char* layout_name(LayoutId id);

struct Cell {
  int x = 0;  // column
  int y = 0;  // row
  bool operator==(const Cell&) const = default;
};

// Action indices: 0=up (+y), 1=right (+x), 2=down, 3=left.
// The example layout only exposes {up, right}.
constexpr int kUp = 0, kRight = 1, kDown = 2, kLeft = 3;

struct MazeSpec {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> walls;  // row-major, 1 = wall
  LayoutId id = LayoutId::kUmaze;
  int n_actions = 4;
  int horizon = 100;
  bool noisy_obs = false;

  bool wall_at(int x, int y) const {
    return walls[static_cast<std::size_t>(y) * width + x] != 0;
  }
  bool free_at(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height && !wall_at(x, y);
  }
  std::vector<Cell> free_cells() const;  // row-major order
  std::string to_text() const;           // '#' walls, '.' free

  static MazeSpec builtin(LayoutId id);
  // Parses a '#'/'.' grid (one row per line). Validates the border, cell
  // count and mutual reachability of free cells (flood fill over the
  // undirected grid adjacency).
  static MazeSpec from_grid(const std::string& text, LayoutId id,
                            int n_actions, int horizon, bool noisy_obs);
};

// Fixed cells of the example layout (five states plus the goal).
struct ExampleCells {
  Cell s0, s1, s2, s3, s4, g;
};
ExampleCells example_cells();

struct Observation {
  double x = 0.0;
  double y = 0.0;
};

// phi: state -> goal space. Goal space is the cell grid; observation noise is
// discarded.
Observation phi(Cell c);
Cell round_to_cell(const Observation& o);

Cell apply_move(const MazeSpec& spec, Cell c, int action);  // blocked -> stay

struct EnvState {
  Cell cell;
  double noise_x = 0.0, noise_y = 0.0;
  int t = 0;
  Cell goal;
  bool done = false;
};

class Env {
 public:
  explicit Env(MazeSpec spec, bool terminate_on_goal = true);

  // Deterministic given (seed, start, goal). Unspecified start/goal are drawn
  // uniformly over free cells with start != goal. Throws on wall cells.
  std::pair<Observation, Cell> reset(uint64_t seed,
                                     std::optional<Cell> start = {},
                                     std::optional<Cell> goal = {});

  struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false;
  };
  // Throws on invalid action index or when the episode is already done.
  StepResult step(int action);

  Observation observation() const;
  const EnvState& state() const { return state_; }
  const MazeSpec& spec() const { return spec_; }

 private:
  MazeSpec spec_;
  bool terminate_on_goal_;
  EnvState state_;
  Rng rng_{0};
};

// Exact tabular form of a layout. States index the free cells in row-major
// order; the kernel rows sum to one.
struct FiniteMdp {
  int n_states = 0;
  int n_actions = 0;
  int width = 0;
  std::vector<double> kernel;   // [s][a][s']
  std::vector<Cell> state_cell;
  std::vector<int> cell_state;  // width*height, -1 on walls

  double prob(int s, int a, int s2) const {
    return kernel[(static_cast<std::size_t>(s) * n_actions + a) * n_states +
                  s2];
  }
  int state_of(Cell c) const;
};

FiniteMdp enumerate_mdp(const MazeSpec& spec);

// BFS distances over free cells restricted to `allowed` (empty = all free).
// Unreachable cells get -1.
std::vector<int> bfs_distances(const MazeSpec& spec, Cell from,
                               const std::vector<uint8_t>& allowed = {});

}  // namespace stitchlab::envs
