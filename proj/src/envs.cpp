#include "stitchlab/envs.hpp"

#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

#include "stitchlab/errors.hpp"

namespace stitchlab::envs {
namespace {

// The example layout embeds the five-state two-action chain on a 5x5 grid:
//   s1=(1,2) s2=(2,2) s3=(3,2), s0=(2,1) s4=(3,1), g=(2,3)
// so up from s0 reaches s2, up from s2 reaches g, right from s2 reaches s3
// and right from s0 dead-ends toward s4. Text rows print top-down ('#' wall,
// '.' free); y grows upward.
constexpr const char* kExampleGrid =
    "#####\n"
    "##.##\n"
    "#...#\n"
    "##..#\n"
    "#####\n";

constexpr const char* kGridworld5Grid =
    "#######\n"
    "#.....#\n"
    "#.....#\n"
    "#.....#\n"
    "#.....#\n"
    "#.....#\n"
    "#######\n";

constexpr const char* kUmazeGrid =
    "#####\n"
    "#...#\n"
    "###.#\n"
    "#...#\n"
    "#####\n";

constexpr const char* kMediumGrid =
    "########\n"
    "#..##..#\n"
    "#..#...#\n"
    "##...###\n"
    "#..#...#\n"
    "#.#..#.#\n"
    "#...#..#\n"
    "########\n";

constexpr const char* kLargeGrid =
    "############\n"
    "#....#.....#\n"
    "#.##.#.#.#.#\n"
    "#......#...#\n"
    "#.####.###.#\n"
    "#..#.#.....#\n"
    "##.#.#.#.###\n"
    "#..#...#...#\n"
    "############\n";

void flood_fill_check(const MazeSpec& spec) {
  const auto cells = spec.free_cells();
  if (cells.size() < 2) {
    throw std::invalid_argument("maze: needs at least two free cells");
  }
  const auto dist = bfs_distances(spec, cells[0]);
  for (const Cell& c : cells) {
    if (dist[static_cast<std::size_t>(c.y) * spec.width + c.x] < 0) {
      throw std::invalid_argument("maze: free cells are not mutually reachable");
    }
  }
}

}  // namespace

LayoutId layout_from_name(const std::string& name) {
  if (name == "example_mdp") return LayoutId::kExampleMdp;
  if (name == "gridworld5") return LayoutId::kGridworld5;
  if (name == "umaze") return LayoutId::kUmaze;
  if (name == "medium") return LayoutId::kMedium;
  if (name == "large") return LayoutId::kLarge;
  throw ConfigError("unknown layout: " + name);
}

const char* layout_name(LayoutId id) {
  switch (id) {
    case LayoutId::kExampleMdp: return "example_mdp";
    case LayoutId::kGridworld5: return "gridworld5";
    case LayoutId::kUmaze: return "umaze";
    case LayoutId::kMedium: return "medium";
    case LayoutId::kLarge: return "large";
  }
  return "?";
}

std::vector<Cell> MazeSpec::free_cells() const {
  std::vector<Cell> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!wall_at(x, y)) out.push_back({x, y});
    }
  }
  return out;
}

std::string MazeSpec::to_text() const {
  std::string out;
  // Text rows print top-down; y grows upward.
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) out.push_back(wall_at(x, y) ? '#' : '.');
    out.push_back('\n');
  }
  return out;
}

MazeSpec MazeSpec::from_grid(const std::string& text, LayoutId id,
                             int n_actions, int horizon, bool noisy_obs) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.size() < 3) throw std::invalid_argument("maze: too few rows");
  const int height = static_cast<int>(lines.size());
  const int width = static_cast<int>(lines[0].size());
  MazeSpec spec;
  spec.width = width;
  spec.height = height;
  spec.walls.assign(static_cast<std::size_t>(width) * height, 1);
  spec.id = id;
  spec.n_actions = n_actions;
  spec.horizon = horizon;
  spec.noisy_obs = noisy_obs;
  for (int row = 0; row < height; ++row) {
    if (static_cast<int>(lines[row].size()) != width) {
      throw std::invalid_argument("maze: ragged rows");
    }
    const int y = height - 1 - row;  // first text row is the top
    for (int x = 0; x < width; ++x) {
      const char c = lines[row][x];
      if (c != '#' && c != '.') {
        throw std::invalid_argument("maze: grid must use '#' and '.'");
      }
      spec.walls[static_cast<std::size_t>(y) * width + x] = (c == '#');
    }
  }
  for (int x = 0; x < width; ++x) {
    if (!spec.wall_at(x, 0) || !spec.wall_at(x, height - 1)) {
      throw std::invalid_argument("maze: border must be wall");
    }
  }
  for (int y = 0; y < height; ++y) {
    if (!spec.wall_at(0, y) || !spec.wall_at(width - 1, y)) {
      throw std::invalid_argument("maze: border must be wall");
    }
  }
  flood_fill_check(spec);
  return spec;
}

MazeSpec MazeSpec::builtin(LayoutId id) {
  switch (id) {
    case LayoutId::kExampleMdp:
      return from_grid(kExampleGrid, id, /*n_actions=*/2, /*horizon=*/50,
                       /*noisy_obs=*/false);
    case LayoutId::kGridworld5:
      return from_grid(kGridworld5Grid, id, 4, 100, true);
    case LayoutId::kUmaze:
      return from_grid(kUmazeGrid, id, 4, 50, false);
    case LayoutId::kMedium:
      return from_grid(kMediumGrid, id, 4, 100, false);
    case LayoutId::kLarge:
      return from_grid(kLargeGrid, id, 4, 200, false);
  }
  throw ConfigError("unknown layout id");
}

ExampleCells example_cells() {
  // See kExampleGrid. y grows upward.
  return ExampleCells{
      .s0 = {2, 1}, .s1 = {1, 2}, .s2 = {2, 2},
      .s3 = {3, 2}, .s4 = {3, 1}, .g = {2, 3},
  };
}

Observation phi(Cell c) {
  return Observation{static_cast<double>(c.x), static_cast<double>(c.y)};
}

Cell round_to_cell(const Observation& o) {
  return Cell{static_cast<int>(std::lround(o.x)),
              static_cast<int>(std::lround(o.y))};
}

Cell apply_move(const MazeSpec& spec, Cell c, int action) {
  Cell next = c;
  switch (action) {
    case kUp: next.y += 1; break;
    case kRight: next.x += 1; break;
    case kDown: next.y -= 1; break;
    case kLeft: next.x -= 1; break;
    default: throw std::invalid_argument("apply_move: bad action");
  }
  return spec.free_at(next.x, next.y) ? next : c;
}

Env::Env(MazeSpec spec, bool terminate_on_goal)
    : spec_(std::move(spec)), terminate_on_goal_(terminate_on_goal) {}

std::pair<Observation, Cell> Env::reset(uint64_t seed,
                                        std::optional<Cell> start,
                                        std::optional<Cell> goal) {
  rng_ = Rng(seed);
  const auto cells = spec_.free_cells();
  if (start && !spec_.free_at(start->x, start->y)) {
    throw std::invalid_argument("reset: start is a wall cell");
  }
  if (goal && !spec_.free_at(goal->x, goal->y)) {
    throw std::invalid_argument("reset: goal is a wall cell");
  }
  Cell s{}, g{};
  if (start && goal) {
    s = *start;
    g = *goal;
  } else if (start) {
    s = *start;
    do {
      g = cells[rng_.uniform_int(static_cast<int>(cells.size()))];
    } while (g == s);
  } else if (goal) {
    g = *goal;
    do {
      s = cells[rng_.uniform_int(static_cast<int>(cells.size()))];
    } while (s == g);
  } else {
    s = cells[rng_.uniform_int(static_cast<int>(cells.size()))];
    do {
      g = cells[rng_.uniform_int(static_cast<int>(cells.size()))];
    } while (g == s);
  }
  state_ = EnvState{};
  state_.cell = s;
  state_.goal = g;
  if (spec_.noisy_obs) {
    state_.noise_x = rng_.uniform() - 0.5;
    state_.noise_y = rng_.uniform() - 0.5;
  }
  return {observation(), g};
}

Observation Env::observation() const {
  return Observation{state_.cell.x + state_.noise_x,
                     state_.cell.y + state_.noise_y};
}

Env::StepResult Env::step(int action) {
  if (state_.done) throw std::logic_error("step: episode is done");
  if (action < 0 || action >= spec_.n_actions) {
    throw std::invalid_argument("step: invalid action index");
  }
  state_.cell = apply_move(spec_, state_.cell, action);
  if (spec_.noisy_obs) {
    state_.noise_x = rng_.uniform() - 0.5;
    state_.noise_y = rng_.uniform() - 0.5;
  }
  state_.t += 1;
  const bool reached = state_.cell == state_.goal;
  const double reward = reached ? 1.0 : 0.0;
  state_.done = (reached && terminate_on_goal_) || state_.t >= spec_.horizon;
  return StepResult{observation(), reward, state_.done};
}

int FiniteMdp::state_of(Cell c) const {
  const int idx = cell_state[static_cast<std::size_t>(c.y) * width + c.x];
  if (idx < 0) throw std::invalid_argument("state_of: cell is a wall");
  return idx;
}

FiniteMdp enumerate_mdp(const MazeSpec& spec) {
  FiniteMdp mdp;
  mdp.state_cell = spec.free_cells();
  mdp.n_states = static_cast<int>(mdp.state_cell.size());
  mdp.n_actions = spec.n_actions;
  mdp.width = spec.width;
  mdp.cell_state.assign(static_cast<std::size_t>(spec.width) * spec.height,
                        -1);
  for (int s = 0; s < mdp.n_states; ++s) {
    const Cell c = mdp.state_cell[s];
    mdp.cell_state[static_cast<std::size_t>(c.y) * spec.width + c.x] = s;
  }
  mdp.kernel.assign(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions *
                        mdp.n_states,
                    0.0);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const Cell next = apply_move(spec, mdp.state_cell[s], a);
      const int s2 =
          mdp.cell_state[static_cast<std::size_t>(next.y) * spec.width +
                         next.x];
      mdp.kernel[(static_cast<std::size_t>(s) * mdp.n_actions + a) *
                     mdp.n_states +
                 s2] = 1.0;
    }
  }
  return mdp;
}

std::vector<int> bfs_distances(const MazeSpec& spec, Cell from,
                               const std::vector<uint8_t>& allowed) {
  std::vector<int> dist(static_cast<std::size_t>(spec.width) * spec.height,
                        -1);
  auto idx = [&](Cell c) {
    return static_cast<std::size_t>(c.y) * spec.width + c.x;
  };
  auto ok = [&](Cell c) {
    if (!spec.free_at(c.x, c.y)) return false;
    return allowed.empty() || allowed[idx(c)] != 0;
  };
  if (!ok(from)) return dist;
  std::deque<Cell> queue{from};
  dist[idx(from)] = 0;
  const int dx[4] = {0, 1, 0, -1};
  const int dy[4] = {1, 0, -1, 0};
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (int d = 0; d < 4; ++d) {
      const Cell n{c.x + dx[d], c.y + dy[d]};
      if (ok(n) && dist[idx(n)] < 0) {
        dist[idx(n)] = dist[idx(c)] + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

}  // namespace stitchlab::envs
