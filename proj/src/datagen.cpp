#include "stitchlab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stitchlab/errors.hpp"
#include "stitchlab/serialize.hpp"

namespace stitchlab::datagen {
namespace {

using envs::Cell;
using envs::MazeSpec;
using envs::Observation;
using json = nlohmann::ordered_json;

std::size_t cell_index(const MazeSpec& spec, Cell c) {
  return static_cast<std::size_t>(c.y) * spec.width + c.x;
}

json obs_list(const std::vector<Observation>& v) {
  json out = json::array();
  for (const Observation& o : v) out.push_back(json::array({o.x, o.y}));
  return out;
}

std::vector<Observation> obs_list_from(const json& j) {
  std::vector<Observation> out;
  for (const auto& e : j) {
    out.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
  }
  return out;
}

void validate(const Dataset& data) {
  if (data.trajectories.empty()) throw IoError("dataset: no trajectories");
  if (data.gamma <= 0.0 || data.gamma >= 1.0) {
    throw IoError("dataset: gamma outside (0,1)");
  }
  std::size_t total = 0;
  for (const Trajectory& t : data.trajectories) {
    if (t.obs.size() != t.length() + 1 || t.eta.size() != t.length() + 1 ||
        t.rewards.size() != t.length()) {
      throw IoError("dataset: ragged trajectory arrays");
    }
    total += t.length();
  }
  if (total != data.n_transitions) {
    throw IoError("dataset: transition count does not match header");
  }
}

}  // namespace

std::vector<std::vector<Cell>> make_regions(const MazeSpec& spec,
                                            int n_regions) {
  if (n_regions < 1) throw std::invalid_argument("make_regions: n < 1");
  const auto cells = spec.free_cells();
  if (n_regions == 1) return {cells};
  const auto dist = envs::bfs_distances(spec, cells.front());
  int maxd = 0;
  for (const Cell& c : cells) maxd = std::max(maxd, dist[cell_index(spec, c)]);
  if (maxd + 1 < 2 * n_regions) {
    throw std::invalid_argument("make_regions: maze too small for n regions");
  }
  // Band edges at distance quantiles; the edge layer belongs to both sides.
  std::vector<int> counts(maxd + 1, 0);
  for (const Cell& c : cells) counts[dist[cell_index(spec, c)]]++;
  std::vector<int> edges(n_regions + 1, 0);
  edges[n_regions] = maxd;
  int acc = 0, next_edge = 1;
  for (int d = 0; d <= maxd && next_edge < n_regions; ++d) {
    acc += counts[d];
    if (acc * n_regions >= static_cast<int>(cells.size()) * next_edge) {
      edges[next_edge++] = d;
    }
  }
  std::vector<std::vector<Cell>> regions(n_regions);
  for (const Cell& c : cells) {
    const int d = dist[cell_index(spec, c)];
    for (int r = 0; r < n_regions; ++r) {
      if (d >= edges[r] && d <= edges[r + 1]) regions[r].push_back(c);
    }
  }
  for (const auto& r : regions) {
    if (r.empty()) throw std::invalid_argument("make_regions: empty region");
  }
  return regions;
}

Dataset collect(const MazeSpec& spec, int n_regions, std::size_t n_transitions,
                double gamma, uint64_t seed, double eps) {
  if (n_transitions == 0) throw std::invalid_argument("collect: zero size");
  const auto regions = make_regions(spec, n_regions);
  for (const auto& r : regions) {
    if (r.empty()) throw std::invalid_argument("collect: region without cells");
  }
  std::vector<std::vector<uint8_t>> masks(regions.size());
  for (std::size_t r = 0; r < regions.size(); ++r) {
    masks[r].assign(static_cast<std::size_t>(spec.width) * spec.height, 0);
    for (const Cell& c : regions[r]) masks[r][cell_index(spec, c)] = 1;
  }

  Dataset data;
  data.layout = spec.id;
  data.gamma = gamma;
  data.seed = seed;
  data.n_regions = n_regions;
  data.policy_desc = "eps_greedy_shortest_path eps=" + std::to_string(eps);

  Rng root(seed);
  std::size_t remaining = n_transitions;
  uint64_t traj_id = 0;
  while (remaining > 0) {
    Rng rng = root.split(traj_id);
    const int region = rng.uniform_int(n_regions);
    const auto& cells = regions[region];
    const auto& mask = masks[region];
    const Cell start = cells[rng.uniform_int(static_cast<int>(cells.size()))];
    // Waypoints must be reachable from the start without leaving the region.
    const auto reach = envs::bfs_distances(spec, start, mask);
    std::vector<Cell> candidates;
    for (const Cell& c : cells) {
      if (reach[cell_index(spec, c)] >= 0) candidates.push_back(c);
    }
    if (candidates.size() < 2) {
      ++traj_id;
      continue;
    }

    // The controller navigates between successive waypoints inside its
    // region for a whole horizon-length episode; the recorded desired goal
    // is the waypoint being pursued when the episode ends (episodes may
    // therefore be unsuccessful).
    envs::Env env(spec, /*terminate_on_goal=*/false);
    auto [obs0, unused_goal] = env.reset(rng.next_u64(), start, candidates[0]);
    (void)unused_goal;
    Trajectory traj;
    traj.region = region;
    traj.obs.push_back(obs0);
    traj.eta.push_back(envs::phi(start));

    Cell waypoint = start;
    std::vector<int> to_goal;
    auto pick_waypoint = [&](Cell from) {
      Cell next;
      do {
        next = candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
      } while (next == from);
      waypoint = next;
      to_goal = envs::bfs_distances(spec, waypoint, mask);
    };
    pick_waypoint(start);

    const std::size_t budget =
        std::min<std::size_t>(spec.horizon, remaining);
    while (traj.length() < budget) {
      const Cell cur = env.state().cell;
      // Actions that keep the walk inside the region (a blocked move stays
      // put and is always acceptable).
      std::vector<int> allowed;
      int best_action = -1;
      int best_dist = std::numeric_limits<int>::max();
      for (int a = 0; a < spec.n_actions; ++a) {
        const Cell next = envs::apply_move(spec, cur, a);
        if (!mask[cell_index(spec, next)]) continue;
        allowed.push_back(a);
        const int d = to_goal[cell_index(spec, next)];
        if (d >= 0 && d < best_dist) {
          best_dist = d;
          best_action = a;
        }
      }
      if (allowed.empty()) {
        throw std::logic_error("collect: no region-preserving action");
      }
      int action;
      if (rng.uniform() < eps || best_action < 0) {
        action = allowed[rng.uniform_int(static_cast<int>(allowed.size()))];
      } else {
        action = best_action;
      }
      const auto res = env.step(action);
      traj.obs.push_back(res.obs);
      traj.eta.push_back(envs::phi(env.state().cell));
      traj.actions.push_back(action);
      traj.rewards.push_back(0.0);
      if (env.state().cell == waypoint) pick_waypoint(waypoint);
    }
    traj.goal = envs::phi(waypoint);
    // Sparse success reward against the recorded desired goal.
    for (std::size_t t = 0; t < traj.length(); ++t) {
      traj.rewards[t] =
          envs::round_to_cell(traj.eta[t + 1]) == waypoint ? 1.0 : 0.0;
    }
    if (traj.length() > 0) {
      remaining -= traj.length();
      data.trajectories.push_back(std::move(traj));
    }
    ++traj_id;
  }
  data.n_transitions = n_transitions;
  validate(data);
  return data;
}

Dataset collect_random_policy(const MazeSpec& spec, int n_traj, int traj_len,
                              double gamma, uint64_t seed) {
  if (n_traj <= 0 || traj_len <= 0) {
    throw std::invalid_argument("collect_random_policy: bad sizes");
  }
  const auto mdp = envs::enumerate_mdp(spec);
  Rng root(seed);
  Rng policy_rng = root.split(0xbeef);
  const auto pi =
      oracle::random_policy(mdp.n_states, mdp.n_actions, policy_rng);

  Dataset data;
  data.layout = spec.id;
  data.gamma = gamma;
  data.seed = seed;
  data.n_regions = 1;
  data.policy_desc = "tabular_dirichlet1";
  data.behavior_policy = pi.probs;

  const auto cells = spec.free_cells();
  for (int i = 0; i < n_traj; ++i) {
    Rng rng = root.split(1000 + static_cast<uint64_t>(i));
    const Cell start = cells[rng.uniform_int(static_cast<int>(cells.size()))];
    Cell goal;
    do {
      goal = cells[rng.uniform_int(static_cast<int>(cells.size()))];
    } while (goal == start);
    envs::Env env(spec, /*terminate_on_goal=*/false);
    auto [obs0, g] = env.reset(rng.next_u64(), start, goal);
    Trajectory traj;
    traj.goal = envs::phi(goal);
    traj.region = 0;
    traj.obs.push_back(obs0);
    traj.eta.push_back(envs::phi(start));
    for (int t = 0; t < traj_len; ++t) {
      const int s = mdp.state_of(env.state().cell);
      const double u = rng.uniform();
      double acc = 0.0;
      int action = mdp.n_actions - 1;
      for (int a = 0; a < mdp.n_actions; ++a) {
        acc += pi.at(s, a);
        if (u < acc) {
          action = a;
          break;
        }
      }
      const auto res = env.step(action);
      traj.obs.push_back(res.obs);
      traj.eta.push_back(envs::phi(env.state().cell));
      traj.actions.push_back(action);
      traj.rewards.push_back(res.reward);
    }
    data.trajectories.push_back(std::move(traj));
  }
  data.n_transitions =
      static_cast<std::size_t>(n_traj) * static_cast<std::size_t>(traj_len);
  validate(data);
  return data;
}

Dataset example_dataset(double gamma) {
  const auto spec = MazeSpec::builtin(envs::LayoutId::kExampleMdp);
  const auto c = envs::example_cells();
  Dataset data;
  data.layout = spec.id;
  data.gamma = gamma;
  data.seed = 0;
  data.n_regions = 2;
  data.policy_desc = "scripted_example_pair";

  auto run = [&](Cell start, Cell goal, const std::vector<int>& actions,
                 int region) {
    envs::Env env(spec);
    env.reset(0, start, goal);
    Trajectory traj;
    traj.goal = envs::phi(goal);
    traj.region = region;
    traj.obs.push_back(envs::phi(start));
    traj.eta.push_back(envs::phi(start));
    for (int a : actions) {
      const auto res = env.step(a);
      traj.obs.push_back(res.obs);
      traj.eta.push_back(envs::phi(env.state().cell));
      traj.actions.push_back(a);
      traj.rewards.push_back(res.reward);
    }
    data.trajectories.push_back(std::move(traj));
  };
  // tau1: s0 -up-> s2 -right-> s3;  tau2: s1 -right-> s2 -up-> g.
  run(c.s0, c.s3, {envs::kUp, envs::kRight}, 0);
  run(c.s1, c.g, {envs::kRight, envs::kUp}, 1);
  data.n_transitions = 4;
  validate(data);
  return data;
}

RelabelStrategy relabel_from_name(const std::string& name) {
  if (name == "future_geometric") return RelabelStrategy::kFutureGeometric;
  if (name == "future_uniform") return RelabelStrategy::kFutureUniform;
  throw ConfigError("unknown relabel strategy: " + name);
}

const char* relabel_name(RelabelStrategy s) {
  return s == RelabelStrategy::kFutureGeometric ? "future_geometric"
                                                : "future_uniform";
}

int draw_relabel_offset(std::size_t t, std::size_t length, RelabelStrategy s,
                        double gamma, Rng& rng) {
  if (t + 1 > length) {
    throw std::invalid_argument("draw_relabel_offset: t beyond trajectory");
  }
  const int max_off = static_cast<int>(length - t);
  if (s == RelabelStrategy::kFutureUniform) {
    return 1 + rng.uniform_int(max_off);
  }
  return std::min(rng.geometric(gamma), max_off);
}

std::vector<TrainingTuple> relabel(const Trajectory& traj, RelabelStrategy s,
                                   double gamma, Rng& rng) {
  if (traj.length() < 1) {
    throw std::invalid_argument("relabel: empty trajectory");
  }
  std::vector<TrainingTuple> out;
  out.reserve(traj.length());
  for (std::size_t t = 0; t < traj.length(); ++t) {
    const int off = draw_relabel_offset(t, traj.length(), s, gamma, rng);
    TrainingTuple tuple;
    tuple.s = traj.obs[t];
    tuple.action = traj.actions[t];
    tuple.goal = traj.eta[t + off];
    tuple.t = static_cast<int>(t);
    out.push_back(tuple);
  }
  return out;
}

std::vector<TrainingTuple> swap_goal_augment(std::vector<TrainingTuple> tuples,
                                             const Dataset& data, double prob,
                                             uint64_t seed) {
  if (prob < 0.0 || prob > 1.0) {
    throw std::invalid_argument("swap_goal_augment: prob outside [0,1]");
  }
  const int n_traj = static_cast<int>(data.trajectories.size());
  if (n_traj < 2 && prob > 0.0) {
    throw std::invalid_argument("swap_goal_augment: needs >= 2 trajectories");
  }
  Rng rng(seed);
  for (TrainingTuple& tuple : tuples) {
    if (rng.uniform() >= prob) continue;
    int other = rng.uniform_int(n_traj - 1);
    if (other >= tuple.traj) ++other;
    const Trajectory& src = data.trajectories[other];
    const int pos = rng.uniform_int(static_cast<int>(src.eta.size()));
    tuple.goal = src.eta[pos];
    tuple.has_label = false;
  }
  return tuples;
}

std::vector<double> mc_q_labels(const Trajectory& traj, double gamma) {
  const Cell goal = envs::round_to_cell(traj.goal);
  const std::size_t len = traj.length();
  std::vector<double> labels(len, 0.0);
  // Walk backwards: label_t = gamma * label_{t+1} + (1-gamma)*gamma*hit_{t+1}.
  double acc = 0.0;
  for (std::size_t t = len; t-- > 0;) {
    const bool hit = envs::round_to_cell(traj.eta[t + 1]) == goal;
    acc = gamma * acc + (hit ? (1.0 - gamma) * gamma : 0.0);
    labels[t] = acc;
  }
  return labels;
}

TransitionIndex::TransitionIndex(const Dataset& data) {
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    for (std::size_t t = 0; t < data.trajectories[i].length(); ++t) {
      entries_.emplace_back(static_cast<int>(i), static_cast<int>(t));
    }
  }
  if (entries_.empty()) {
    throw std::invalid_argument("dataset has no transitions");
  }
}

std::pair<int, int> TransitionIndex::sample(Rng& rng) const {
  return entries_[rng.uniform_int(static_cast<int>(entries_.size()))];
}

void save(const Dataset& data, const std::string& path) {
  validate(data);
  std::ostringstream out;
  json header;
  header["format"] = "stitchlab.dataset.v1";
  header["layout"] = envs::layout_name(data.layout);
  header["gamma"] = data.gamma;
  header["seed"] = data.seed;
  header["transitions"] = data.n_transitions;
  header["regions"] = data.n_regions;
  header["policy"] = data.policy_desc;
  if (!data.behavior_policy.empty()) {
    header["behavior_policy"] = data.behavior_policy;
  }
  out << header.dump() << '\n';
  for (const Trajectory& t : data.trajectories) {
    json line;
    line["region"] = t.region;
    line["goal"] = json::array({t.goal.x, t.goal.y});
    line["obs"] = obs_list(t.obs);
    line["eta"] = obs_list(t.eta);
    line["act"] = t.actions;
    line["rew"] = t.rewards;
    out << line.dump() << '\n';
  }
  serialize::write_file(path, out.str());
}

Dataset load(const std::string& path) {
  std::istringstream in(serialize::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset: empty file " + path);
  Dataset data;
  try {
    const json header = json::parse(line);
    if (header.value("format", "") != "stitchlab.dataset.v1") {
      throw IoError("dataset: unexpected format in " + path);
    }
    data.layout = envs::layout_from_name(header.at("layout").get<std::string>());
    data.gamma = header.at("gamma").get<double>();
    data.seed = header.at("seed").get<uint64_t>();
    data.n_transitions = header.at("transitions").get<std::size_t>();
    data.n_regions = header.at("regions").get<int>();
    data.policy_desc = header.value("policy", "");
    if (header.contains("behavior_policy")) {
      data.behavior_policy =
          header.at("behavior_policy").get<std::vector<double>>();
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      Trajectory t;
      t.region = j.at("region").get<int>();
      t.goal = {j.at("goal").at(0).get<double>(),
                j.at("goal").at(1).get<double>()};
      t.obs = obs_list_from(j.at("obs"));
      t.eta = obs_list_from(j.at("eta"));
      t.actions = j.at("act").get<std::vector<int>>();
      t.rewards = j.at("rew").get<std::vector<double>>();
      data.trajectories.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("dataset parse failure in " + path + ": " + e.what());
  }
  validate(data);
  return data;
}

}  // namespace stitchlab::datagen
