#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stitchlab/envs.hpp"
#include "stitchlab/occupancy.hpp"
#include "stitchlab/rng.hpp"

namespace stitchlab::datagen {

// Stored trajectory: obs/eta carry T+1 entries (final state included),
// actions/rewards carry T. eta is phi(state) exactly; obs may be noisy.
struct Trajectory {
  std::vector<envs::Observation> obs;
  std::vector<envs::Observation> eta;
  std::vector<int> actions;
  std::vector<double> rewards;
  envs::Observation goal;
  int region = 0;

  std::size_t length() const { return actions.size(); }
};

struct Dataset {
  envs::LayoutId layout = envs::LayoutId::kUmaze;
  double gamma = 0.99;
  uint64_t seed = 0;
  std::size_t n_transitions = 0;
  int n_regions = 1;
  std::string policy_desc;
  // Present for datasets collected under a tabular behavior policy
  // (gridworld5); indexed like oracle::PolicyTable.
  std::vector<double> behavior_policy;
  std::vector<Trajectory> trajectories;
};

// Overlapping cover of the free cells by BFS-distance bands from the first
// free cell: band edges are shared by both neighbouring regions so stitching
// across regions stays possible.
std::vector<std::vector<envs::Cell>> make_regions(const envs::MazeSpec& spec,
                                                  int n_regions);

// Region-restricted collection with a noisy shortest-path controller
// (epsilon-greedy, default eps 0.1). Starts and goals are drawn inside one
// region per trajectory and the walk never leaves that region's cells.
Dataset collect(const envs::MazeSpec& spec, int n_regions,
                std::size_t n_transitions, double gamma, uint64_t seed,
                double eps = 0.1);

// Fixed-length trajectories under a Dirichlet(1) tabular policy; episodes do
// not terminate at the goal. Used for the noisy gridworld.
Dataset collect_random_policy(const envs::MazeSpec& spec, int n_traj,
                              int traj_len, double gamma, uint64_t seed);

// Exactly the two scripted trajectories of the example layout.
Dataset example_dataset(double gamma);

enum class RelabelStrategy { kFutureGeometric, kFutureUniform };
RelabelStrategy relabel_from_name(const std::string& name);
const char* relabel_name(RelabelStrategy s);

struct TrainingTuple {
  envs::Observation s;
  int action = 0;
  envs::Observation goal;
  double q_label = 0.0;
  bool has_label = false;
  int traj = 0;
  int t = 0;
};

// Offset Delta >= 1 drawn per strategy, clamped at the trajectory end.
int draw_relabel_offset(std::size_t t, std::size_t length, RelabelStrategy s,
                        double gamma, Rng& rng);

// One tuple per position t (goal = eta_{t+Delta}).
std::vector<TrainingTuple> relabel(const Trajectory& traj, RelabelStrategy s,
                                   double gamma, Rng& rng);

// With probability `prob` per tuple, replaces the goal with an eta drawn
// from a different random trajectory (swapped-goal augmentation).
std::vector<TrainingTuple> swap_goal_augment(std::vector<TrainingTuple> tuples,
                                             const Dataset& data, double prob,
                                             uint64_t seed);

// Monte-Carlo discounted goal-reaching labels along the stored suffix,
// (1-gamma)*gamma^(k-t+1) per arrival at the trajectory's desired goal.
std::vector<double> mc_q_labels(const Trajectory& traj, double gamma);

// Uniform sampling over all stored transitions.
class TransitionIndex {
 public:
  explicit TransitionIndex(const Dataset& data);
  std::pair<int, int> sample(Rng& rng) const;  // (trajectory, t)
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<int, int>> entries_;
};

void save(const Dataset& data, const std::string& path);
Dataset load(const std::string& path);

}  // namespace stitchlab::datagen
