#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stitchlab/envs.hpp"
#include "stitchlab/policy.hpp"

namespace stitchlab::eval {

struct EvalPair {
  envs::Cell start;
  envs::Cell goal;
};

// Start and goal drawn from different collection regions (cells shared by
// both regions are excluded from either side).
std::vector<EvalPair> stitching_pairs(const envs::MazeSpec& spec,
                                      int n_regions, int count, uint64_t seed);
// Start and goal drawn inside one region, mirroring the collection policy.
std::vector<EvalPair> in_distribution_pairs(const envs::MazeSpec& spec,
                                            int n_regions, int count,
                                            uint64_t seed);

// Episode-level adapter so rollouts work for any policy kind.
struct PolicyHandle {
  std::function<void()> begin_episode;
  std::function<int(const envs::Observation&, const envs::Observation&)> act;
};

PolicyHandle make_policy_handle(const policy::Policy& p);
PolicyHandle random_policy_handle(int n_actions, uint64_t seed);
PolicyHandle shortest_path_handle(const envs::MazeSpec& spec);

// One checkpoint's evaluation: success = goal cell reached within horizon.
struct SeedEval {
  std::vector<double> per_pair_success;
  double success_rate = 0.0;
  int episodes = 0;
};
SeedEval rollout_eval(envs::Env& env, const PolicyHandle& handle,
                      const std::vector<EvalPair>& pairs,
                      int episodes_per_pair, uint64_t seed);

// Percentile bootstrap interval of the mean.
std::pair<double, double> bootstrap_ci(const std::vector<double>& values,
                                       int resamples = 2000,
                                       double level = 0.95, uint64_t seed = 0);

struct EvalReport {
  std::vector<double> per_seed_success;
  double mean = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  double level = 0.95;
  int episodes = 0;
  std::string fingerprint;
};
EvalReport make_report(std::vector<double> per_seed_success, int episodes,
                       double level, int resamples, uint64_t seed,
                       std::string fingerprint);
std::string report_csv(const EvalReport& r);
std::string report_json(const EvalReport& r);

// Mean over tasks of P(run of A beats run of B), ties counted one half, with
// a stratified-bootstrap interval (runs resampled within each task).
struct PoiResult {
  double p = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
};
PoiResult probability_of_improvement(
    const std::vector<std::vector<double>>& a,
    const std::vector<std::vector<double>>& b, int resamples = 2000,
    double level = 0.95, uint64_t seed = 0);

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

double mean_of(const std::vector<double>& values);
double stddev_of(const std::vector<double>& values);

}  // namespace stitchlab::eval
