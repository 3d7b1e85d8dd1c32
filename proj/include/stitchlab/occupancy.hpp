#pragma once

#include <string>
#include <vector>

#include "stitchlab/envs.hpp"
#include "stitchlab/rng.hpp"

namespace stitchlab::oracle {

// pi(a|s), rows sum to one.
struct PolicyTable {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;

  double at(int s, int a) const {
    return probs[static_cast<std::size_t>(s) * n_actions + a];
  }
};

PolicyTable uniform_policy(int n_states, int n_actions);
// Dirichlet(1) rows, i.e. uniform over the simplex.
PolicyTable random_policy(int n_states, int n_actions, Rng& rng);

// T[s,s'] = sum_a pi(a|s) K(s'|s,a);  T0 = K itself.
struct Matrices {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> t;   // [S,S]
  std::vector<double> t0;  // [S,A,S]
};
Matrices build_matrices(const envs::FiniteMdp& mdp, const PolicyTable& pi);

// Exact discounted future-state distribution starting one step after (s,a):
// P = (1-gamma) T0 (I - gamma T)^-1. Rows sum to one.
struct OccupancyTable {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  std::vector<double> p;  // [S,A,S]

  double at(int s, int a, int g) const {
    return p[(static_cast<std::size_t>(s) * n_actions + a) * n_states + g];
  }
};
OccupancyTable analytic_occupancy(const Matrices& m, double gamma);

// Reward conventions for tabular evaluation:
//  kOccupancy        r = (1-gamma) K(g|s,a); fixed point equals the
//                    analytic occupancy (the goal-probability Q-function).
//  kNextStepDiscount r = (1-gamma) gamma K(g|s,a); gamma times the above.
//  kFirstVisit       same reward but the goal absorbs; matches episodic
//                    returns of goal-terminated rollouts.
//  kReachability     undiscounted probability of ever reaching the goal.
enum class RewardConvention {
  kOccupancy,
  kNextStepDiscount,
  kFirstVisit,
  kReachability,
};

// Q[s,a] for a single goal state, iterated to the requested residual.
// Throws NumericalError when the iteration cap is hit first.
std::vector<double> policy_eval_q(const envs::FiniteMdp& mdp,
                                  const PolicyTable& pi, double gamma,
                                  int goal_state, RewardConvention convention,
                                  double tol = 1e-13, int max_iter = 200000);

// All goals at once: Q[s,a,g].
std::vector<double> policy_eval_q_all(const envs::FiniteMdp& mdp,
                                      const PolicyTable& pi, double gamma,
                                      RewardConvention convention,
                                      double tol = 1e-13,
                                      int max_iter = 200000);

// Mean over (s,a) of sum_g P log(P/Q). Each Q row is floored at 1e-12 and
// renormalized, so the result is a proper KL and nonnegative. Negative
// estimates are rejected.
double forward_kl(const OccupancyTable& p, const std::vector<double>& q_hat);

std::string occupancy_csv(const OccupancyTable& p);

}  // namespace stitchlab::oracle
