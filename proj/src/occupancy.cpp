#include "stitchlab/occupancy.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "stitchlab/errors.hpp"
#include "stitchlab/kernels.hpp"

namespace stitchlab::oracle {
namespace {

// In-place inverse by Gauss-Jordan with partial pivoting. Matrices here are
// at most a few hundred rows.
std::vector<double> invert(std::vector<double> a, int n) {
  std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i) * n + i] = 1.0;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    double best = std::fabs(a[static_cast<std::size_t>(col) * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::fabs(a[static_cast<std::size_t>(r) * n + col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best == 0.0) throw NumericalError("occupancy: singular solve");
    if (pivot != col) {
      for (int j = 0; j < n; ++j) {
        std::swap(a[static_cast<std::size_t>(col) * n + j],
                  a[static_cast<std::size_t>(pivot) * n + j]);
        std::swap(inv[static_cast<std::size_t>(col) * n + j],
                  inv[static_cast<std::size_t>(pivot) * n + j]);
      }
    }
    const double d = 1.0 / a[static_cast<std::size_t>(col) * n + col];
    for (int j = 0; j < n; ++j) {
      a[static_cast<std::size_t>(col) * n + j] *= d;
      inv[static_cast<std::size_t>(col) * n + j] *= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[static_cast<std::size_t>(r) * n + col];
      if (f == 0.0) continue;
      kernels::axpy(-f, a.data() + static_cast<std::size_t>(col) * n,
                    a.data() + static_cast<std::size_t>(r) * n, n);
      kernels::axpy(-f, inv.data() + static_cast<std::size_t>(col) * n,
                    inv.data() + static_cast<std::size_t>(r) * n, n);
    }
  }
  return inv;
}

void check_policy(const envs::FiniteMdp& mdp, const PolicyTable& pi) {
  if (pi.n_states != mdp.n_states || pi.n_actions != mdp.n_actions) {
    throw std::invalid_argument("policy table does not match the MDP");
  }
  for (int s = 0; s < pi.n_states; ++s) {
    double row = 0.0;
    for (int a = 0; a < pi.n_actions; ++a) {
      const double p = pi.at(s, a);
      if (p < 0.0) throw std::invalid_argument("policy has negative entries");
      row += p;
    }
    if (std::fabs(row - 1.0) > 1e-9) {
      throw std::invalid_argument("policy rows must sum to one");
    }
  }
}

}  // namespace

PolicyTable uniform_policy(int n_states, int n_actions) {
  PolicyTable pi;
  pi.n_states = n_states;
  pi.n_actions = n_actions;
  pi.probs.assign(static_cast<std::size_t>(n_states) * n_actions,
                  1.0 / n_actions);
  return pi;
}

PolicyTable random_policy(int n_states, int n_actions, Rng& rng) {
  PolicyTable pi;
  pi.n_states = n_states;
  pi.n_actions = n_actions;
  pi.probs.resize(static_cast<std::size_t>(n_states) * n_actions);
  for (int s = 0; s < n_states; ++s) {
    // Dirichlet(1) row via normalized Exp(1) draws.
    double total = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double e = -std::log(1.0 - rng.uniform());
      pi.probs[static_cast<std::size_t>(s) * n_actions + a] = e;
      total += e;
    }
    for (int a = 0; a < n_actions; ++a) {
      pi.probs[static_cast<std::size_t>(s) * n_actions + a] /= total;
    }
  }
  return pi;
}

Matrices build_matrices(const envs::FiniteMdp& mdp, const PolicyTable& pi) {
  check_policy(mdp, pi);
  const int s_count = mdp.n_states;
  const int a_count = mdp.n_actions;
  Matrices m;
  m.n_states = s_count;
  m.n_actions = a_count;
  m.t0 = mdp.kernel;
  m.t.assign(static_cast<std::size_t>(s_count) * s_count, 0.0);
  for (int s = 0; s < s_count; ++s) {
    for (int a = 0; a < a_count; ++a) {
      const double w = pi.at(s, a);
      if (w == 0.0) continue;
      kernels::axpy(w,
                    m.t0.data() +
                        (static_cast<std::size_t>(s) * a_count + a) * s_count,
                    m.t.data() + static_cast<std::size_t>(s) * s_count,
                    s_count);
    }
  }
  return m;
}

OccupancyTable analytic_occupancy(const Matrices& m, double gamma) {
  if (gamma <= 0.0 || gamma >= 1.0) {
    throw std::invalid_argument("analytic_occupancy: gamma outside (0,1)");
  }
  const int s_count = m.n_states;
  std::vector<double> system(static_cast<std::size_t>(s_count) * s_count);
  for (int i = 0; i < s_count; ++i) {
    for (int j = 0; j < s_count; ++j) {
      system[static_cast<std::size_t>(i) * s_count + j] =
          (i == j ? 1.0 : 0.0) -
          gamma * m.t[static_cast<std::size_t>(i) * s_count + j];
    }
  }
  const std::vector<double> inv = invert(std::move(system), s_count);
  OccupancyTable out;
  out.n_states = s_count;
  out.n_actions = m.n_actions;
  out.gamma = gamma;
  out.p.assign(m.t0.size(), 0.0);
  // P = (1-gamma) * T0 * inv, computed as one [S*A, S] x [S, S] product.
  kernels::matmul(m.t0.data(), inv.data(), out.p.data(),
                  static_cast<std::size_t>(s_count) * m.n_actions, s_count,
                  s_count);
  kernels::scale(out.p.data(), 1.0 - gamma, out.p.data(), out.p.size());
  return out;
}

std::vector<double> policy_eval_q_all(const envs::FiniteMdp& mdp,
                                      const PolicyTable& pi, double gamma,
                                      RewardConvention convention, double tol,
                                      int max_iter) {
  check_policy(mdp, pi);
  if (convention != RewardConvention::kReachability &&
      (gamma <= 0.0 || gamma >= 1.0)) {
    throw std::invalid_argument("policy_eval_q: gamma outside (0,1)");
  }
  const int s_count = mdp.n_states;
  const int a_count = mdp.n_actions;
  const std::size_t sa = static_cast<std::size_t>(s_count) * a_count;
  const std::size_t total = sa * s_count;

  // Rewards per (s,a,g).
  std::vector<double> reward(total);
  double reward_scale = 1.0;
  double cont = gamma;
  switch (convention) {
    case RewardConvention::kOccupancy: reward_scale = 1.0 - gamma; break;
    case RewardConvention::kNextStepDiscount:
    case RewardConvention::kFirstVisit:
      reward_scale = (1.0 - gamma) * gamma;
      break;
    case RewardConvention::kReachability:
      reward_scale = 1.0;
      cont = 1.0;
      break;
  }
  kernels::scale(mdp.kernel.data(), reward_scale, reward.data(), total);

  const bool absorb = convention == RewardConvention::kFirstVisit ||
                      convention == RewardConvention::kReachability;

  std::vector<double> q(total, 0.0);
  std::vector<double> v(static_cast<std::size_t>(s_count) * s_count, 0.0);
  std::vector<double> q_next(total);
  for (int iter = 0; iter < max_iter; ++iter) {
    // V[s',g] = sum_a pi(a|s') Q[s',a,g]
    std::fill(v.begin(), v.end(), 0.0);
    for (int s = 0; s < s_count; ++s) {
      for (int a = 0; a < a_count; ++a) {
        const double w = pi.at(s, a);
        if (w == 0.0) continue;
        kernels::axpy(w,
                      q.data() + (static_cast<std::size_t>(s) * a_count + a) *
                                     s_count,
                      v.data() + static_cast<std::size_t>(s) * s_count,
                      s_count);
      }
    }
    if (absorb) {
      // Absorbing goal: no continuation value once g is reached.
      for (int s = 0; s < s_count; ++s) {
        v[static_cast<std::size_t>(s) * s_count + s] = 0.0;
      }
    }
    // Q_next[s,a,g] = r + cont * sum_s' K(s'|s,a) V[s',g]
    kernels::matmul(mdp.kernel.data(), v.data(), q_next.data(), sa, s_count,
                    s_count);
    for (std::size_t i = 0; i < total; ++i) {
      q_next[i] = reward[i] + cont * q_next[i];
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      diff = std::max(diff, std::fabs(q_next[i] - q[i]));
    }
    q.swap(q_next);
    if (diff < tol) return q;
  }
  throw NumericalError("policy_eval_q: no convergence within iteration cap");
}

std::vector<double> policy_eval_q(const envs::FiniteMdp& mdp,
                                  const PolicyTable& pi, double gamma,
                                  int goal_state, RewardConvention convention,
                                  double tol, int max_iter) {
  if (goal_state < 0 || goal_state >= mdp.n_states) {
    throw std::invalid_argument("policy_eval_q: goal state out of range");
  }
  const std::vector<double> all =
      policy_eval_q_all(mdp, pi, gamma, convention, tol, max_iter);
  std::vector<double> out(static_cast<std::size_t>(mdp.n_states) *
                          mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      out[static_cast<std::size_t>(s) * mdp.n_actions + a] =
          all[(static_cast<std::size_t>(s) * mdp.n_actions + a) *
                  mdp.n_states +
              goal_state];
    }
  }
  return out;
}

double forward_kl(const OccupancyTable& p, const std::vector<double>& q_hat) {
  if (q_hat.size() != p.p.size()) {
    throw std::invalid_argument("forward_kl: size mismatch");
  }
  constexpr double kFloor = 1e-12;
  const int s_count = p.n_states;
  const std::size_t rows = static_cast<std::size_t>(s_count) * p.n_actions;
  double total = 0.0;
  std::vector<double> qrow(s_count);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* prow = p.p.data() + r * s_count;
    const double* qraw = q_hat.data() + r * s_count;
    double qsum = 0.0;
    for (int g = 0; g < s_count; ++g) {
      if (qraw[g] < 0.0) {
        throw std::invalid_argument("forward_kl: negative estimate entry");
      }
      qrow[g] = std::max(qraw[g], kFloor);
      qsum += qrow[g];
    }
    double kl = 0.0;
    for (int g = 0; g < s_count; ++g) {
      if (prow[g] <= 0.0) continue;
      kl += prow[g] * std::log(prow[g] / (qrow[g] / qsum));
    }
    total += kl;
  }
  return total / static_cast<double>(rows);
}

std::string occupancy_csv(const OccupancyTable& p) {
  std::ostringstream out;
  out << "state,action,future_state,probability\n";
  out.precision(17);
  for (int s = 0; s < p.n_states; ++s) {
    for (int a = 0; a < p.n_actions; ++a) {
      for (int g = 0; g < p.n_states; ++g) {
        out << s << ',' << a << ',' << g << ',' << p.at(s, a, g) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace stitchlab::oracle
