#include "stitchlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "stitchlab/datagen.hpp"
#include "stitchlab/errors.hpp"

namespace stitchlab::eval {
namespace {

using envs::Cell;
using envs::MazeSpec;
using envs::Observation;

std::size_t cell_index(const MazeSpec& spec, Cell c) {
  return static_cast<std::size_t>(c.y) * spec.width + c.x;
}

// Membership masks plus exclusive (non-overlap) cell lists per region.
struct RegionView {
  std::vector<std::vector<Cell>> regions;
  std::vector<std::vector<Cell>> exclusive;
};

RegionView region_view(const MazeSpec& spec, int n_regions) {
  RegionView view;
  view.regions = datagen::make_regions(spec, n_regions);
  std::vector<int> member_count(
      static_cast<std::size_t>(spec.width) * spec.height, 0);
  for (const auto& region : view.regions) {
    for (const Cell& c : region) member_count[cell_index(spec, c)]++;
  }
  view.exclusive.resize(view.regions.size());
  for (std::size_t r = 0; r < view.regions.size(); ++r) {
    for (const Cell& c : view.regions[r]) {
      if (member_count[cell_index(spec, c)] == 1) {
        view.exclusive[r].push_back(c);
      }
    }
  }
  return view;
}

double percentile(std::vector<double> sorted, double q) {
  // Nearest-rank on the sorted sample.
  const std::size_t n = sorted.size();
  const double pos = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

std::vector<double> ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> out(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j));
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = avg;
    i = j + 1;
  }
  return out;
}

double poi_point(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b) {
  double total = 0.0;
  for (std::size_t task = 0; task < a.size(); ++task) {
    const auto& ra = a[task];
    const auto& rb = b[task];
    double wins = 0.0;
    for (double x : ra) {
      for (double y : rb) {
        if (x > y) {
          wins += 1.0;
        } else if (x == y) {
          wins += 0.5;
        }
      }
    }
    total += wins / (static_cast<double>(ra.size()) *
                     static_cast<double>(rb.size()));
  }
  return total / static_cast<double>(a.size());
}

}  // namespace

std::vector<EvalPair> stitching_pairs(const MazeSpec& spec, int n_regions,
                                      int count, uint64_t seed) {
  if (n_regions < 2) {
    throw std::invalid_argument("stitching_pairs: needs >= 2 regions");
  }
  const RegionView view = region_view(spec, n_regions);
  for (const auto& ex : view.exclusive) {
    if (ex.empty()) {
      throw std::invalid_argument("stitching_pairs: a region has no exclusive cells");
    }
  }
  Rng rng(seed);
  std::vector<EvalPair> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    const int ra = rng.uniform_int(n_regions);
    int rb = rng.uniform_int(n_regions - 1);
    if (rb >= ra) ++rb;
    const auto& sa = view.exclusive[ra];
    const auto& sb = view.exclusive[rb];
    out.push_back({sa[rng.uniform_int(static_cast<int>(sa.size()))],
                   sb[rng.uniform_int(static_cast<int>(sb.size()))]});
  }
  return out;
}

std::vector<EvalPair> in_distribution_pairs(const MazeSpec& spec,
                                            int n_regions, int count,
                                            uint64_t seed) {
  const RegionView view = region_view(spec, n_regions);
  Rng rng(seed);
  std::vector<EvalPair> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    const int r = rng.uniform_int(n_regions);
    const auto& cells = view.regions[r];
    const Cell start = cells[rng.uniform_int(static_cast<int>(cells.size()))];
    const Cell goal = cells[rng.uniform_int(static_cast<int>(cells.size()))];
    if (start == goal) continue;
    out.push_back({start, goal});
  }
  return out;
}

PolicyHandle make_policy_handle(const policy::Policy& p) {
  PolicyHandle handle;
  if (p.dt) {
    auto session = std::make_shared<policy::DtSession>(p);
    handle.begin_episode = [session]() { session->reset(); };
    handle.act = [session](const Observation& s, const Observation& g) {
      return session->act(s, g);
    };
  } else {
    handle.begin_episode = []() {};
    handle.act = [&p](const Observation& s, const Observation& g) {
      return policy::infer_rvs(p, s, g);
    };
  }
  return handle;
}

PolicyHandle random_policy_handle(int n_actions, uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  PolicyHandle handle;
  handle.begin_episode = []() {};
  handle.act = [rng, n_actions](const Observation&, const Observation&) {
    return rng->uniform_int(n_actions);
  };
  return handle;
}

PolicyHandle shortest_path_handle(const MazeSpec& spec) {
  auto spec_copy = std::make_shared<MazeSpec>(spec);
  PolicyHandle handle;
  handle.begin_episode = []() {};
  handle.act = [spec_copy](const Observation& s, const Observation& g) {
    const Cell cur = envs::round_to_cell(s);
    const Cell goal = envs::round_to_cell(g);
    const auto dist = envs::bfs_distances(*spec_copy, goal);
    int best_action = 0;
    int best = std::numeric_limits<int>::max();
    for (int a = 0; a < spec_copy->n_actions; ++a) {
      const Cell next = envs::apply_move(*spec_copy, cur, a);
      const int d =
          dist[static_cast<std::size_t>(next.y) * spec_copy->width + next.x];
      if (d >= 0 && d < best) {
        best = d;
        best_action = a;
      }
    }
    return best_action;
  };
  return handle;
}

SeedEval rollout_eval(envs::Env& env, const PolicyHandle& handle,
                      const std::vector<EvalPair>& pairs,
                      int episodes_per_pair, uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("rollout_eval: no pairs");
  Rng root(seed);
  SeedEval out;
  out.per_pair_success.reserve(pairs.size());
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const EvalPair& pair = pairs[pi];
    double successes = 0.0;
    for (int e = 0; e < episodes_per_pair; ++e) {
      Rng ep = root.split(pi * 1000003ull + static_cast<uint64_t>(e));
      handle.begin_episode();
      auto [obs, goal_cell] = env.reset(ep.next_u64(), pair.start, pair.goal);
      const Observation goal_obs = envs::phi(goal_cell);
      bool success = env.state().cell == goal_cell;
      while (!env.state().done && !success) {
        const int action = handle.act(obs, goal_obs);
        const auto res = env.step(action);
        obs = res.obs;
        if (env.state().cell == goal_cell) success = true;
      }
      successes += success ? 1.0 : 0.0;
      out.episodes += 1;
    }
    out.per_pair_success.push_back(successes / episodes_per_pair);
  }
  out.success_rate = mean_of(out.per_pair_success);
  return out;
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& values,
                                       int resamples, double level,
                                       uint64_t seed) {
  if (values.empty()) throw std::invalid_argument("bootstrap_ci: empty input");
  if (level <= 0.0 || level >= 1.0) {
    throw std::invalid_argument("bootstrap_ci: level outside (0,1)");
  }
  Rng rng(seed);
  const int n = static_cast<int>(values.size());
  std::vector<double> means(resamples);
  for (int r = 0; r < resamples; ++r) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += values[rng.uniform_int(n)];
    means[r] = acc / n;
  }
  std::sort(means.begin(), means.end());
  const double alpha = 0.5 * (1.0 - level);
  return {percentile(means, alpha), percentile(means, 1.0 - alpha)};
}

EvalReport make_report(std::vector<double> per_seed_success, int episodes,
                       double level, int resamples, uint64_t seed,
                       std::string fingerprint) {
  EvalReport r;
  r.per_seed_success = std::move(per_seed_success);
  r.mean = mean_of(r.per_seed_success);
  const auto [lo, hi] = bootstrap_ci(r.per_seed_success, resamples, level, seed);
  r.ci_lo = std::max(0.0, lo);
  r.ci_hi = std::min(1.0, hi);
  r.level = level;
  r.episodes = episodes;
  r.fingerprint = std::move(fingerprint);
  return r;
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "seed_index,success_rate\n";
  for (std::size_t i = 0; i < r.per_seed_success.size(); ++i) {
    out << i << ',' << r.per_seed_success[i] << '\n';
  }
  out << "mean," << r.mean << '\n';
  out << "ci_lo," << r.ci_lo << '\n';
  out << "ci_hi," << r.ci_hi << '\n';
  return out.str();
}

std::string report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["per_seed_success"] = r.per_seed_success;
  j["mean"] = r.mean;
  j["ci_lo"] = r.ci_lo;
  j["ci_hi"] = r.ci_hi;
  j["level"] = r.level;
  j["episodes"] = r.episodes;
  j["fingerprint"] = r.fingerprint;
  return j.dump(2) + "\n";
}

PoiResult probability_of_improvement(
    const std::vector<std::vector<double>>& a,
    const std::vector<std::vector<double>>& b, int resamples, double level,
    uint64_t seed) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument(
        "probability_of_improvement: task sets must match and be nonempty");
  }
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].empty() || b[t].empty()) {
      throw std::invalid_argument(
          "probability_of_improvement: empty run list");
    }
  }
  PoiResult result;
  result.p = poi_point(a, b);

  Rng rng(seed);
  std::vector<double> stats(resamples);
  std::vector<std::vector<double>> ra(a.size()), rb(b.size());
  for (int r = 0; r < resamples; ++r) {
    for (std::size_t t = 0; t < a.size(); ++t) {
      ra[t].resize(a[t].size());
      for (auto& v : ra[t]) {
        v = a[t][rng.uniform_int(static_cast<int>(a[t].size()))];
      }
      rb[t].resize(b[t].size());
      for (auto& v : rb[t]) {
        v = b[t][rng.uniform_int(static_cast<int>(b[t].size()))];
      }
    }
    stats[r] = poi_point(ra, rb);
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = 0.5 * (1.0 - level);
  result.ci_lo = percentile(stats, alpha);
  result.ci_hi = percentile(stats, 1.0 - alpha);
  return result;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two same-length vectors");
  }
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double ma = mean_of(ra), mb = mean_of(rb);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - ma, db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_of: empty input");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double stddev_of(const std::vector<double>& values) {
  const double m = mean_of(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / std::max<std::size_t>(1, values.size() - 1));
}

}  // namespace stitchlab::eval
