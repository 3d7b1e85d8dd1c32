#include "stitchlab/cli_support.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "stitchlab/cvae.hpp"
#include "stitchlab/datagen.hpp"
#include "stitchlab/errors.hpp"
#include "stitchlab/eval.hpp"
#include "stitchlab/occupancy.hpp"
#include "stitchlab/policy.hpp"
#include "stitchlab/serialize.hpp"
#include "stitchlab/svg.hpp"

namespace stitchlab::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void require_out(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
}

// Every run directory records the resolved parameters and the hashes of its
// inputs, enough to re-run the command.
void write_manifest(const std::string& out, const std::string& command,
                    const json& resolved,
                    const std::vector<std::string>& input_files) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = resolved;
  json inputs = json::object();
  for (const std::string& f : input_files) {
    inputs[fs::path(f).filename().string()] = serialize::file_hash(f);
  }
  manifest["input_hashes"] = inputs;
  serialize::write_file(join(out, "resolved_config.json"),
                        manifest.dump(2) + "\n");
}

std::string loss_trace_csv(const std::vector<double>& losses) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out << i << ',' << losses[i] << '\n';
  }
  return out.str();
}

cvae::CvaeConfig cvae_config_for(const datagen::Dataset& data,
                                 const TrainCvaeParams& p) {
  const auto spec = envs::MazeSpec::builtin(data.layout);
  cvae::CvaeConfig cfg;
  cfg.act_dim = spec.n_actions;
  cfg.latent_dim = p.latent;
  cfg.enc_hidden = {p.hidden, p.hidden};
  cfg.dec_hidden = {p.hidden, p.hidden};
  cfg.lr = p.lr;
  cfg.steps = p.steps;
  cfg.batch = p.batch;
  cfg.seed = p.seed;
  cfg.relabel = datagen::relabel_from_name(p.relabel);
  cfg.gamma = data.gamma;
  cfg.norm = cvae::Norm::for_spec(spec);
  return cfg;
}

policy::PolicyConfig policy_config_for(const datagen::Dataset& data,
                                       const TrainPolicyParams& p) {
  const auto spec = envs::MazeSpec::builtin(data.layout);
  policy::PolicyConfig cfg;
  cfg.variant = policy::variant_from_name(p.variant);
  cfg.m = p.m;
  cfg.context_k = p.context_k;
  cfg.lr = p.lr;
  cfg.steps = p.steps;
  cfg.batch = p.batch;
  cfg.seed = p.seed;
  cfg.relabel = datagen::relabel_from_name(p.relabel);
  cfg.gamma = data.gamma;
  cfg.mlp_hidden = {p.hidden, p.hidden};
  cfg.dt_layers = p.dt_layers;
  cfg.dt_embed = p.dt_embed;
  cfg.dt_heads = p.dt_heads;
  cfg.goal_conditioned = (p.mode == "goal");
  cfg.n_actions = spec.n_actions;
  cfg.norm = cvae::Norm::for_spec(spec);
  if (p.augment_prob >= 0.0) {
    cfg.augment_prob = p.augment_prob;
  } else {
    cfg.augment_prob = policy::is_gcrsl(cfg.variant) ? 0.5 : 0.0;
  }
  if (p.mode != "goal" && p.mode != "return") {
    throw ConfigError("train-policy: mode must be goal or return");
  }
  return cfg;
}

}  // namespace

int run_gen_data(const GenDataParams& p) {
  require_out(p.out);
  const auto layout = envs::layout_from_name(p.env);
  const auto spec = envs::MazeSpec::builtin(layout);
  datagen::Dataset data;
  if (layout == envs::LayoutId::kExampleMdp) {
    data = datagen::example_dataset(p.gamma);
  } else if (layout == envs::LayoutId::kGridworld5) {
    const int n_traj = std::max<long long>(1, p.transitions / p.traj_len);
    data = datagen::collect_random_policy(spec, n_traj, p.traj_len, p.gamma,
                                          p.seed);
  } else {
    data = datagen::collect(spec, p.regions, p.transitions, p.gamma, p.seed,
                            p.eps);
  }
  const std::string path = join(p.out, "dataset.jsonl");
  datagen::save(data, path);
  json resolved;
  resolved["env"] = p.env;
  resolved["transitions"] = data.n_transitions;
  resolved["regions"] = data.n_regions;
  resolved["gamma"] = p.gamma;
  resolved["eps"] = p.eps;
  resolved["seed"] = p.seed;
  resolved["out"] = "dataset.jsonl";
  write_manifest(p.out, "gen-data", resolved, {path});
  std::cout << "gen-data: wrote " << path << " (" << data.n_transitions
            << " transitions, seed " << p.seed << ")\n";
  return kOk;
}

int run_train_cvae(const TrainCvaeParams& p) {
  require_out(p.out);
  const auto data = datagen::load(p.data);
  const auto cfg = cvae_config_for(data, p);
  cvae::TrainTrace trace;
  const auto model = cvae::train_cvae(data, cfg, &trace);
  const std::string ckpt = join(p.out, "cvae.ckpt.json");
  cvae::save_model(model, ckpt);
  serialize::write_file(join(p.out, "loss_trace.csv"),
                        loss_trace_csv(trace.losses));
  json resolved;
  resolved["data"] = p.data;
  resolved["steps"] = p.steps;
  resolved["batch"] = p.batch;
  resolved["lr"] = p.lr;
  resolved["latent"] = p.latent;
  resolved["hidden"] = p.hidden;
  resolved["seed"] = p.seed;
  resolved["relabel"] = p.relabel;
  write_manifest(p.out, "train-cvae", resolved, {p.data, ckpt});
  std::cout << "train-cvae: wrote " << ckpt << " (final loss "
            << (trace.losses.empty() ? 0.0 : trace.losses.back()) << ", seed "
            << p.seed << ")\n";
  return kOk;
}

int run_label(const LabelParams& p) {
  require_out(p.out);
  const auto data = datagen::load(p.data);
  const auto model = cvae::load_model(p.cvae);
  const auto spec = envs::MazeSpec::builtin(data.layout);
  cvae::LabelTable table = cvae::label_all(model, spec, p.n_samples, p.seed);
  table.dataset_hash = serialize::file_hash(p.data);
  table.model_hash = serialize::file_hash(p.cvae);
  const std::string path = join(p.out, "labels.json");
  cvae::save_labels(table, path);
  json resolved;
  resolved["data"] = p.data;
  resolved["cvae"] = p.cvae;
  resolved["L"] = p.n_samples;
  resolved["seed"] = p.seed;
  write_manifest(p.out, "label", resolved, {p.data, p.cvae, path});
  std::cout << "label: wrote " << path << " (" << table.labels.size()
            << " entries, L=" << p.n_samples << ", seed " << p.seed << ")\n";
  return kOk;
}

int run_train_policy(const TrainPolicyParams& p) {
  require_out(p.out);
  const auto data = datagen::load(p.data);
  auto cfg = policy_config_for(data, p);
  policy::TrainTrace trace;
  policy::Policy trained = [&] {
    if (!cfg.goal_conditioned) {
      return policy::train_return_conditioned(data, cfg, &trace);
    }
    if (policy::is_gcrsl(cfg.variant)) {
      if (p.labels.empty()) {
        throw ConfigError(
            "train-policy: --labels is required for gcrsl variants");
      }
      const auto labels = cvae::load_labels(p.labels);
      return policy::train(data, &labels, cfg, &trace);
    }
    return policy::train(data, nullptr, cfg, &trace);
  }();
  const std::string ckpt = join(p.out, "policy.ckpt.json");
  policy::save_policy(trained, ckpt);
  serialize::write_file(join(p.out, "loss_trace.csv"),
                        loss_trace_csv(trace.losses));
  json resolved;
  resolved["data"] = p.data;
  resolved["labels"] = p.labels;
  resolved["variant"] = p.variant;
  resolved["m"] = p.m;
  resolved["context_k"] = p.context_k;
  resolved["steps"] = p.steps;
  resolved["batch"] = p.batch;
  resolved["lr"] = p.lr;
  resolved["augment_prob"] = cfg.augment_prob;
  resolved["seed"] = p.seed;
  resolved["mode"] = p.mode;
  std::vector<std::string> inputs = {p.data, ckpt};
  if (!p.labels.empty()) inputs.push_back(p.labels);
  write_manifest(p.out, "train-policy", resolved, inputs);
  std::cout << "train-policy: wrote " << ckpt << " (variant " << p.variant
            << ", final loss "
            << (trace.losses.empty() ? 0.0 : trace.losses.back()) << ", seed "
            << p.seed << ")\n";
  return kOk;
}

int run_eval(const EvalParams& p) {
  require_out(p.out);
  const auto trained = policy::load_policy(p.ckpt);
  const auto layout = envs::layout_from_name(p.env);
  const auto spec = envs::MazeSpec::builtin(layout);
  std::vector<eval::EvalPair> pairs;
  if (p.mode == "stitching") {
    pairs = eval::stitching_pairs(spec, p.regions, p.pairs, p.seed);
  } else if (p.mode == "in_distribution") {
    pairs = eval::in_distribution_pairs(spec, p.regions, p.pairs, p.seed);
  } else {
    throw ConfigError("eval: mode must be stitching or in_distribution");
  }
  envs::Env env(spec);
  auto handle = eval::make_policy_handle(trained);
  const auto seed_eval =
      eval::rollout_eval(env, handle, pairs, p.episodes, p.seed);
  const std::string fingerprint =
      serialize::hex64(serialize::fnv1a64(serialize::file_hash(p.ckpt) + "|" +
                                          p.env + "|" + p.mode + "|" +
                                          std::to_string(p.seed)));
  const auto report = eval::make_report(seed_eval.per_pair_success,
                                        seed_eval.episodes, 0.95, 2000,
                                        p.seed, fingerprint);
  serialize::write_file(join(p.out, "report.json"), eval::report_json(report));
  serialize::write_file(join(p.out, "report.csv"), eval::report_csv(report));
  if (p.trace_pairs > 0) {
    for (int i = 0; i < std::min<int>(p.trace_pairs, pairs.size()); ++i) {
      envs::Env trace_env(spec);
      handle.begin_episode();
      auto [obs, goal_cell] =
          trace_env.reset(Rng(p.seed).split(900 + i).next_u64(),
                          pairs[i].start, pairs[i].goal);
      svg::Trace trace;
      trace.cells.push_back(trace_env.state().cell);
      while (!trace_env.state().done &&
             !(trace_env.state().cell == goal_cell)) {
        const int action = handle.act(obs, envs::phi(goal_cell));
        obs = trace_env.step(action).obs;
        trace.cells.push_back(trace_env.state().cell);
      }
      serialize::write_file(
          join(p.out, "trace_" + std::to_string(i) + ".svg"),
          svg::maze_traces(spec, {trace}, pairs[i].start, pairs[i].goal));
    }
  }
  json resolved;
  resolved["ckpt"] = p.ckpt;
  resolved["env"] = p.env;
  resolved["mode"] = p.mode;
  resolved["regions"] = p.regions;
  resolved["pairs"] = p.pairs;
  resolved["episodes"] = p.episodes;
  resolved["seed"] = p.seed;
  write_manifest(p.out, "eval", resolved, {p.ckpt});
  std::cout << "eval: success_rate=" << report.mean << " ci=[" << report.ci_lo
            << ',' << report.ci_hi << "] episodes=" << report.episodes
            << " seed=" << p.seed << "\n";
  return kOk;
}

int run_oracle_check(const OracleCheckParams& p) {
  require_out(p.out);
  const auto layout = envs::layout_from_name(p.env);
  const auto spec = envs::MazeSpec::builtin(layout);
  const auto mdp = envs::enumerate_mdp(spec);
  Rng root(p.seed);
  double worst = 0.0;
  for (int i = 0; i < p.policies; ++i) {
    Rng prng = root.split(i);
    const auto pi = oracle::random_policy(mdp.n_states, mdp.n_actions, prng);
    const auto mats = oracle::build_matrices(mdp, pi);
    const auto occ = oracle::analytic_occupancy(mats, p.gamma);
    const auto q = oracle::policy_eval_q_all(
        mdp, pi, p.gamma, oracle::RewardConvention::kOccupancy);
    for (std::size_t k = 0; k < q.size(); ++k) {
      worst = std::max(worst, std::fabs(q[k] - occ.p[k]));
    }
  }
  // KL table: the analytic occupancy of one random policy against itself and
  // against the uniform prediction; optionally a trained density model.
  Rng prng = root.split(0);
  const auto pi = oracle::random_policy(mdp.n_states, mdp.n_actions, prng);
  const auto mats = oracle::build_matrices(mdp, pi);
  const auto occ = oracle::analytic_occupancy(mats, p.gamma);
  std::ostringstream kl_table;
  kl_table.precision(12);
  kl_table << "prediction,forward_kl\n";
  kl_table << "oracle," << oracle::forward_kl(occ, occ.p) << '\n';
  std::vector<double> uniform(occ.p.size(), 1.0 / mdp.n_states);
  kl_table << "uniform," << oracle::forward_kl(occ, uniform) << '\n';
  if (!p.cvae.empty()) {
    const auto model = cvae::load_model(p.cvae);
    std::vector<double> est(occ.p.size());
    Rng lrng = root.split(0xc0de);
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        for (int g = 0; g < mdp.n_states; ++g) {
          Rng r = lrng.split((static_cast<uint64_t>(s) * mdp.n_actions + a) *
                                 mdp.n_states +
                             g);
          est[(static_cast<std::size_t>(s) * mdp.n_actions + a) *
                  mdp.n_states +
              g] = cvae::q_label(model, envs::phi(mdp.state_cell[s]), a,
                                 envs::phi(mdp.state_cell[g]), 100, r);
        }
      }
    }
    kl_table << "cvae," << oracle::forward_kl(occ, est) << '\n';
  }
  serialize::write_file(join(p.out, "kl_table.csv"), kl_table.str());
  serialize::write_file(join(p.out, "occupancy.csv"), oracle::occupancy_csv(occ));
  json result;
  result["layout"] = p.env;
  result["gamma"] = p.gamma;
  result["policies"] = p.policies;
  result["max_abs_diff"] = worst;
  result["equivalence_holds"] = worst < 1e-8;
  serialize::write_file(join(p.out, "theorem_report.json"),
                        result.dump(2) + "\n");
  json resolved;
  resolved["env"] = p.env;
  resolved["gamma"] = p.gamma;
  resolved["policies"] = p.policies;
  resolved["seed"] = p.seed;
  write_manifest(p.out, "oracle-check", resolved, {});
  std::cout << "oracle-check: max |policy_eval_q - analytic_occupancy| = "
            << worst << (worst < 1e-8 ? " (ok)" : " (FAIL)") << "\n";
  return worst < 1e-8 ? kOk : kNumericalErrorCode;
}

int run_sweep(const SweepParams& p) {
  require_out(p.out);
  if (p.axis != "m" && p.axis != "L") {
    throw ConfigError("sweep: axis must be m or L");
  }
  std::vector<double> grid;
  {
    std::istringstream in(p.grid);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (!tok.empty()) grid.push_back(std::stod(tok));
    }
  }
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  const auto data = datagen::load(p.data);
  const auto spec = envs::MazeSpec::builtin(data.layout);
  const auto model = cvae::load_model(p.cvae);

  std::ostringstream csv;
  csv.precision(12);
  csv << "axis,value,seed,success_rate,mean_value_head\n";
  std::vector<svg::Series> series{{p.axis + " sweep", {}, {}}};
  for (double value : grid) {
    const int label_samples =
        p.axis == "L" ? static_cast<int>(value) : p.n_samples;
    cvae::LabelTable labels = cvae::label_all(model, spec, label_samples, 0);
    double mean_success = 0.0;
    for (int seed = 0; seed < p.seeds; ++seed) {
      policy::PolicyConfig cfg;
      cfg.variant = policy::variant_from_name(p.variant);
      cfg.m = p.axis == "m" ? value : p.m;
      cfg.lr = p.lr;
      cfg.steps = p.steps;
      cfg.batch = p.batch;
      cfg.seed = seed;
      cfg.gamma = data.gamma;
      cfg.n_actions = spec.n_actions;
      cfg.norm = cvae::Norm::for_spec(spec);
      cfg.augment_prob = policy::is_gcrsl(cfg.variant) ? 0.5 : 0.0;
      const auto trained = policy::train(
          data, policy::is_gcrsl(cfg.variant) ? &labels : nullptr, cfg,
          nullptr);
      auto pairs = p.mode == "stitching"
                       ? eval::stitching_pairs(spec, p.regions, p.pairs, 7)
                       : eval::in_distribution_pairs(spec, p.regions, p.pairs,
                                                     7);
      envs::Env env(spec);
      auto handle = eval::make_policy_handle(trained);
      const auto ev = eval::rollout_eval(env, handle, pairs, p.episodes, 11);
      // Mean value-head prediction over the evaluation pairs (the literal
      // monotone-in-m quantity).
      double mean_v = 0.0;
      if (policy::is_gcrsl(cfg.variant) && !policy::is_dt(cfg.variant)) {
        for (const auto& pair : pairs) {
          mean_v += policy::rvs_value(trained, envs::phi(pair.start),
                                      envs::phi(pair.goal));
        }
        mean_v /= static_cast<double>(pairs.size());
      }
      csv << p.axis << ',' << value << ',' << seed << ',' << ev.success_rate
          << ',' << mean_v << '\n';
      mean_success += ev.success_rate;
    }
    series[0].x.push_back(value);
    series[0].y.push_back(mean_success / p.seeds);
  }
  serialize::write_file(join(p.out, "sweep.csv"), csv.str());
  serialize::write_file(
      join(p.out, "sweep.svg"),
      svg::line_chart("success vs " + p.axis, p.axis, "success rate", series));
  json resolved;
  resolved["axis"] = p.axis;
  resolved["grid"] = p.grid;
  resolved["data"] = p.data;
  resolved["cvae"] = p.cvae;
  resolved["variant"] = p.variant;
  resolved["seeds"] = p.seeds;
  write_manifest(p.out, "sweep", resolved, {p.data, p.cvae});
  std::cout << "sweep: wrote " << join(p.out, "sweep.csv") << "\n";
  return kOk;
}

int run_report(const ReportParams& p) {
  require_out(p.out);
  if (p.runs.empty()) throw ConfigError("report: no run directories given");
  std::ostringstream csv;
  csv.precision(12);
  csv << "run,mean,ci_lo,ci_hi,episodes,fingerprint\n";
  std::vector<svg::Bar> bars;
  json combined = json::array();
  for (const std::string& run : p.runs) {
    const std::string path = join(run, "report.json");
    json j;
    try {
      j = json::parse(serialize::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("report parse failure in " + path + ": " + e.what());
    }
    const std::string name = fs::path(run).filename().string();
    csv << name << ',' << j.at("mean").get<double>() << ','
        << j.at("ci_lo").get<double>() << ',' << j.at("ci_hi").get<double>()
        << ',' << j.at("episodes").get<int>() << ','
        << j.value("fingerprint", "") << '\n';
    svg::Bar bar;
    bar.label = name;
    bar.value = j.at("mean").get<double>();
    bar.lo = j.at("ci_lo").get<double>();
    bar.hi = j.at("ci_hi").get<double>();
    bar.has_interval = true;
    bars.push_back(bar);
    j["run"] = name;
    combined.push_back(j);
  }
  serialize::write_file(join(p.out, "aggregate.csv"), csv.str());
  serialize::write_file(join(p.out, "aggregate.json"),
                        combined.dump(2) + "\n");
  serialize::write_file(join(p.out, "aggregate.svg"),
                        svg::bar_chart("success rates", "success rate", bars));
  json resolved;
  resolved["runs"] = p.runs;
  write_manifest(p.out, "report", resolved, {});
  std::cout << "report: aggregated " << p.runs.size() << " runs into " << p.out
            << "\n";
  return kOk;
}

int run_mapped(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigErrorCode;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigErrorCode;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIoErrorCode;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalErrorCode;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternalError;
  }
}

}  // namespace stitchlab::cli
