// stitchlab command-line entry point. Subcommands cover the full pipeline:
//   gen-data -> train-cvae -> label -> train-policy -> eval
// plus oracle-check, sweep and report. Every command accepts --config FILE
// (key=value lines, same names as the long flags; command-line values win)
// and writes its resolved configuration next to its outputs.
//
// Exit codes: 0 ok, 1 internal error, 2 config/usage error, 3 missing or
// malformed file, 4 numerical failure.

#include <CLI11.hpp>

#include "stitchlab/cli_support.hpp"

namespace cli = stitchlab::cli;

namespace {

void add_config_option(CLI::App* app) {
  app->set_config("--config", "", "key=value config file; flags override it");
  app->allow_config_extras(false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale offline goal-conditioned RL laboratory"};
  app.require_subcommand(1);

  cli::GenDataParams gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "collect an offline dataset");
  add_config_option(gen_cmd);
  gen_cmd->add_option("--env", gen.env,
                      "layout: example_mdp|gridworld5|umaze|medium|large");
  gen_cmd->add_option("--transitions", gen.transitions, "total transitions");
  gen_cmd->add_option("--regions", gen.regions, "collection regions");
  gen_cmd->add_option("--gamma", gen.gamma, "discount");
  gen_cmd->add_option("--eps", gen.eps, "controller exploration rate");
  gen_cmd->add_option("--seed", gen.seed, "seed");
  gen_cmd->add_option("--traj-len", gen.traj_len,
                      "trajectory length (gridworld5 collection)");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  cli::TrainCvaeParams tc;
  CLI::App* tc_cmd =
      app.add_subcommand("train-cvae", "train the goal-density model");
  add_config_option(tc_cmd);
  tc_cmd->add_option("--data", tc.data, "dataset file")->required();
  tc_cmd->add_option("--steps", tc.steps, "training steps");
  tc_cmd->add_option("--batch", tc.batch, "batch size");
  tc_cmd->add_option("--lr", tc.lr, "learning rate");
  tc_cmd->add_option("--latent", tc.latent, "latent dimension");
  tc_cmd->add_option("--hidden", tc.hidden, "hidden width");
  tc_cmd->add_option("--seed", tc.seed, "seed");
  tc_cmd->add_option("--relabel", tc.relabel,
                     "future_geometric|future_uniform");
  tc_cmd->add_option("--out", tc.out, "output directory")->required();

  cli::LabelParams lb;
  CLI::App* lb_cmd = app.add_subcommand(
      "label", "estimate goal-reaching probabilities for all (s,a,g)");
  add_config_option(lb_cmd);
  lb_cmd->add_option("--data", lb.data, "dataset file")->required();
  lb_cmd->add_option("--cvae", lb.cvae, "density model checkpoint")->required();
  lb_cmd->add_option("--L", lb.n_samples, "importance samples per estimate");
  lb_cmd->add_option("--seed", lb.seed, "seed");
  lb_cmd->add_option("--out", lb.out, "output directory")->required();

  cli::TrainPolicyParams tp;
  CLI::App* tp_cmd = app.add_subcommand("train-policy", "train a policy");
  add_config_option(tp_cmd);
  tp_cmd->add_option("--data", tp.data, "dataset file")->required();
  tp_cmd->add_option("--labels", tp.labels, "label table (gcrsl variants)");
  tp_cmd->add_option("--variant", tp.variant,
                     "ocbc_rvs|ocbc_dt|gcrsl_rvs|gcrsl_dt");
  tp_cmd->add_option("--m", tp.m, "expectile parameter");
  tp_cmd->add_option("--k", tp.context_k, "context length (sequence variants)");
  tp_cmd->add_option("--steps", tp.steps, "training steps");
  tp_cmd->add_option("--batch", tp.batch, "batch size");
  tp_cmd->add_option("--lr", tp.lr, "learning rate");
  tp_cmd->add_option("--augment-prob", tp.augment_prob,
                     "swapped-goal augmentation probability (<0: default)");
  tp_cmd->add_option("--seed", tp.seed, "seed");
  tp_cmd->add_option("--relabel", tp.relabel,
                     "future_geometric|future_uniform");
  tp_cmd->add_option("--mode", tp.mode, "goal|return");
  tp_cmd->add_option("--hidden", tp.hidden, "MLP hidden width");
  tp_cmd->add_option("--dt-layers", tp.dt_layers, "decoder layers");
  tp_cmd->add_option("--dt-embed", tp.dt_embed, "token embedding width");
  tp_cmd->add_option("--dt-heads", tp.dt_heads, "attention heads");
  tp_cmd->add_option("--out", tp.out, "output directory")->required();

  cli::EvalParams ev;
  CLI::App* ev_cmd = app.add_subcommand("eval", "roll out a trained policy");
  add_config_option(ev_cmd);
  ev_cmd->add_option("--ckpt", ev.ckpt, "policy checkpoint")->required();
  ev_cmd->add_option("--env", ev.env, "layout name");
  ev_cmd->add_option("--mode", ev.mode, "stitching|in_distribution");
  ev_cmd->add_option("--regions", ev.regions, "collection regions");
  ev_cmd->add_option("--pairs", ev.pairs, "evaluation (start,goal) pairs");
  ev_cmd->add_option("--episodes", ev.episodes, "episodes per pair");
  ev_cmd->add_option("--seed", ev.seed, "seed");
  ev_cmd->add_option("--trace", ev.trace_pairs,
                     "write rollout SVGs for the first N pairs");
  ev_cmd->add_option("--out", ev.out, "output directory")->required();

  cli::OracleCheckParams oc;
  CLI::App* oc_cmd = app.add_subcommand(
      "oracle-check", "tabular equivalence report and KL table");
  add_config_option(oc_cmd);
  oc_cmd->add_option("--env", oc.env, "layout name");
  oc_cmd->add_option("--gamma", oc.gamma, "discount");
  oc_cmd->add_option("--policies", oc.policies, "random policies to test");
  oc_cmd->add_option("--seed", oc.seed, "seed");
  oc_cmd->add_option("--cvae", oc.cvae, "optional density model to score");
  oc_cmd->add_option("--out", oc.out, "output directory")->required();

  cli::SweepParams sw;
  CLI::App* sw_cmd = app.add_subcommand("sweep", "ablation sweep over m or L");
  add_config_option(sw_cmd);
  sw_cmd->add_option("--axis", sw.axis, "m|L");
  sw_cmd->add_option("--grid", sw.grid, "comma-separated grid values");
  sw_cmd->add_option("--data", sw.data, "dataset file")->required();
  sw_cmd->add_option("--cvae", sw.cvae, "density model checkpoint")->required();
  sw_cmd->add_option("--variant", sw.variant, "policy variant");
  sw_cmd->add_option("--steps", sw.steps, "training steps per point");
  sw_cmd->add_option("--batch", sw.batch, "batch size");
  sw_cmd->add_option("--lr", sw.lr, "learning rate");
  sw_cmd->add_option("--L", sw.n_samples, "labeling samples (m axis)");
  sw_cmd->add_option("--m", sw.m, "training m (L axis)");
  sw_cmd->add_option("--seeds", sw.seeds, "seeds per grid point");
  sw_cmd->add_option("--pairs", sw.pairs, "evaluation pairs");
  sw_cmd->add_option("--episodes", sw.episodes, "episodes per pair");
  sw_cmd->add_option("--regions", sw.regions, "collection regions");
  sw_cmd->add_option("--mode", sw.mode, "stitching|in_distribution");
  sw_cmd->add_option("--out", sw.out, "output directory")->required();

  cli::ReportParams rp;
  CLI::App* rp_cmd =
      app.add_subcommand("report", "aggregate eval runs into CSV/JSON/SVG");
  add_config_option(rp_cmd);
  rp_cmd->add_option("--runs", rp.runs, "run directories")->required();
  rp_cmd->add_option("--out", rp.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kConfigErrorCode;
  }

  if (gen_cmd->parsed()) return cli::run_mapped([&] { return cli::run_gen_data(gen); });
  if (tc_cmd->parsed()) return cli::run_mapped([&] { return cli::run_train_cvae(tc); });
  if (lb_cmd->parsed()) return cli::run_mapped([&] { return cli::run_label(lb); });
  if (tp_cmd->parsed()) return cli::run_mapped([&] { return cli::run_train_policy(tp); });
  if (ev_cmd->parsed()) return cli::run_mapped([&] { return cli::run_eval(ev); });
  if (oc_cmd->parsed()) return cli::run_mapped([&] { return cli::run_oracle_check(oc); });
  if (sw_cmd->parsed()) return cli::run_mapped([&] { return cli::run_sweep(sw); });
  if (rp_cmd->parsed()) return cli::run_mapped([&] { return cli::run_report(rp); });
  return cli::kConfigErrorCode;
}
