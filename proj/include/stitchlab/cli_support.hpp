#pragma once

#include <functional>
#include <string>
#include <vector>

namespace stitchlab::cli {

// Documented exit codes.
constexpr int kOk = 0;
constexpr int kInternalError = 1;
constexpr int kConfigErrorCode = 2;
constexpr int kIoErrorCode = 3;
constexpr int kNumericalErrorCode = 4;

struct GenDataParams {
  std::string env = "umaze";
  long long transitions = 10000;
  int regions = 2;
  double gamma = 0.99;
  double eps = 0.1;
  uint64_t seed = 0;
  // gridworld5 collection uses fixed-length random-policy trajectories.
  int traj_len = 100;
  std::string out;
};

struct TrainCvaeParams {
  std::string data;
  int steps = 3000;
  int batch = 256;
  double lr = 1e-3;
  int latent = 8;
  int hidden = 128;
  uint64_t seed = 0;
  std::string relabel = "future_geometric";
  std::string out;
};

struct LabelParams {
  std::string data;
  std::string cvae;
  int n_samples = 500;
  uint64_t seed = 0;
  std::string out;
};

struct TrainPolicyParams {
  std::string data;
  std::string labels;  // optional for baselines
  std::string variant = "gcrsl_rvs";
  double m = 0.99;
  int context_k = 10;
  int steps = 50000;
  int batch = 256;
  double lr = 1e-3;
  double augment_prob = -1.0;  // <0: variant default (0.5 gcrsl, 0 ocbc)
  uint64_t seed = 0;
  std::string relabel = "future_geometric";
  std::string mode = "goal";  // goal | return
  int hidden = 256;
  int dt_layers = 2;
  int dt_embed = 64;
  int dt_heads = 4;
  std::string out;
};

struct EvalParams {
  std::string ckpt;
  std::string env = "umaze";
  std::string mode = "stitching";  // stitching | in_distribution
  int regions = 2;
  int pairs = 20;
  int episodes = 50;
  uint64_t seed = 0;
  int trace_pairs = 0;  // write SVG traces for the first N pairs
  std::string out;
};

struct OracleCheckParams {
  std::string env = "gridworld5";
  double gamma = 0.99;
  int policies = 10;
  uint64_t seed = 0;
  std::string cvae;  // optional: include its forward KL in the table
  std::string out;
};

struct SweepParams {
  std::string axis = "m";  // m | L
  std::string grid = "0.5,0.7,0.9,0.99";
  std::string data;
  std::string cvae;
  std::string variant = "gcrsl_rvs";
  int steps = 2000;
  int batch = 64;
  double lr = 1e-3;
  int n_samples = 500;  // labeling L for the m axis
  double m = 0.9;       // training m for the L axis
  int seeds = 1;
  int pairs = 20;
  int episodes = 20;
  int regions = 2;
  std::string mode = "stitching";
  std::string out;
};

struct ReportParams {
  std::vector<std::string> runs;
  std::string out;
};

int run_gen_data(const GenDataParams& p);
int run_train_cvae(const TrainCvaeParams& p);
int run_label(const LabelParams& p);
int run_train_policy(const TrainPolicyParams& p);
int run_eval(const EvalParams& p);
int run_oracle_check(const OracleCheckParams& p);
int run_sweep(const SweepParams& p);
int run_report(const ReportParams& p);

// Maps exceptions to the documented exit codes and prints the message.
int run_mapped(const std::function<int()>& body);

}  // namespace stitchlab::cli
