#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stitchlab/datagen.hpp"
#include "stitchlab/nn.hpp"

namespace stitchlab::cvae {

// Input normalization for grid coordinates: x_n = (x - offset) * scale.
struct Norm {
  double offset_x = 0.0, offset_y = 0.0;
  double scale_x = 1.0, scale_y = 1.0;

  static Norm identity() { return Norm{}; }
  static Norm for_spec(const envs::MazeSpec& spec);
};

struct CvaeConfig {
  int obs_dim = 2;
  int act_dim = 4;   // one-hot
  int goal_dim = 2;
  int latent_dim = 8;
  std::vector<int> enc_hidden = {128, 128};
  std::vector<int> dec_hidden = {128, 128};
  double sigma_dec = 0.25;  // fixed decoder scale (grid half-cell)
  double lr = 1e-3;
  int steps = 3000;
  int batch = 256;
  uint64_t seed = 0;
  datagen::RelabelStrategy relabel = datagen::RelabelStrategy::kFutureGeometric;
  double gamma = 0.99;
  Norm norm;
};

// Conditional VAE over goals: encoder (s,a,g) -> diagonal Gaussian posterior
// on z, decoder (z,s,a) -> Gaussian over g with fixed scale, prior N(0,I).
struct CvaeModel {
  CvaeConfig cfg;
  nn::Mlp enc_trunk;      // (s,a,g) -> hidden (empty hidden: identity input)
  nn::Linear enc_mu;      // hidden -> latent
  nn::Linear enc_logvar;  // hidden -> latent
  nn::Mlp dec;            // (z,s,a) -> goal mean

  bool has_enc_trunk() const { return !cfg.enc_hidden.empty(); }
  std::vector<nn::Tensor> params() const;
  nn::NamedParams named_params() const;
};

CvaeModel create_model(const CvaeConfig& cfg);

// Raw-value batch for graph construction (row-major).
struct Batch {
  int size = 0;
  std::vector<double> s;        // [B, obs_dim] normalized
  std::vector<double> a;        // [B, act_dim] one-hot
  std::vector<double> g;        // [B, goal_dim] raw grid units
  std::vector<double> sg_cond;  // [B, obs+act] normalized condition block
};

Batch make_batch(const CvaeModel& model,
                 const std::vector<datagen::TrainingTuple>& tuples);

// ELBO (mean over the batch) under one reparameterized posterior sample per
// row: recon log-likelihood minus KL(q || N(0,I)). Differentiable w.r.t.
// encoder and decoder parameters. Training minimizes the negation.
nn::Tensor elbo(const CvaeModel& model, const Batch& batch, Rng& rng);

struct TrainTrace {
  std::vector<double> losses;  // one entry per step (-ELBO)
};

// Minibatch descent with Adam on relabeled tuples; deterministic given
// cfg.seed. Aborts with NumericalError when the loss diverges (> 1e6) or
// turns non-finite.
CvaeModel train_cvae(const datagen::Dataset& data, CvaeConfig cfg,
                     TrainTrace* trace = nullptr);

// L-sample importance-weighted estimate of log p(g|s,a). For L=1 this equals
// the single-sample ELBO integrand exactly. Inputs are raw grid units.
double estimate_log_prob(const CvaeModel& model, const envs::Observation& s,
                         int action, const envs::Observation& g, int n_samples,
                         Rng& rng);

// exp(estimate) clamped to [0,1].
double q_label(const CvaeModel& model, const envs::Observation& s, int action,
               const envs::Observation& g, int n_samples, Rng& rng);

// Dense label table over (free cell, action, free cell), keyed by rounded
// coordinates. The lookup path that training uses.
struct LabelTable {
  std::string dataset_hash;
  std::string model_hash;
  int n_samples = 500;
  uint64_t seed = 0;
  std::map<std::string, double> labels;

  static std::string key(const envs::Observation& s, int action,
                         const envs::Observation& g);
  std::optional<double> lookup(const envs::Observation& s, int action,
                               const envs::Observation& g) const;
  double lookup_or_throw(const envs::Observation& s, int action,
                         const envs::Observation& g) const;
};

LabelTable label_all(const CvaeModel& model, const envs::MazeSpec& spec,
                     int n_samples, uint64_t seed);

void save_model(const CvaeModel& model, const std::string& path);
CvaeModel load_model(const std::string& path);
void save_labels(const LabelTable& table, const std::string& path);
LabelTable load_labels(const std::string& path);

}  // namespace stitchlab::cvae
