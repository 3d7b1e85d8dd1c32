#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stitchlab/cvae.hpp"
#include "stitchlab/datagen.hpp"
#include "stitchlab/nn.hpp"

namespace stitchlab::policy {

enum class Variant { kOcbcRvs, kOcbcDt, kGcrslRvs, kGcrslDt };

Variant variant_from_name(const std::string& name);
const char* variant_name(Variant v);
bool is_dt(Variant v);
bool is_gcrsl(Variant v);

struct PolicyConfig {
  Variant variant = Variant::kGcrslRvs;
  double m = 0.99;    // expectile parameter, (0,1)
  int context_k = 10; // DT context length in timesteps, >= 2
  double lr = 1e-3;
  int steps = 50000;
  int batch = 256;
  double augment_prob = 0.0;  // swapped-goal augmentation
  uint64_t seed = 0;
  datagen::RelabelStrategy relabel = datagen::RelabelStrategy::kFutureGeometric;
  double gamma = 0.99;
  std::vector<int> mlp_hidden = {256, 256};
  int dt_layers = 2;
  int dt_embed = 64;
  int dt_heads = 4;
  bool goal_conditioned = true;
  int obs_dim = 2;
  int goal_dim = 2;
  int n_actions = 4;
  cvae::Norm norm;
  // Conditioning value used at inference by outcome-conditioned baselines in
  // return-conditioned mode (set to the dataset maximum by the trainer).
  double fixed_condition = 1.0;

  void validate() const;
};

// Value model v(s,g) and actor pi(s,g,Q). The baselines drop the value model
// and the Q input; return-conditioned mode drops the goal columns.
struct RvsPolicy {
  std::optional<nn::Mlp> value;
  nn::Mlp actor;
};

// Sequence model over per-timestep token groups; the layout per timestep is
// (s, g, Q, a) for the Q-conditioned variant, (s, g, a) for the baseline, and
// (s, Q, a) when goal conditioning is off. The Q prediction is read from the
// token preceding the Q slot and the action prediction from the token
// preceding the action slot, so each prediction only consumes the tokens the
// layout places before it.
struct DtPolicy {
  nn::Linear embed_s, embed_g, embed_q, embed_a;
  nn::Tensor pos;  // [tokens_per_step * K, d]
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm ln_f;
  nn::Linear q_head;
  nn::Linear a_head;
};

struct Policy {
  PolicyConfig cfg;
  std::optional<RvsPolicy> rvs;
  std::optional<DtPolicy> dt;

  static Policy create(const PolicyConfig& cfg);
  std::vector<nn::Tensor> params() const;
  nn::NamedParams named_params() const;
  int tokens_per_step() const;
  bool has_q_token() const;
};

struct TrainTrace {
  std::vector<double> losses;
};

// Joint action + expectile-value training (Q-conditioned variants) or plain
// outcome-conditioned behavioral cloning (baselines). Q-conditioned variants
// require a label table; passing none throws ConfigError. Deterministic
// given cfg.seed.
Policy train(const datagen::Dataset& data, const cvae::LabelTable* labels,
             PolicyConfig cfg, TrainTrace* trace = nullptr);

// Tuple-level trainer for the RvS variants; tuples carry their own labels.
Policy train_rvs_on_labeled_tuples(
    const std::vector<datagen::TrainingTuple>& tuples, PolicyConfig cfg,
    TrainTrace* trace = nullptr);

// Return-conditioned mode: goal conditioning off, labels are Monte-Carlo
// discounted returns computed against each trajectory's own goal.
Policy train_return_conditioned(const datagen::Dataset& data,
                                PolicyConfig cfg, TrainTrace* trace = nullptr);

// ---- RvS inference ----
double rvs_value(const Policy& p, const envs::Observation& s,
                 const envs::Observation& g);
std::vector<double> rvs_actor_scores(const Policy& p,
                                     const envs::Observation& s,
                                     const envs::Observation& g,
                                     double condition);
// Predicts the value, conditions the actor on it, argmax with ties broken by
// the lowest action index.
int infer_rvs(const Policy& p, const envs::Observation& s,
              const envs::Observation& g);
int infer_rvs_conditioned(const Policy& p, const envs::Observation& s,
                          const envs::Observation& g, double condition);

// ---- DT forward/inference ----
// A teacher-forced context window: labels feed the Q tokens (and the
// expectile target) on the Q-conditioned variants.
struct DtWindow {
  std::vector<envs::Observation> obs;
  std::vector<int> actions;
  std::vector<double> labels;
  envs::Observation goal;
};

// Training-time forward over a full window. Returns the per-step value
// predictions [w,1] (empty tensor on baselines) and action scores [w,A].
// The value prediction at step t reads the token before the Q slot and the
// action prediction the token before the action slot, so each consumes only
// the tokens the layout places before it.
std::pair<nn::Tensor, nn::Tensor> dt_window_outputs(const Policy& p,
                                                    const DtWindow& window);

// Completed earlier timesteps of an episode (newest last). Values hold the
// model's own past predictions, re-predicted every step.
struct DtContext {
  std::vector<envs::Observation> obs;
  std::vector<double> values;
  std::vector<int> actions;
};

struct DtDecision {
  double value = 0.0;
  int action = 0;
};

// Two-pass inference: predict the value from (...,s,g), append it, predict
// the action. Only the most recent K-1 context steps participate; anything
// older is dropped before the forward pass.
DtDecision dt_infer(const Policy& p, const DtContext& past,
                    const envs::Observation& s, const envs::Observation& g);

// Rolling wrapper around dt_infer that records its own decisions.
class DtSession {
 public:
  explicit DtSession(const Policy& p);
  void reset();
  int act(const envs::Observation& s, const envs::Observation& g);
  double last_value() const { return last_value_; }
  const DtContext& context() const { return context_; }

 private:
  const Policy& policy_;
  DtContext context_;
  double last_value_ = 0.0;
};

void save_policy(const Policy& p, const std::string& path,
                 const nn::Adam* opt = nullptr);
Policy load_policy(const std::string& path);

}  // namespace stitchlab::policy
