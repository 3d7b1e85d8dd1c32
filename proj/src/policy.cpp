#include "stitchlab/policy.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "stitchlab/errors.hpp"
#include "stitchlab/serialize.hpp"

namespace stitchlab::policy {
namespace {

using envs::Observation;
using json = nlohmann::ordered_json;

// Per-timestep token slots; -1 marks an absent slot. The prediction for a
// slot is read from the token immediately before it.
struct TokenLayout {
  int tps = 0;
  int s_pos = -1, g_pos = -1, q_pos = -1, a_pos = -1;
};

TokenLayout layout_of(const PolicyConfig& cfg) {
  if (cfg.goal_conditioned) {
    if (is_gcrsl(cfg.variant)) return {4, 0, 1, 2, 3};
    return {3, 0, 1, -1, 2};
  }
  return {3, 0, -1, 1, 2};
}

void append_norm(const cvae::Norm& n, const Observation& o,
                 std::vector<double>& out) {
  out.push_back((o.x - n.offset_x) * n.scale_x);
  out.push_back((o.y - n.offset_y) * n.scale_y);
}

void append_one_hot(int action, int n, std::vector<double>& out) {
  if (action < 0 || action >= n) {
    throw std::invalid_argument("policy: action index out of range");
  }
  for (int a = 0; a < n; ++a) out.push_back(a == action ? 1.0 : 0.0);
}

int argmax_lowest(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

json norm_to_json(const cvae::Norm& n) {
  return json{{"offset_x", n.offset_x},
              {"offset_y", n.offset_y},
              {"scale_x", n.scale_x},
              {"scale_y", n.scale_y}};
}

cvae::Norm norm_from_json(const json& j) {
  cvae::Norm n;
  n.offset_x = j.at("offset_x").get<double>();
  n.offset_y = j.at("offset_y").get<double>();
  n.scale_x = j.at("scale_x").get<double>();
  n.scale_y = j.at("scale_y").get<double>();
  return n;
}

json config_to_json(const PolicyConfig& cfg) {
  json j;
  j["variant"] = variant_name(cfg.variant);
  j["m"] = cfg.m;
  j["context_k"] = cfg.context_k;
  j["lr"] = cfg.lr;
  j["steps"] = cfg.steps;
  j["batch"] = cfg.batch;
  j["augment_prob"] = cfg.augment_prob;
  j["seed"] = cfg.seed;
  j["relabel"] = datagen::relabel_name(cfg.relabel);
  j["gamma"] = cfg.gamma;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["dt_layers"] = cfg.dt_layers;
  j["dt_embed"] = cfg.dt_embed;
  j["dt_heads"] = cfg.dt_heads;
  j["goal_conditioned"] = cfg.goal_conditioned;
  j["obs_dim"] = cfg.obs_dim;
  j["goal_dim"] = cfg.goal_dim;
  j["n_actions"] = cfg.n_actions;
  j["norm"] = norm_to_json(cfg.norm);
  j["fixed_condition"] = cfg.fixed_condition;
  return j;
}

PolicyConfig config_from_json(const json& j) {
  PolicyConfig cfg;
  cfg.variant = variant_from_name(j.at("variant").get<std::string>());
  cfg.m = j.at("m").get<double>();
  cfg.context_k = j.at("context_k").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.steps = j.at("steps").get<int>();
  cfg.batch = j.at("batch").get<int>();
  cfg.augment_prob = j.at("augment_prob").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.relabel = datagen::relabel_from_name(j.at("relabel").get<std::string>());
  cfg.gamma = j.at("gamma").get<double>();
  cfg.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
  cfg.dt_layers = j.at("dt_layers").get<int>();
  cfg.dt_embed = j.at("dt_embed").get<int>();
  cfg.dt_heads = j.at("dt_heads").get<int>();
  cfg.goal_conditioned = j.at("goal_conditioned").get<bool>();
  cfg.obs_dim = j.at("obs_dim").get<int>();
  cfg.goal_dim = j.at("goal_dim").get<int>();
  cfg.n_actions = j.at("n_actions").get<int>();
  cfg.norm = norm_from_json(j.at("norm"));
  cfg.fixed_condition = j.at("fixed_condition").get<double>();
  return cfg;
}

// Shared batched forward through an MLP without graph construction.
std::vector<double> mlp_apply(const nn::Mlp& mlp, const std::vector<double>& in,
                              int batch) {
  return mlp.forward_nograd(in, batch);
}

}  // namespace

Variant variant_from_name(const std::string& name) {
  if (name == "ocbc_rvs") return Variant::kOcbcRvs;
  if (name == "ocbc_dt") return Variant::kOcbcDt;
  if (name == "gcrsl_rvs") return Variant::kGcrslRvs;
  if (name == "gcrsl_dt") return Variant::kGcrslDt;
  throw ConfigError("unknown policy variant: " + name);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kOcbcRvs: return "ocbc_rvs";
    case Variant::kOcbcDt: return "ocbc_dt";
    case Variant::kGcrslRvs: return "gcrsl_rvs";
    case Variant::kGcrslDt: return "gcrsl_dt";
  }
  return "?";
}

bool is_dt(Variant v) {
  return v == Variant::kOcbcDt || v == Variant::kGcrslDt;
}

bool is_gcrsl(Variant v) {
  return v == Variant::kGcrslRvs || v == Variant::kGcrslDt;
}

void PolicyConfig::validate() const {
  if (m <= 0.0 || m >= 1.0) throw ConfigError("policy: m outside (0,1)");
  if (is_dt(variant) && context_k < 2) {
    throw ConfigError("policy: context_k must be >= 2 for sequence variants");
  }
  if (steps < 1 || batch < 1) throw ConfigError("policy: bad steps/batch");
  if (augment_prob < 0.0 || augment_prob > 1.0) {
    throw ConfigError("policy: augment_prob outside [0,1]");
  }
  if (lr <= 0.0) throw ConfigError("policy: lr must be positive");
  if (n_actions < 2) throw ConfigError("policy: needs >= 2 actions");
}

int Policy::tokens_per_step() const { return layout_of(cfg).tps; }

bool Policy::has_q_token() const { return layout_of(cfg).q_pos >= 0; }

Policy Policy::create(const PolicyConfig& cfg) {
  cfg.validate();
  Policy p;
  p.cfg = cfg;
  Rng rng = Rng(cfg.seed).split(0x9071c4);
  const int gdim = cfg.goal_conditioned ? cfg.goal_dim : 0;
  if (!is_dt(cfg.variant)) {
    RvsPolicy rvs;
    if (is_gcrsl(cfg.variant)) {
      std::vector<int> vdims = {cfg.obs_dim + gdim};
      vdims.insert(vdims.end(), cfg.mlp_hidden.begin(), cfg.mlp_hidden.end());
      vdims.push_back(1);
      rvs.value = nn::Mlp::create(rng, vdims, "value");
    }
    const bool conditioned = is_gcrsl(cfg.variant) || !cfg.goal_conditioned;
    std::vector<int> adims = {cfg.obs_dim + gdim + (conditioned ? 1 : 0)};
    adims.insert(adims.end(), cfg.mlp_hidden.begin(), cfg.mlp_hidden.end());
    adims.push_back(cfg.n_actions);
    rvs.actor = nn::Mlp::create(rng, adims, "actor");
    p.rvs = std::move(rvs);
    return p;
  }

  const TokenLayout lay = layout_of(cfg);
  const int d = cfg.dt_embed;
  DtPolicy dt;
  dt.embed_s = nn::Linear::create(rng, cfg.obs_dim, d, "embed_s");
  if (lay.g_pos >= 0) {
    dt.embed_g = nn::Linear::create(rng, cfg.goal_dim, d, "embed_g");
  }
  if (lay.q_pos >= 0) {
    dt.embed_q = nn::Linear::create(rng, 1, d, "embed_q");
  }
  dt.embed_a = nn::Linear::create(rng, cfg.n_actions, d, "embed_a");
  dt.pos = nn::init_uniform(rng, {lay.tps * cfg.context_k, d}, d, "pos");
  const int max_ctx = lay.tps * cfg.context_k;
  for (int l = 0; l < cfg.dt_layers; ++l) {
    dt.blocks.push_back(nn::TransformerBlock::create(
        rng, d, cfg.dt_heads, max_ctx, "block" + std::to_string(l)));
  }
  dt.ln_f = nn::LayerNorm::create(d, "ln_f");
  if (is_gcrsl(cfg.variant)) {
    dt.q_head = nn::Linear::create(rng, d, 1, "q_head");
  }
  dt.a_head = nn::Linear::create(rng, d, cfg.n_actions, "a_head");
  p.dt = std::move(dt);
  return p;
}

nn::NamedParams Policy::named_params() const {
  nn::NamedParams out;
  if (rvs) {
    if (rvs->value) rvs->value->collect(out, "value");
    rvs->actor.collect(out, "actor");
  }
  if (dt) {
    dt->embed_s.collect(out, "embed_s");
    if (dt->embed_g.weight.defined()) dt->embed_g.collect(out, "embed_g");
    if (dt->embed_q.weight.defined()) dt->embed_q.collect(out, "embed_q");
    dt->embed_a.collect(out, "embed_a");
    out.emplace_back("pos", dt->pos);
    for (std::size_t l = 0; l < dt->blocks.size(); ++l) {
      dt->blocks[l].collect(out, "block" + std::to_string(l));
    }
    dt->ln_f.collect(out, "ln_f");
    if (dt->q_head.weight.defined()) dt->q_head.collect(out, "q_head");
    dt->a_head.collect(out, "a_head");
  }
  return out;
}

std::vector<nn::Tensor> Policy::params() const {
  std::vector<nn::Tensor> out;
  for (const auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

namespace {

// One sampled training item; DT items carry the whole context window.
using Sample = DtWindow;

class BatchSampler {
 public:
  BatchSampler(const datagen::Dataset& data, const cvae::LabelTable* labels,
               const PolicyConfig& cfg, bool return_conditioned)
      : data_(data),
        labels_(labels),
        cfg_(cfg),
        return_conditioned_(return_conditioned),
        index_(data) {
    if (return_conditioned_) {
      mc_.reserve(data.trajectories.size());
      for (const auto& traj : data.trajectories) {
        mc_.push_back(datagen::mc_q_labels(traj, cfg.gamma));
      }
    }
  }

  double max_label() const {
    double mx = 0.0;
    for (const auto& labels : mc_) {
      for (double v : labels) mx = std::max(mx, v);
    }
    return mx;
  }

  Sample draw(Rng& rng, int window) const {
    const auto [ti, t_end] = index_.sample(rng);
    const datagen::Trajectory& traj = data_.trajectories[ti];
    const int start = std::max(0, t_end - (window - 1));
    Sample s;
    for (int k = start; k <= t_end; ++k) {
      s.obs.push_back(traj.obs[k]);
      s.actions.push_back(traj.actions[k]);
    }
    if (return_conditioned_) {
      for (int k = start; k <= t_end; ++k) s.labels.push_back(mc_[ti][k]);
      return s;
    }
    const int off = datagen::draw_relabel_offset(
        t_end, traj.length(), cfg_.relabel, cfg_.gamma, rng);
    s.goal = traj.eta[t_end + off];
    if (cfg_.augment_prob > 0.0 && data_.trajectories.size() > 1 &&
        rng.uniform() < cfg_.augment_prob) {
      int other = rng.uniform_int(static_cast<int>(data_.trajectories.size()) - 1);
      if (other >= ti) ++other;
      const auto& src = data_.trajectories[other];
      s.goal = src.eta[rng.uniform_int(static_cast<int>(src.eta.size()))];
    }
    if (labels_ != nullptr) {
      for (std::size_t k = 0; k < s.obs.size(); ++k) {
        s.labels.push_back(
            labels_->lookup_or_throw(s.obs[k], s.actions[k], s.goal));
      }
    }
    return s;
  }

 private:
  const datagen::Dataset& data_;
  const cvae::LabelTable* labels_;
  const PolicyConfig& cfg_;
  bool return_conditioned_;
  datagen::TransitionIndex index_;
  std::vector<std::vector<double>> mc_;
};

nn::Tensor dt_tokens_forward(const Policy& p, const std::vector<nn::Tensor>& parts,
                             int keep_rows) {
  using namespace nn;
  const DtPolicy& dt = *p.dt;
  Tensor tokens = interleave_rows(parts, keep_rows);
  tokens = add(tokens, slice_rows(dt.pos, 0, keep_rows));
  for (const auto& block : dt.blocks) tokens = block.forward(tokens);
  return dt.ln_f.forward(tokens);
}

// Embedded per-type matrices for a window; order matches the token layout.
std::vector<nn::Tensor> dt_embed_parts(const Policy& p, const Sample& s,
                                       const std::vector<double>& q_values) {
  using namespace nn;
  const PolicyConfig& cfg = p.cfg;
  const TokenLayout lay = layout_of(cfg);
  const DtPolicy& dt = *p.dt;
  const int w = static_cast<int>(s.obs.size());

  std::vector<double> s_data, g_data, a_data;
  for (int k = 0; k < w; ++k) {
    append_norm(cfg.norm, s.obs[k], s_data);
    if (lay.g_pos >= 0) append_norm(cfg.norm, s.goal, g_data);
    append_one_hot(s.actions[k], cfg.n_actions, a_data);
  }
  std::vector<Tensor> parts(lay.tps);
  parts[lay.s_pos] =
      dt.embed_s.forward(Tensor::from_data({w, cfg.obs_dim}, std::move(s_data)));
  if (lay.g_pos >= 0) {
    parts[lay.g_pos] = dt.embed_g.forward(
        Tensor::from_data({w, cfg.goal_dim}, std::move(g_data)));
  }
  if (lay.q_pos >= 0) {
    parts[lay.q_pos] =
        dt.embed_q.forward(Tensor::from_data({w, 1}, q_values));
  }
  parts[lay.a_pos] = dt.embed_a.forward(
      Tensor::from_data({w, cfg.n_actions}, std::move(a_data)));
  return parts;
}

nn::Tensor batch_mean(std::vector<nn::Tensor> losses) {
  nn::Tensor total = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) {
    total = nn::add(total, losses[i]);
  }
  return nn::scale(total, 1.0 / static_cast<double>(losses.size()));
}

void check_loss(double v, int step) {
  if (!std::isfinite(v) || std::fabs(v) > 1e6) {
    throw NumericalError("policy training diverged at step " +
                         std::to_string(step));
  }
}

Policy train_dt_impl(const datagen::Dataset& data,
                     const cvae::LabelTable* labels, PolicyConfig cfg,
                     bool return_conditioned, TrainTrace* trace) {
  Policy p = Policy::create(cfg);
  BatchSampler sampler(data, labels, p.cfg, return_conditioned);
  if (return_conditioned) p.cfg.fixed_condition = sampler.max_label();
  Rng root(cfg.seed);
  Rng batch_rng = root.split(0x5a3);

  nn::AdamConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.decoupled = true;
  ocfg.weight_decay = 1e-4;
  nn::Adam opt(p.params(), ocfg);

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<nn::Tensor> losses;
    losses.reserve(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      const Sample s = sampler.draw(batch_rng, cfg.context_k);
      const int w = static_cast<int>(s.obs.size());
      auto [q_pred, a_scores] = dt_window_outputs(p, s);
      std::vector<double> onehot;
      for (int k = 0; k < w; ++k) {
        append_one_hot(s.actions[k], cfg.n_actions, onehot);
      }
      nn::Tensor a_target =
          nn::Tensor::from_data({w, cfg.n_actions}, std::move(onehot));
      nn::Tensor loss = nn::scale(nn::mse_loss(a_scores, a_target),
                                  static_cast<double>(cfg.n_actions));
      if (is_gcrsl(cfg.variant)) {
        nn::Tensor q_target = nn::Tensor::from_data({w, 1}, s.labels);
        loss = nn::add(loss, nn::expectile_loss(q_pred, q_target, cfg.m));
      }
      losses.push_back(loss);
    }
    nn::Tensor total = batch_mean(std::move(losses));
    check_loss(total.item(), step);
    if (trace) trace->losses.push_back(total.item());
    opt.zero_grad();
    nn::backward(total);
    opt.step();
  }
  return p;
}

Policy train_rvs_impl(const datagen::Dataset& data,
                      const cvae::LabelTable* labels, PolicyConfig cfg,
                      bool return_conditioned, TrainTrace* trace) {
  Policy p = Policy::create(cfg);
  BatchSampler sampler(data, labels, p.cfg, return_conditioned);
  if (return_conditioned) p.cfg.fixed_condition = sampler.max_label();
  Rng root(cfg.seed);
  Rng batch_rng = root.split(0x5a3);

  nn::AdamConfig ocfg;
  ocfg.lr = cfg.lr;
  nn::Adam opt(p.params(), ocfg);

  const bool conditioned = is_gcrsl(cfg.variant) || !cfg.goal_conditioned;
  const bool has_value = is_gcrsl(cfg.variant);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<double> value_in, actor_in, onehot, label_col;
    for (int b = 0; b < cfg.batch; ++b) {
      const Sample s = sampler.draw(batch_rng, 1);
      append_norm(cfg.norm, s.obs[0], actor_in);
      if (cfg.goal_conditioned) append_norm(cfg.norm, s.goal, actor_in);
      if (conditioned) {
        actor_in.push_back(s.labels.empty() ? 0.0 : s.labels[0]);
      }
      if (has_value) {
        append_norm(cfg.norm, s.obs[0], value_in);
        if (cfg.goal_conditioned) append_norm(cfg.norm, s.goal, value_in);
        label_col.push_back(s.labels[0]);
      }
      append_one_hot(s.actions[0], cfg.n_actions, onehot);
    }
    const int a_cols = static_cast<int>(actor_in.size()) / cfg.batch;
    nn::Tensor a_in =
        nn::Tensor::from_data({cfg.batch, a_cols}, std::move(actor_in));
    nn::Tensor a_target = nn::Tensor::from_data({cfg.batch, cfg.n_actions},
                                                std::move(onehot));
    nn::Tensor loss =
        nn::scale(nn::mse_loss(p.rvs->actor.forward(a_in), a_target),
                  static_cast<double>(cfg.n_actions));
    if (has_value) {
      const int v_cols = static_cast<int>(value_in.size()) / cfg.batch;
      nn::Tensor v_in =
          nn::Tensor::from_data({cfg.batch, v_cols}, std::move(value_in));
      nn::Tensor v_target =
          nn::Tensor::from_data({cfg.batch, 1}, std::move(label_col));
      loss = nn::add(loss, nn::expectile_loss(p.rvs->value->forward(v_in),
                                              v_target, cfg.m));
    }
    check_loss(loss.item(), step);
    if (trace) trace->losses.push_back(loss.item());
    opt.zero_grad();
    nn::backward(loss);
    opt.step();
  }
  return p;
}

}  // namespace

Policy train(const datagen::Dataset& data, const cvae::LabelTable* labels,
             PolicyConfig cfg, TrainTrace* trace) {
  cfg.validate();
  if (is_gcrsl(cfg.variant) && cfg.goal_conditioned && labels == nullptr) {
    throw ConfigError("train: Q-conditioned variants require a label table");
  }
  if (!is_gcrsl(cfg.variant)) labels = nullptr;
  if (is_dt(cfg.variant)) {
    return train_dt_impl(data, labels, cfg, false, trace);
  }
  return train_rvs_impl(data, labels, cfg, false, trace);
}

Policy train_return_conditioned(const datagen::Dataset& data,
                                PolicyConfig cfg, TrainTrace* trace) {
  cfg.goal_conditioned = false;
  cfg.validate();
  if (is_dt(cfg.variant)) {
    return train_dt_impl(data, nullptr, cfg, true, trace);
  }
  return train_rvs_impl(data, nullptr, cfg, true, trace);
}

Policy train_rvs_on_labeled_tuples(
    const std::vector<datagen::TrainingTuple>& tuples, PolicyConfig cfg,
    TrainTrace* trace) {
  cfg.validate();
  if (is_dt(cfg.variant)) {
    throw ConfigError("tuple trainer supports the RvS variants only");
  }
  if (tuples.empty()) throw ConfigError("tuple trainer: no tuples");
  const bool has_value = is_gcrsl(cfg.variant);
  if (has_value) {
    for (const auto& t : tuples) {
      if (!t.has_label) {
        throw ConfigError("tuple trainer: Q-conditioned variant needs labels");
      }
    }
  }
  Policy p = Policy::create(cfg);
  Rng batch_rng = Rng(cfg.seed).split(0x5a3);
  nn::AdamConfig ocfg;
  ocfg.lr = cfg.lr;
  nn::Adam opt(p.params(), ocfg);
  const bool conditioned = has_value || !cfg.goal_conditioned;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<double> value_in, actor_in, onehot, label_col;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& t = tuples[batch_rng.uniform_int(
          static_cast<int>(tuples.size()))];
      append_norm(cfg.norm, t.s, actor_in);
      if (cfg.goal_conditioned) append_norm(cfg.norm, t.goal, actor_in);
      if (conditioned) actor_in.push_back(t.q_label);
      if (has_value) {
        append_norm(cfg.norm, t.s, value_in);
        if (cfg.goal_conditioned) append_norm(cfg.norm, t.goal, value_in);
        label_col.push_back(t.q_label);
      }
      append_one_hot(t.action, cfg.n_actions, onehot);
    }
    const int a_cols = static_cast<int>(actor_in.size()) / cfg.batch;
    nn::Tensor a_in =
        nn::Tensor::from_data({cfg.batch, a_cols}, std::move(actor_in));
    nn::Tensor a_target = nn::Tensor::from_data({cfg.batch, cfg.n_actions},
                                                std::move(onehot));
    nn::Tensor loss =
        nn::scale(nn::mse_loss(p.rvs->actor.forward(a_in), a_target),
                  static_cast<double>(cfg.n_actions));
    if (has_value) {
      const int v_cols = static_cast<int>(value_in.size()) / cfg.batch;
      nn::Tensor v_in =
          nn::Tensor::from_data({cfg.batch, v_cols}, std::move(value_in));
      nn::Tensor v_target =
          nn::Tensor::from_data({cfg.batch, 1}, std::move(label_col));
      loss = nn::add(loss, nn::expectile_loss(p.rvs->value->forward(v_in),
                                              v_target, cfg.m));
    }
    check_loss(loss.item(), step);
    if (trace) trace->losses.push_back(loss.item());
    opt.zero_grad();
    nn::backward(loss);
    opt.step();
  }
  return p;
}

double rvs_value(const Policy& p, const Observation& s, const Observation& g) {
  if (!p.rvs || !p.rvs->value) {
    throw std::invalid_argument("rvs_value: policy has no value model");
  }
  std::vector<double> in;
  append_norm(p.cfg.norm, s, in);
  if (p.cfg.goal_conditioned) append_norm(p.cfg.norm, g, in);
  return mlp_apply(*p.rvs->value, in, 1)[0];
}

std::vector<double> rvs_actor_scores(const Policy& p, const Observation& s,
                                     const Observation& g, double condition) {
  if (!p.rvs) throw std::invalid_argument("rvs_actor_scores: not an RvS policy");
  const bool conditioned =
      is_gcrsl(p.cfg.variant) || !p.cfg.goal_conditioned;
  std::vector<double> in;
  append_norm(p.cfg.norm, s, in);
  if (p.cfg.goal_conditioned) append_norm(p.cfg.norm, g, in);
  if (conditioned) in.push_back(condition);
  return mlp_apply(p.rvs->actor, in, 1);
}

int infer_rvs_conditioned(const Policy& p, const Observation& s,
                          const Observation& g, double condition) {
  return argmax_lowest(rvs_actor_scores(p, s, g, condition));
}

int infer_rvs(const Policy& p, const Observation& s, const Observation& g) {
  double condition = 0.0;
  if (is_gcrsl(p.cfg.variant)) {
    // The true conditioning target is a goal-reaching probability; keep the
    // predicted maximum inside [0,1] like the labels the actor trained on.
    condition = std::clamp(rvs_value(p, s, g), 0.0, 1.0);
  } else if (!p.cfg.goal_conditioned) {
    condition = p.cfg.fixed_condition;
  }
  return infer_rvs_conditioned(p, s, g, condition);
}

std::pair<nn::Tensor, nn::Tensor> dt_window_outputs(const Policy& p,
                                                    const DtWindow& window) {
  using namespace nn;
  if (!p.dt) throw std::invalid_argument("dt_window_outputs: not a sequence policy");
  const TokenLayout lay = layout_of(p.cfg);
  const int w = static_cast<int>(window.obs.size());
  if (w < 1 || static_cast<int>(window.actions.size()) != w) {
    throw std::invalid_argument("dt_window_outputs: ragged window");
  }
  std::vector<double> q_values;
  if (lay.q_pos >= 0) q_values = window.labels;
  const auto parts = dt_embed_parts(p, window, q_values);
  Tensor tokens = dt_tokens_forward(p, parts, lay.tps * w);

  Tensor q_pred, a_scores;
  if (is_gcrsl(p.cfg.variant)) {
    std::vector<int> q_idx(w);
    for (int k = 0; k < w; ++k) q_idx[k] = k * lay.tps + (lay.q_pos - 1);
    q_pred = p.dt->q_head.forward(gather_rows(tokens, std::move(q_idx)));
  }
  std::vector<int> a_idx(w);
  for (int k = 0; k < w; ++k) a_idx[k] = k * lay.tps + (lay.a_pos - 1);
  a_scores = p.dt->a_head.forward(gather_rows(tokens, std::move(a_idx)));
  return {q_pred, a_scores};
}

DtDecision dt_infer(const Policy& p, const DtContext& past,
                    const Observation& s, const Observation& g) {
  if (!p.dt) throw std::invalid_argument("dt_infer: not a sequence policy");
  const PolicyConfig& cfg = p.cfg;
  const TokenLayout lay = layout_of(cfg);
  // Only the most recent K-1 completed steps participate.
  const int total = static_cast<int>(past.obs.size());
  const int keep_past = std::min(total, cfg.context_k - 1);
  const int start = total - keep_past;

  DtWindow window;
  for (int i = start; i < total; ++i) {
    window.obs.push_back(past.obs[i]);
    window.actions.push_back(past.actions[i]);
  }
  window.obs.push_back(s);
  window.actions.push_back(0);  // placeholder, excluded by keep_rows
  window.goal = g;
  const int w = keep_past + 1;

  std::vector<double> q_values;
  if (lay.q_pos >= 0) {
    for (int i = start; i < total; ++i) q_values.push_back(past.values[i]);
    q_values.push_back(0.0);  // placeholder for the current step
  }

  DtDecision decision;
  decision.value = cfg.goal_conditioned ? 0.0 : cfg.fixed_condition;
  if (is_gcrsl(cfg.variant)) {
    // Pass 1: tokens up to and including the token preceding the Q slot.
    const auto parts = dt_embed_parts(p, window, q_values);
    const int keep = lay.tps * (w - 1) + lay.q_pos;
    nn::Tensor tokens = dt_tokens_forward(p, parts, keep);
    // Clamped to the probability range the Q tokens were trained on.
    decision.value = std::clamp(
        p.dt->q_head.forward(nn::gather_rows(tokens, {keep - 1})).item(), 0.0,
        1.0);
  }
  if (lay.q_pos >= 0) q_values[w - 1] = decision.value;
  const auto parts = dt_embed_parts(p, window, q_values);
  const int keep = lay.tps * (w - 1) + lay.a_pos;
  nn::Tensor tokens = dt_tokens_forward(p, parts, keep);
  nn::Tensor scores =
      p.dt->a_head.forward(nn::gather_rows(tokens, {keep - 1}));
  decision.action = argmax_lowest(scores.data());
  return decision;
}

DtSession::DtSession(const Policy& p) : policy_(p) {
  if (!p.dt) throw std::invalid_argument("DtSession: not a sequence policy");
}

void DtSession::reset() {
  context_ = DtContext{};
  last_value_ = 0.0;
}

int DtSession::act(const Observation& s, const Observation& g) {
  const DtDecision decision = dt_infer(policy_, context_, s, g);
  last_value_ = decision.value;
  context_.obs.push_back(s);
  context_.values.push_back(decision.value);
  context_.actions.push_back(decision.action);
  const int limit = policy_.cfg.context_k - 1;
  if (static_cast<int>(context_.obs.size()) > limit) {
    const int excess = static_cast<int>(context_.obs.size()) - limit;
    context_.obs.erase(context_.obs.begin(), context_.obs.begin() + excess);
    context_.values.erase(context_.values.begin(),
                          context_.values.begin() + excess);
    context_.actions.erase(context_.actions.begin(),
                           context_.actions.begin() + excess);
  }
  return decision.action;
}

void save_policy(const Policy& p, const std::string& path,
                 const nn::Adam* opt) {
  serialize::save_checkpoint(path, "stitchlab.policy.v1",
                             config_to_json(p.cfg), p.named_params(), opt);
}

Policy load_policy(const std::string& path) {
  const auto loaded = serialize::load_checkpoint(path, "stitchlab.policy.v1");
  Policy p = Policy::create(config_from_json(loaded.config));
  // fixed_condition is set by the trainer, not create(); restore it.
  p.cfg.fixed_condition = loaded.config.at("fixed_condition").get<double>();
  nn::NamedParams params = p.named_params();
  serialize::params_from_json(loaded.params, params);
  return p;
}

}  // namespace stitchlab::policy
