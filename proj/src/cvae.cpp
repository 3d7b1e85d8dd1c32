#include "stitchlab/cvae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "stitchlab/errors.hpp"
#include "stitchlab/kernels.hpp"
#include "stitchlab/serialize.hpp"

namespace stitchlab::cvae {
namespace {

using envs::Observation;
using json = nlohmann::ordered_json;

json norm_to_json(const Norm& n) {
  return json{{"offset_x", n.offset_x},
              {"offset_y", n.offset_y},
              {"scale_x", n.scale_x},
              {"scale_y", n.scale_y}};
}

Norm norm_from_json(const json& j) {
  Norm n;
  n.offset_x = j.at("offset_x").get<double>();
  n.offset_y = j.at("offset_y").get<double>();
  n.scale_x = j.at("scale_x").get<double>();
  n.scale_y = j.at("scale_y").get<double>();
  return n;
}

json config_to_json(const CvaeConfig& cfg) {
  json j;
  j["obs_dim"] = cfg.obs_dim;
  j["act_dim"] = cfg.act_dim;
  j["goal_dim"] = cfg.goal_dim;
  j["latent_dim"] = cfg.latent_dim;
  j["enc_hidden"] = cfg.enc_hidden;
  j["dec_hidden"] = cfg.dec_hidden;
  j["sigma_dec"] = cfg.sigma_dec;
  j["lr"] = cfg.lr;
  j["steps"] = cfg.steps;
  j["batch"] = cfg.batch;
  j["seed"] = cfg.seed;
  j["relabel"] = datagen::relabel_name(cfg.relabel);
  j["gamma"] = cfg.gamma;
  j["norm"] = norm_to_json(cfg.norm);
  return j;
}

CvaeConfig config_from_json(const json& j) {
  CvaeConfig cfg;
  cfg.obs_dim = j.at("obs_dim").get<int>();
  cfg.act_dim = j.at("act_dim").get<int>();
  cfg.goal_dim = j.at("goal_dim").get<int>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.enc_hidden = j.at("enc_hidden").get<std::vector<int>>();
  cfg.dec_hidden = j.at("dec_hidden").get<std::vector<int>>();
  cfg.sigma_dec = j.at("sigma_dec").get<double>();
  cfg.lr = j.at("lr").get<double>();
  cfg.steps = j.at("steps").get<int>();
  cfg.batch = j.at("batch").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.relabel = datagen::relabel_from_name(j.at("relabel").get<std::string>());
  cfg.gamma = j.at("gamma").get<double>();
  cfg.norm = norm_from_json(j.at("norm"));
  return cfg;
}

void append_normalized(const Norm& n, const Observation& o,
                       std::vector<double>& out) {
  out.push_back((o.x - n.offset_x) * n.scale_x);
  out.push_back((o.y - n.offset_y) * n.scale_y);
}

void append_one_hot(int action, int act_dim, std::vector<double>& out) {
  if (action < 0 || action >= act_dim) {
    throw std::invalid_argument("cvae: action index out of range");
  }
  for (int a = 0; a < act_dim; ++a) out.push_back(a == action ? 1.0 : 0.0);
}

std::vector<double> apply_linear(const nn::Linear& l,
                                 const std::vector<double>& in, int batch) {
  const std::size_t din = l.in_dim(), dout = l.out_dim();
  std::vector<double> out(static_cast<std::size_t>(batch) * dout);
  kernels::matmul(in.data(), l.weight.data().data(), out.data(), batch, din,
                  dout);
  for (int i = 0; i < batch; ++i) {
    kernels::axpy(1.0, l.bias.data().data(), out.data() + i * dout, dout);
  }
  return out;
}

// Encoder hidden activations without graph construction.
std::vector<double> encode_hidden_nograd(const CvaeModel& model,
                                         const std::vector<double>& in,
                                         int batch) {
  if (!model.has_enc_trunk()) return in;
  std::vector<double> h = model.enc_trunk.forward_nograd(in, batch);
  for (double& v : h) v = std::tanh(v);
  return h;
}

double log_norm_const(double sigma, int dim) {
  return -0.5 * static_cast<double>(dim) *
         std::log(2.0 * std::numbers::pi * sigma * sigma);
}

}  // namespace

Norm Norm::for_spec(const envs::MazeSpec& spec) {
  Norm n;
  n.offset_x = 0.5 * (spec.width - 1);
  n.offset_y = 0.5 * (spec.height - 1);
  n.scale_x = spec.width > 1 ? 2.0 / (spec.width - 1) : 1.0;
  n.scale_y = spec.height > 1 ? 2.0 / (spec.height - 1) : 1.0;
  return n;
}

std::vector<nn::Tensor> CvaeModel::params() const {
  std::vector<nn::Tensor> out;
  for (const auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

nn::NamedParams CvaeModel::named_params() const {
  nn::NamedParams out;
  if (has_enc_trunk()) enc_trunk.collect(out, "enc_trunk");
  enc_mu.collect(out, "enc_mu");
  enc_logvar.collect(out, "enc_logvar");
  dec.collect(out, "dec");
  return out;
}

CvaeModel create_model(const CvaeConfig& cfg) {
  if (cfg.sigma_dec <= 0.0) throw ConfigError("cvae: sigma_dec must be > 0");
  if (cfg.latent_dim < 1) throw ConfigError("cvae: latent_dim must be >= 1");
  CvaeModel model;
  model.cfg = cfg;
  Rng rng = Rng(cfg.seed).split(0x10c0de);
  const int enc_in = cfg.obs_dim + cfg.act_dim + cfg.goal_dim;
  int head_in = enc_in;
  if (!cfg.enc_hidden.empty()) {
    std::vector<int> dims = {enc_in};
    dims.insert(dims.end(), cfg.enc_hidden.begin(), cfg.enc_hidden.end());
    model.enc_trunk = nn::Mlp::create(rng, dims, "enc_trunk");
    head_in = cfg.enc_hidden.back();
  }
  model.enc_mu = nn::Linear::create(rng, head_in, cfg.latent_dim, "enc_mu");
  model.enc_logvar =
      nn::Linear::create(rng, head_in, cfg.latent_dim, "enc_logvar");
  std::vector<int> dec_dims = {cfg.latent_dim + cfg.obs_dim + cfg.act_dim};
  dec_dims.insert(dec_dims.end(), cfg.dec_hidden.begin(),
                  cfg.dec_hidden.end());
  dec_dims.push_back(cfg.goal_dim);
  model.dec = nn::Mlp::create(rng, dec_dims, "dec");
  return model;
}

Batch make_batch(const CvaeModel& model,
                 const std::vector<datagen::TrainingTuple>& tuples) {
  const CvaeConfig& cfg = model.cfg;
  Batch b;
  b.size = static_cast<int>(tuples.size());
  for (const auto& tuple : tuples) {
    append_normalized(cfg.norm, tuple.s, b.s);
    append_one_hot(tuple.action, cfg.act_dim, b.a);
    b.g.push_back(tuple.goal.x);
    b.g.push_back(tuple.goal.y);
    append_normalized(cfg.norm, tuple.s, b.sg_cond);
    append_one_hot(tuple.action, cfg.act_dim, b.sg_cond);
  }
  return b;
}

nn::Tensor elbo(const CvaeModel& model, const Batch& batch, Rng& rng) {
  using namespace nn;
  const CvaeConfig& cfg = model.cfg;
  const int b = batch.size;
  if (b < 1) throw std::invalid_argument("elbo: empty batch");

  std::vector<double> enc_in_data;
  enc_in_data.reserve(batch.sg_cond.size() + batch.g.size());
  const int cond_dim = cfg.obs_dim + cfg.act_dim;
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < cond_dim; ++j) {
      enc_in_data.push_back(batch.sg_cond[static_cast<std::size_t>(i) * cond_dim + j]);
    }
    const double gx = batch.g[static_cast<std::size_t>(i) * cfg.goal_dim];
    const double gy = batch.g[static_cast<std::size_t>(i) * cfg.goal_dim + 1];
    enc_in_data.push_back((gx - cfg.norm.offset_x) * cfg.norm.scale_x);
    enc_in_data.push_back((gy - cfg.norm.offset_y) * cfg.norm.scale_y);
  }
  Tensor enc_in = Tensor::from_data({b, cond_dim + cfg.goal_dim},
                                    std::move(enc_in_data));
  Tensor h = enc_in;
  if (model.has_enc_trunk()) {
    h = tanh_act(model.enc_trunk.forward(enc_in));
  }
  Tensor mu = model.enc_mu.forward(h);
  Tensor logvar = model.enc_logvar.forward(h);

  std::vector<double> eps_data(static_cast<std::size_t>(b) * cfg.latent_dim);
  for (double& v : eps_data) v = rng.normal();
  Tensor eps = Tensor::from_data({b, cfg.latent_dim}, std::move(eps_data));
  Tensor z = add(mu, mul(exp_op(scale(logvar, 0.5)), eps));

  Tensor cond = Tensor::from_data({b, cond_dim}, batch.sg_cond);
  Tensor dec_in = concat_cols({z, cond});
  Tensor g_mean = model.dec.forward(dec_in);
  Tensor g_target = Tensor::from_data({b, cfg.goal_dim}, batch.g);
  Tensor recon = mean_all(
      gaussian_logpdf_fixed_sigma(g_mean, g_target, cfg.sigma_dec));
  Tensor kl = gaussian_kl_to_standard(mu, logvar);
  return sub(recon, kl);
}

CvaeModel train_cvae(const datagen::Dataset& data, CvaeConfig cfg,
                     TrainTrace* trace) {
  cfg.gamma = data.gamma;
  CvaeModel model = create_model(cfg);
  const datagen::TransitionIndex index(data);
  Rng root(cfg.seed);
  Rng batch_rng = root.split(0xba7c);
  Rng eps_rng = root.split(0xe95);

  nn::AdamConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  nn::Adam opt(model.params(), opt_cfg);

  std::vector<datagen::TrainingTuple> tuples(cfg.batch);
  for (int step = 0; step < cfg.steps; ++step) {
    for (int i = 0; i < cfg.batch; ++i) {
      const auto [ti, t] = index.sample(batch_rng);
      const datagen::Trajectory& traj = data.trajectories[ti];
      const int off = datagen::draw_relabel_offset(
          t, traj.length(), cfg.relabel, cfg.gamma, batch_rng);
      tuples[i].s = traj.obs[t];
      tuples[i].action = traj.actions[t];
      tuples[i].goal = traj.eta[t + off];
    }
    const Batch batch = make_batch(model, tuples);
    nn::Tensor loss = nn::scale(elbo(model, batch, eps_rng), -1.0);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value) || loss_value > 1e6) {
      throw NumericalError("train_cvae: loss diverged at step " +
                           std::to_string(step));
    }
    if (trace) trace->losses.push_back(loss_value);
    opt.zero_grad();
    nn::backward(loss);
    opt.step();
  }
  return model;
}

double estimate_log_prob(const CvaeModel& model, const Observation& s,
                         int action, const Observation& g, int n_samples,
                         Rng& rng) {
  if (n_samples < 1) {
    throw std::invalid_argument("estimate_log_prob: L must be >= 1");
  }
  const CvaeConfig& cfg = model.cfg;
  const int zd = cfg.latent_dim;

  std::vector<double> cond;
  append_normalized(cfg.norm, s, cond);
  append_one_hot(action, cfg.act_dim, cond);

  std::vector<double> enc_in = cond;
  append_normalized(cfg.norm, g, enc_in);
  const std::vector<double> h = encode_hidden_nograd(model, enc_in, 1);
  const std::vector<double> mu = apply_linear(model.enc_mu, h, 1);
  const std::vector<double> logvar = apply_linear(model.enc_logvar, h, 1);

  // z samples and decoder pass, batched over L.
  std::vector<double> z(static_cast<std::size_t>(n_samples) * zd);
  for (int l = 0; l < n_samples; ++l) {
    for (int j = 0; j < zd; ++j) {
      z[static_cast<std::size_t>(l) * zd + j] =
          mu[j] + std::exp(0.5 * logvar[j]) * rng.normal();
    }
  }
  const int dec_in_dim = zd + cfg.obs_dim + cfg.act_dim;
  std::vector<double> dec_in(static_cast<std::size_t>(n_samples) * dec_in_dim);
  for (int l = 0; l < n_samples; ++l) {
    double* row = dec_in.data() + static_cast<std::size_t>(l) * dec_in_dim;
    std::copy(z.begin() + static_cast<std::size_t>(l) * zd,
              z.begin() + static_cast<std::size_t>(l + 1) * zd, row);
    std::copy(cond.begin(), cond.end(), row + zd);
  }
  const std::vector<double> g_mean = model.dec.forward_nograd(dec_in, n_samples);

  const double prior_const = log_norm_const(1.0, zd);
  const double dec_const = log_norm_const(cfg.sigma_dec, cfg.goal_dim);
  const double inv_var_dec = 1.0 / (cfg.sigma_dec * cfg.sigma_dec);
  std::vector<double> logw(n_samples);
  for (int l = 0; l < n_samples; ++l) {
    const double* zl = z.data() + static_cast<std::size_t>(l) * zd;
    double log_prior = prior_const;
    double log_q = 0.0;
    for (int j = 0; j < zd; ++j) {
      log_prior -= 0.5 * zl[j] * zl[j];
      const double var = std::exp(logvar[j]);
      const double d = zl[j] - mu[j];
      log_q += -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
    }
    const double* mean = g_mean.data() + static_cast<std::size_t>(l) * cfg.goal_dim;
    double log_dec = dec_const;
    const double dx = g.x - mean[0];
    const double dy = g.y - mean[1];
    log_dec -= 0.5 * (dx * dx + dy * dy) * inv_var_dec;
    logw[l] = log_prior + log_dec - log_q;
  }
  double mx = logw[0];
  for (double v : logw) mx = std::max(mx, v);
  if (!std::isfinite(mx)) {
    throw NumericalError("estimate_log_prob: degenerate importance weights");
  }
  double acc = 0.0;
  for (double v : logw) acc += std::exp(v - mx);
  return mx + std::log(acc) - std::log(static_cast<double>(n_samples));
}

double q_label(const CvaeModel& model, const Observation& s, int action,
               const Observation& g, int n_samples, Rng& rng) {
  const double est = estimate_log_prob(model, s, action, g, n_samples, rng);
  return std::clamp(std::exp(est), 0.0, 1.0);
}

std::string LabelTable::key(const Observation& s, int action,
                            const Observation& g) {
  std::ostringstream out;
  out << std::lround(s.x) << ',' << std::lround(s.y) << '|' << action << '|'
      << std::lround(g.x) << ',' << std::lround(g.y);
  return out.str();
}

std::optional<double> LabelTable::lookup(const Observation& s, int action,
                                         const Observation& g) const {
  const auto it = labels.find(key(s, action, g));
  if (it == labels.end()) return std::nullopt;
  return it->second;
}

double LabelTable::lookup_or_throw(const Observation& s, int action,
                                   const Observation& g) const {
  const auto v = lookup(s, action, g);
  if (!v) {
    throw std::invalid_argument("label table: missing entry " +
                                key(s, action, g));
  }
  return *v;
}

LabelTable label_all(const CvaeModel& model, const envs::MazeSpec& spec,
                     int n_samples, uint64_t seed) {
  LabelTable table;
  table.n_samples = n_samples;
  table.seed = seed;
  Rng root(seed);
  const auto cells = spec.free_cells();
  uint64_t idx = 0;
  for (const envs::Cell& sc : cells) {
    for (int a = 0; a < spec.n_actions; ++a) {
      for (const envs::Cell& gc : cells) {
        Rng rng = root.split(idx++);
        const double q =
            q_label(model, envs::phi(sc), a, envs::phi(gc), n_samples, rng);
        table.labels[LabelTable::key(envs::phi(sc), a, envs::phi(gc))] = q;
      }
    }
  }
  return table;
}

void save_model(const CvaeModel& model, const std::string& path) {
  nn::NamedParams params = model.named_params();
  serialize::save_checkpoint(path, "stitchlab.cvae.v1",
                             config_to_json(model.cfg), params);
}

CvaeModel load_model(const std::string& path) {
  const auto loaded = serialize::load_checkpoint(path, "stitchlab.cvae.v1");
  CvaeModel model = create_model(config_from_json(loaded.config));
  nn::NamedParams params = model.named_params();
  serialize::params_from_json(loaded.params, params);
  return model;
}

void save_labels(const LabelTable& table, const std::string& path) {
  json j;
  j["format"] = "stitchlab.labels.v1";
  j["dataset_hash"] = table.dataset_hash;
  j["model_hash"] = table.model_hash;
  j["L"] = table.n_samples;
  j["seed"] = table.seed;
  j["labels"] = table.labels;
  serialize::write_file(path, j.dump());
}

LabelTable load_labels(const std::string& path) {
  try {
    const json j = json::parse(serialize::read_file(path));
    if (j.value("format", "") != "stitchlab.labels.v1") {
      throw IoError("labels: unexpected format in " + path);
    }
    LabelTable table;
    table.dataset_hash = j.value("dataset_hash", "");
    table.model_hash = j.value("model_hash", "");
    table.n_samples = j.at("L").get<int>();
    table.seed = j.at("seed").get<uint64_t>();
    table.labels = j.at("labels").get<std::map<std::string, double>>();
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("labels parse failure in " + path + ": " + e.what());
  }
}

}  // namespace stitchlab::cvae
