#include "stitchlab/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "stitchlab/errors.hpp"
#include "stitchlab/kernels.hpp"

namespace stitchlab::nn {

Tensor init_uniform(Rng& rng, std::vector<int> shape, int fan_in,
                    std::string name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data), true,
                           std::move(name));
}

Linear Linear::create(Rng& rng, int in, int out, const std::string& name) {
  Linear l;
  l.weight = init_uniform(rng, {in, out}, in, name + ".W");
  l.bias = init_uniform(rng, {1, out}, in, name + ".b");
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  return add_bias(matmul(x, weight), bias);
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".W", weight);
  out.emplace_back(prefix + ".b", bias);
}

Mlp Mlp::create(Rng& rng, const std::vector<int>& dims,
                const std::string& name) {
  if (dims.size() < 2) throw std::invalid_argument("mlp: needs >= 2 dims");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(Linear::create(
        rng, dims[i], dims[i + 1], name + ".l" + std::to_string(i)));
  }
  return m;
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = tanh_act(h);
  }
  return h;
}

std::vector<double> Mlp::forward_nograd(const std::vector<double>& in,
                                        int batch) const {
  std::vector<double> cur = in;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Linear& l = layers[li];
    const std::size_t din = l.in_dim(), dout = l.out_dim();
    std::vector<double> next(static_cast<std::size_t>(batch) * dout);
    kernels::matmul(cur.data(), l.weight.data().data(), next.data(), batch,
                    din, dout);
    for (int i = 0; i < batch; ++i) {
      kernels::axpy(1.0, l.bias.data().data(), next.data() + i * dout, dout);
    }
    if (li + 1 < layers.size()) {
      for (double& v : next) v = std::tanh(v);
    }
    cur = std::move(next);
  }
  return cur;
}

void Mlp::collect(NamedParams& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect(out, prefix + ".l" + std::to_string(i));
  }
}

LayerNorm LayerNorm::create(int dim, const std::string& name) {
  LayerNorm ln;
  ln.gamma = Tensor::full({1, dim}, 1.0, true);
  ln.gamma.set_name(name + ".gamma");
  ln.beta = Tensor::zeros({1, dim}, true, name + ".beta");
  return ln;
}

Tensor LayerNorm::forward(const Tensor& x) const {
  return layer_norm(x, gamma, beta);
}

void LayerNorm::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

CausalSelfAttention CausalSelfAttention::create(Rng& rng, int dim, int n_heads,
                                                int max_context,
                                                const std::string& name) {
  if (dim % n_heads != 0) {
    throw std::invalid_argument("attention: dim not divisible by heads");
  }
  CausalSelfAttention a;
  a.wq = Linear::create(rng, dim, dim, name + ".wq");
  a.wk = Linear::create(rng, dim, dim, name + ".wk");
  a.wv = Linear::create(rng, dim, dim, name + ".wv");
  a.wo = Linear::create(rng, dim, dim, name + ".wo");
  a.n_heads = n_heads;
  a.max_context = max_context;
  return a;
}

Tensor CausalSelfAttention::forward(const Tensor& x) const {
  const int t = x.rows();
  const int dim = x.cols();
  if (t > max_context) {
    throw std::invalid_argument("attention: sequence exceeds max context");
  }
  const int dh = dim / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = wq.forward(x);
  Tensor k = wk.forward(x);
  Tensor v = wv.forward(x);
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul_transpose_b(qh, kh), inv_sqrt);
    Tensor attn = causal_softmax(scores);
    heads.push_back(matmul(attn, vh));
  }
  Tensor merged = n_heads == 1 ? heads[0] : concat_cols(heads);
  return wo.forward(merged);
}

void CausalSelfAttention::collect(NamedParams& out,
                                  const std::string& prefix) const {
  wq.collect(out, prefix + ".wq");
  wk.collect(out, prefix + ".wk");
  wv.collect(out, prefix + ".wv");
  wo.collect(out, prefix + ".wo");
}

TransformerBlock TransformerBlock::create(Rng& rng, int dim, int n_heads,
                                          int max_context,
                                          const std::string& name) {
  TransformerBlock b;
  b.ln1 = LayerNorm::create(dim, name + ".ln1");
  b.ln2 = LayerNorm::create(dim, name + ".ln2");
  b.attn = CausalSelfAttention::create(rng, dim, n_heads, max_context,
                                       name + ".attn");
  b.fc1 = Linear::create(rng, dim, 4 * dim, name + ".fc1");
  b.fc2 = Linear::create(rng, 4 * dim, dim, name + ".fc2");
  return b;
}

Tensor TransformerBlock::forward(const Tensor& x) const {
  Tensor h = add(x, attn.forward(ln1.forward(x)));
  Tensor m = fc2.forward(tanh_act(fc1.forward(ln2.forward(h))));
  return add(h, m);
}

void TransformerBlock::collect(NamedParams& out,
                               const std::string& prefix) const {
  ln1.collect(out, prefix + ".ln1");
  ln2.collect(out, prefix + ".ln2");
  attn.collect(out, prefix + ".attn");
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw std::invalid_argument("adam: lr must be positive");
  if (cfg_.weight_decay < 0.0) {
    throw std::invalid_argument("adam: weight_decay must be nonnegative");
  }
  m1_.reserve(params_.size());
  m2_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m1_.emplace_back(p.size(), 0.0);
    m2_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  static const std::vector<double> kEmpty;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    NodePtr node = p.node();
    // A parameter outside the last graph simply has a zero gradient.
    node->ensure_grad();
    kernels::adam_update(node->value.data(), node->grad.data(),
                         m1_[i].data(), m2_[i].data(), node->value.size(),
                         cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps,
                         cfg_.weight_decay, cfg_.decoupled, bc1, bc2);
    if (!kernels::all_finite(node->value.data(), node->value.size())) {
      throw NumericalError("adam: parameter update produced non-finite values" +
                           (node->name.empty() ? std::string()
                                               : " (" + node->name + ")"));
    }
  }
}

void Adam::zero_grad() { nn::zero_grad(params_); }

void Adam::load_state(long long step_count,
                      std::vector<std::vector<double>> m1,
                      std::vector<std::vector<double>> m2) {
  if (m1.size() != params_.size() || m2.size() != params_.size()) {
    throw std::invalid_argument("adam: state size mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m1[i].size() != params_[i].size() ||
        m2[i].size() != params_[i].size()) {
      throw std::invalid_argument("adam: moment shape mismatch");
    }
  }
  step_count_ = step_count;
  m1_ = std::move(m1);
  m2_ = std::move(m2);
}

double expectile_argmin_grid(const std::vector<double>& values, double m,
                             double resolution) {
  if (values.empty()) {
    throw std::invalid_argument("expectile_argmin_grid: empty value set");
  }
  if (m <= 0.0 || m >= 1.0) {
    throw std::invalid_argument("expectile_argmin_grid: m outside (0,1)");
  }
  if (resolution <= 0.0) {
    throw std::invalid_argument("expectile_argmin_grid: bad resolution");
  }
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double best_q = lo;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double q = lo; q <= hi + resolution * 0.5; q += resolution) {
    double loss = 0.0;
    for (double v : values) {
      const double delta = v - q;
      const double w = delta < 0.0 ? 1.0 - m : m;
      loss += w * delta * delta;
    }
    if (loss < best_loss) {
      best_loss = loss;
      best_q = q;
    }
  }
  return best_q;
}

}  // namespace stitchlab::nn
