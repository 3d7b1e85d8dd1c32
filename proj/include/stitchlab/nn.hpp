#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stitchlab/rng.hpp"
#include "stitchlab/tensor.hpp"

namespace stitchlab::nn {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Uniform in +-1/sqrt(fan_in), the project-wide initialization.
Tensor init_uniform(Rng& rng, std::vector<int> shape, int fan_in,
                    std::string name);

struct Linear {
  Tensor weight;  // [in,out]
  Tensor bias;    // [1,out]

  static Linear create(Rng& rng, int in, int out, const std::string& name);
  Tensor forward(const Tensor& x) const;
  int in_dim() const { return weight.shape()[0]; }
  int out_dim() const { return weight.shape()[1]; }
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Fully connected stack with tanh between layers (none after the last).
// dims = {in, hidden..., out}; a 2-entry dims is a plain linear map.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(Rng& rng, const std::vector<int>& dims,
                    const std::string& name);
  Tensor forward(const Tensor& x) const;
  // Inference path without graph construction; in is [batch, in_dim]
  // row-major, returns [batch, out_dim].
  std::vector<double> forward_nograd(const std::vector<double>& in,
                                     int batch) const;
  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gamma, beta;
  static LayerNorm create(int dim, const std::string& name);
  Tensor forward(const Tensor& x) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Multi-head self-attention with a strict causal mask: output row t depends
// on input rows <= t only. Sequences longer than max_context are rejected.
struct CausalSelfAttention {
  Linear wq, wk, wv, wo;
  int n_heads = 1;
  int max_context = 0;

  static CausalSelfAttention create(Rng& rng, int dim, int n_heads,
                                    int max_context, const std::string& name);
  Tensor forward(const Tensor& x) const;  // [T,dim] -> [T,dim]
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  CausalSelfAttention attn;
  Linear fc1, fc2;

  static TransformerBlock create(Rng& rng, int dim, int n_heads,
                                 int max_context, const std::string& name);
  Tensor forward(const Tensor& x) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = false;  // true selects AdamW-style decay
};

// Adam/AdamW over a fixed parameter list. Moments match parameter shapes;
// the step counter is strictly increasing.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  void zero_grad();
  long long steps() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& moment1() const { return m1_; }
  const std::vector<std::vector<double>>& moment2() const { return m2_; }
  void load_state(long long step_count, std::vector<std::vector<double>> m1,
                  std::vector<std::vector<double>> m2);

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m1_, m2_;
  long long step_count_ = 0;
};

// Grid-search minimizer of the summed expectile loss over a value multiset.
// Test oracle: independent of the gradient path that the learners use.
double expectile_argmin_grid(const std::vector<double>& values, double m,
                             double resolution);

}  // namespace stitchlab::nn
