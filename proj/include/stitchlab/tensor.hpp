#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace stitchlab::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Interior nodes hold the closure that
// scatters their gradient into the parents; a node is consumed by the first
// backward pass that visits it.
struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::string name;  // parameters carry names for diagnostics/checkpoints
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return value.size(); }
  int rows() const;
  int cols() const;
  void ensure_grad();
};

// Value-semantic handle to a node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false, std::string name = "");
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false,
                      std::string name = "");
  static Tensor full(std::vector<int> shape, double fill,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rows() const { return node_->rows(); }
  int cols() const { return node_->cols(); }
  std::size_t size() const { return node_->size(); }

  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  double item() const;
  double at(int r, int c) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  const std::string& name() const { return node_->name; }
  void set_name(std::string name) { node_->name = std::move(name); }

  NodePtr node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

// Runs reverse-mode accumulation from a scalar loss. Every reachable tensor
// with requires_grad receives (accumulates) its gradient. The interior of the
// graph is consumable once; a second call on the same loss throws.
// A non-finite gradient raises NumericalError naming the offending node.
void backward(const Tensor& loss);

void zero_grad(const std::vector<Tensor>& params);

// ---- graph ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// [m,k] x [k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,k] x [n,k]^T
Tensor matmul_transpose_b(const Tensor& a, const Tensor& b);
// X[m,n] + row vector b[1,n]
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor tanh_act(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp_op(const Tensor& x);
// Normalizes each row of x; gamma/beta are [1,n].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// Row-wise softmax over a [T,T] score matrix restricted to columns <= row;
// masked entries are exactly zero in the output.
Tensor causal_softmax(const Tensor& scores);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, int begin, int count);
Tensor slice_rows(const Tensor& x, int begin, int count);
Tensor gather_rows(const Tensor& x, std::vector<int> indices);
// Interleaves k same-shape [t,d] matrices row-wise into [k*t,d]
// (m0.row0, m1.row0, ..., mk-1.row0, m0.row1, ...), keeping only the first
// `keep_rows` rows; pass k*t to keep all.
Tensor interleave_rows(const std::vector<Tensor>& mats, int keep_rows);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// ---- losses (targets are constants) ----
Tensor mse_loss(const Tensor& pred, const Tensor& target);
// Mean of |m - 1(delta < 0)| * delta^2 with delta = target - pred.
Tensor expectile_loss(const Tensor& pred, const Tensor& target, double m);
// Mean over rows of KL(N(mu_i, diag exp(logvar_i)) || N(0, I)).
Tensor gaussian_kl_to_standard(const Tensor& mu, const Tensor& log_var);
// Per-row log N(target_row; mean_row, sigma^2 I) as a [B,1] tensor.
Tensor gaussian_logpdf_fixed_sigma(const Tensor& mean, const Tensor& target,
                                   double sigma);

}  // namespace stitchlab::nn
