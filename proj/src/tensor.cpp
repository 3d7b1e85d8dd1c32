#include "stitchlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "stitchlab/errors.hpp"
#include "stitchlab/kernels.hpp"

namespace stitchlab::nn {
namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: nonpositive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

NodePtr make_node(std::vector<int> shape, std::vector<double> value,
                  const char* op) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  return node;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.shape().size() > 2) {
    throw std::invalid_argument(std::string(op) + ": expects a matrix");
  }
}

// Wires a new interior node: output requires grad iff any parent does; the
// backward closure is only attached in that case.
Tensor make_op(const char* op, std::vector<int> shape,
               std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
  NodePtr node = make_node(std::move(shape), std::move(value), op);
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  node->requires_grad = needs;
  if (needs) {
    node->parents.reserve(parents.size());
    for (Tensor& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

}  // namespace

int Node::rows() const {
  if (shape.size() == 2) return shape[0];
  return 1;
}

int Node::cols() const {
  if (shape.size() == 2) return shape[1];
  if (shape.size() == 1) return shape[0];
  return 1;
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad, std::string name) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: data length does not match shape");
  }
  NodePtr node = make_node(std::move(shape), std::move(data), "leaf");
  node->requires_grad = requires_grad;
  node->name = std::move(name);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad,
                     std::string name) {
  std::vector<double> data(shape_numel(shape), 0.0);
  return from_data(std::move(shape), std::move(data), requires_grad,
                   std::move(name));
}

Tensor Tensor::full(std::vector<int> shape, double fill, bool requires_grad) {
  std::vector<double> data(shape_numel(shape), fill);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1, 1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item: tensor is not scalar");
  return node_->value[0];
}

double Tensor::at(int r, int c) const {
  return node_->value[static_cast<std::size_t>(r) * cols() + c];
}

std::vector<double>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  }
  Node* root = loss.node().get();
  if (root->consumed) {
    throw std::logic_error("backward: graph already consumed");
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS; topo holds children after all their parents'
  // dependents, so reverse iteration propagates correctly.
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : topo) node->ensure_grad();
  root->grad[0] = 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* node = *it;
    if (!kernels::all_finite(node->grad.data(), node->grad.size())) {
      throw NumericalError(std::string("backward: non-finite gradient at ") +
                           node->op +
                           (node->name.empty() ? "" : " (" + node->name + ")"));
    }
    if (node->backward_fn) {
      node->backward_fn(*node);
      node->consumed = true;
    }
  }
}

void zero_grad(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    NodePtr node = p.node();
    if (!node->grad.empty()) {
      std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  kernels::add(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op("add", a.shape(), std::move(out), {a, b}, [](Node& n) {
    for (int pi = 0; pi < 2; ++pi) {
      Node& p = *n.parents[pi];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      kernels::axpy(1.0, n.grad.data(), p.grad.data(), p.grad.size());
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  kernels::sub(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op("sub", a.shape(), std::move(out), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      kernels::axpy(1.0, n.grad.data(), pa.grad.data(), pa.grad.size());
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      kernels::axpy(-1.0, n.grad.data(), pb.grad.data(), pb.grad.size());
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  kernels::mul(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op("mul", a.shape(), std::move(out), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      kernels::mul_add(n.grad.data(), pb.value.data(), pa.grad.data(),
                       pa.grad.size());
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      kernels::mul_add(n.grad.data(), pa.value.data(), pb.grad.data(),
                       pb.grad.size());
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  kernels::scale(a.data().data(), c, out.data(), out.size());
  return make_op("scale", a.shape(), std::move(out), {a}, [c](Node& n) {
    Node& p = *n.parents[0];
    p.ensure_grad();
    kernels::axpy(c, n.grad.data(), p.grad.data(), p.grad.size());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (static_cast<std::size_t>(b.rows()) != k) {
    throw std::invalid_argument("matmul: inner dimensions disagree");
  }
  std::vector<double> out(m * n);
  kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op(
      "matmul", {static_cast<int>(m), static_cast<int>(n)}, std::move(out),
      {a, b}, [m, k, n](Node& node) {
        Node& pa = *node.parents[0];
        Node& pb = *node.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          // dA += dC * B^T
          kernels::matmul_nt(node.grad.data(), pb.value.data(), pa.grad.data(),
                             m, n, k, true);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // dB += A^T * dC
          kernels::matmul_tn(pa.value.data(), node.grad.data(), pb.grad.data(),
                             k, m, n, true);
        }
      });
}

Tensor matmul_transpose_b(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_transpose_b");
  require_matrix(b, "matmul_transpose_b");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (static_cast<std::size_t>(b.cols()) != k) {
    throw std::invalid_argument("matmul_transpose_b: inner dims disagree");
  }
  std::vector<double> out(m * n);
  kernels::matmul_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op(
      "matmul_nt", {static_cast<int>(m), static_cast<int>(n)}, std::move(out),
      {a, b}, [m, k, n](Node& node) {
        Node& pa = *node.parents[0];
        Node& pb = *node.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          // dA += dC * B   ([m,n] x [n,k])
          kernels::matmul(node.grad.data(), pb.value.data(), pa.grad.data(), m,
                          n, k, true);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // dB += dC^T * A ([n,m] x [m,k])
          kernels::matmul_tn(node.grad.data(), pa.value.data(), pb.grad.data(),
                             n, m, k, true);
        }
      });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (b.size() != n) {
    throw std::invalid_argument("add_bias: bias length mismatch");
  }
  std::vector<double> out(x.data());
  for (std::size_t i = 0; i < m; ++i) {
    kernels::axpy(1.0, b.data().data(), out.data() + i * n, n);
  }
  return make_op("add_bias", x.shape(), std::move(out), {x, b},
                 [m, n](Node& node) {
                   Node& px = *node.parents[0];
                   Node& pb = *node.parents[1];
                   if (px.requires_grad) {
                     px.ensure_grad();
                     kernels::axpy(1.0, node.grad.data(), px.grad.data(),
                                   px.grad.size());
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     for (std::size_t i = 0; i < m; ++i) {
                       kernels::axpy(1.0, node.grad.data() + i * n,
                                     pb.grad.data(), n);
                     }
                   }
                 });
}

Tensor tanh_act(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  return make_op("tanh", x.shape(), std::move(out), {x}, [](Node& node) {
    Node& p = *node.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < node.value.size(); ++i) {
      p.grad[i] += node.grad[i] * (1.0 - node.value[i] * node.value[i]);
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  }
  return make_op("relu", x.shape(), std::move(out), {x}, [](Node& node) {
    Node& p = *node.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < node.value.size(); ++i) {
      if (p.value[i] > 0.0) p.grad[i] += node.grad[i];
    }
  });
}

Tensor exp_op(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data()[i]);
  return make_op("exp", x.shape(), std::move(out), {x}, [](Node& node) {
    Node& p = *node.parents[0];
    p.ensure_grad();
    kernels::mul_add(node.grad.data(), node.value.data(), p.grad.data(),
                     p.grad.size());
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) {
    throw std::invalid_argument("layer_norm: parameter length mismatch");
  }
  std::vector<double> out(m * n);
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  const double* xd = x.data().data();
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xd + i * n;
    double mean = kernels::sum(row, n) / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * is;
      (*xhat)[i * n + j] = xh;
      out[i * n + j] = gd[j] * xh + bd[j];
    }
  }
  return make_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [m, n, xhat, inv_std](Node& node) {
        Node& px = *node.parents[0];
        Node& pg = *node.parents[1];
        Node& pb = *node.parents[2];
        const double* gd = pg.value.data();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        if (px.requires_grad) px.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = node.grad.data() + i * n;
          const double* xh = xhat->data() + i * n;
          if (pg.requires_grad) {
            for (std::size_t j = 0; j < n; ++j) {
              pg.grad[j] += grow[j] * xh[j];
            }
          }
          if (pb.requires_grad) {
            kernels::axpy(1.0, grow, pb.grad.data(), n);
          }
          if (px.requires_grad) {
            double mean_dy = 0.0, mean_dy_xh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dy = grow[j] * gd[j];
              mean_dy += dy;
              mean_dy_xh += dy * xh[j];
            }
            mean_dy /= static_cast<double>(n);
            mean_dy_xh /= static_cast<double>(n);
            const double is = (*inv_std)[i];
            double* gx = px.grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dy = grow[j] * gd[j];
              gx[j] += is * (dy - mean_dy - xh[j] * mean_dy_xh);
            }
          }
        }
      });
}

Tensor causal_softmax(const Tensor& scores) {
  require_matrix(scores, "causal_softmax");
  const std::size_t t = scores.rows();
  if (static_cast<std::size_t>(scores.cols()) != t) {
    throw std::invalid_argument("causal_softmax: expects a square matrix");
  }
  std::vector<double> out(t * t, 0.0);
  const double* sd = scores.data().data();
  for (std::size_t i = 0; i < t; ++i) {
    const double* row = sd + i * t;
    double mx = row[0];
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      const double e = std::exp(row[j] - mx);
      out[i * t + j] = e;
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (std::size_t j = 0; j <= i; ++j) out[i * t + j] *= inv;
  }
  return make_op("causal_softmax", scores.shape(), std::move(out), {scores},
                 [t](Node& node) {
                   Node& p = *node.parents[0];
                   p.ensure_grad();
                   for (std::size_t i = 0; i < t; ++i) {
                     const double* prow = node.value.data() + i * t;
                     const double* grow = node.grad.data() + i * t;
                     double inner = 0.0;
                     for (std::size_t j = 0; j <= i; ++j) {
                       inner += grow[j] * prow[j];
                     }
                     double* gx = p.grad.data() + i * t;
                     for (std::size_t j = 0; j <= i; ++j) {
                       gx[j] += prow[j] * (grow[j] - inner);
                     }
                   }
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    if (static_cast<std::size_t>(p.rows()) != m) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t pn = p.cols();
    offsets.push_back(off);
    for (std::size_t i = 0; i < m; ++i) {
      std::memcpy(out.data() + i * total + off, p.data().data() + i * pn,
                  pn * sizeof(double));
    }
    off += pn;
  }
  return make_op(
      "concat_cols", {static_cast<int>(m), static_cast<int>(total)},
      std::move(out), parts, [m, total, offsets](Node& node) {
        for (std::size_t pi = 0; pi < node.parents.size(); ++pi) {
          Node& p = *node.parents[pi];
          if (!p.requires_grad) continue;
          p.ensure_grad();
          const std::size_t pn = p.cols();
          const std::size_t off = offsets[pi];
          for (std::size_t i = 0; i < m; ++i) {
            kernels::axpy(1.0, node.grad.data() + i * total + off,
                          p.grad.data() + i * pn, pn);
          }
        }
      });
}

Tensor slice_cols(const Tensor& x, int begin, int count) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin < 0 || count <= 0 || begin + count > static_cast<int>(n)) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) {
    std::memcpy(out.data() + i * count, x.data().data() + i * n + begin,
                count * sizeof(double));
  }
  return make_op("slice_cols", {static_cast<int>(m), count}, std::move(out),
                 {x}, [m, n, begin, count](Node& node) {
                   Node& p = *node.parents[0];
                   p.ensure_grad();
                   for (std::size_t i = 0; i < m; ++i) {
                     kernels::axpy(1.0, node.grad.data() + i * count,
                                   p.grad.data() + i * n + begin, count);
                   }
                 });
}

Tensor slice_rows(const Tensor& x, int begin, int count) {
  require_matrix(x, "slice_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin < 0 || count <= 0 || begin + count > static_cast<int>(m)) {
    throw std::invalid_argument("slice_rows: range out of bounds");
  }
  std::vector<double> out(x.data().begin() + begin * n,
                          x.data().begin() + (begin + count) * n);
  return make_op("slice_rows", {count, static_cast<int>(n)}, std::move(out),
                 {x}, [n, begin, count](Node& node) {
                   Node& p = *node.parents[0];
                   p.ensure_grad();
                   kernels::axpy(1.0, node.grad.data(),
                                 p.grad.data() + begin * n,
                                 static_cast<std::size_t>(count) * n);
                 });
}

Tensor gather_rows(const Tensor& x, std::vector<int> indices) {
  require_matrix(x, "gather_rows");
  const std::size_t m = x.rows(), n = x.cols();
  for (int idx : indices) {
    if (idx < 0 || idx >= static_cast<int>(m)) {
      throw std::invalid_argument("gather_rows: index out of range");
    }
  }
  std::vector<double> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(out.data() + i * n, x.data().data() + indices[i] * n,
                n * sizeof(double));
  }
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  return make_op("gather_rows",
                 {static_cast<int>(idx->size()), static_cast<int>(n)},
                 std::move(out), {x}, [n, idx](Node& node) {
                   Node& p = *node.parents[0];
                   p.ensure_grad();
                   for (std::size_t i = 0; i < idx->size(); ++i) {
                     kernels::axpy(1.0, node.grad.data() + i * n,
                                   p.grad.data() + (*idx)[i] * n, n);
                   }
                 });
}

Tensor interleave_rows(const std::vector<Tensor>& mats, int keep_rows) {
  if (mats.empty()) throw std::invalid_argument("interleave_rows: empty");
  const std::size_t k = mats.size();
  const std::size_t t = mats[0].rows(), d = mats[0].cols();
  for (const Tensor& m : mats) {
    if (static_cast<std::size_t>(m.rows()) != t ||
        static_cast<std::size_t>(m.cols()) != d) {
      throw std::invalid_argument("interleave_rows: shape mismatch");
    }
  }
  if (keep_rows <= 0 || keep_rows > static_cast<int>(k * t)) {
    throw std::invalid_argument("interleave_rows: keep_rows out of range");
  }
  std::vector<double> out(static_cast<std::size_t>(keep_rows) * d);
  for (int r = 0; r < keep_rows; ++r) {
    const std::size_t src = static_cast<std::size_t>(r) / k;
    const std::size_t which = static_cast<std::size_t>(r) % k;
    std::memcpy(out.data() + static_cast<std::size_t>(r) * d,
                mats[which].data().data() + src * d, d * sizeof(double));
  }
  return make_op("interleave_rows", {keep_rows, static_cast<int>(d)},
                 std::move(out), mats, [k, d, keep_rows](Node& node) {
                   for (int r = 0; r < keep_rows; ++r) {
                     Node& p = *node.parents[r % k];
                     if (!p.requires_grad) continue;
                     p.ensure_grad();
                     kernels::axpy(
                         1.0, node.grad.data() + static_cast<std::size_t>(r) * d,
                         p.grad.data() + static_cast<std::size_t>(r / k) * d, d);
                   }
                 });
}

Tensor sum_all(const Tensor& x) {
  double s = kernels::sum(x.data().data(), x.size());
  return make_op("sum_all", {1, 1}, {s}, {x}, [](Node& node) {
    Node& p = *node.parents[0];
    p.ensure_grad();
    const double g = node.grad[0];
    for (double& v : p.grad) v += g;
  });
}

Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = kernels::sum(x.data().data(), x.size()) * inv;
  return make_op("mean_all", {1, 1}, {s}, {x}, [inv](Node& node) {
    Node& p = *node.parents[0];
    p.ensure_grad();
    const double g = node.grad[0] * inv;
    for (double& v : p.grad) v += g;
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  if (target.requires_grad()) {
    throw std::invalid_argument("mse_loss: target must be constant");
  }
  const std::size_t n = pred.size();
  const double inv = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  return make_op("mse_loss", {1, 1}, {acc * inv}, {pred, target},
                 [inv](Node& node) {
                   Node& p = *node.parents[0];
                   Node& t = *node.parents[1];
                   p.ensure_grad();
                   const double g = node.grad[0] * 2.0 * inv;
                   for (std::size_t i = 0; i < p.value.size(); ++i) {
                     p.grad[i] += g * (p.value[i] - t.value[i]);
                   }
                 });
}

Tensor expectile_loss(const Tensor& pred, const Tensor& target, double m) {
  require_same_shape(pred, target, "expectile_loss");
  if (m <= 0.0 || m >= 1.0) {
    throw std::invalid_argument("expectile_loss: m must lie in (0,1)");
  }
  if (target.requires_grad()) {
    throw std::invalid_argument("expectile_loss: target must be constant");
  }
  const std::size_t n = pred.size();
  const double inv = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = target.data()[i] - pred.data()[i];
    const double w = delta < 0.0 ? 1.0 - m : m;
    acc += w * delta * delta;
  }
  return make_op("expectile_loss", {1, 1}, {acc * inv}, {pred, target},
                 [m, inv](Node& node) {
                   Node& p = *node.parents[0];
                   Node& t = *node.parents[1];
                   p.ensure_grad();
                   const double g = node.grad[0] * inv;
                   for (std::size_t i = 0; i < p.value.size(); ++i) {
                     const double delta = t.value[i] - p.value[i];
                     const double w = delta < 0.0 ? 1.0 - m : m;
                     p.grad[i] += g * (-2.0) * w * delta;
                   }
                 });
}

Tensor gaussian_kl_to_standard(const Tensor& mu, const Tensor& log_var) {
  require_same_shape(mu, log_var, "gaussian_kl_to_standard");
  const std::size_t b = mu.rows(), z = mu.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < b * z; ++i) {
    const double m = mu.data()[i];
    const double lv = log_var.data()[i];
    acc += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
  }
  return make_op("gaussian_kl", {1, 1}, {acc * inv_b}, {mu, log_var},
                 [inv_b](Node& node) {
                   Node& pm = *node.parents[0];
                   Node& pl = *node.parents[1];
                   const double g = node.grad[0] * inv_b;
                   if (pm.requires_grad) {
                     pm.ensure_grad();
                     for (std::size_t i = 0; i < pm.value.size(); ++i) {
                       pm.grad[i] += g * pm.value[i];
                     }
                   }
                   if (pl.requires_grad) {
                     pl.ensure_grad();
                     for (std::size_t i = 0; i < pl.value.size(); ++i) {
                       pl.grad[i] += g * 0.5 * (std::exp(pl.value[i]) - 1.0);
                     }
                   }
                 });
}

Tensor gaussian_logpdf_fixed_sigma(const Tensor& mean, const Tensor& target,
                                   double sigma) {
  require_same_shape(mean, target, "gaussian_logpdf_fixed_sigma");
  if (sigma <= 0.0) {
    throw std::invalid_argument("gaussian_logpdf_fixed_sigma: sigma <= 0");
  }
  if (target.requires_grad()) {
    throw std::invalid_argument("gaussian_logpdf: target must be constant");
  }
  const std::size_t b = mean.rows(), n = mean.cols();
  const double inv_var = 1.0 / (sigma * sigma);
  const double log_norm =
      -0.5 * std::log(2.0 * 3.14159265358979323846 * sigma * sigma);
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    double acc = static_cast<double>(n) * log_norm;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = target.data()[i * n + j] - mean.data()[i * n + j];
      acc -= 0.5 * d * d * inv_var;
    }
    out[i] = acc;
  }
  return make_op("gaussian_logpdf", {static_cast<int>(b), 1}, std::move(out),
                 {mean, target}, [b, n, inv_var](Node& node) {
                   Node& pm = *node.parents[0];
                   Node& pt = *node.parents[1];
                   if (!pm.requires_grad) return;
                   pm.ensure_grad();
                   for (std::size_t i = 0; i < b; ++i) {
                     const double g = node.grad[i];
                     for (std::size_t j = 0; j < n; ++j) {
                       const double d = pt.value[i * n + j] -
                                        pm.value[i * n + j];
                       pm.grad[i * n + j] += g * d * inv_var;
                     }
                   }
                 });
}

}  // namespace stitchlab::nn
