#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stitchlab/errors.hpp"
#include "stitchlab/nn.hpp"
#include "stitchlab/rng.hpp"
#include "stitchlab/tensor.hpp"
#include "test_support.hpp"

using namespace stitchlab;
using nn::Tensor;

TEST_CASE("square function has derivative 2x") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = nn::mul(x, x);
  nn::backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("constant loss leaves zero gradient") {
  Tensor x = Tensor::scalar(4.0, true);
  Tensor c = Tensor::scalar(2.5, false);
  // x participates with weight zero: f = c + 0*x
  Tensor y = nn::add(c, nn::scale(x, 0.0));
  nn::backward(y);
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x = Tensor::from_data({2, 1}, {1.0, 2.0}, true);
  Tensor y = nn::mul(x, x);
  CHECK_THROWS_AS(nn::backward(y), std::invalid_argument);
}

TEST_CASE("graph is consumable once") {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y = nn::mul(x, x);
  nn::backward(y);
  CHECK_THROWS_AS(nn::backward(y), std::logic_error);
}

TEST_CASE("non-finite gradients raise a numerical failure naming the node") {
  Tensor x = Tensor::scalar(-1.0, true);
  x.set_name("offender");
  // log through exp^-1: exp(huge) overflows to inf in the value path.
  Tensor y = nn::exp_op(nn::scale(x, -1000.0));
  Tensor loss = nn::mean_all(y);
  try {
    nn::backward(loss);
    CHECK(false);
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("backward") != std::string::npos);
  }
}

TEST_CASE("gradient accumulates across separate backward passes") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y1 = nn::mul(x, x);
  nn::backward(y1);
  Tensor y2 = nn::mul(x, x);
  nn::backward(y2);
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("three-layer MLP gradients match central finite differences") {
  Rng rng(1234);
  // >= 100 random draws across repeats of small MLP graphs.
  for (int rep = 0; rep < 100; ++rep) {
    Rng r = rng.split(rep);
    nn::Mlp mlp = nn::Mlp::create(r, {4, 8, 8, 2}, "mlp");
    std::vector<double> in(3 * 4);
    for (double& v : in) v = r.uniform(-1.0, 1.0);
    std::vector<double> target(3 * 2);
    for (double& v : target) v = r.uniform(-1.0, 1.0);

    std::vector<Tensor> params;
    nn::NamedParams named;
    mlp.collect(named, "mlp");
    for (auto& [name, t] : named) params.push_back(t);

    auto loss_fn = [&]() {
      Tensor x = Tensor::from_data({3, 4}, in);
      Tensor t = Tensor::from_data({3, 2}, target);
      return nn::mse_loss(mlp.forward(x), t);
    };
    const double err = test::finite_diff_max_rel_err(params, loss_fn);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("elementwise and structural ops pass gradient checks") {
  Rng rng(99);
  for (int rep = 0; rep < 20; ++rep) {
    Rng r = rng.split(rep);
    Tensor a = nn::init_uniform(r, {3, 5}, 5, "a");
    Tensor b = nn::init_uniform(r, {3, 5}, 5, "b");
    std::vector<Tensor> params = {a, b};
    auto loss_fn = [&]() {
      Tensor h = nn::mul(nn::add(a, b), nn::sub(a, nn::scale(b, 0.7)));
      h = nn::tanh_act(h);
      h = nn::exp_op(nn::scale(h, 0.5));
      Tensor left = nn::slice_cols(h, 0, 2);
      Tensor right = nn::slice_cols(h, 2, 3);
      Tensor gathered = nn::gather_rows(h, {2, 0, 1, 2});
      return nn::add(nn::mean_all(nn::concat_cols({left, right})),
                     nn::add(nn::sum_all(gathered),
                             nn::mean_all(nn::slice_rows(h, 1, 2))));
    };
    CHECK(test::finite_diff_max_rel_err(params, loss_fn) < 1e-4);
  }
}

TEST_CASE("matmul and bias gradients match finite differences") {
  Rng rng(321);
  for (int rep = 0; rep < 20; ++rep) {
    Rng r = rng.split(rep);
    Tensor a = nn::init_uniform(r, {4, 6}, 6, "a");
    Tensor w = nn::init_uniform(r, {6, 3}, 6, "w");
    Tensor bias = nn::init_uniform(r, {1, 3}, 6, "bias");
    Tensor wt = nn::init_uniform(r, {5, 3}, 3, "wt");
    std::vector<Tensor> params = {a, w, bias, wt};
    auto loss_fn = [&]() {
      Tensor h = nn::add_bias(nn::matmul(a, w), bias);
      Tensor scores = nn::matmul_transpose_b(h, wt);  // [4,5]
      return nn::mean_all(nn::mul(scores, scores));
    };
    CHECK(test::finite_diff_max_rel_err(params, loss_fn) < 1e-4);
  }
}

TEST_CASE("interleave_rows routes gradients to the right parents") {
  Rng rng(777);
  Tensor a = nn::init_uniform(rng, {3, 4}, 4, "a");
  Tensor b = nn::init_uniform(rng, {3, 4}, 4, "b");
  std::vector<Tensor> params = {a, b};
  auto loss_fn = [&]() {
    // keep_rows drops the final row (b's last row gets no gradient).
    Tensor t = nn::interleave_rows({a, b}, 5);
    return nn::mean_all(nn::mul(t, t));
  };
  CHECK(test::finite_diff_max_rel_err(params, loss_fn) < 1e-4);
  // Explicitly: the dropped row contributes nothing.
  Tensor t = nn::interleave_rows({a, b}, 5);
  Tensor loss = nn::mean_all(nn::mul(t, t));
  nn::zero_grad(params);
  nn::backward(loss);
  for (int c = 0; c < 4; ++c) {
    CHECK(b.grad()[2 * 4 + c] == 0.0);
  }
}
