#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "stitchlab/errors.hpp"
#include "stitchlab/nn.hpp"
#include "stitchlab/rng.hpp"
#include "stitchlab/serialize.hpp"
#include "test_support.hpp"

using namespace stitchlab;
using nn::Tensor;

TEST_CASE("expectile loss matches the asymmetric-square formula") {
  auto loss_of = [](double pred, double target, double m) {
    Tensor p = Tensor::scalar(pred, true);
    Tensor t = Tensor::scalar(target);
    return nn::expectile_loss(p, t, m).item();
  };
  // delta = target - pred
  CHECK(loss_of(0.0, 2.0, 0.9) == doctest::Approx(3.6).epsilon(1e-15));
  CHECK(loss_of(0.0, -2.0, 0.9) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(loss_of(0.0, 3.0, 0.5) == doctest::Approx(4.5).epsilon(1e-15));
}

TEST_CASE("expectile loss at m=0.5 is exactly half the squared error") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const double pred = rng.uniform(-3.0, 3.0);
    const double target = rng.uniform(-3.0, 3.0);
    Tensor p = Tensor::scalar(pred, true);
    Tensor t = Tensor::scalar(target);
    const double expectile = nn::expectile_loss(p, t, 0.5).item();
    Tensor p2 = Tensor::scalar(pred, true);
    const double mse = nn::mse_loss(p2, Tensor::scalar(target)).item();
    CHECK(expectile == 0.5 * mse);  // bitwise identical arithmetic
  }
}

TEST_CASE("expectile loss is batched as a mean") {
  Tensor p = Tensor::from_data({2, 1}, {0.0, 0.0}, true);
  Tensor t = Tensor::from_data({2, 1}, {2.0, -2.0});
  CHECK(nn::expectile_loss(p, t, 0.9).item() ==
        doctest::Approx(0.5 * (3.6 + 0.4)));
}

TEST_CASE("expectile gradient matches finite differences") {
  Rng rng(31);
  for (double m : {0.5, 0.7, 0.9, 0.99}) {
    Tensor p = nn::init_uniform(rng, {6, 1}, 1, "p");
    Tensor t = nn::init_uniform(rng, {6, 1}, 1, "t");
    Tensor target = Tensor::from_data({6, 1}, t.data());
    std::vector<Tensor> params = {p};
    auto loss_fn = [&]() { return nn::expectile_loss(p, target, m); };
    CHECK(test::finite_diff_max_rel_err(params, loss_fn) < 1e-4);
  }
}

TEST_CASE("expectile argmin grid oracle") {
  CHECK(nn::expectile_argmin_grid({0.0, 1.0}, 0.9, 1e-4) ==
        doctest::Approx(0.9).epsilon(1e-3));
  CHECK(nn::expectile_argmin_grid({5.0}, 0.3, 1e-4) == doctest::Approx(5.0));
  CHECK(nn::expectile_argmin_grid({0.0, 1.0}, 0.999, 1e-4) ==
        doctest::Approx(1.0).epsilon(0.01));
  CHECK_THROWS_AS(nn::expectile_argmin_grid({}, 0.5, 0.01),
                  std::invalid_argument);
}

TEST_CASE("expectile argmin is monotone in m and stays within the range") {
  Rng rng(71);
  const double grid[] = {0.5, 0.7, 0.9, 0.99};
  for (int rep = 0; rep < 50; ++rep) {
    Rng r = rng.split(rep);
    const int n = 2 + r.uniform_int(8);
    std::vector<double> values(n);
    double lo = 1e300, hi = -1e300;
    for (double& v : values) {
      v = r.uniform(-5.0, 5.0);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double prev = -1e300;
    for (double m : grid) {
      const double q = nn::expectile_argmin_grid(values, m, 1e-3);
      CHECK(q >= prev - 1e-9);
      CHECK(q >= lo - 1e-9);
      CHECK(q <= hi + 1e-9);
      prev = q;
    }
  }
}

TEST_CASE("gaussian KL closed form") {
  Tensor mu0 = Tensor::from_data({1, 3}, {0.0, 0.0, 0.0}, true);
  Tensor lv0 = Tensor::from_data({1, 3}, {0.0, 0.0, 0.0}, true);
  CHECK(nn::gaussian_kl_to_standard(mu0, lv0).item() == 0.0);

  Tensor mu1 = Tensor::from_data({1, 1}, {1.0}, true);
  Tensor lv1 = Tensor::from_data({1, 1}, {0.0}, true);
  CHECK(nn::gaussian_kl_to_standard(mu1, lv1).item() ==
        doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(
      nn::gaussian_kl_to_standard(Tensor::from_data({1, 2}, {0.0, 0.0}),
                                  Tensor::from_data({1, 3}, {0.0, 0.0, 0.0})),
      std::invalid_argument);
}

TEST_CASE("gaussian KL matches a Monte-Carlo estimate within 1%") {
  Rng rng(2024);
  std::vector<double> mu(8), lv(8);
  for (double& v : mu) v = rng.uniform(-1.0, 1.0);
  for (double& v : lv) v = rng.uniform(-1.0, 0.5);
  const double closed =
      nn::gaussian_kl_to_standard(Tensor::from_data({1, 8}, mu),
                                  Tensor::from_data({1, 8}, lv))
          .item();
  // KL = E_q[log q(z) - log p(z)] with z ~ q.
  const int n = 1000000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 8; ++j) {
      const double sigma = std::exp(0.5 * lv[j]);
      const double z = mu[j] + sigma * rng.normal();
      const double logq =
          -0.5 * (std::log(2.0 * M_PI) + lv[j] + (z - mu[j]) * (z - mu[j]) /
                                                     (sigma * sigma));
      const double logp = -0.5 * (std::log(2.0 * M_PI) + z * z);
      acc += logq - logp;
    }
  }
  const double mc = acc / n;
  CHECK(std::fabs(mc - closed) / closed < 0.01);
}

TEST_CASE("gaussian KL gradient check") {
  Rng rng(55);
  Tensor mu = nn::init_uniform(rng, {4, 3}, 3, "mu");
  Tensor lv = nn::init_uniform(rng, {4, 3}, 3, "lv");
  std::vector<Tensor> params = {mu, lv};
  auto loss_fn = [&]() { return nn::gaussian_kl_to_standard(mu, lv); };
  CHECK(test::finite_diff_max_rel_err(params, loss_fn) < 1e-4);
}

TEST_CASE("layer norm normalizes rows and passes gradient checks") {
  Rng rng(66);
  Tensor x = nn::init_uniform(rng, {3, 8}, 2, "x");
  nn::LayerNorm ln = nn::LayerNorm::create(8, "ln");
  Tensor y = ln.forward(x);
  for (int r = 0; r < 3; ++r) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 8; ++c) mean += y.at(r, c);
    mean /= 8.0;
    for (int c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(var / 8.0 == doctest::Approx(1.0).epsilon(1e-3));
  }
  std::vector<Tensor> params = {x, ln.gamma, ln.beta};
  auto loss_fn = [&]() {
    Tensor out = ln.forward(x);
    return nn::mean_all(nn::mul(out, out));
  };
  CHECK(test::finite_diff_max_rel_err(params, loss_fn) < 1e-4);
}

TEST_CASE("causal attention: output t ignores perturbations at t+1") {
  Rng rng(81);
  nn::CausalSelfAttention attn =
      nn::CausalSelfAttention::create(rng, 16, 4, 32, "attn");
  std::vector<double> base(5 * 16);
  for (double& v : base) v = rng.uniform(-1.0, 1.0);
  Tensor x1 = Tensor::from_data({5, 16}, base);
  Tensor y1 = attn.forward(x1);
  auto perturbed = base;
  for (int c = 0; c < 16; ++c) perturbed[4 * 16 + c] += 7.5;  // last token
  Tensor y2 = attn.forward(Tensor::from_data({5, 16}, perturbed));
  for (int t = 0; t < 4; ++t) {
    for (int c = 0; c < 16; ++c) {
      CHECK(y1.at(t, c) == y2.at(t, c));  // bitwise
    }
  }
  bool last_changed = false;
  for (int c = 0; c < 16; ++c) {
    if (y1.at(4, c) != y2.at(4, c)) last_changed = true;
  }
  CHECK(last_changed);
}

TEST_CASE("single-token attention reduces to the value path") {
  Rng rng(82);
  nn::CausalSelfAttention attn =
      nn::CausalSelfAttention::create(rng, 8, 2, 16, "attn");
  std::vector<double> in(8);
  for (double& v : in) v = rng.uniform(-1.0, 1.0);
  Tensor x = Tensor::from_data({1, 8}, in);
  Tensor y = attn.forward(x);
  // With one token the softmax weight is 1, so the output is wo(wv(x)).
  Tensor v = attn.wv.forward(Tensor::from_data({1, 8}, in));
  Tensor expect = attn.wo.forward(v);
  for (int c = 0; c < 8; ++c) {
    CHECK(y.at(0, c) == doctest::Approx(expect.at(0, c)).epsilon(1e-12));
  }
}

TEST_CASE("attention rejects overlong sequences") {
  Rng rng(83);
  nn::CausalSelfAttention attn =
      nn::CausalSelfAttention::create(rng, 8, 2, 4, "attn");
  Tensor x = Tensor::zeros({5, 8});
  CHECK_THROWS_AS(attn.forward(x), std::invalid_argument);
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(84);
  nn::CausalSelfAttention attn =
      nn::CausalSelfAttention::create(rng, 8, 2, 16, "attn");
  std::vector<double> in(3 * 8);
  for (double& v : in) v = rng.uniform(-1.0, 1.0);
  nn::NamedParams named;
  attn.collect(named, "attn");
  std::vector<Tensor> params;
  for (auto& [name, t] : named) params.push_back(t);
  auto loss_fn = [&]() {
    Tensor y = attn.forward(Tensor::from_data({3, 8}, in));
    return nn::mean_all(nn::mul(y, y));
  };
  CHECK(test::finite_diff_max_rel_err(params, loss_fn) < 1e-4);
}

TEST_CASE("transformer block gradient check") {
  Rng rng(85);
  nn::TransformerBlock block =
      nn::TransformerBlock::create(rng, 8, 2, 16, "b");
  std::vector<double> in(4 * 8);
  for (double& v : in) v = rng.uniform(-0.5, 0.5);
  nn::NamedParams named;
  block.collect(named, "b");
  std::vector<Tensor> params;
  for (auto& [name, t] : named) params.push_back(t);
  auto loss_fn = [&]() {
    Tensor y = block.forward(Tensor::from_data({4, 8}, in));
    return nn::mean_all(nn::mul(y, y));
  };
  CHECK(test::finite_diff_max_rel_err(params, loss_fn) < 2e-4);
}

TEST_CASE("adam step matches the reference formulas") {
  Tensor p = Tensor::from_data({1, 2}, {1.0, -2.0}, true);
  nn::AdamConfig cfg;
  cfg.lr = 0.1;
  nn::Adam opt({p}, cfg);
  Tensor loss = nn::mean_all(nn::mul(p, p));  // d/dp = 2p/2 = p
  opt.zero_grad();
  nn::backward(loss);
  opt.step();
  // g = p/1 (mean over 2 elements doubles back out): g = 2*p/2 = p.
  const double g1 = 1.0, g2 = -2.0;
  auto expect = [&](double p0, double g) {
    const double m = 0.1 * g;
    const double v = 0.001 * g * g;
    const double mhat = m / (1.0 - 0.9);
    const double vhat = v / (1.0 - 0.999);
    return p0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  };
  CHECK(p.data()[0] == doctest::Approx(expect(1.0, g1)).epsilon(1e-12));
  CHECK(p.data()[1] == doctest::Approx(expect(-2.0, g2)).epsilon(1e-12));
  CHECK(opt.steps() == 1);
}

TEST_CASE("adamw decoupled decay shrinks parameters before the update") {
  Tensor p = Tensor::from_data({1, 1}, {1.0}, true);
  nn::AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  cfg.decoupled = true;
  nn::Adam opt({p}, cfg);
  p.grad().assign(1, 0.0);
  opt.step();
  // Zero gradient: only the decay applies.
  CHECK(p.data()[0] == doctest::Approx(1.0 - 0.1 * 0.5 * 1.0).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip is lossless") {
  Rng rng(77);
  nn::Mlp mlp = nn::Mlp::create(rng, {3, 16, 2}, "net");
  nn::NamedParams params;
  mlp.collect(params, "net");
  nn::AdamConfig cfg;
  std::vector<Tensor> raw;
  for (auto& [n, t] : params) raw.push_back(t);
  nn::Adam opt(raw, cfg);
  // Take one noisy step so moments are nontrivial.
  std::vector<double> in(2 * 3, 0.3);
  Tensor loss = nn::mean_all(
      nn::mul(mlp.forward(Tensor::from_data({2, 3}, in)),
              mlp.forward(Tensor::from_data({2, 3}, in))));
  opt.zero_grad();
  nn::backward(loss);
  opt.step();

  const std::string path = "test_ckpt_roundtrip.json";
  serialize::save_checkpoint(path, "stitchlab.test.v1", {{"note", 1}}, params,
                             &opt);
  nn::Mlp fresh = nn::Mlp::create(rng, {3, 16, 2}, "net");
  nn::NamedParams fresh_params;
  fresh.collect(fresh_params, "net");
  const auto loaded = serialize::load_checkpoint(path, "stitchlab.test.v1");
  serialize::params_from_json(loaded.params, fresh_params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(fresh_params[i].second.size() == params[i].second.size());
    for (std::size_t j = 0; j < params[i].second.size(); ++j) {
      CHECK(fresh_params[i].second.data()[j] == params[i].second.data()[j]);
    }
  }
  std::vector<Tensor> fresh_raw;
  for (auto& [n, t] : fresh_params) fresh_raw.push_back(t);
  nn::Adam fresh_opt(fresh_raw, cfg);
  serialize::adam_from_json(loaded.optim, fresh_opt);
  CHECK(fresh_opt.steps() == opt.steps());
  for (std::size_t i = 0; i < opt.moment1().size(); ++i) {
    for (std::size_t j = 0; j < opt.moment1()[i].size(); ++j) {
      CHECK(fresh_opt.moment1()[i][j] == opt.moment1()[i][j]);
      CHECK(fresh_opt.moment2()[i][j] == opt.moment2()[i][j]);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading validates format and shapes") {
  CHECK_THROWS_AS(serialize::load_checkpoint("does_not_exist.json", "x"),
                  IoError);
}
