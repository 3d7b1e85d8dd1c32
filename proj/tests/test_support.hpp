#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "stitchlab/nn.hpp"
#include "stitchlab/tensor.hpp"

namespace stitchlab::test {

// Central-difference gradient check. loss_fn rebuilds the graph from the
// current parameter values; returns the worst relative error over all
// parameter entries.
inline double finite_diff_max_rel_err(const std::vector<nn::Tensor>& params,
                                      const std::function<nn::Tensor()>& loss_fn,
                                      double eps = 1e-5) {
  nn::Tensor loss = loss_fn();
  nn::zero_grad(params);
  nn::backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    nn::Tensor p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + eps;
      const double up = loss_fn().item();
      p.data()[i] = saved - eps;
      const double down = loss_fn().item();
      p.data()[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double g = analytic[pi][i];
      const double denom = std::max({std::fabs(fd), std::fabs(g), 1e-3});
      worst = std::max(worst, std::fabs(fd - g) / denom);
    }
  }
  return worst;
}

// Pearson chi-squared statistic against expected counts.
inline double chi_squared(const std::vector<double>& observed,
                          const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  return stat;
}

}  // namespace stitchlab::test
