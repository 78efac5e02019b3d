#pragma once

// Central finite-difference checking for layer backward passes. The probe
// loss is a fixed random linear functional of the layer output, so its exact
// output-gradient is the coefficient tensor itself.

#include <algorithm>
#include <cmath>
#include <vector>

#include "faultnet/nn.hpp"
#include "faultnet/rng.hpp"
#include "faultnet/tensor.hpp"

namespace faultnet_test {

inline double grad_rel_err(double analytic, double numeric) {
  const double denom =
      std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
  return std::fabs(analytic - numeric) / denom;
}

// Returns the maximum relative error over every input entry and every
// parameter entry of the layer.
inline double grad_check_layer(faultnet::nn::Layer& layer,
                               faultnet::Tensor x, faultnet::Rng& rng,
                               double h = 1e-5) {
  using faultnet::Tensor;
  using faultnet::nn::Mode;

  Tensor out = layer.forward(x, Mode::kTrain);
  Tensor coeff(out.shape());
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    coeff[i] = rng.uniform(-1.0, 1.0);
  }

  layer.zero_grads();
  // Re-run forward so cached activations correspond to x (zero_grads leaves
  // them intact, but keep the sequence obvious).
  out = layer.forward(x, Mode::kTrain);
  Tensor grad_in = layer.backward(coeff);

  auto loss_at = [&](const Tensor& probe) {
    Tensor o = layer.forward(probe, Mode::kTrain);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += coeff[i] * o[i];
    return s;
  };

  double max_err = 0.0;

  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x;
    xp[i] += h;
    const double fp = loss_at(xp);
    xp[i] = x[i] - h;
    const double fm = loss_at(xp);
    const double numeric = (fp - fm) / (2.0 * h);
    max_err = std::max(max_err, grad_rel_err(grad_in[i], numeric));
  }

  const std::vector<Tensor*> params = layer.params();
  // The analytic parameter gradients were accumulated by backward above;
  // copy them before the FD loop mutates the layer.
  std::vector<Tensor> param_grads;
  for (Tensor* g : layer.grads()) param_grads.push_back(*g);

  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& tensor = *params[p];
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      tensor[i] = saved + h;
      const double fp = loss_at(x);
      tensor[i] = saved - h;
      const double fm = loss_at(x);
      tensor[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      max_err = std::max(max_err, grad_rel_err(param_grads[p][i], numeric));
    }
  }
  return max_err;
}

}  // namespace faultnet_test
