#pragma once

// Central-difference validation of every backward pass. Runs in double
// precision; training and inference stay in single precision.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wcc/cmrf.hpp"
#include "wcc/ops.hpp"
#include "wcc/tensor.hpp"
#include "wcc/wavelet.hpp"

namespace wcc {

// Max over all coordinates of |analytic - numeric| / max(1, |analytic|,
// |numeric|) for a scalar-valued map, differentiated w.r.t. every tensor in
// `wrt`. Returns +inf when the map produces a non-finite value.
template <typename Fn>
double gradcheck(Fn&& fn, std::span<Tensor<double>> wrt, double eps = 1e-5) {
  for (auto& t : wrt) t.set_requires_grad(true);
  Tensor<double> y = fn();
  check_shape(y.numel() == 1, "gradcheck: map must be scalar-valued");
  if (!y.all_finite()) return std::numeric_limits<double>::infinity();
  for (auto& t : wrt) t.clear_grad();
  backward(y);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(wrt.size());
  for (auto& t : wrt) {
    if (t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.numel(), 0.0);
    t.clear_grad();
  }

  double max_err = 0.0;
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto d = wrt[ti].data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double saved = d[i];
      d[i] = saved + eps;
      const double fp = fn().item();
      d[i] = saved - eps;
      const double fm = fn().item();
      d[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        return std::numeric_limits<double>::infinity();
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[ti][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  return max_err;
}

struct GradCheckCase {
  std::string name;
  double max_err = 0.0;
  double tol = 1e-4;
  bool pass = false;
};

// The standard per-layer suite on random 1x2x6x6 inputs, exactly the cases
// the CLI `gradcheck` subcommand and the acceptance gate run.
inline std::vector<GradCheckCase> run_gradcheck_suite(const std::string& which, double eps = 1e-5,
                                                      double tol = 1e-4) {
  std::vector<GradCheckCase> cases;
  const Shape in{1, 2, 6, 6};
  const bool all = which == "all";

  auto record = [&](const std::string& name, double err) {
    cases.push_back({name, err, tol, err <= tol});
  };

  if (all || which == "adwt") {
    Rng rng(11);
    AdwtState<double> state;
    state.lambda1.value.data()[0] = 0.7;
    state.lambda2.value.data()[0] = 1.3;
    Tensor<double> x = Tensor<double>::randn(in, rng);
    Tensor<double> wrt[] = {x, state.lambda1.value, state.lambda2.value};
    record("adwt_forward", gradcheck(
                               [&]() {
                                 auto [it, a] = adwt_forward(x, state);
                                 return add(sum_all(it), mul_const(sum_all(a), 0.5));
                               },
                               wrt, eps));
  }
  if (all || which == "ce") {
    Rng rng(12);
    CeLayer<double> layer(3, 2, 2, rng);
    Tensor<double> x = Tensor<double>::randn(in, rng);
    std::vector<Tensor<double>> wrt{x};
    for (auto& u : layer.units) {
      wrt.push_back(u.conv.weight.value);
      wrt.push_back(u.bn.alpha.value);
      wrt.push_back(u.bn.beta.value);
    }
    record("ce_forward", gradcheck([&]() { return sum_all(ce_forward(x, layer, true)); }, wrt, eps));
  }
  if (all || which == "csa") {
    Rng rng(13);
    Tensor<double> f_t = Tensor<double>::randn(in, rng);
    // fractional offsets kept away from integer lattice points, where the
    // bilinear kernel has kinks and central differences straddle them
    Tensor<double> offsets = Tensor<double>::zeros({1, 2, 6, 6});
    for (auto& v : offsets.data()) {
      const double mag = rng.uniform(0.05, 0.45) + (rng.uniform(0, 1) < 0.5 ? 0.0 : 1.0);
      v = rng.uniform(0, 1) < 0.5 ? -mag : mag;
    }
    Tensor<double> u = Tensor<double>::randn({1, 1, 3, 3}, rng, 0.5);
    Tensor<double> wrt[] = {f_t, offsets, u};
    record("csa_align", gradcheck([&]() { return sum_all(csa_align(f_t, offsets, u)); }, wrt, eps));
  }
  if (all || which == "srf") {
    Rng rng(14);
    SrfLayer<double> layer(2, 3, rng);
    Tensor<double> i_r = Tensor<double>::randn(in, rng);
    Tensor<double> f_at = Tensor<double>::randn(in, rng);
    Tensor<double> wrt[] = {i_r, f_at, layer.compress.weight.value};
    record("srf_weights+srf_aggregate",
           gradcheck(
               [&]() { return sum_all(srf_aggregate(f_at, srf_weights(i_r, layer), layer.k_r)); },
               wrt, eps));
  }
  if (cases.empty())
    throw UsageError("gradcheck: unknown layer '" + which + "' (adwt|ce|csa|srf|all)");
  return cases;
}

}  // namespace wcc
