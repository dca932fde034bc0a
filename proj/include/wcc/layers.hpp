#pragma once

// Thin stateful wrappers pairing parameters with the ops that consume them.

#include <string>
#include <vector>

#include "wcc/ops.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

inline constexpr double kLeakySlope = 0.1;
inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

template <typename T>
struct Conv2dLayer {
  Parameter<T> weight;
  long stride = 1;
  long pad = 0;

  Conv2dLayer() = default;

  // He-normal initialization over fan-in; zero_init is used for offset
  // prediction so training starts from the identity alignment.
  Conv2dLayer(long c_out, long c_in, long k, long stride_, long pad_, Rng& rng,
              bool zero_init = false)
      : stride(stride_), pad(pad_) {
    const T std = static_cast<T>(std::sqrt(2.0 / (double(c_in) * k * k)));
    Tensor<T> w = zero_init ? Tensor<T>::zeros({c_out, c_in, k, k})
                            : Tensor<T>::randn({c_out, c_in, k, k}, rng, std);
    weight = Parameter<T>(std::move(w), true);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight.value, stride, pad); }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".weight", weight, ParamKind::kConvKernel);
  }
};

template <typename T>
struct BatchNorm2dLayer {
  Parameter<T> alpha;
  Parameter<T> beta;
  Parameter<T> run_mean;  // non-trainable buffers, checkpointed
  Parameter<T> run_var;

  BatchNorm2dLayer() = default;

  explicit BatchNorm2dLayer(long channels) {
    alpha = Parameter<T>(Tensor<T>::full({1, channels, 1, 1}, T(1)), true);
    beta = Parameter<T>(Tensor<T>::zeros({1, channels, 1, 1}), true);
    run_mean = Parameter<T>(Tensor<T>::zeros({1, channels, 1, 1}), false);
    run_var = Parameter<T>(Tensor<T>::full({1, channels, 1, 1}, T(1)), false);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return batchnorm2d(x, alpha.value, beta.value, static_cast<T>(kBnEps), training,
                       &run_mean.value, &run_var.value, static_cast<T>(kBnMomentum));
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".alpha", alpha, ParamKind::kAffine);
    reg.add(prefix + ".beta", beta, ParamKind::kAffine);
    reg.add(prefix + ".run_mean", run_mean, ParamKind::kBnStat);
    reg.add(prefix + ".run_var", run_var, ParamKind::kBnStat);
  }
};

template <typename T>
struct LinearLayer {
  Parameter<T> weight;  // (out, in, 1, 1), no bias

  LinearLayer() = default;

  LinearLayer(long out, long in, Rng& rng) {
    const T std = static_cast<T>(std::sqrt(2.0 / double(in)));
    weight = Parameter<T>(Tensor<T>::randn({out, in, 1, 1}, rng, std), true);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight.value); }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".weight", weight, ParamKind::kLinearWeight);
  }
};

}  // namespace wcc
