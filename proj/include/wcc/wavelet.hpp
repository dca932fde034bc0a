#pragma once

// Haar filter bank: separable 2D analysis/synthesis plus the learnable-score
// downsampling layer used by the infrared branch. Subband naming puts the
// vertical filter letter first (LL, LH, HL, HH with L = low-pass g,
// H = high-pass h); filters are applied as correlation, no kernel flip.

#include <cmath>
#include <utility>
#include <vector>

#include "wcc/macs.hpp"
#include "wcc/ops.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

template <typename T>
struct WaveletKernel {
  std::vector<T> g;  // low-pass
  std::vector<T> h;  // high-pass

  long length() const { return static_cast<long>(g.size()); }

  static WaveletKernel haar() {
    const T r = static_cast<T>(1.0 / std::sqrt(2.0));
    return WaveletKernel{{r, r}, {r, -r}};
  }

  // Sum g^2 = sum h^2 = 1, sum g*h = 0.
  void validate_orthonormal(double tol = 1e-6) const {
    check_shape(g.size() == h.size() && !g.empty(), "wavelet kernel: g/h length mismatch");
    double gg = 0, hh = 0, gh = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      gg += double(g[i]) * g[i];
      hh += double(h[i]) * h[i];
      gh += double(g[i]) * h[i];
    }
    if (std::abs(gg - 1) > tol || std::abs(hh - 1) > tol || std::abs(gh) > tol)
      throw UsageError("wavelet kernel is not orthonormal");
  }
};

template <typename T>
struct SubbandSet {
  Tensor<T> ll, lh, hl, hh;
};

namespace detail {

// Stride-2 correlation along one axis with both filters. Odd axes are
// extended by one trailing sample (half-sample symmetric = edge repeat).
// Only length-2 kernels are supported; longer families are future work.
template <typename T>
void dwt_pass_1d(const Tensor<T>& x, const WaveletKernel<T>& k, Axis axis, Tensor<T>& low,
                 Tensor<T>& high) {
  check_shape(k.length() == 2, "dwt: only length-2 wavelet kernels are supported");
  const Shape xs = x.shape();
  const long len = axis == Axis::kW ? xs.w : xs.h;
  const long out_len = (len + 1) / 2;
  Shape os = xs;
  (axis == Axis::kW ? os.w : os.h) = out_len;
  low = Tensor<T>::zeros(os);
  high = Tensor<T>::zeros(os);
  const long other = axis == Axis::kW ? xs.h : xs.w;
  for (long n = 0; n < xs.n; ++n)
    for (long c = 0; c < xs.c; ++c)
      for (long o = 0; o < other; ++o)
        for (long i = 0; i < out_len; ++i) {
          const long s0 = 2 * i;
          const long s1 = std::min(2 * i + 1, len - 1);
          T v0, v1;
          if (axis == Axis::kW) {
            v0 = x.at(n, c, o, s0);
            v1 = x.at(n, c, o, s1);
          } else {
            v0 = x.at(n, c, s0, o);
            v1 = x.at(n, c, s1, o);
          }
          const T lo = k.g[0] * v0 + k.g[1] * v1;
          const T hi = k.h[0] * v0 + k.h[1] * v1;
          if (axis == Axis::kW) {
            low.at(n, c, o, i) = lo;
            high.at(n, c, o, i) = hi;
          } else {
            low.at(n, c, i, o) = lo;
            high.at(n, c, i, o) = hi;
          }
        }
}

}  // namespace detail

// Separable one-level analysis: horizontal pass into (a, d), vertical pass
// into the four subbands, all at ceil(H/2) x ceil(W/2).
template <typename T>
SubbandSet<T> dwt2d(const Tensor<T>& x, const WaveletKernel<T>& kernel) {
  check_shape(x.defined() && x.numel() > 0, "dwt2d: empty tensor");
  kernel.validate_orthonormal();
  Tensor<T> a, d;
  detail::dwt_pass_1d(x, kernel, Axis::kW, a, d);
  SubbandSet<T> s;
  detail::dwt_pass_1d(a, kernel, Axis::kH, s.ll, s.hl);
  detail::dwt_pass_1d(d, kernel, Axis::kH, s.lh, s.hh);
  return s;
}

// Adjoint of the even-size analysis; exact inverse for orthonormal length-2
// kernels on even inputs.
template <typename T>
Tensor<T> idwt2d(const SubbandSet<T>& s, const WaveletKernel<T>& kernel) {
  check_shape(kernel.length() == 2, "idwt2d: only length-2 wavelet kernels are supported");
  const Shape bs = s.ll.shape();
  check_shape(s.lh.shape() == bs && s.hl.shape() == bs && s.hh.shape() == bs,
              "idwt2d: subband shape mismatch");
  Tensor<T> out = Tensor<T>::zeros({bs.n, bs.c, 2 * bs.h, 2 * bs.w});
  const auto& g = kernel.g;
  const auto& h = kernel.h;
  for (long n = 0; n < bs.n; ++n)
    for (long c = 0; c < bs.c; ++c)
      for (long m = 0; m < bs.h; ++m)
        for (long w = 0; w < bs.w; ++w) {
          const T ll = s.ll.at(n, c, m, w), lh = s.lh.at(n, c, m, w);
          const T hl = s.hl.at(n, c, m, w), hh = s.hh.at(n, c, m, w);
          for (long p = 0; p < 2; ++p)
            for (long q = 0; q < 2; ++q)
              out.at(n, c, 2 * m + p, 2 * w + q) =
                  ll * g[p] * g[q] + lh * g[p] * h[q] + hl * h[p] * g[q] + hh * h[p] * h[q];
        }
  return out;
}

// Differentiable fused Haar downsampling: emits [HH | LL] stacked on the
// channel axis at half resolution. Odd axes repeat the trailing edge sample.
// Charges its real elementary flop count, 6 per output location per channel.
template <typename T>
Tensor<T> haar_down(const Tensor<T>& x) {
  check_shape(x.defined() && x.numel() > 0, "haar_down: empty tensor");
  const Shape xs = x.shape();
  const long oh = (xs.h + 1) / 2, ow = (xs.w + 1) / 2;
  Tensor<T> out = Tensor<T>::zeros({xs.n, 2 * xs.c, oh, ow});
  const T half = T(0.5);
  for (long n = 0; n < xs.n; ++n)
    for (long c = 0; c < xs.c; ++c) {
      const T* plane = x.data().data() + (n * xs.c + c) * xs.h * xs.w;
      T* dd = out.data().data() + (n * 2 * xs.c + c) * oh * ow;
      T* aa = out.data().data() + (n * 2 * xs.c + xs.c + c) * oh * ow;
      for (long i = 0; i < oh; ++i) {
        const long y0 = 2 * i, y1 = std::min(2 * i + 1, xs.h - 1);
        for (long j = 0; j < ow; ++j) {
          const long x0 = 2 * j, x1 = std::min(2 * j + 1, xs.w - 1);
          const T u = plane[y0 * xs.w + x0] + plane[y1 * xs.w + x1];
          const T v = plane[y0 * xs.w + x1] + plane[y1 * xs.w + x0];
          dd[i * ow + j] = (u - v) * half;
          aa[i * ow + j] = (u + v) * half;
        }
      }
    }
  MacCounter::add(static_cast<unsigned long long>(xs.n) * xs.c * oh * ow * 6);

  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn, xs, oh, ow](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      T* gx = xn->ensure_grad().data();
      const T half = T(0.5);
      for (long n = 0; n < xs.n; ++n)
        for (long c = 0; c < xs.c; ++c) {
          T* gplane = gx + (n * xs.c + c) * xs.h * xs.w;
          const T* gd = self.grad.data() + (n * 2 * xs.c + c) * oh * ow;
          const T* ga = self.grad.data() + (n * 2 * xs.c + xs.c + c) * oh * ow;
          for (long i = 0; i < oh; ++i) {
            const long y0 = 2 * i, y1 = std::min(2 * i + 1, xs.h - 1);
            for (long j = 0; j < ow; ++j) {
              const long x0 = 2 * j, x1 = std::min(2 * j + 1, xs.w - 1);
              const T gu = (ga[i * ow + j] + gd[i * ow + j]) * half;
              const T gv = (ga[i * ow + j] - gd[i * ow + j]) * half;
              gplane[y0 * xs.w + x0] += gu;
              gplane[y1 * xs.w + x1] += gu;
              gplane[y0 * xs.w + x1] += gv;
              gplane[y1 * xs.w + x0] += gv;
            }
          }
        }
    });
  }
  return out;
}

// Per-stage state of the adaptive downsampling layer: two learnable subband
// scores over a fixed filter pair.
template <typename T>
struct AdwtState {
  Parameter<T> lambda1;   // detail score
  Parameter<T> lambda2;   // approximation score
  Parameter<T> filter_g;  // fixed taps, (1,1,1,K)
  Parameter<T> filter_h;

  AdwtState() {
    const WaveletKernel<T> k = WaveletKernel<T>::haar();
    lambda1 = Parameter<T>(Tensor<T>::scalar(T(1)), true);
    lambda2 = Parameter<T>(Tensor<T>::scalar(T(1)), true);
    filter_g = Parameter<T>(Tensor<T>::from({1, 1, 1, k.length()}, k.g), false);
    filter_h = Parameter<T>(Tensor<T>::from({1, 1, 1, k.length()}, k.h), false);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".lambda1", lambda1, ParamKind::kLambda);
    reg.add(prefix + ".lambda2", lambda2, ParamKind::kLambda);
    reg.add(prefix + ".g", filter_g, ParamKind::kWaveletFilter);
    reg.add(prefix + ".h", filter_h, ParamKind::kWaveletFilter);
  }
};

// One infrared-branch stage step: x (C channels) -> (I_T, A_next) where
// I_T = [lambda1*HH, lambda2*LL] with 2C channels at half resolution and
// A_next is the unscaled LL carried to the next stage (C channels).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> adwt_forward(const Tensor<T>& x, AdwtState<T>& state) {
  const long c = x.shape().c;
  Tensor<T> sub = haar_down(x);
  Tensor<T> det = slice_channels(sub, 0, c);
  Tensor<T> approx = slice_channels(sub, c, 2 * c);
  Tensor<T> it = concat_channels(scale(det, state.lambda1.value), scale(approx, state.lambda2.value));
  return {it, approx};
}

}  // namespace wcc
