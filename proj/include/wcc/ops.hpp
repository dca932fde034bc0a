#pragma once

// Primitive differentiable operations composed by every layer. All ops build
// the autograd graph only when gradients are requested (GradMode + inputs).

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "wcc/macs.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

enum class Axis { kH, kW };

namespace detail {

// c(m x n) += a(m x k) * b(k x n), row-major.
template <typename T>
void gemm_accum(long m, long n, long k, const T* a, const T* b, T* c) {
  for (long i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (long kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + kk * n;
      for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c(m x n) += a(m x p) * b(n x p)^T. Eight concurrent dot products keep the
// FMA pipeline full; the reduction order is fixed, so results are bit-stable
// run to run.
template <typename T>
void gemm_abt_accum(long m, long n, long p, const T* a, const T* b, T* c) {
  for (long i = 0; i < m; ++i) {
    const T* arow = a + i * p;
    long j = 0;
    for (; j + 8 <= n; j += 8) {
      const T* b0 = b + j * p;
      const T* b1 = b0 + p;
      const T* b2 = b1 + p;
      const T* b3 = b2 + p;
      const T* b4 = b3 + p;
      const T* b5 = b4 + p;
      const T* b6 = b5 + p;
      const T* b7 = b6 + p;
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
      for (long q = 0; q < p; ++q) {
        const T av = arow[q];
        s0 += av * b0[q];
        s1 += av * b1[q];
        s2 += av * b2[q];
        s3 += av * b3[q];
        s4 += av * b4[q];
        s5 += av * b5[q];
        s6 += av * b6[q];
        s7 += av * b7[q];
      }
      T* crow = c + i * n + j;
      crow[0] += s0;
      crow[1] += s1;
      crow[2] += s2;
      crow[3] += s3;
      crow[4] += s4;
      crow[5] += s5;
      crow[6] += s6;
      crow[7] += s7;
    }
    for (; j < n; ++j) {
      const T* brow = b + j * p;
      T s = 0;
      for (long q = 0; q < p; ++q) s += arow[q] * brow[q];
      c[i * n + j] += s;
    }
  }
}

// c(k x n) += a(m x k)^T * b(m x n)
template <typename T>
void gemm_atb_accum(long m, long n, long k, const T* a, const T* b, T* c) {
  for (long i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    const T* arow = a + i * k;
    for (long kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      T* crow = c + kk * n;
      for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct ConvDims {
  long n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  long rows() const { return cin * kh * kw; }
  long patches() const { return oh * ow; }
};

// Patch-major patch matrix (P x R): every GEMM below then runs its inner
// loop over contiguous memory even when the spatial extent is tiny.
template <typename T>
void im2row(const T* x, const ConvDims& d, T* rows) {
  const long R = d.rows();
  for (long oh = 0; oh < d.oh; ++oh) {
    for (long ow = 0; ow < d.ow; ++ow) {
      T* dst = rows + (oh * d.ow + ow) * R;
      for (long c = 0; c < d.cin; ++c) {
        const T* plane = x + c * d.h * d.w;
        for (long kh = 0; kh < d.kh; ++kh) {
          const long ih = oh * d.stride - d.pad + kh;
          if (ih < 0 || ih >= d.h) {
            for (long kw = 0; kw < d.kw; ++kw) *dst++ = T(0);
            continue;
          }
          const T* srow = plane + ih * d.w;
          const long iw0 = ow * d.stride - d.pad;
          for (long kw = 0; kw < d.kw; ++kw) {
            const long iw = iw0 + kw;
            *dst++ = (iw >= 0 && iw < d.w) ? srow[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void row2im_accum(const T* rows, const ConvDims& d, T* gx) {
  for (long oh = 0; oh < d.oh; ++oh) {
    for (long ow = 0; ow < d.ow; ++ow) {
      const T* src = rows + (oh * d.ow + ow) * d.rows();
      for (long c = 0; c < d.cin; ++c) {
        T* plane = gx + c * d.h * d.w;
        for (long kh = 0; kh < d.kh; ++kh) {
          const long ih = oh * d.stride - d.pad + kh;
          if (ih < 0 || ih >= d.h) {
            src += d.kw;
            continue;
          }
          T* drow = plane + ih * d.w;
          const long iw0 = ow * d.stride - d.pad;
          for (long kw = 0; kw < d.kw; ++kw) {
            const long iw = iw0 + kw;
            if (iw >= 0 && iw < d.w) drow[iw] += src[kw];
          }
          src += d.kw;
        }
      }
    }
  }
}

}  // namespace detail

// 2D cross-correlation without bias. Padding is zero-filled and counted at
// the full K*K*Cin trip count per output element.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, long stride = 1, long pad = 0) {
  const Shape xs = x.shape(), ks = kernel.shape();
  check_shape(stride >= 1, "conv2d: stride must be >= 1");
  check_shape(pad >= 0, "conv2d: padding must be >= 0");
  check_shape(ks.c == xs.c, "conv2d: kernel expects " + std::to_string(ks.c) +
                                " input channels, tensor has " + std::to_string(xs.c) +
                                " (input " + xs.str() + ", kernel " + ks.str() + ")");
  check_shape(xs.h + 2 * pad >= ks.h && xs.w + 2 * pad >= ks.w,
              "conv2d: padded input " + xs.str() + " smaller than kernel " + ks.str());

  detail::ConvDims d{xs.n, xs.c, xs.h, xs.w, ks.n, ks.h, ks.w, stride, pad, 0, 0};
  d.oh = (xs.h + 2 * pad - ks.h) / stride + 1;
  d.ow = (xs.w + 2 * pad - ks.w) / stride + 1;
  const long R = d.rows(), P = d.patches();

  const bool track = detail::wants_grad<T>({&x, &kernel});
  auto rows = std::make_shared<std::vector<T>>(static_cast<std::size_t>(xs.n) * P * R);

  Tensor<T> out = Tensor<T>::zeros({xs.n, ks.n, d.oh, d.ow});
  const T* xp = x.data().data();
  const T* wp = kernel.data().data();
  T* op = out.data().data();
  for (long n = 0; n < xs.n; ++n) {
    T* rn = rows->data() + static_cast<std::size_t>(n) * P * R;
    detail::im2row(xp + n * xs.c * xs.h * xs.w, d, rn);
    // out(Cout x P) += W(Cout x R) * rows(P x R)^T
    detail::gemm_abt_accum(ks.n, P, R, wp, rn, op + n * ks.n * P);
  }
  MacCounter::add(static_cast<unsigned long long>(xs.n) * ks.n * P * R);

  if (track) {
    auto xn = x.node(), wn = kernel.node();
    detail::attach_backward<T>(out, {x, kernel}, [xn, wn, rows, d](detail::Node<T>& self) {
      const long R = d.rows(), P = d.patches();
      const T* gy = self.grad.data();
      if (wn->requires_grad) {
        T* gw = wn->ensure_grad().data();
        // dW(Cout x R) += gy(Cout x P) * rows(P x R)
        for (long n = 0; n < d.n; ++n)
          detail::gemm_accum(d.cout, R, P, gy + n * d.cout * P,
                             rows->data() + static_cast<std::size_t>(n) * P * R, gw);
      }
      if (xn->requires_grad) {
        T* gx = xn->ensure_grad().data();
        std::vector<T> rowgrad(static_cast<std::size_t>(P) * R);
        for (long n = 0; n < d.n; ++n) {
          std::fill(rowgrad.begin(), rowgrad.end(), T(0));
          // drows(P x R) += gy(Cout x P)^T * W(Cout x R)
          detail::gemm_atb_accum(d.cout, R, P, gy + n * d.cout * P, wn->data.data(),
                                 rowgrad.data());
          detail::row2im_accum(rowgrad.data(), d, gx + n * d.cin * d.h * d.w);
        }
      }
    });
  }
  return out;
}

// Per-channel normalization over batch and spatial axes with learnable
// affine. Training mode uses batch statistics (population variance) and
// updates the running buffers in place; eval mode reads the running buffers.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& alpha, const Tensor<T>& beta, T eps,
                      bool training = true, Tensor<T>* running_mean = nullptr,
                      Tensor<T>* running_var = nullptr, T momentum = T(0.1)) {
  const Shape xs = x.shape();
  check_shape(alpha.shape() == Shape{1, xs.c, 1, 1} && beta.shape() == Shape{1, xs.c, 1, 1},
              "batchnorm2d: affine parameters must be 1x" + std::to_string(xs.c) + "x1x1");
  check_shape(eps > 0, "batchnorm2d: eps must be positive");
  const long m = xs.n * xs.h * xs.w;
  const long plane = xs.h * xs.w;

  std::vector<T> mean(xs.c), inv_std(xs.c);
  if (training) {
    check_shape(m >= 2, "batchnorm2d: need >= 2 elements per channel, got " + std::to_string(m));
    for (long c = 0; c < xs.c; ++c) {
      T sum = 0, sq = 0;
      for (long n = 0; n < xs.n; ++n) {
        const T* p = x.data().data() + (n * xs.c + c) * plane;
        for (long i = 0; i < plane; ++i) {
          sum += p[i];
          sq += p[i] * p[i];
        }
      }
      const T mu = sum / static_cast<T>(m);
      T var = sq / static_cast<T>(m) - mu * mu;
      if (var < 0) var = 0;  // rounding guard
      mean[c] = mu;
      inv_std[c] = T(1) / std::sqrt(var + eps);
      if (running_mean && running_var) {
        auto rm = running_mean->data();
        auto rv = running_var->data();
        rm[c] = (T(1) - momentum) * rm[c] + momentum * mu;
        rv[c] = (T(1) - momentum) * rv[c] + momentum * var;
      }
    }
  } else {
    check_shape(running_mean != nullptr && running_var != nullptr,
                "batchnorm2d: eval mode requires running statistics");
    for (long c = 0; c < xs.c; ++c) {
      mean[c] = running_mean->data()[c];
      inv_std[c] = T(1) / std::sqrt(running_var->data()[c] + eps);
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(xs.numel()));
  Tensor<T> out = Tensor<T>::zeros(xs);
  {
    const T* xp = x.data().data();
    T* op = out.data().data();
    T* hp = xhat->data();
    for (long n = 0; n < xs.n; ++n) {
      for (long c = 0; c < xs.c; ++c) {
        const T a = alpha.data()[c], b = beta.data()[c];
        const T mu = mean[c], is = inv_std[c];
        const long base = (n * xs.c + c) * plane;
        for (long i = 0; i < plane; ++i) {
          const T h = (xp[base + i] - mu) * is;
          hp[base + i] = h;
          op[base + i] = a * h + b;
        }
      }
    }
  }

  if (detail::wants_grad<T>({&x, &alpha, &beta})) {
    auto xn = x.node(), an = alpha.node(), bn = beta.node();
    auto istd = std::make_shared<std::vector<T>>(inv_std);
    detail::attach_backward<T>(
        out, {x, alpha, beta}, [xn, an, bn, xhat, istd, xs, plane, m, training](detail::Node<T>& self) {
          const T* gy = self.grad.data();
          const T* hp = xhat->data();
          for (long c = 0; c < xs.c; ++c) {
            T gsum = 0, ghsum = 0;
            for (long n = 0; n < xs.n; ++n) {
              const long base = (n * xs.c + c) * plane;
              for (long i = 0; i < plane; ++i) {
                gsum += gy[base + i];
                ghsum += gy[base + i] * hp[base + i];
              }
            }
            if (bn->requires_grad) bn->ensure_grad()[c] += gsum;
            if (an->requires_grad) an->ensure_grad()[c] += ghsum;
            if (xn->requires_grad) {
              T* gx = xn->ensure_grad().data();
              const T a = an->data[c], is = (*istd)[c];
              if (training) {
                const T mg = gsum / static_cast<T>(m);
                const T mgh = ghsum / static_cast<T>(m);
                for (long n = 0; n < xs.n; ++n) {
                  const long base = (n * xs.c + c) * plane;
                  for (long i = 0; i < plane; ++i)
                    gx[base + i] += a * is * (gy[base + i] - mg - hp[base + i] * mgh);
                }
              } else {
                for (long n = 0; n < xs.n; ++n) {
                  const long base = (n * xs.c + c) * plane;
                  for (long i = 0; i < plane; ++i) gx[base + i] += a * is * gy[base + i];
                }
              }
            }
          }
        });
  }
  return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  if (!(slope > T(0) && slope < T(1))) throw UsageError("leaky_relu: slope must be in (0,1)");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xp = x.data();
  auto op = out.data();
  for (std::size_t i = 0; i < xp.size(); ++i) op[i] = xp[i] >= T(0) ? xp[i] : slope * xp[i];
  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn, slope](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += self.grad[i] * (xn->data[i] >= T(0) ? T(1) : slope);
    });
  }
  return out;
}

// Numerically stable softmax over a flat window of logits.
template <typename T>
void softmax_window(std::span<const T> logits, std::span<T> out) {
  check_shape(logits.size() == out.size() && !logits.empty(), "softmax_window: size mismatch");
  T mx = logits[0];
  for (const T v : logits) mx = std::max(mx, v);
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
}

template <typename T>
std::vector<T> softmax_window(std::span<const T> logits) {
  std::vector<T> out(logits.size());
  softmax_window(logits, std::span<T>(out));
  return out;
}

// Softmax across the channel axis at every spatial location.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  const Shape xs = x.shape();
  Tensor<T> out = Tensor<T>::zeros(xs);
  const long plane = xs.h * xs.w;
  std::vector<T> tmp_in(xs.c), tmp_out(xs.c);
  for (long n = 0; n < xs.n; ++n) {
    for (long i = 0; i < plane; ++i) {
      for (long c = 0; c < xs.c; ++c) tmp_in[c] = x.data()[(n * xs.c + c) * plane + i];
      softmax_window<T>(tmp_in, std::span<T>(tmp_out));
      for (long c = 0; c < xs.c; ++c) out.data()[(n * xs.c + c) * plane + i] = tmp_out[c];
    }
  }
  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn, xs, plane](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      T* gx = xn->ensure_grad().data();
      for (long n = 0; n < xs.n; ++n) {
        for (long i = 0; i < plane; ++i) {
          T dot = 0;
          for (long c = 0; c < xs.c; ++c) {
            const long idx = (n * xs.c + c) * plane + i;
            dot += self.grad[idx] * self.data[idx];
          }
          for (long c = 0; c < xs.c; ++c) {
            const long idx = (n * xs.c + c) * plane + i;
            gx[idx] += self.data[idx] * (self.grad[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape as = a.shape(), bs = b.shape();
  check_shape(as.n == bs.n && as.h == bs.h && as.w == bs.w,
              "concat_channels: batch/spatial mismatch " + as.str() + " vs " + bs.str());
  Tensor<T> out = Tensor<T>::zeros({as.n, as.c + bs.c, as.h, as.w});
  const long plane = as.h * as.w;
  for (long n = 0; n < as.n; ++n) {
    std::copy_n(a.data().data() + n * as.c * plane, as.c * plane,
                out.data().data() + n * (as.c + bs.c) * plane);
    std::copy_n(b.data().data() + n * bs.c * plane, bs.c * plane,
                out.data().data() + (n * (as.c + bs.c) + as.c) * plane);
  }
  if (detail::wants_grad<T>({&a, &b})) {
    auto an = a.node(), bn = b.node();
    detail::attach_backward<T>(out, {a, b}, [an, bn, as, bs, plane](detail::Node<T>& self) {
      for (long n = 0; n < as.n; ++n) {
        const T* g = self.grad.data() + n * (as.c + bs.c) * plane;
        if (an->requires_grad) {
          T* ga = an->ensure_grad().data() + n * as.c * plane;
          for (long i = 0; i < as.c * plane; ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
          T* gb = bn->ensure_grad().data() + n * bs.c * plane;
          for (long i = 0; i < bs.c * plane; ++i) gb[i] += g[as.c * plane + i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, long c0, long c1) {
  const Shape xs = x.shape();
  check_shape(0 <= c0 && c0 < c1 && c1 <= xs.c, "slice_channels: bad range [" +
                                                    std::to_string(c0) + "," + std::to_string(c1) +
                                                    ") for " + xs.str());
  const long cs = c1 - c0, plane = xs.h * xs.w;
  Tensor<T> out = Tensor<T>::zeros({xs.n, cs, xs.h, xs.w});
  for (long n = 0; n < xs.n; ++n)
    std::copy_n(x.data().data() + (n * xs.c + c0) * plane, cs * plane,
                out.data().data() + n * cs * plane);
  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn, xs, c0, cs, plane](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      T* gx = xn->ensure_grad().data();
      for (long n = 0; n < xs.n; ++n) {
        const T* g = self.grad.data() + n * cs * plane;
        T* dst = gx + (n * xs.c + c0) * plane;
        for (long i = 0; i < cs * plane; ++i) dst[i] += g[i];
      }
    });
  }
  return out;
}

namespace detail {

// Half-sample symmetric source index for a padded position. Valid while the
// pad amount does not exceed the axis length (single reflection).
inline long symmetric_src(long padded_pos, long before, long len) {
  if (padded_pos < before) return before - 1 - padded_pos;
  const long i = padded_pos - before;
  if (i < len) return i;
  return 2 * len - 1 - i;
}

}  // namespace detail

// Half-sample symmetric extension along one spatial axis: the edge value is
// repeated, then reflection continues inward ((1,2,3) pad 1 -> (1,1,2,3,3)).
template <typename T>
Tensor<T> symmetric_pad(const Tensor<T>& x, Axis axis, long before, long after) {
  const Shape xs = x.shape();
  const long len = axis == Axis::kH ? xs.h : xs.w;
  check_shape(before >= 0 && after >= 0, "symmetric_pad: negative amount");
  check_shape(before <= len && after <= len,
              "symmetric_pad: amount exceeds axis length " + std::to_string(len));
  Shape os = xs;
  (axis == Axis::kH ? os.h : os.w) += before + after;
  Tensor<T> out = Tensor<T>::zeros(os);
  for (long n = 0; n < os.n; ++n)
    for (long c = 0; c < os.c; ++c)
      for (long h = 0; h < os.h; ++h)
        for (long w = 0; w < os.w; ++w) {
          const long sh = axis == Axis::kH ? detail::symmetric_src(h, before, xs.h) : h;
          const long sw = axis == Axis::kW ? detail::symmetric_src(w, before, xs.w) : w;
          out.at(n, c, h, w) = x.at(n, c, sh, sw);
        }
  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn, xs, os, axis, before](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      for (long n = 0; n < os.n; ++n)
        for (long c = 0; c < os.c; ++c)
          for (long h = 0; h < os.h; ++h)
            for (long w = 0; w < os.w; ++w) {
              const long sh = axis == Axis::kH ? detail::symmetric_src(h, before, xs.h) : h;
              const long sw = axis == Axis::kW ? detail::symmetric_src(w, before, xs.w) : w;
              gx[((n * xs.c + c) * xs.h + sh) * xs.w + sw] +=
                  self.grad[((n * os.c + c) * os.h + h) * os.w + w];
            }
    });
  }
  return out;
}

template <typename T>
Tensor<T> zero_pad2d(const Tensor<T>& x, long top, long bottom, long left, long right) {
  check_shape(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "zero_pad2d: negative amount");
  const Shape xs = x.shape();
  Tensor<T> out = Tensor<T>::zeros({xs.n, xs.c, xs.h + top + bottom, xs.w + left + right});
  const Shape os = out.shape();
  for (long n = 0; n < xs.n; ++n)
    for (long c = 0; c < xs.c; ++c)
      for (long h = 0; h < xs.h; ++h)
        std::copy_n(x.data().data() + ((n * xs.c + c) * xs.h + h) * xs.w, xs.w,
                    out.data().data() + ((n * os.c + c) * os.h + h + top) * os.w + left);
  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn, xs, os, top, left](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      for (long n = 0; n < xs.n; ++n)
        for (long c = 0; c < xs.c; ++c)
          for (long h = 0; h < xs.h; ++h)
            for (long w = 0; w < xs.w; ++w)
              gx[((n * xs.c + c) * xs.h + h) * xs.w + w] +=
                  self.grad[((n * os.c + c) * os.h + h + top) * os.w + w + left];
    });
  }
  return out;
}

namespace detail {

// Bilinear neighborhood of a fractional coordinate under zero extension:
// coordinates outside [0,H-1]x[0,W-1] contribute zero.
template <typename T>
struct BilinearTaps {
  long y0, x0;
  T wy1, wx1;  // fractional parts
  bool valid;  // fully outside (-1, len) on either axis -> all-zero

  T sample(const T* plane, long h, long w) const {
    if (!valid) return T(0);
    const T v00 = read(plane, h, w, y0, x0);
    const T v01 = read(plane, h, w, y0, x0 + 1);
    const T v10 = read(plane, h, w, y0 + 1, x0);
    const T v11 = read(plane, h, w, y0 + 1, x0 + 1);
    const T wy0 = T(1) - wy1, wx0 = T(1) - wx1;
    return wy0 * wx0 * v00 + wy0 * wx1 * v01 + wy1 * wx0 * v10 + wy1 * wx1 * v11;
  }

  // d(sample)/dy and d(sample)/dx
  void coord_grads(const T* plane, long h, long w, T* dy, T* dx) const {
    if (!valid) {
      *dy = *dx = T(0);
      return;
    }
    const T v00 = read(plane, h, w, y0, x0);
    const T v01 = read(plane, h, w, y0, x0 + 1);
    const T v10 = read(plane, h, w, y0 + 1, x0);
    const T v11 = read(plane, h, w, y0 + 1, x0 + 1);
    const T wy0 = T(1) - wy1, wx0 = T(1) - wx1;
    *dy = wx0 * (v10 - v00) + wx1 * (v11 - v01);
    *dx = wy0 * (v01 - v00) + wy1 * (v11 - v10);
  }

  template <typename Accum>
  void scatter(Accum&& acc, long h, long w, T weight) const {
    if (!valid) return;
    const T wy0 = T(1) - wy1, wx0 = T(1) - wx1;
    scatter_one(acc, h, w, y0, x0, weight * wy0 * wx0);
    scatter_one(acc, h, w, y0, x0 + 1, weight * wy0 * wx1);
    scatter_one(acc, h, w, y0 + 1, x0, weight * wy1 * wx0);
    scatter_one(acc, h, w, y0 + 1, x0 + 1, weight * wy1 * wx1);
  }

 private:
  static T read(const T* plane, long h, long w, long y, long x) {
    return (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : T(0);
  }
  template <typename Accum>
  static void scatter_one(Accum& acc, long h, long w, long y, long x, T v) {
    if (y >= 0 && y < h && x >= 0 && x < w) acc(y * w + x, v);
  }
};

template <typename T>
BilinearTaps<T> bilinear_taps(T y, T x, long h, long w) {
  BilinearTaps<T> t;
  t.valid = !(y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w));
  const T fy = std::floor(y), fx = std::floor(x);
  t.y0 = static_cast<long>(fy);
  t.x0 = static_cast<long>(fx);
  t.wy1 = y - fy;
  t.wx1 = x - fx;
  return t;
}

}  // namespace detail

// Point sample of one (n, c) plane at a fractional coordinate.
template <typename T>
T bilinear_sample(const Tensor<T>& map, long n, long c, T y, T x) {
  const Shape s = map.shape();
  check_shape(n >= 0 && n < s.n && c >= 0 && c < s.c, "bilinear_sample: index out of range");
  const T* plane = map.data().data() + (n * s.c + c) * s.h * s.w;
  return detail::bilinear_taps(y, x, s.h, s.w).sample(plane, s.h, s.w);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(a.shape() == b.shape(),
              "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (long i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::wants_grad<T>({&a, &b})) {
    auto an = a.node(), bn = b.node();
    detail::attach_backward<T>(out, {a, b}, [an, bn](detail::Node<T>& self) {
      if (an->requires_grad) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        auto g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    });
  }
  return out;
}

// Multiply by a learnable scalar (1x1x1x1) tensor.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, const Tensor<T>& s) {
  check_shape(s.numel() == 1, "scale: scale factor must be a scalar tensor");
  const T sv = s.data()[0];
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (long i = 0; i < x.numel(); ++i) out.data()[i] = sv * x.data()[i];
  if (detail::wants_grad<T>({&x, &s})) {
    auto xn = x.node(), sn = s.node();
    detail::attach_backward<T>(out, {x, s}, [xn, sn, sv](detail::Node<T>& self) {
      if (xn->requires_grad) {
        auto g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sv * self.grad[i];
      }
      if (sn->requires_grad) {
        T acc = 0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn->data[i];
        sn->ensure_grad()[0] += acc;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_const(const Tensor<T>& x, T k) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (long i = 0; i < x.numel(); ++i) out.data()[i] = k * x.data()[i];
  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn, k](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      auto g = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * self.grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = 0;
  for (const T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      auto g = xn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape xs = x.shape();
  const long plane = xs.h * xs.w;
  Tensor<T> out = Tensor<T>::zeros({xs.n, xs.c, 1, 1});
  for (long n = 0; n < xs.n; ++n)
    for (long c = 0; c < xs.c; ++c) {
      T acc = 0;
      const T* p = x.data().data() + (n * xs.c + c) * plane;
      for (long i = 0; i < plane; ++i) acc += p[i];
      out.data()[n * xs.c + c] = acc / static_cast<T>(plane);
    }
  if (detail::wants_grad<T>({&x})) {
    auto xn = x.node();
    detail::attach_backward<T>(out, {x}, [xn, xs, plane](detail::Node<T>& self) {
      if (!xn->requires_grad) return;
      T* gx = xn->ensure_grad().data();
      for (long n = 0; n < xs.n; ++n)
        for (long c = 0; c < xs.c; ++c) {
          const T g = self.grad[n * xs.c + c] / static_cast<T>(plane);
          T* p = gx + (n * xs.c + c) * plane;
          for (long i = 0; i < plane; ++i) p[i] += g;
        }
    });
  }
  return out;
}

// Fully connected layer over (N, C, 1, 1) features; weight is (M, C, 1, 1).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight) {
  const Shape xs = x.shape(), ws = weight.shape();
  check_shape(xs.h == 1 && xs.w == 1, "linear: input must be Nx" + std::to_string(xs.c) + "x1x1");
  check_shape(ws.c == xs.c && ws.h == 1 && ws.w == 1,
              "linear: weight " + ws.str() + " does not match input " + xs.str());
  Tensor<T> out = Tensor<T>::zeros({xs.n, ws.n, 1, 1});
  for (long n = 0; n < xs.n; ++n)
    for (long m = 0; m < ws.n; ++m) {
      T acc = 0;
      for (long c = 0; c < xs.c; ++c) acc += x.data()[n * xs.c + c] * weight.data()[m * ws.c + c];
      out.data()[n * ws.n + m] = acc;
    }
  MacCounter::add(static_cast<unsigned long long>(xs.n) * ws.n * xs.c);
  if (detail::wants_grad<T>({&x, &weight})) {
    auto xn = x.node(), wn = weight.node();
    detail::attach_backward<T>(out, {x, weight}, [xn, wn, xs, ws](detail::Node<T>& self) {
      if (xn->requires_grad) {
        T* gx = xn->ensure_grad().data();
        for (long n = 0; n < xs.n; ++n)
          for (long m = 0; m < ws.n; ++m) {
            const T g = self.grad[n * ws.n + m];
            for (long c = 0; c < xs.c; ++c) gx[n * xs.c + c] += g * wn->data[m * ws.c + c];
          }
      }
      if (wn->requires_grad) {
        T* gw = wn->ensure_grad().data();
        for (long n = 0; n < xs.n; ++n)
          for (long m = 0; m < ws.n; ++m) {
            const T g = self.grad[n * ws.n + m];
            for (long c = 0; c < xs.c; ++c) gw[m * ws.c + c] += g * xn->data[n * xs.c + c];
          }
      }
    });
  }
  return out;
}

// Mean squared error against a constant target (no gradient to the target).
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  check_shape(pred.shape() == target.shape(),
              "mse_loss: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  const T inv = T(1) / static_cast<T>(pred.numel());
  T acc = 0;
  for (long i = 0; i < pred.numel(); ++i) {
    const T d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (detail::wants_grad<T>({&pred})) {
    auto pn = pred.node();
    auto tgt = std::make_shared<std::vector<T>>(target.data().begin(), target.data().end());
    detail::attach_backward<T>(out, {pred}, [pn, tgt, inv](detail::Node<T>& self) {
      if (!pn->requires_grad) return;
      auto g = pn->ensure_grad();
      const T gy = self.grad[0];
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += gy * T(2) * inv * (pn->data[i] - (*tgt)[i]);
    });
  }
  return out;
}

// Mean softmax cross-entropy over the batch, fused with log-sum-exp
// stabilization.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const long> labels) {
  const Shape s = logits.shape();
  check_shape(s.h == 1 && s.w == 1, "cross_entropy: logits must be NxKx1x1");
  check_shape(static_cast<long>(labels.size()) == s.n, "cross_entropy: label count mismatch");
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(s.n) * s.c);
  T loss = 0;
  for (long n = 0; n < s.n; ++n) {
    const long y = labels[n];
    check_shape(y >= 0 && y < s.c, "cross_entropy: label out of range");
    const T* z = logits.data().data() + n * s.c;
    T mx = z[0];
    for (long k = 1; k < s.c; ++k) mx = std::max(mx, z[k]);
    T sum = 0;
    for (long k = 0; k < s.c; ++k) sum += std::exp(z[k] - mx);
    const T lse = mx + std::log(sum);
    loss += lse - z[y];
    for (long k = 0; k < s.c; ++k) (*probs)[n * s.c + k] = std::exp(z[k] - lse);
  }
  Tensor<T> out = Tensor<T>::scalar(loss / static_cast<T>(s.n));
  if (detail::wants_grad<T>({&logits})) {
    auto ln = logits.node();
    std::vector<long> lab(labels.begin(), labels.end());
    detail::attach_backward<T>(out, {logits}, [ln, probs, lab, s](detail::Node<T>& self) {
      if (!ln->requires_grad) return;
      T* g = ln->ensure_grad().data();
      const T gy = self.grad[0] / static_cast<T>(s.n);
      for (long n = 0; n < s.n; ++n)
        for (long k = 0; k < s.c; ++k)
          g[n * s.c + k] += gy * ((*probs)[n * s.c + k] - (k == lab[n] ? T(1) : T(0)));
    });
  }
  return out;
}

}  // namespace wcc
