#pragma once

// Crossmodal rearranging fusion: cross-domain embedding (CE), crossmodal
// spatial alignment (CSA) and semantic rearranging fusion (SRF).
//
// CSA predicts one fractional 2D offset per output pixel, shared across the
// whole aggregation window; sub-pixel reads are bilinear with zero extension
// outside the feature map. SRF weights are generated from the raw RGB stage
// output and normalized to a per-location probability simplex.

#include <utility>
#include <vector>

#include "wcc/layers.hpp"
#include "wcc/ops.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

// Embedding unit: 3x3 conv (same size), batchnorm, leaky ReLU.
template <typename T>
struct CeUnit {
  Conv2dLayer<T> conv;
  BatchNorm2dLayer<T> bn;

  CeUnit() = default;
  CeUnit(long c_out, long c_in, Rng& rng) : conv(c_out, c_in, 3, 1, 1, rng), bn(c_out) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return leaky_relu(bn.forward(conv.forward(x), training), static_cast<T>(kLeakySlope));
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    conv.register_params(reg, prefix + ".conv");
    bn.register_params(reg, prefix + ".bn");
  }
};

template <typename T>
struct CeLayer {
  std::vector<CeUnit<T>> units;

  CeLayer() = default;
  CeLayer(long embed_channels, long in_channels, long n_units, Rng& rng) {
    check_shape(n_units >= 1, "ce layer: need at least one unit");
    units.emplace_back(embed_channels, in_channels, rng);
    for (long i = 1; i < n_units; ++i) units.emplace_back(embed_channels, embed_channels, rng);
  }

  long in_channels() const { return units.front().conv.weight.value.shape().c; }
  long out_channels() const { return units.back().conv.weight.value.shape().n; }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    for (std::size_t i = 0; i < units.size(); ++i)
      units[i].register_params(reg, prefix + ".unit" + std::to_string(i));
  }
};

template <typename T>
Tensor<T> ce_forward(const Tensor<T>& i_t, CeLayer<T>& layer, bool training = true) {
  check_shape(i_t.shape().c == layer.in_channels(),
              "ce_forward: input has " + std::to_string(i_t.shape().c) + " channels, layer expects " +
                  std::to_string(layer.in_channels()));
  Tensor<T> x = i_t;
  for (auto& u : layer.units) x = u.forward(x, training);
  return x;
}

template <typename T>
struct CsaLayer {
  Conv2dLayer<T> fusion;  // 3x3: [I_R | F_T] -> multimodal representation
  Conv2dLayer<T> offset;  // 3x3: F_M -> per-pixel (dy, dx); zero-initialized
  Parameter<T> u;         // K x K aggregation window, odd, centered, delta-init

  CsaLayer() = default;
  CsaLayer(long c_rgb, long c_embed, long c_multi, long window, Rng& rng)
      : fusion(c_multi, c_rgb + c_embed, 3, 1, 1, rng),
        offset(2, c_multi, 3, 1, 1, rng, /*zero_init=*/true) {
    check_shape(window >= 1 && window % 2 == 1, "csa layer: window size must be odd");
    Tensor<T> w = Tensor<T>::zeros({1, 1, window, window});
    w.at(0, 0, window / 2, window / 2) = T(1);
    u = Parameter<T>(std::move(w), true);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    fusion.register_params(reg, prefix + ".fusion");
    offset.register_params(reg, prefix + ".offset");
    reg.add(prefix + ".u", u, ParamKind::kAlignWeight);
  }
};

// Multimodal representation and the offset field (channel 0 = dy,
// channel 1 = dx, in pixels).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> csa_predict_offsets(const Tensor<T>& i_r, const Tensor<T>& f_t,
                                                    CsaLayer<T>& layer) {
  const Shape rs = i_r.shape(), ts = f_t.shape();
  check_shape(rs.n == ts.n && rs.h == ts.h && rs.w == ts.w,
              "csa_predict_offsets: modality grids differ: " + rs.str() + " vs " + ts.str());
  Tensor<T> f_m = layer.fusion.forward(concat_channels(i_r, f_t));
  Tensor<T> offsets = layer.offset.forward(f_m);
  return {f_m, offsets};
}

// F_AT(m,n) = sum_{x,y} U(x,y) * F_T(m+x+dy, n+y+dx) with bilinear sub-pixel
// reads; the offset at (m,n) shifts the whole window.
template <typename T>
Tensor<T> csa_align(const Tensor<T>& f_t, const Tensor<T>& offsets, const Tensor<T>& u) {
  const Shape ts = f_t.shape(), os = offsets.shape(), us = u.shape();
  check_shape(os.n == ts.n && os.c == 2 && os.h == ts.h && os.w == ts.w,
              "csa_align: offsets must be " + std::to_string(ts.n) + "x2x" + std::to_string(ts.h) +
                  "x" + std::to_string(ts.w) + ", got " + os.str());
  check_shape(us.n == 1 && us.c == 1 && us.h == us.w && us.h % 2 == 1,
              "csa_align: U must be 1x1xKxK with K odd, got " + us.str());
  const long K = us.h, k = K / 2;
  const long plane = ts.h * ts.w;

  Tensor<T> out = Tensor<T>::zeros(ts);
  for (long n = 0; n < ts.n; ++n) {
    const T* dyp = offsets.data().data() + (n * 2 + 0) * plane;
    const T* dxp = offsets.data().data() + (n * 2 + 1) * plane;
    for (long oy = 0; oy < ts.h; ++oy)
      for (long ox = 0; ox < ts.w; ++ox) {
        const T dy = dyp[oy * ts.w + ox], dx = dxp[oy * ts.w + ox];
        for (long ky = -k; ky <= k; ++ky)
          for (long kx = -k; kx <= k; ++kx) {
            const T uw = u.data()[(ky + k) * K + (kx + k)];
            const auto taps = detail::bilinear_taps<T>(static_cast<T>(oy + ky) + dy,
                                                       static_cast<T>(ox + kx) + dx, ts.h, ts.w);
            for (long c = 0; c < ts.c; ++c) {
              const T* plane_p = f_t.data().data() + (n * ts.c + c) * plane;
              out.data()[(n * ts.c + c) * plane + oy * ts.w + ox] +=
                  uw * taps.sample(plane_p, ts.h, ts.w);
            }
          }
      }
  }

  if (detail::wants_grad<T>({&f_t, &offsets, &u})) {
    auto tn = f_t.node(), on = offsets.node(), un = u.node();
    detail::attach_backward<T>(out, {f_t, offsets, u}, [tn, on, un, ts, K, k,
                                                        plane](detail::Node<T>& self) {
      T* gt = tn->requires_grad ? tn->ensure_grad().data() : nullptr;
      T* go = on->requires_grad ? on->ensure_grad().data() : nullptr;
      T* gu = un->requires_grad ? un->ensure_grad().data() : nullptr;
      for (long n = 0; n < ts.n; ++n) {
        const T* dyp = on->data.data() + (n * 2 + 0) * plane;
        const T* dxp = on->data.data() + (n * 2 + 1) * plane;
        for (long oy = 0; oy < ts.h; ++oy)
          for (long ox = 0; ox < ts.w; ++ox) {
            const T dy = dyp[oy * ts.w + ox], dx = dxp[oy * ts.w + ox];
            T gdy = 0, gdx = 0;
            for (long ky = -k; ky <= k; ++ky)
              for (long kx = -k; kx <= k; ++kx) {
                const T uw = un->data[(ky + k) * K + (kx + k)];
                const auto taps = detail::bilinear_taps<T>(
                    static_cast<T>(oy + ky) + dy, static_cast<T>(ox + kx) + dx, ts.h, ts.w);
                T guw = 0;
                for (long c = 0; c < ts.c; ++c) {
                  const T gy = self.grad[(n * ts.c + c) * plane + oy * ts.w + ox];
                  if (gy == T(0)) continue;
                  const T* plane_p = tn->data.data() + (n * ts.c + c) * plane;
                  if (gu) guw += gy * taps.sample(plane_p, ts.h, ts.w);
                  if (go) {
                    T dvy, dvx;
                    taps.coord_grads(plane_p, ts.h, ts.w, &dvy, &dvx);
                    gdy += gy * uw * dvy;
                    gdx += gy * uw * dvx;
                  }
                  if (gt) {
                    T* gplane = gt + (n * ts.c + c) * plane;
                    taps.scatter([gplane](long idx, T v) { gplane[idx] += v; }, ts.h, ts.w,
                                 gy * uw);
                  }
                }
                if (gu) gu[(ky + k) * K + (kx + k)] += guw;
              }
            if (go) {
              go[(n * 2 + 0) * plane + oy * ts.w + ox] += gdy;
              go[(n * 2 + 1) * plane + oy * ts.w + ox] += gdx;
            }
          }
      }
    });
  }
  return out;
}

template <typename T>
struct SrfLayer {
  Conv2dLayer<T> compress;  // 1x1: C_R -> k_r^2 rearranging logits
  long k_r = 3;

  SrfLayer() = default;
  SrfLayer(long c_rgb, long k_r_, Rng& rng) : compress(k_r_ * k_r_, c_rgb, 1, 1, 0, rng), k_r(k_r_) {
    check_shape(k_r >= 1 && k_r % 2 == 1, "srf layer: k_r must be odd");
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    compress.register_params(reg, prefix + ".compress");
  }
};

// Per-location rearranging weights: softmax over the k_r^2 logit channels.
template <typename T>
Tensor<T> srf_weights(const Tensor<T>& i_r, SrfLayer<T>& layer) {
  check_shape(layer.compress.weight.value.shape().n == layer.k_r * layer.k_r,
              "srf_weights: compress conv must emit k_r^2 channels");
  return softmax_channels(layer.compress.forward(i_r));
}

// G_T(l) = sum over the k_r x k_r neighborhood of W_l-weighted F_AT values;
// neighbors outside the map read zero.
template <typename T>
Tensor<T> srf_aggregate(const Tensor<T>& f_at, const Tensor<T>& weights, long k_r) {
  const Shape fs = f_at.shape(), ws = weights.shape();
  check_shape(k_r >= 1 && k_r % 2 == 1, "srf_aggregate: k_r must be odd");
  check_shape(ws.n == fs.n && ws.h == fs.h && ws.w == fs.w && ws.c == k_r * k_r,
              "srf_aggregate: weight grid " + ws.str() + " does not match features " + fs.str());
  const long k = k_r / 2, plane = fs.h * fs.w;
  Tensor<T> out = Tensor<T>::zeros(fs);
  for (long n = 0; n < fs.n; ++n)
    for (long oy = 0; oy < fs.h; ++oy)
      for (long ox = 0; ox < fs.w; ++ox)
        for (long ky = -k; ky <= k; ++ky) {
          const long iy = oy + ky;
          if (iy < 0 || iy >= fs.h) continue;
          for (long kx = -k; kx <= k; ++kx) {
            const long ix = ox + kx;
            if (ix < 0 || ix >= fs.w) continue;
            const long t = (ky + k) * k_r + (kx + k);
            const T wv = weights.data()[(n * ws.c + t) * plane + oy * fs.w + ox];
            for (long c = 0; c < fs.c; ++c)
              out.data()[(n * fs.c + c) * plane + oy * fs.w + ox] +=
                  wv * f_at.data()[(n * fs.c + c) * plane + iy * fs.w + ix];
          }
        }

  if (detail::wants_grad<T>({&f_at, &weights})) {
    auto fn = f_at.node(), wn = weights.node();
    detail::attach_backward<T>(out, {f_at, weights}, [fn, wn, fs, ws, k_r, k,
                                                      plane](detail::Node<T>& self) {
      T* gf = fn->requires_grad ? fn->ensure_grad().data() : nullptr;
      T* gw = wn->requires_grad ? wn->ensure_grad().data() : nullptr;
      for (long n = 0; n < fs.n; ++n)
        for (long oy = 0; oy < fs.h; ++oy)
          for (long ox = 0; ox < fs.w; ++ox)
            for (long ky = -k; ky <= k; ++ky) {
              const long iy = oy + ky;
              if (iy < 0 || iy >= fs.h) continue;
              for (long kx = -k; kx <= k; ++kx) {
                const long ix = ox + kx;
                if (ix < 0 || ix >= fs.w) continue;
                const long t = (ky + k) * k_r + (kx + k);
                const T wv = wn->data[(n * ws.c + t) * plane + oy * fs.w + ox];
                T gwv = 0;
                for (long c = 0; c < fs.c; ++c) {
                  const T gy = self.grad[(n * fs.c + c) * plane + oy * fs.w + ox];
                  if (gf) gf[(n * fs.c + c) * plane + iy * fs.w + ix] += gy * wv;
                  gwv += gy * fn->data[(n * fs.c + c) * plane + iy * fs.w + ix];
                }
                if (gw) gw[(n * ws.c + t) * plane + oy * fs.w + ox] += gwv;
              }
            }
    });
  }
  return out;
}

// Full fusion block: embed, align, rearrange, then concatenate the
// complementary features onto the RGB stream.
template <typename T>
Tensor<T> cmrf_forward(const Tensor<T>& i_r, const Tensor<T>& i_t, CeLayer<T>& ce, CsaLayer<T>& csa,
                       SrfLayer<T>& srf, bool training = true) {
  Tensor<T> f_t = ce_forward(i_t, ce, training);
  auto [f_m, offsets] = csa_predict_offsets(i_r, f_t, csa);
  Tensor<T> f_at = csa_align(f_t, offsets, csa.u.value);
  Tensor<T> w = srf_weights(i_r, srf);
  Tensor<T> g_t = srf_aggregate(f_at, w, srf.k_r);
  return concat_channels(i_r, g_t);
}

}  // namespace wcc
