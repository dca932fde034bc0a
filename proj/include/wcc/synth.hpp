#pragma once

// Synthetic multispectral pairs: textured RGB renderings of simple shapes
// and contour-emphasized "infrared" renderings of the same shapes, the
// latter translated by a known per-pair shift. Exercises the alignment and
// fusion layers under controlled misalignment.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "wcc/checkpoint.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

struct SynthPairSpec {
  std::uint64_t seed = 1;
  long count = 128;
  long canvas = 32;
  long num_classes = 4;  // disc, rectangle, ring, cross
  double rgb_noise = 0.35;
  double contour_width = 1.6;  // Gaussian ridge width of the infrared contours
  double shift_range = 2.0;    // per-pair shift drawn from [-range, range]
  bool integer_shifts = true;
  double ir_noise = 0.02;
};

struct SynthPairs {
  long count = 0, canvas = 0, num_classes = 0;
  std::vector<float> rgb;         // N*3*S*S
  std::vector<float> ir;          // N*1*S*S, shifted
  std::vector<float> ir_aligned;  // N*1*S*S, unshifted reference
  std::vector<long> labels;
  std::vector<float> shifts;  // N*2: (dy, dx)
};

namespace detail {

inline double rect_boundary_dist(double dy, double dx, double a, double b) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  if (ax <= a && ay <= b) return std::min(a - ax, b - ay);
  const double ox = std::max(ax - a, 0.0), oy = std::max(ay - b, 0.0);
  return std::sqrt(ox * ox + oy * oy);
}

struct ShapeParams {
  long cls;
  double cy, cx, r1, r2, half_w, half_h;
};

inline double boundary_distance(const ShapeParams& p, double y, double x) {
  const double dy = y - p.cy, dx = x - p.cx;
  const double rad = std::sqrt(dy * dy + dx * dx);
  switch (p.cls) {
    case 0: return std::abs(rad - p.r1);                                   // disc
    case 1: return rect_boundary_dist(dy, dx, p.half_w, p.half_h);         // rectangle
    case 2: return std::min(std::abs(rad - p.r1), std::abs(rad - p.r2));   // ring
    default:                                                               // cross
      return std::min(rect_boundary_dist(dy, dx, p.half_w, p.r1 * 0.45),
                      rect_boundary_dist(dy, dx, p.r1 * 0.45, p.half_h));
  }
}

inline bool inside(const ShapeParams& p, double y, double x) {
  const double dy = y - p.cy, dx = x - p.cx;
  const double rad = std::sqrt(dy * dy + dx * dx);
  switch (p.cls) {
    case 0: return rad <= p.r1;
    case 1: return std::abs(dx) <= p.half_w && std::abs(dy) <= p.half_h;
    case 2: return rad >= p.r1 && rad <= p.r2;
    default:
      return (std::abs(dx) <= p.half_w && std::abs(dy) <= p.r1 * 0.45) ||
             (std::abs(dx) <= p.r1 * 0.45 && std::abs(dy) <= p.half_h);
  }
}

}  // namespace detail

inline SynthPairs synth_multispectral(const SynthPairSpec& spec) {
  check_shape(spec.count > 0 && spec.canvas >= 8, "synth: degenerate spec");
  check_shape(spec.num_classes >= 2 && spec.num_classes <= 4, "synth: 2..4 shape classes");
  Rng geo(spec.seed);
  // independent stream so the same seed with shift_range=0 reproduces the
  // exact same geometry
  Rng shift_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);

  const long S = spec.canvas;
  SynthPairs out;
  out.count = spec.count;
  out.canvas = S;
  out.num_classes = spec.num_classes;
  out.rgb.resize(static_cast<std::size_t>(spec.count) * 3 * S * S);
  out.ir.resize(static_cast<std::size_t>(spec.count) * S * S);
  out.ir_aligned.resize(static_cast<std::size_t>(spec.count) * S * S);
  out.labels.resize(spec.count);
  out.shifts.resize(static_cast<std::size_t>(spec.count) * 2);

  for (long n = 0; n < spec.count; ++n) {
    detail::ShapeParams p;
    p.cls = n % spec.num_classes;
    p.cy = S / 2.0 + geo.uniform(-3, 3);
    p.cx = S / 2.0 + geo.uniform(-3, 3);
    p.r1 = geo.uniform(S * 0.16, S * 0.26);
    p.r2 = p.r1 + geo.uniform(2.0, 3.5);
    p.half_w = geo.uniform(S * 0.14, S * 0.26);
    p.half_h = geo.uniform(S * 0.14, S * 0.26);
    out.labels[n] = p.cls;

    double base[3];
    for (double& b : base) b = geo.uniform(0.35, 0.85);
    float* rgbp = out.rgb.data() + n * 3 * S * S;
    float* alip = out.ir_aligned.data() + n * S * S;
    for (long y = 0; y < S; ++y)
      for (long x = 0; x < S; ++x) {
        const bool in = detail::inside(p, y, x);
        const double tex = geo.normal(0.0, spec.rgb_noise);
        for (long c = 0; c < 3; ++c) {
          const double v = in ? base[c] * (1.0 + tex) : std::abs(geo.normal(0.0, spec.rgb_noise));
          rgbp[c * S * S + y * S + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
        const double dist = detail::boundary_distance(p, y, x);
        const double ridge = std::exp(-(dist * dist) / (spec.contour_width * spec.contour_width));
        const double v = ridge + (in ? 0.15 : 0.0) + geo.normal(0.0, spec.ir_noise);
        alip[y * S + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }

    double dy, dx;
    if (spec.integer_shifts) {
      const long r = static_cast<long>(spec.shift_range);
      dy = static_cast<double>(static_cast<long>(shift_rng.next_below(2 * r + 1)) - r);
      dx = static_cast<double>(static_cast<long>(shift_rng.next_below(2 * r + 1)) - r);
    } else {
      dy = shift_rng.uniform(-spec.shift_range, spec.shift_range);
      dx = shift_rng.uniform(-spec.shift_range, spec.shift_range);
    }
    out.shifts[n * 2 + 0] = static_cast<float>(dy);
    out.shifts[n * 2 + 1] = static_cast<float>(dx);

    // ir(y, x) = aligned(y - dy, x - dx), zero outside, bilinear for
    // fractional shifts
    float* irp = out.ir.data() + n * S * S;
    for (long y = 0; y < S; ++y)
      for (long x = 0; x < S; ++x) {
        const double sy = y - dy, sx = x - dx;
        double v = 0;
        if (sy > -1 && sy < S && sx > -1 && sx < S) {
          const long y0 = static_cast<long>(std::floor(sy)), x0 = static_cast<long>(std::floor(sx));
          const double fy = sy - y0, fx = sx - x0;
          auto read = [&](long yy, long xx) -> double {
            return (yy >= 0 && yy < S && xx >= 0 && xx < S) ? alip[yy * S + xx] : 0.0;
          };
          v = (1 - fy) * (1 - fx) * read(y0, x0) + (1 - fy) * fx * read(y0, x0 + 1) +
              fy * (1 - fx) * read(y0 + 1, x0) + fy * fx * read(y0 + 1, x0 + 1);
        }
        irp[y * S + x] = static_cast<float>(v);
      }
  }
  return out;
}

template <typename T>
Tensor<T> synth_rgb_batch(const SynthPairs& s, std::span<const long> idx) {
  const long plane = 3 * s.canvas * s.canvas;
  Tensor<T> out = Tensor<T>::zeros({static_cast<long>(idx.size()), 3, s.canvas, s.canvas});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (long v = 0; v < plane; ++v)
      out.data()[static_cast<long>(i) * plane + v] = static_cast<T>(s.rgb[idx[i] * plane + v]);
  return out;
}

template <typename T>
Tensor<T> synth_ir_batch(const SynthPairs& s, std::span<const long> idx, bool aligned = false) {
  const long plane = s.canvas * s.canvas;
  const auto& src = aligned ? s.ir_aligned : s.ir;
  Tensor<T> out = Tensor<T>::zeros({static_cast<long>(idx.size()), 1, s.canvas, s.canvas});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (long v = 0; v < plane; ++v)
      out.data()[static_cast<long>(i) * plane + v] = static_cast<T>(src[idx[i] * plane + v]);
  return out;
}

inline void save_synth_pairs(const std::filesystem::path& path, const SynthPairs& s) {
  Tensor<float> rgb = Tensor<float>::from({s.count, 3, s.canvas, s.canvas}, s.rgb);
  Tensor<float> ir = Tensor<float>::from({s.count, 1, s.canvas, s.canvas}, s.ir);
  Tensor<float> aligned = Tensor<float>::from({s.count, 1, s.canvas, s.canvas}, s.ir_aligned);
  std::vector<float> lab(s.labels.begin(), s.labels.end());
  Tensor<float> labels = Tensor<float>::from({s.count, 1, 1, 1}, std::move(lab));
  Tensor<float> shifts = Tensor<float>::from({s.count, 2, 1, 1}, s.shifts);
  std::vector<std::pair<std::string, const Tensor<float>*>> entries = {
      {"rgb", &rgb}, {"ir", &ir}, {"ir_aligned", &aligned}, {"labels", &labels}, {"shifts", &shifts}};
  write_tensor_container<float>(path, kDatasetMagic, entries);
}

inline SynthPairs load_synth_pairs(const std::filesystem::path& path) {
  auto entries = read_tensor_container<float>(path, kDatasetMagic);
  SynthPairs s;
  auto find = [&](const std::string& name) -> Tensor<float>& {
    for (auto& [n, t] : entries)
      if (n == name) return t;
    throw DataError(DataError::Kind::kBadFormat, "synth dataset: missing tensor '" + name + "'");
  };
  Tensor<float>& rgb = find("rgb");
  s.count = rgb.shape().n;
  s.canvas = rgb.shape().h;
  s.rgb.assign(rgb.data().begin(), rgb.data().end());
  s.ir.assign(find("ir").data().begin(), find("ir").data().end());
  s.ir_aligned.assign(find("ir_aligned").data().begin(), find("ir_aligned").data().end());
  for (float v : find("labels").data()) s.labels.push_back(static_cast<long>(v));
  s.shifts.assign(find("shifts").data().begin(), find("shifts").data().end());
  long m = 0;
  for (long l : s.labels) m = std::max(m, l);
  s.num_classes = m + 1;
  return s;
}

}  // namespace wcc
