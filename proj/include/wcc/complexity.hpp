#pragma once

// Analytic stage cost model and the instrumented counter that validates it.
//
// Conventions (fixed so analytic == measured is well-defined):
//   * one multiply-accumulate = one unit; big-O constants taken as 1;
//   * convolutions charge K*K*Cin per output element, zero-padded taps
//     included (the im2col GEMM executes exactly that);
//   * the ADWT stage's wavelet step is charged 3*K units per output location
//     per input channel, as the stage cost model writes it (the fused
//     butterfly plus subband scaling; see macs.hpp);
//   * batchnorm, activations, bias-free affine shifts, pooling and softmax
//     are not charged.

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "wcc/backbone.hpp"
#include "wcc/macs.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

// One stage of the cost model. height/width are the network input
// resolution; the stage consumes features at H/2^j x W/2^j and emits half
// that (j = 0 for the first stage).
struct StageSpec {
  long height = 32;
  long width = 32;
  long stage_j = 0;
  long kernel = 3;
  long c_in = 1;
  long c_out = 1;
  long blocks = 1;

  void validate() const {
    check_shape(height > 0 && width > 0 && c_in > 0 && c_out > 0, "stage spec: non-positive size");
    check_shape(kernel >= 1 && kernel % 2 == 1, "stage spec: kernel must be odd");
    check_shape(blocks >= 0, "stage spec: negative block count");
    check_shape(stage_j >= 0, "stage spec: negative stage index");
    const long div = 1L << (stage_j + 1);
    check_shape(height % div == 0 && width % div == 0,
                "stage spec: resolution must be divisible by 2^(j+1)");
  }

  unsigned long long out_pixels() const {
    return static_cast<unsigned long long>(height >> (stage_j + 1)) *
           static_cast<unsigned long long>(width >> (stage_j + 1));
  }
  unsigned long long in_pixels() const {
    return static_cast<unsigned long long>(height >> stage_j) *
           static_cast<unsigned long long>(width >> stage_j);
  }
};

struct ComplexityReport {
  unsigned long long params = 0;
  unsigned long long flops_forward = 0;
  unsigned long long flops_backward = 0;

  ComplexityReport& operator+=(const ComplexityReport& o) {
    params += o.params;
    flops_forward += o.flops_forward;
    flops_backward += o.flops_backward;
    return *this;
  }
};

// CNN stage: stride-2 KxK downsampling conv plus N residual blocks of one
// KxK and one 1x1 conv each.
//   forward = S * (K^2*Cj*Cj1 + N*(K^2+1)*Cj1^2),  S = HW/4^(j+1)
//   params  =      K^2*Cj*Cj1 + N*(K^2+1)*Cj1^2
//   backward = (HW/4^j) * Cj1 * K^2 * (N*Cj1 + Cj)
inline ComplexityReport cnn_stage_cost(const StageSpec& s) {
  s.validate();
  const unsigned long long S = s.out_pixels();
  const unsigned long long k2 = static_cast<unsigned long long>(s.kernel) * s.kernel;
  const unsigned long long cj = s.c_in, cj1 = s.c_out, n = s.blocks;
  ComplexityReport r;
  r.params = k2 * cj * cj1 + n * (k2 + 1) * cj1 * cj1;
  r.flops_forward = S * r.params;
  r.flops_backward = s.in_pixels() * cj1 * k2 * (n * cj1 + cj);
  return r;
}

// Haar analysis/synthesis filter length; the cost model's K is the conv
// kernel size, the stored filter-tap count follows the wavelet itself.
inline constexpr unsigned long long kWaveletTaps = 2;

// ADWT stage with its embedding conv:
//   forward = S * K * Cj * (3 + 2*K*Cj1)
//   params  = 2*K^2*Cj*Cj1 + 2*Kw    (embedding kernel + fixed filter taps)
//   backward = (HW/4^j) * K^2 * Cj * Cj1
inline ComplexityReport adwt_stage_cost(const StageSpec& s) {
  s.validate();
  const unsigned long long S = s.out_pixels();
  const unsigned long long K = s.kernel;
  const unsigned long long cj = s.c_in, cj1 = s.c_out;
  ComplexityReport r;
  r.params = 2 * K * K * cj * cj1 + 2 * kWaveletTaps;
  r.flops_forward = S * K * cj * (3 + 2 * K * cj1);
  r.flops_backward = s.in_pixels() * K * K * cj * cj1;
  return r;
}

struct ModelCostRow {
  std::string stage;
  std::string kind;
  ComplexityReport report;
};

// Whole-classifier aggregation over the five stages plus the linear head
// (global average pooling is charge-free under the convention).
inline std::vector<ModelCostRow> model_cost_rows(const BackboneConfig& cfg,
                                                 const std::array<StageKind, 5>& kinds,
                                                 long in_channels, long num_classes) {
  cfg.validate();
  std::vector<ModelCostRow> rows;
  long c_in = in_channels;
  for (long s = 1; s <= 5; ++s) {
    StageSpec spec;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.stage_j = s - 1;
    spec.kernel = 3;
    spec.c_in = c_in;
    spec.c_out = cfg.rgb_channels(s);
    spec.blocks = cfg.stage_blocks[s - 1];
    const StageKind kind = kinds[s - 1];
    rows.push_back({std::to_string(s), stage_kind_name(kind),
                    kind == StageKind::kCnn ? cnn_stage_cost(spec) : adwt_stage_cost(spec)});
    c_in = spec.c_out;
  }
  ComplexityReport head;
  head.params = static_cast<unsigned long long>(c_in) * num_classes;
  head.flops_forward = head.params;
  head.flops_backward = 2 * head.params;
  rows.push_back({"head", "linear", head});
  return rows;
}

inline ComplexityReport model_cost(const BackboneConfig& cfg, const std::array<StageKind, 5>& kinds,
                                   long in_channels, long num_classes) {
  ComplexityReport total;
  for (const auto& row : model_cost_rows(cfg, kinds, in_channels, num_classes))
    total += row.report;
  return total;
}

// Exact multiply-accumulate count of one run of `forward_pass` under the
// documented convention.
inline unsigned long long measured_macs(const std::function<void()>& forward_pass) {
  NoGradGuard no_grad;
  MacCountGuard guard;
  forward_pass();
  return guard.count();
}

inline std::string complexity_csv(const std::vector<ModelCostRow>& rows) {
  std::ostringstream os;
  os << "stage,kind,params,flops_fwd,flops_bwd\n";
  ComplexityReport total;
  for (const auto& r : rows) {
    os << r.stage << "," << r.kind << "," << r.report.params << "," << r.report.flops_forward << ","
       << r.report.flops_backward << "\n";
    total += r.report;
  }
  os << "total,," << total.params << "," << total.flops_forward << "," << total.flops_backward
     << "\n";
  return os.str();
}

inline std::string complexity_table(const std::vector<ModelCostRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-6s %-7s %14s %16s %16s\n", "stage", "kind", "params",
                "flops_fwd", "flops_bwd");
  os << line;
  ComplexityReport total;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-6s %-7s %14llu %16llu %16llu\n", r.stage.c_str(),
                  r.kind.c_str(), r.report.params, r.report.flops_forward, r.report.flops_backward);
    os << line;
    total += r.report;
  }
  std::snprintf(line, sizeof(line), "%-6s %-7s %14llu %16llu %16llu\n", "total", "",
                total.params, total.flops_forward, total.flops_backward);
  os << line;
  return os.str();
}

}  // namespace wcc
