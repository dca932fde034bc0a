#pragma once

// Wall-clock microbenchmarks of single backbone stages, reported next to the
// analytic cost for context.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "wcc/backbone.hpp"
#include "wcc/complexity.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

struct BenchStats {
  double median_ns = 0, p10_ns = 0, p90_ns = 0;
  long repeats = 0;
};

struct BenchReport {
  StageSpec spec;
  StageKind kind = StageKind::kCnn;
  BenchStats stats;
  ComplexityReport analytic;
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  const std::size_t i =
      static_cast<std::size_t>(std::llround(q * static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + i, v.end());
  return v[i];
}

}  // namespace detail

// Times `repeats` single-sample forward passes of one stage after warmup.
inline BenchReport bench_stage(const StageSpec& spec, StageKind kind, long repeats,
                               long warmup = 3, std::uint64_t seed = 1) {
  spec.validate();
  check_shape(repeats >= 1, "bench: repeats must be >= 1");
  BenchReport report;
  report.spec = spec;
  report.kind = kind;
  report.analytic = kind == StageKind::kCnn ? cnn_stage_cost(spec) : adwt_stage_cost(spec);

  Rng rng(seed);
  const long h = spec.height >> spec.stage_j, w = spec.width >> spec.stage_j;
  Tensor<float> input = Tensor<float>::randn({1, spec.c_in, h, w}, rng);

  NoGradGuard no_grad;
  std::vector<double> samples;
  samples.reserve(repeats);
  auto run = [&](auto& stage) {
    for (long i = 0; i < warmup; ++i) stage.forward(input, false);
    for (long i = 0; i < repeats; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      Tensor<float> out = stage.forward(input, false);
      const auto t1 = std::chrono::steady_clock::now();
      samples.push_back(
          static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
  };
  if (kind == StageKind::kCnn) {
    CnnStage<float> stage(spec.c_out, spec.c_in, spec.blocks, spec.kernel, rng);
    run(stage);
  } else {
    AdwtCeStage<float> stage(spec.c_out, spec.c_in, spec.kernel, rng);
    run(stage);
  }

  report.stats.repeats = repeats;
  report.stats.median_ns = detail::percentile(samples, 0.5);
  report.stats.p10_ns = detail::percentile(samples, 0.1);
  report.stats.p90_ns = detail::percentile(samples, 0.9);
  return report;
}

inline const char* bench_csv_header() {
  return "kind,median_ns,p10_ns,p90_ns,repeats,analytic_flops_fwd";
}

inline std::string bench_csv_row(const BenchReport& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%s,%.0f,%.0f,%.0f,%ld,%llu", stage_kind_name(r.kind),
                r.stats.median_ns, r.stats.p10_ns, r.stats.p90_ns, r.stats.repeats,
                r.analytic.flops_forward);
  return buf;
}

}  // namespace wcc
