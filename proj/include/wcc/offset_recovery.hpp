#pragma once

// Offset recovery experiment: feature maps misaligned by known integer
// shifts, an alignment layer trained to undo them, and the mean alignment
// error relative to the frozen identity baseline.

#include <cmath>
#include <ostream>

#include "wcc/cmrf.hpp"
#include "wcc/ops.hpp"
#include "wcc/synth.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

struct OffsetRecoverySpec {
  std::uint64_t seed = 1;
  double shift_range = 2.0;
  long steps = 200;
  long count = 48;
  double lr = 0.2;
};

struct OffsetRecoveryResult {
  double baseline_err = 0;  // identity alignment (zero offsets, delta window)
  double trained_err = 0;
  double reduction() const {
    return baseline_err > 0 ? 1.0 - trained_err / baseline_err : 0.0;
  }
};

// Trains the alignment layer alone on (shifted, reference) map pairs and
// reports mean squared alignment error before and after.
inline OffsetRecoveryResult run_offset_recovery(const OffsetRecoverySpec& a,
                                                std::ostream* log = nullptr) {
  SynthPairSpec spec;
  spec.seed = a.seed;
  spec.count = a.count;
  spec.shift_range = a.shift_range;
  spec.integer_shifts = true;
  SynthPairs pairs = synth_multispectral(spec);

  std::vector<long> idx(pairs.count);
  for (long i = 0; i < pairs.count; ++i) idx[i] = i;
  Tensor<float> f_t = synth_ir_batch<float>(pairs, idx);           // shifted maps
  Tensor<float> target = synth_ir_batch<float>(pairs, idx, true);  // aligned references

  Rng rng(a.seed ^ 0xa076bdf1d1564bbdULL);
  CsaLayer<float> csa(1, 1, 8, 3, rng);
  ParamRegistry<float> reg;
  csa.register_params(reg, "csa");

  OffsetRecoveryResult result;
  result.baseline_err = mse_loss(f_t, target).item();
  result.trained_err = result.baseline_err;
  for (long step = 0; step < a.steps; ++step) {
    auto [f_m, offsets] = csa_predict_offsets(target, f_t, csa);
    Tensor<float> aligned = csa_align(f_t, offsets, csa.u.value);
    Tensor<float> loss = mse_loss(aligned, target);
    result.trained_err = loss.item();
    if (!std::isfinite(result.trained_err))
      throw NumericError("offset recovery: non-finite alignment loss");
    backward(loss);
    sgd_step(reg, static_cast<float>(a.lr), 0.0f);
    if (log && (step + 1) % 50 == 0)
      *log << "step " << step + 1 << ": alignment mse " << result.trained_err << "\n";
  }
  return result;
}

}  // namespace wcc
