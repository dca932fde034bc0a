#pragma once

// Multiply-accumulate instrumentation for the analytic cost model.
//
// Counting convention (one MAC = one unit):
//   * conv/linear primitives charge their real inner-loop trip count,
//     K*K*Cin per output element with zero-padded taps included;
//   * the fused Haar subband butterfly charges its real elementary flop
//     count, 6 per output location per channel (4 adds + 2 muls);
//   * ADWT stages normalize the wavelet charge to 3*K units per output
//     location per input channel (K = stage kernel size) to match the stage
//     cost model's written form; see complexity.hpp;
//   * batchnorm, activations, subband scores, bilinear taps and softmax are
//     not charged, matching the cost model's bias/batchnorm exclusion.

#include <cstdint>

namespace wcc {

struct MacCounter {
  static void add(unsigned long long macs) {
    if (state().enabled) state().count += macs;
  }
  static unsigned long long count() { return state().count; }
  static bool enabled() { return state().enabled; }
  static void set_enabled(bool on) { state().enabled = on; }
  static void reset() { state().count = 0; }

 private:
  struct State {
    bool enabled = false;
    unsigned long long count = 0;
  };
  static State& state() {
    thread_local State s;
    return s;
  }
};

// Enables and zeroes the counter for one measurement region.
struct MacCountGuard {
  MacCountGuard() : prev_(MacCounter::enabled()) {
    MacCounter::set_enabled(true);
    MacCounter::reset();
  }
  ~MacCountGuard() { MacCounter::set_enabled(prev_); }
  unsigned long long count() const { return MacCounter::count(); }

 private:
  bool prev_;
};

// Suspends counting, e.g. while a stage re-charges a primitive under the
// documented convention.
struct MacPauseGuard {
  MacPauseGuard() : prev_(MacCounter::enabled()) { MacCounter::set_enabled(false); }
  ~MacPauseGuard() { MacCounter::set_enabled(prev_); }

 private:
  bool prev_;
};

}  // namespace wcc
