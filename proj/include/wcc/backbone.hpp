#pragma once

// Stage assembly: the residual CNN stages, the ADWT+CE stages that replace
// them in the interchange experiment, the single-stream classifier variants
// and the dual-stream RGB/infrared backbone with per-stage fusion.

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wcc/cmrf.hpp"
#include "wcc/layers.hpp"
#include "wcc/wavelet.hpp"

namespace wcc {

enum class StageKind { kCnn, kAdwt };

inline const char* stage_kind_name(StageKind k) { return k == StageKind::kCnn ? "cnn" : "adwt"; }

struct BackboneConfig {
  double tau = 0.5;
  std::array<long, 5> stage_blocks{1, 2, 4, 3, 2};
  long height = 64;
  long width = 64;

  // Stage channel plan: 2^j * 32 * tau for the CNN/shared stream, half of
  // that for the embedded infrared features.
  long rgb_channels(long stage) const { return std::lround((1L << stage) * 32.0 * tau); }
  long embed_channels(long stage) const { return std::lround((1L << stage) * 16.0 * tau); }

  void validate() const {
    check_shape(tau > 0, "backbone config: tau must be positive");
    for (long j = 1; j <= 5; ++j)
      check_shape(rgb_channels(j) >= 1,
                  "backbone config: tau=" + std::to_string(tau) + " yields zero channels at stage " +
                      std::to_string(j));
    for (long j = 1; j <= 3; ++j)
      check_shape(embed_channels(j) >= 1,
                  "backbone config: tau=" + std::to_string(tau) +
                      " yields zero embed channels at stage " + std::to_string(j));
    for (long b : stage_blocks) check_shape(b >= 0, "backbone config: negative block count");
  }
};

template <typename T>
using Trace = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
inline void trace_push(Trace<T>* trace, const std::string& name, const Tensor<T>& t) {
  if (trace) trace->emplace_back(name, t);
}

// Residual block: 3x3 conv and 1x1 conv, batchnorm + leaky ReLU per conv,
// identity skip. Shape-preserving.
template <typename T>
struct ResidualBlock {
  Conv2dLayer<T> conv3;
  BatchNorm2dLayer<T> bn3;
  Conv2dLayer<T> conv1;
  BatchNorm2dLayer<T> bn1;

  ResidualBlock() = default;
  ResidualBlock(long channels, long k, Rng& rng)
      : conv3(channels, channels, k, 1, (k - 1) / 2, rng),
        bn3(channels),
        conv1(channels, channels, 1, 1, 0, rng),
        bn1(channels) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    Tensor<T> t = leaky_relu(bn3.forward(conv3.forward(x), training), static_cast<T>(kLeakySlope));
    t = leaky_relu(bn1.forward(conv1.forward(t), training), static_cast<T>(kLeakySlope));
    return add(x, t);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    conv3.register_params(reg, prefix + ".conv3");
    bn3.register_params(reg, prefix + ".bn3");
    conv1.register_params(reg, prefix + ".conv1");
    bn1.register_params(reg, prefix + ".bn1");
  }
};

// CNN stage: stride-2 KxK downsampling conv followed by N residual blocks.
template <typename T>
struct CnnStage {
  Conv2dLayer<T> down;
  BatchNorm2dLayer<T> bn;
  std::vector<ResidualBlock<T>> blocks;

  CnnStage() = default;
  CnnStage(long c_out, long c_in, long n_blocks, long k, Rng& rng)
      : down(c_out, c_in, k, 2, (k - 1) / 2, rng), bn(c_out) {
    for (long i = 0; i < n_blocks; ++i) blocks.emplace_back(c_out, k, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    Tensor<T> t = leaky_relu(bn.forward(down.forward(x), training), static_cast<T>(kLeakySlope));
    for (auto& b : blocks) t = b.forward(t, training);
    return t;
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    down.register_params(reg, prefix + ".down");
    bn.register_params(reg, prefix + ".bn");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].register_params(reg, prefix + ".block" + std::to_string(i));
  }
};

// ADWT stage for the interchange experiment: fixed-filter subband
// downsampling with learnable scores, followed by one embedding unit, as the
// stage cost model accounts it. The wavelet charge is normalized to 3*K
// units per output location per input channel (see macs.hpp).
template <typename T>
struct AdwtCeStage {
  AdwtState<T> adwt;
  CeUnit<T> ce;
  long kernel = 3;

  AdwtCeStage() = default;
  AdwtCeStage(long c_out, long c_in, long k, Rng& rng) : ce(c_out, 2 * c_in, rng), kernel(k) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    const Shape xs = x.shape();
    Tensor<T> it;
    {
      MacPauseGuard pause;
      auto [f, approx] = adwt_forward(x, adwt);
      it = std::move(f);
    }
    const Shape is = it.shape();
    MacCounter::add(static_cast<unsigned long long>(xs.n) * xs.c * is.h * is.w * 3 * kernel);
    return ce.forward(it, training);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    adwt.register_params(reg, prefix + ".adwt");
    ce.register_params(reg, prefix + ".ce");
  }
};

template <typename T>
struct StageModule {
  StageKind kind = StageKind::kCnn;
  std::optional<CnnStage<T>> cnn;
  std::optional<AdwtCeStage<T>> adwt;

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return kind == StageKind::kCnn ? cnn->forward(x, training) : adwt->forward(x, training);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    if (kind == StageKind::kCnn)
      cnn->register_params(reg, prefix);
    else
      adwt->register_params(reg, prefix);
  }
};

inline std::array<StageKind, 5> swap_prefix(long depth) {
  check_shape(depth >= 0 && depth <= 5, "swap depth must be in [0,5]");
  std::array<StageKind, 5> kinds{};
  for (long i = 0; i < 5; ++i) kinds[i] = i < depth ? StageKind::kAdwt : StageKind::kCnn;
  return kinds;
}

// Single-stream classifier for the stage-interchange experiment: five
// stages, each CNN or ADWT+CE, then global average pooling and a linear
// head. Inputs are zero-padded up to a multiple of 32 so every stage halves
// the resolution exactly.
template <typename T>
class ClsVariant {
 public:
  ClsVariant(const BackboneConfig& cfg, std::array<StageKind, 5> kinds, long num_classes,
             long in_channels, std::uint64_t seed)
      : cfg_(cfg), kinds_(kinds), num_classes_(num_classes), in_channels_(in_channels) {
    cfg_.validate();
    check_shape(num_classes >= 2, "classifier: need at least two classes");
    check_shape(in_channels >= 1, "classifier: need at least one input channel");
    bool cnn_seen = false;
    for (StageKind k : kinds_) {
      if (k == StageKind::kCnn) cnn_seen = true;
      check_shape(!(cnn_seen && k == StageKind::kAdwt),
                  "classifier: ADWT stages must form a contiguous prefix");
    }
    Rng rng(seed);
    long c_in = in_channels;
    for (long s = 1; s <= 5; ++s) {
      const long c_out = cfg_.rgb_channels(s);
      StageModule<T> m;
      m.kind = kinds_[s - 1];
      if (m.kind == StageKind::kCnn)
        m.cnn.emplace(c_out, c_in, cfg_.stage_blocks[s - 1], 3, rng);
      else
        m.adwt.emplace(c_out, c_in, 3, rng);
      stages_.push_back(std::move(m));
      c_in = c_out;
    }
    head_ = LinearLayer<T>(num_classes, c_in, rng);
    for (long s = 0; s < 5; ++s)
      stages_[s].register_params(reg_, "stage" + std::to_string(s + 1));
    head_.register_params(reg_, "head");
  }

  ClsVariant(const ClsVariant&) = delete;
  ClsVariant& operator=(const ClsVariant&) = delete;

  Tensor<T> forward(const Tensor<T>& x, bool training, Trace<T>* trace = nullptr) {
    Tensor<T> t = pad_input(x);
    for (long s = 0; s < 5; ++s) {
      t = stages_[s].forward(t, training);
      trace_push(trace, "stage" + std::to_string(s + 1), t);
    }
    t = global_avg_pool(t);
    Tensor<T> logits = head_.forward(t);
    trace_push(trace, "head", logits);
    return logits;
  }

  ParamRegistry<T>& registry() { return reg_; }
  const BackboneConfig& config() const { return cfg_; }
  const std::array<StageKind, 5>& kinds() const { return kinds_; }
  long num_classes() const { return num_classes_; }
  long in_channels() const { return in_channels_; }

 private:
  Tensor<T> pad_input(const Tensor<T>& x) const {
    const Shape xs = x.shape();
    check_shape(xs.c == in_channels_, "classifier: expected " + std::to_string(in_channels_) +
                                          " input channels, got " + std::to_string(xs.c));
    const long th = ((xs.h + 31) / 32) * 32, tw = ((xs.w + 31) / 32) * 32;
    if (th == xs.h && tw == xs.w) return x;
    const long ph = th - xs.h, pw = tw - xs.w;
    return zero_pad2d(x, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2);
  }

  BackboneConfig cfg_;
  std::array<StageKind, 5> kinds_;
  long num_classes_;
  long in_channels_;
  std::vector<StageModule<T>> stages_;
  LinearLayer<T> head_;
  ParamRegistry<T> reg_;
};

template <typename T>
std::unique_ptr<ClsVariant<T>> build_cls_variant(const BackboneConfig& cfg,
                                                 std::array<StageKind, 5> kinds, long num_classes,
                                                 long in_channels, std::uint64_t seed) {
  return std::make_unique<ClsVariant<T>>(cfg, kinds, num_classes, in_channels, seed);
}

enum class FusionMode { kCmrf, kMidCat, kSrfOnly, kSrfCe };

inline const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::kCmrf: return "cmrf";
    case FusionMode::kMidCat: return "midcat";
    case FusionMode::kSrfOnly: return "srf";
    case FusionMode::kSrfCe: return "srf+ce";
  }
  return "?";
}

// Dual-stream backbone: CNN stages on the RGB stream, ADWT layers on the
// infrared stream, fusion at stages 1..3, shared CNN stages 4..5. The fused
// output of stage j feeds RGB stage j+1 while the infrared stream continues
// from the unscaled approximation subband.
template <typename T>
class DualBackbone {
 public:
  DualBackbone(const BackboneConfig& cfg, FusionMode mode, std::uint64_t seed,
               long ir_channels = 1)
      : cfg_(cfg), mode_(mode), ir_channels_(ir_channels) {
    cfg_.validate();
    Rng rng(seed);
    long rgb_in = 3;
    for (long j = 1; j <= 3; ++j) {
      const long c_r = cfg_.rgb_channels(j);
      rgb_stages_.emplace_back(c_r, rgb_in, cfg_.stage_blocks[j - 1], 3, rng);
      ir_stages_.emplace_back();
      const long c_t = 2 * ir_channels_;  // ADWT doubles, pass-through keeps C
      long fused_extra = 0;
      if (mode_ == FusionMode::kSrfOnly) {
        srf_.emplace_back(c_r, 3, rng);
        fused_extra = c_t;
      } else {
        const long c_e = cfg_.embed_channels(j);
        ce_.emplace_back(c_e, c_t, 2, rng);
        if (mode_ == FusionMode::kCmrf) csa_.emplace_back(c_r, c_e, c_r, 3, rng);
        if (mode_ == FusionMode::kCmrf || mode_ == FusionMode::kSrfCe)
          srf_.emplace_back(c_r, 3, rng);
        fused_extra = c_e;
      }
      rgb_in = c_r + fused_extra;
    }
    shared_stages_.emplace_back(cfg_.rgb_channels(4), rgb_in, cfg_.stage_blocks[3], 3, rng);
    shared_stages_.emplace_back(cfg_.rgb_channels(5), cfg_.rgb_channels(4), cfg_.stage_blocks[4], 3,
                                rng);
    for (long j = 0; j < 3; ++j) {
      const std::string p = "stage" + std::to_string(j + 1);
      rgb_stages_[j].register_params(reg_, p + ".rgb");
      ir_stages_[j].register_params(reg_, p + ".ir");
      if (j < static_cast<long>(ce_.size())) ce_[j].register_params(reg_, p + ".ce");
      if (j < static_cast<long>(csa_.size())) csa_[j].register_params(reg_, p + ".csa");
      if (j < static_cast<long>(srf_.size())) srf_[j].register_params(reg_, p + ".srf");
    }
    shared_stages_[0].register_params(reg_, "stage4");
    shared_stages_[1].register_params(reg_, "stage5");
  }

  DualBackbone(const DualBackbone&) = delete;
  DualBackbone& operator=(const DualBackbone&) = delete;

  // Returns the shared-tail features {I_O^4, I_O^5}.
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& rgb, const Tensor<T>& ir, bool training,
                                          Trace<T>* trace = nullptr) {
    const Shape rs = rgb.shape(), is = ir.shape();
    check_shape(rs.c == 3, "dual backbone: RGB input must have 3 channels, got " +
                               std::to_string(rs.c));
    check_shape(is.c == ir_channels_, "dual backbone: infrared input must have " +
                                          std::to_string(ir_channels_) + " channels");
    check_shape(rs.n == is.n && rs.h == is.h && rs.w == is.w,
                "dual backbone: modality shapes differ: " + rs.str() + " vs " + is.str());
    check_shape(rs.h % 32 == 0 && rs.w % 32 == 0,
                "dual backbone: spatial size must be divisible by 32, got " + rs.str());

    Tensor<T> r = rgb, a = ir;
    for (long j = 0; j < 3; ++j) {
      const std::string p = "stage" + std::to_string(j + 1);
      Tensor<T> i_r = rgb_stages_[j].forward(r, training);
      auto [i_t, a_next] = adwt_forward(a, ir_stages_[j]);
      trace_push(trace, p + ".i_r", i_r);
      trace_push(trace, p + ".i_t", i_t);
      Tensor<T> fused;
      switch (mode_) {
        case FusionMode::kCmrf:
          fused = cmrf_forward(i_r, i_t, ce_[j], csa_[j], srf_[j], training);
          break;
        case FusionMode::kMidCat:
          fused = concat_channels(i_r, ce_forward(i_t, ce_[j], training));
          break;
        case FusionMode::kSrfOnly:
          fused = concat_channels(i_r, srf_aggregate(i_t, srf_weights(i_r, srf_[j]), srf_[j].k_r));
          break;
        case FusionMode::kSrfCe: {
          Tensor<T> f_t = ce_forward(i_t, ce_[j], training);
          fused = concat_channels(i_r, srf_aggregate(f_t, srf_weights(i_r, srf_[j]), srf_[j].k_r));
          break;
        }
      }
      trace_push(trace, p + ".fused", fused);
      r = std::move(fused);
      a = std::move(a_next);
    }
    Tensor<T> io4 = shared_stages_[0].forward(r, training);
    trace_push(trace, "stage4", io4);
    Tensor<T> io5 = shared_stages_[1].forward(io4, training);
    trace_push(trace, "stage5", io5);
    return {io4, io5};
  }

  ParamRegistry<T>& registry() { return reg_; }
  const BackboneConfig& config() const { return cfg_; }
  FusionMode mode() const { return mode_; }

 private:
  BackboneConfig cfg_;
  FusionMode mode_;
  long ir_channels_;
  std::vector<CnnStage<T>> rgb_stages_;
  std::vector<AdwtState<T>> ir_stages_;
  std::vector<CeLayer<T>> ce_;
  std::vector<CsaLayer<T>> csa_;
  std::vector<SrfLayer<T>> srf_;
  std::vector<CnnStage<T>> shared_stages_;
  ParamRegistry<T> reg_;
};

template <typename T>
std::unique_ptr<DualBackbone<T>> build_dual_backbone(const BackboneConfig& cfg, FusionMode mode,
                                                     std::uint64_t seed, long ir_channels = 1) {
  return std::make_unique<DualBackbone<T>>(cfg, mode, seed, ir_channels);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> forward_dual(DualBackbone<T>& model, const Tensor<T>& rgb,
                                             const Tensor<T>& ir, bool training = false,
                                             Trace<T>* trace = nullptr) {
  return model.forward(rgb, ir, training, trace);
}

// Dual backbone with a classification head on the last shared stage.
template <typename T>
class DualClassifier {
 public:
  DualClassifier(const BackboneConfig& cfg, FusionMode mode, long num_classes, std::uint64_t seed)
      : backbone_(cfg, mode, seed) {
    Rng rng(seed ^ 0x5851f42d4c957f2dULL);
    head_ = LinearLayer<T>(num_classes, cfg.rgb_channels(5), rng);
    head_.register_params(backbone_.registry(), "head");
  }

  DualClassifier(const DualClassifier&) = delete;
  DualClassifier& operator=(const DualClassifier&) = delete;

  Tensor<T> forward(const Tensor<T>& rgb, const Tensor<T>& ir, bool training,
                    Trace<T>* trace = nullptr) {
    auto [io4, io5] = backbone_.forward(rgb, ir, training, trace);
    Tensor<T> logits = head_.forward(global_avg_pool(io5));
    trace_push(trace, "head", logits);
    return logits;
  }

  ParamRegistry<T>& registry() { return backbone_.registry(); }
  DualBackbone<T>& backbone() { return backbone_; }

 private:
  DualBackbone<T> backbone_;
  LinearLayer<T> head_;
};

}  // namespace wcc
