#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "wcc/backbone.hpp"
#include "wcc/checkpoint.hpp"

using namespace wcc;

namespace {

template <typename T>
bool bit_identical(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) return false;
  for (long i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

BackboneConfig small_cfg(double tau = 0.25) {
  BackboneConfig cfg;
  cfg.tau = tau;
  cfg.stage_blocks = {1, 1, 2, 2, 1};
  cfg.height = 32;
  cfg.width = 32;
  return cfg;
}

}  // namespace

TEST(BackboneConfig, ChannelPlanAndValidation) {
  BackboneConfig cfg;
  cfg.tau = 0.5;
  EXPECT_EQ(cfg.rgb_channels(1), 32);
  EXPECT_EQ(cfg.rgb_channels(5), 512);
  EXPECT_EQ(cfg.embed_channels(1), 16);
  EXPECT_EQ(cfg.embed_channels(3), 64);
  cfg.tau = 0.001;
  EXPECT_THROW(cfg.validate(), ShapeError);
}

TEST(DualBackbone, StageShapeContract) {
  BackboneConfig cfg;  // tau 0.5, blocks {1,2,4,3,2}
  cfg.height = 64;
  cfg.width = 64;
  DualBackbone<float> model(cfg, FusionMode::kCmrf, 7);
  Rng rng(1);
  Tensor<float> rgb = Tensor<float>::randn({1, 3, 64, 64}, rng);
  Tensor<float> ir = Tensor<float>::randn({1, 1, 64, 64}, rng);
  Trace<float> trace;
  auto [io4, io5] = forward_dual(model, rgb, ir, false, &trace);
  // fused channels at stage j: C_R^j + 2^j*16*tau, resolution 64/2^j
  for (long j = 1; j <= 3; ++j) {
    for (const auto& [name, t] : trace) {
      if (name == "stage" + std::to_string(j) + ".fused") {
        EXPECT_EQ(t.shape(),
                  (Shape{1, cfg.rgb_channels(j) + cfg.embed_channels(j), 64 >> j, 64 >> j}));
      }
      if (name == "stage" + std::to_string(j) + ".i_t") {
        EXPECT_EQ(t.shape(), (Shape{1, 2, 64 >> j, 64 >> j}));  // 1-channel input doubles
      }
    }
  }
  EXPECT_EQ(io4.shape(), (Shape{1, cfg.rgb_channels(4), 4, 4}));
  EXPECT_EQ(io5.shape(), (Shape{1, cfg.rgb_channels(5), 2, 2}));  // 512 channels at tau=0.5
  EXPECT_EQ(io5.shape().c, 512);
}

TEST(DualBackbone, InputPreconditions) {
  DualBackbone<float> model(small_cfg(), FusionMode::kCmrf, 7);
  Rng rng(2);
  Tensor<float> rgb = Tensor<float>::randn({1, 3, 32, 32}, rng);
  Tensor<float> ir = Tensor<float>::randn({1, 1, 32, 32}, rng);
  EXPECT_NO_THROW(forward_dual(model, rgb, ir));
  EXPECT_THROW(forward_dual(model, Tensor<float>::zeros({1, 4, 32, 32}), ir), ShapeError);
  EXPECT_THROW(forward_dual(model, Tensor<float>::zeros({1, 3, 48, 48}),
                            Tensor<float>::zeros({1, 1, 48, 48})),
               ShapeError);  // not divisible by 32
  EXPECT_THROW(forward_dual(model, rgb, Tensor<float>::zeros({1, 1, 64, 64})), ShapeError);
}

TEST(DualBackbone, DeterministicForward) {
  Rng rng(3);
  Tensor<float> rgb = Tensor<float>::randn({2, 3, 32, 32}, rng);
  Tensor<float> ir = Tensor<float>::randn({2, 1, 32, 32}, rng);
  DualBackbone<float> a(small_cfg(), FusionMode::kCmrf, 99);
  DualBackbone<float> b(small_cfg(), FusionMode::kCmrf, 99);
  auto [a4, a5] = forward_dual(a, rgb, ir);
  auto [b4, b5] = forward_dual(b, rgb, ir);
  EXPECT_TRUE(bit_identical(a5, b5));
  auto [a4r, a5r] = forward_dual(a, rgb, ir);  // same model, repeated
  EXPECT_TRUE(bit_identical(a5, a5r));
}

TEST(DualBackbone, ParamCountMonotoneInTau) {
  unsigned long long prev = 0;
  for (double tau : {0.125, 0.25, 0.5}) {
    DualBackbone<float> model(small_cfg(tau), FusionMode::kCmrf, 1);
    const unsigned long long total = model.registry().total_values();
    EXPECT_GT(total, prev) << "tau " << tau;
    prev = total;
  }
}

TEST(DualBackbone, GradientCompleteness) {
  DualClassifier<float> model(small_cfg(), FusionMode::kCmrf, 4, 5);
  Rng rng(4);
  Tensor<float> rgb = Tensor<float>::randn({2, 3, 32, 32}, rng);
  Tensor<float> ir = Tensor<float>::randn({2, 1, 32, 32}, rng);
  std::vector<long> labels = {0, 2};
  Tensor<float> loss = cross_entropy(model.forward(rgb, ir, true), std::span<const long>(labels));
  backward(loss);
  long trainable = 0;
  for (const auto& e : model.registry().entries()) {
    if (!e.param->trainable) continue;
    ++trainable;
    EXPECT_TRUE(e.param->value.has_grad()) << e.name;
  }
  EXPECT_GT(trainable, 20);  // lambdas, U, offset/fusion convs, BN affine, head...
  EXPECT_TRUE(model.registry().find("stage1.ir.lambda1")->value.has_grad());
  EXPECT_TRUE(model.registry().find("stage1.csa.u")->value.has_grad());
  EXPECT_TRUE(model.registry().find("stage1.csa.offset.weight")->value.has_grad());
}

TEST(ClsVariant, ShapesAndPadding) {
  auto model = build_cls_variant<float>(small_cfg(), swap_prefix(0), 10, 1, 5);
  Rng rng(5);
  Tensor<float> x = Tensor<float>::randn({2, 1, 28, 28}, rng);  // zero-padded to 32 internally
  Tensor<float> logits = model->forward(x, false);
  EXPECT_EQ(logits.shape(), (Shape{2, 10, 1, 1}));
  Trace<float> trace;
  model->forward(x, false, &trace);
  // resolution halves exactly once per stage
  long expect = 16;
  for (long s = 1; s <= 5; ++s) {
    for (const auto& [name, t] : trace)
      if (name == "stage" + std::to_string(s)) EXPECT_EQ(t.shape().h, expect) << name;
    expect /= 2;
  }
}

TEST(ClsVariant, SwapPatternValidation) {
  std::array<StageKind, 5> bad{StageKind::kCnn, StageKind::kAdwt, StageKind::kCnn, StageKind::kCnn,
                               StageKind::kCnn};
  EXPECT_THROW(build_cls_variant<float>(small_cfg(), bad, 10, 1, 1), ShapeError);
  for (long depth = 0; depth <= 5; ++depth)
    EXPECT_NO_THROW(build_cls_variant<float>(small_cfg(), swap_prefix(depth), 10, 1, 1));
  EXPECT_THROW(swap_prefix(6), ShapeError);
}

TEST(ClsVariant, ParamsAntiMonotoneInSwapDepth) {
  unsigned long long prev = ~0ull;
  for (long depth = 0; depth <= 5; ++depth) {
    auto model = build_cls_variant<float>(small_cfg(), swap_prefix(depth), 10, 1, 1);
    const unsigned long long params = model->registry().cost_model_values();
    EXPECT_LT(params, prev) << "depth " << depth;
    prev = params;
  }
}

TEST(ClsVariant, AdwtStagesForwardAndTrain) {
  auto model = build_cls_variant<float>(small_cfg(), swap_prefix(5), 10, 1, 3);
  Rng rng(6);
  Tensor<float> x = Tensor<float>::randn({4, 1, 28, 28}, rng);
  std::vector<long> labels = {0, 1, 2, 3};
  Tensor<float> loss = cross_entropy(model->forward(x, true), std::span<const long>(labels));
  backward(loss);
  sgd_step(model->registry(), 0.01f, 0.0f);
  // wavelet filters must stay fixed through the step
  auto* g = model->registry().find("stage1.adwt.g");
  ASSERT_NE(g, nullptr);
  EXPECT_FLOAT_EQ(g->value.data()[0], float(1.0 / std::sqrt(2.0)));
}

TEST(Checkpoint, SaveLoadRestoresBitExact) {
  const std::filesystem::path path = std::filesystem::temp_directory_path() / "wcc_test.ckpt";
  auto model = build_cls_variant<float>(small_cfg(0.125), swap_prefix(2), 10, 1, 11);
  Rng rng(7);
  Tensor<float> x = Tensor<float>::randn({2, 1, 28, 28}, rng);
  Tensor<float> before = model->forward(x, false);
  save_checkpoint(path, model->registry());

  // perturb every trainable value, then restore
  for (const auto& e : model->registry().entries())
    for (auto& v : e.param->value.data()) v += 0.25f;
  Tensor<float> perturbed = model->forward(x, false);
  EXPECT_FALSE(bit_identical(before, perturbed));
  load_checkpoint(path, model->registry());
  Tensor<float> after = model->forward(x, false);
  EXPECT_TRUE(bit_identical(before, after));
  std::filesystem::remove(path);
}

TEST(Checkpoint, ValidatesMagicAndShapes) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "wcc_bad.ckpt";
  auto model = build_cls_variant<float>(small_cfg(0.125), swap_prefix(0), 10, 1, 1);
  save_checkpoint(path, model->registry());

  // different architecture: shape mismatch must be rejected
  auto other = build_cls_variant<float>(small_cfg(0.25), swap_prefix(0), 10, 1, 1);
  EXPECT_THROW(load_checkpoint(path, other->registry()), DataError);

  // wrong magic
  {
    std::ofstream os(path, std::ios::binary);
    os.write("NOPE", 4);
  }
  EXPECT_THROW(load_checkpoint(path, model->registry()), DataError);
  std::filesystem::remove(path);
}

TEST(FusionModes, AllVariantsForwardAndDiffer) {
  Rng rng(8);
  Tensor<float> rgb = Tensor<float>::randn({2, 3, 32, 32}, rng);
  Tensor<float> ir = Tensor<float>::randn({2, 1, 32, 32}, rng);
  for (FusionMode mode :
       {FusionMode::kCmrf, FusionMode::kMidCat, FusionMode::kSrfOnly, FusionMode::kSrfCe}) {
    DualClassifier<float> model(small_cfg(), mode, 4, 21);
    Tensor<float> logits = model.forward(rgb, ir, false);
    EXPECT_EQ(logits.shape(), (Shape{2, 4, 1, 1})) << fusion_mode_name(mode);
    EXPECT_TRUE(logits.all_finite());
  }
}
