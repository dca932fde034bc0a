#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "wcc/data.hpp"
#include "wcc/synth.hpp"

using namespace wcc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "wcc_data_test") { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Idx, FixtureRoundTrip) {
  TempDir tmp;
  const fs::path img = tmp.path / "img", lab = tmp.path / "lab";
  std::vector<unsigned char> pixels(2 * 3 * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<unsigned char>(i * 10);
  const unsigned char labels[] = {7, 2};
  write_idx_images(img, 2, 3, 3, pixels);
  write_idx_labels(lab, labels);

  Dataset d = load_idx(img, lab);
  EXPECT_EQ(d.count, 2);
  EXPECT_EQ(d.channels, 1);
  EXPECT_EQ(d.height, 3);
  EXPECT_EQ(d.width, 3);
  EXPECT_EQ(d.labels[0], 7);
  EXPECT_EQ(d.labels[1], 2);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    EXPECT_NEAR(d.images[i], pixels[i] / 255.0f, 1e-7);
  EXPECT_EQ(d.num_classes(), 8);
}

TEST(Idx, ErrorKinds) {
  TempDir tmp;
  const fs::path img = tmp.path / "img", lab = tmp.path / "lab";
  std::vector<unsigned char> pixels(9, 1);
  const unsigned char one_label[] = {1};
  write_idx_images(img, 1, 3, 3, pixels);
  write_idx_labels(lab, one_label);

  // wrong magic
  {
    std::ofstream os(tmp.path / "badmagic", std::ios::binary);
    const unsigned char b[] = {0, 0, 8, 9, 0, 0, 0, 0};
    os.write(reinterpret_cast<const char*>(b), 8);
  }
  try {
    load_idx(tmp.path / "badmagic", lab);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind, DataError::Kind::kBadMagic);
  }

  // truncated pixel payload
  {
    std::ofstream os(tmp.path / "trunc", std::ios::binary);
    const unsigned char b[] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0, 3, 9, 9};
    os.write(reinterpret_cast<const char*>(b), sizeof(b));
  }
  try {
    load_idx(tmp.path / "trunc", lab);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind, DataError::Kind::kTruncated);
  }

  // image/label count mismatch
  const unsigned char two_labels[] = {1, 2};
  write_idx_labels(tmp.path / "lab2", two_labels);
  try {
    load_idx(img, tmp.path / "lab2");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind, DataError::Kind::kCountMismatch);
  }

  try {
    load_idx(tmp.path / "missing", lab);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind, DataError::Kind::kMissingFile);
  }
}

TEST(Cifar10, FixtureAndErrors) {
  TempDir tmp;
  const fs::path batch = tmp.path / "batch.bin";
  {
    std::ofstream os(batch, std::ios::binary);
    for (int rec = 0; rec < 2; ++rec) {
      os.put(rec == 0 ? 9 : 0);  // labels
      for (int i = 0; i < 3072; ++i) os.put(static_cast<char>((i + rec) % 256));
    }
  }
  const fs::path files[] = {batch};
  Dataset d = load_cifar10(files);
  EXPECT_EQ(d.count, 2);
  EXPECT_EQ(d.channels, 3);
  EXPECT_EQ(d.height, 32);
  EXPECT_EQ(d.width, 32);
  EXPECT_EQ(d.labels[0], 9);
  EXPECT_NEAR(d.images[0], 0.0f, 1e-7);
  EXPECT_NEAR(d.images[1], 1.0f / 255.0f, 1e-7);

  {
    std::ofstream os(tmp.path / "short.bin", std::ios::binary);
    os.write("abc", 3);
  }
  const fs::path bad[] = {tmp.path / "short.bin"};
  try {
    load_cifar10(bad);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind, DataError::Kind::kBadFormat);
  }
}

TEST(Normalization, StatsAndApply) {
  Dataset d;
  d.count = 2;
  d.channels = 2;
  d.height = d.width = 2;
  d.images = {1, 1, 1, 1, 5, 5, 5, 5,   // sample 0: ch0 all 1, ch1 all 5
              3, 3, 3, 3, 9, 9, 9, 9};  // sample 1: ch0 all 3, ch1 all 9
  d.labels = {0, 1};
  const NormStats s = compute_norm_stats(d);
  EXPECT_NEAR(s.mean[0], 2.0f, 1e-6);
  EXPECT_NEAR(s.mean[1], 7.0f, 1e-6);
  normalize(d, s);
  double sum0 = 0, sq0 = 0;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 4; ++i) {
      sum0 += d.images[n * 8 + i];
      sq0 += d.images[n * 8 + i] * d.images[n * 8 + i];
    }
  EXPECT_NEAR(sum0 / 8.0, 0.0, 1e-6);
  EXPECT_NEAR(sq0 / 8.0, 1.0, 1e-5);
}

TEST(Synth, SeedReproducibility) {
  SynthPairSpec spec;
  spec.seed = 5;
  spec.count = 16;
  SynthPairs a = synth_multispectral(spec);
  SynthPairs b = synth_multispectral(spec);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(a.ir, b.ir);
  EXPECT_EQ(a.shifts, b.shifts);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Synth, ZeroShiftRangeAlignsModalities) {
  SynthPairSpec spec;
  spec.seed = 6;
  spec.count = 8;
  spec.shift_range = 0.0;
  SynthPairs s = synth_multispectral(spec);
  EXPECT_EQ(s.ir, s.ir_aligned);
  for (float v : s.shifts) EXPECT_EQ(v, 0.0f);

  // same seed, nonzero range: identical geometry, shifted infrared
  SynthPairSpec spec2 = spec;
  spec2.shift_range = 2.0;
  SynthPairs s2 = synth_multispectral(spec2);
  EXPECT_EQ(s.rgb, s2.rgb);
  EXPECT_EQ(s.ir_aligned, s2.ir_aligned);
}

TEST(Synth, CrossCorrelationRecoversStoredShifts) {
  SynthPairSpec spec;
  spec.seed = 7;
  spec.count = 24;
  spec.shift_range = 2.0;
  spec.integer_shifts = true;
  spec.ir_noise = 0.0;  // noiseless for an exact peak
  SynthPairs s = synth_multispectral(spec);
  const long S = s.canvas;
  for (long n = 0; n < s.count; ++n) {
    const float* ir = s.ir.data() + n * S * S;
    const float* al = s.ir_aligned.data() + n * S * S;
    double best = -1;
    long best_ly = 99, best_lx = 99;
    for (long ly = -3; ly <= 3; ++ly)
      for (long lx = -3; lx <= 3; ++lx) {
        double corr = 0;
        for (long y = 0; y < S; ++y)
          for (long x = 0; x < S; ++x) {
            const long sy = y - ly, sx = x - lx;
            if (sy < 0 || sy >= S || sx < 0 || sx >= S) continue;
            corr += double(ir[y * S + x]) * al[sy * S + sx];
          }
        if (corr > best) {
          best = corr;
          best_ly = ly;
          best_lx = lx;
        }
      }
    EXPECT_EQ(best_ly, static_cast<long>(s.shifts[n * 2 + 0])) << "pair " << n;
    EXPECT_EQ(best_lx, static_cast<long>(s.shifts[n * 2 + 1])) << "pair " << n;
  }
}

TEST(Synth, ContainerRoundTrip) {
  TempDir tmp;
  SynthPairSpec spec;
  spec.seed = 8;
  spec.count = 6;
  spec.integer_shifts = false;
  SynthPairs s = synth_multispectral(spec);
  const fs::path path = tmp.path / "pairs.wccd";
  save_synth_pairs(path, s);
  SynthPairs r = load_synth_pairs(path);
  EXPECT_EQ(r.count, s.count);
  EXPECT_EQ(r.rgb, s.rgb);
  EXPECT_EQ(r.ir, s.ir);
  EXPECT_EQ(r.labels, s.labels);
  EXPECT_EQ(r.shifts, s.shifts);
}

TEST(Synth, BalancedDeterministicLabels) {
  SynthPairSpec spec;
  spec.seed = 9;
  spec.count = 40;
  spec.num_classes = 4;
  SynthPairs s = synth_multispectral(spec);
  long counts[4] = {0, 0, 0, 0};
  for (long l : s.labels) ++counts[l];
  for (long c = 0; c < 4; ++c) EXPECT_EQ(counts[c], 10);
}
