// Command-line front end: gradient checks, stage-interchange classification
// training, analytic complexity reports, stage microbenchmarks, the offset
// recovery demo and synthetic pair generation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wcc/wcc.hpp"

namespace fs = std::filesystem;
using namespace wcc;

namespace {

BackboneConfig cls_config(double tau, const KvConfig* kv = nullptr) {
  BackboneConfig cfg;
  cfg.tau = tau;
  cfg.stage_blocks = {1, 1, 2, 2, 1};  // desk-scale classifier depth
  cfg.height = 32;
  cfg.width = 32;
  if (kv) {
    cfg.tau = kv->get_double("tau", cfg.tau);
    cfg.height = kv->get_long("height", cfg.height);
    cfg.width = kv->get_long("width", cfg.width);
    auto blocks = kv->get_long_list("blocks", {cfg.stage_blocks.begin(), cfg.stage_blocks.end()});
    check_shape(blocks.size() == 5, "config: 'blocks' needs exactly 5 entries");
    std::copy(blocks.begin(), blocks.end(), cfg.stage_blocks.begin());
  }
  return cfg;
}

StageSpec stage_spec_from(const KvConfig& kv) {
  StageSpec s;
  s.height = kv.get_long("height", s.height);
  s.width = kv.get_long("width", s.width);
  s.stage_j = kv.get_long("stage_j", s.stage_j);
  s.kernel = kv.get_long("kernel", s.kernel);
  s.c_in = kv.get_long("c_in", s.c_in);
  s.c_out = kv.get_long("c_out", s.c_out);
  s.blocks = kv.get_long("blocks", s.blocks);
  return s;
}

int run_gradcheck(const std::string& layer, double eps) {
  auto cases = run_gradcheck_suite(layer, eps);
  bool all_pass = true;
  std::printf("%-28s %-12s %-8s %s\n", "layer", "max_rel_err", "tol", "status");
  for (const auto& c : cases) {
    std::printf("%-28s %-12.3e %-8.0e %s\n", c.name.c_str(), c.max_err, c.tol,
                c.pass ? "PASS" : "FAIL");
    all_pass = all_pass && c.pass;
  }
  if (!all_pass) throw NumericError("gradcheck failed");
  return 0;
}

struct TrainClsArgs {
  std::string dataset = "mnist";
  long swap_stages = 0;
  double tau = 0.25;
  long epochs = 10;
  std::uint64_t seed = 0;
  std::string out_dir;
  double lr = 0.001;
  double weight_decay = 0.02;
  long batch = 64;
  long limit = 0;
  std::string data_dir;
};

int run_train_cls(const TrainClsArgs& a) {
  const fs::path root = a.data_dir.empty() ? data_root() : fs::path(a.data_dir);
  DatasetPair data;
  if (a.dataset == "mnist" || a.dataset == "fashion") {
    data = load_idx_dataset(root / a.dataset);
  } else if (a.dataset == "cifar10") {
    std::vector<fs::path> train_files;
    for (int i = 1; i <= 5; ++i)
      train_files.push_back(root / "cifar10" / ("data_batch_" + std::to_string(i) + ".bin"));
    data.train = load_cifar10(train_files);
    const fs::path test_file[] = {root / "cifar10" / "test_batch.bin"};
    data.test = load_cifar10(test_file);
  } else {
    throw UsageError("train-cls: unknown dataset '" + a.dataset + "' (mnist|fashion|cifar10)");
  }
  if (a.limit > 0) data.train = data.train.subset(a.limit);

  const NormStats stats = compute_norm_stats(data.train);
  normalize(data.train, stats);
  normalize(data.test, stats);

  BackboneConfig cfg = cls_config(a.tau);
  cfg.height = data.train.height <= 32 ? 32 : data.train.height;
  cfg.width = data.train.width <= 32 ? 32 : data.train.width;
  auto model = build_cls_variant<float>(cfg, swap_prefix(a.swap_stages), data.train.num_classes(),
                                        data.train.channels, a.seed);

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.lr = a.lr;
  tc.weight_decay = a.weight_decay;
  tc.batch = a.batch;
  tc.seed = a.seed;

  const fs::path out = a.out_dir;
  fs::create_directories(out);
  save_norm_stats(out / "norm_stats.txt", stats);
  std::cout << "dataset=" << a.dataset << " train=" << data.train.count
            << " test=" << data.test.count << " swap=" << a.swap_stages << " tau=" << a.tau
            << "\n";
  auto history = train_classifier<float>(*model, data.train, data.test, tc, out, &std::cout);
  std::cout << "metrics: " << (out / "metrics.csv").string() << "\n";
  std::cout << "checkpoint: " << (out / "best.ckpt").string() << "\n";
  return 0;
}

int run_complexity(const std::string& config_file, long swap, const std::string& format) {
  std::optional<KvConfig> kv;
  if (!config_file.empty()) kv = KvConfig::parse_file(config_file);
  BackboneConfig cfg = cls_config(0.25, kv ? &*kv : nullptr);
  const long in_channels = kv ? kv->get_long("in_channels", 1) : 1;
  const long num_classes = kv ? kv->get_long("num_classes", 10) : 10;
  auto rows = model_cost_rows(cfg, swap_prefix(swap), in_channels, num_classes);
  if (format == "csv")
    std::cout << complexity_csv(rows);
  else if (format == "table")
    std::cout << complexity_table(rows);
  else
    throw UsageError("complexity: unknown format '" + format + "' (csv|table)");
  return 0;
}

int run_bench(const std::string& spec_file, const std::string& kind, long repeats) {
  const StageSpec spec = stage_spec_from(KvConfig::parse_file(spec_file));
  StageKind k;
  if (kind == "cnn")
    k = StageKind::kCnn;
  else if (kind == "adwt")
    k = StageKind::kAdwt;
  else
    throw UsageError("bench: unknown kind '" + kind + "' (cnn|adwt)");
  const BenchReport r = bench_stage(spec, k, repeats);
  std::cout << bench_csv_header() << "\n" << bench_csv_row(r) << "\n";
  std::printf("%s stage %ldx%ld j=%ld c=%ld->%ld blocks=%ld: median %.3f ms (p10 %.3f, p90 %.3f)\n",
              stage_kind_name(k), spec.height, spec.width, spec.stage_j, spec.c_in, spec.c_out,
              spec.blocks, r.stats.median_ns / 1e6, r.stats.p10_ns / 1e6, r.stats.p90_ns / 1e6);
  return 0;
}

struct FuseDemoArgs {
  std::uint64_t seed = 1;
  double shift_range = 2.0;
  long steps = 200;
  long count = 48;
  double lr = 0.2;
};

int run_fuse_demo(const FuseDemoArgs& a) {
  OffsetRecoverySpec spec;
  spec.seed = a.seed;
  spec.shift_range = a.shift_range;
  spec.steps = a.steps;
  spec.count = a.count;
  spec.lr = a.lr;
  const OffsetRecoveryResult r = run_offset_recovery(spec, &std::cout);
  std::printf("baseline_mse=%.6f trained_mse=%.6f reduction=%.1f%% %s\n", r.baseline_err,
              r.trained_err, 100.0 * r.reduction(),
              r.reduction() >= 0.5 ? "(>=50% target met)" : "(below 50% target)");
  return 0;
}

int run_synth(const std::string& spec_file, const std::string& out_dir) {
  const KvConfig kv = KvConfig::parse_file(spec_file);
  SynthPairSpec spec;
  spec.seed = static_cast<std::uint64_t>(kv.get_long("seed", 1));
  spec.count = kv.get_long("count", spec.count);
  spec.canvas = kv.get_long("canvas", spec.canvas);
  spec.num_classes = kv.get_long("num_classes", spec.num_classes);
  spec.rgb_noise = kv.get_double("rgb_noise", spec.rgb_noise);
  spec.contour_width = kv.get_double("contour_width", spec.contour_width);
  spec.shift_range = kv.get_double("shift_range", spec.shift_range);
  spec.integer_shifts = kv.get_bool("integer_shifts", spec.integer_shifts);
  spec.ir_noise = kv.get_double("ir_noise", spec.ir_noise);
  SynthPairs pairs = synth_multispectral(spec);
  fs::create_directories(out_dir);
  const fs::path out = fs::path(out_dir) / "pairs.wccd";
  save_synth_pairs(out, pairs);
  std::cout << "wrote " << pairs.count << " pairs (" << pairs.canvas << "x" << pairs.canvas
            << ", " << pairs.num_classes << " classes) to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavelet-integrated dual-stream feature extraction and fusion toolkit"};
  app.require_subcommand(1);

  auto* gc = app.add_subcommand("gradcheck", "validate backward passes by central differences");
  std::string gc_layer = "all";
  double gc_eps = 1e-5;
  gc->add_option("--layer", gc_layer, "adwt|ce|csa|srf|all");
  gc->add_option("--eps", gc_eps, "finite-difference step");

  auto* tc = app.add_subcommand("train-cls", "train a stage-interchange classifier");
  TrainClsArgs ta;
  tc->add_option("--dataset", ta.dataset, "mnist|fashion|cifar10")->required();
  tc->add_option("--swap-stages", ta.swap_stages, "ADWT prefix depth 0..5")
      ->check(CLI::Range(0, 5));
  tc->add_option("--tau", ta.tau, "channel width scale");
  tc->add_option("--epochs", ta.epochs, "training epochs");
  tc->add_option("--seed", ta.seed, "RNG seed");
  tc->add_option("--out", ta.out_dir, "output directory")->required();
  tc->add_option("--lr", ta.lr, "learning rate");
  tc->add_option("--weight-decay", ta.weight_decay, "weight decay");
  tc->add_option("--batch", ta.batch, "batch size");
  tc->add_option("--limit", ta.limit, "cap training samples (0 = all)");
  tc->add_option("--data-dir", ta.data_dir, "dataset root (default $WCC_DATA_DIR or ./data)");

  auto* cx = app.add_subcommand("complexity", "analytic parameter/FLOP report");
  std::string cx_config, cx_format = "table";
  long cx_swap = 0;
  cx->add_option("--config", cx_config, "backbone config file");
  cx->add_option("--swap-stages", cx_swap, "ADWT prefix depth 0..5")->check(CLI::Range(0, 5));
  cx->add_option("--format", cx_format, "csv|table");

  auto* bn = app.add_subcommand("bench", "wall-clock benchmark of one stage");
  std::string bn_spec, bn_kind = "cnn";
  long bn_repeats = 20;
  bn->add_option("--stage-spec", bn_spec, "stage spec file")->required();
  bn->add_option("--kind", bn_kind, "cnn|adwt");
  bn->add_option("--repeats", bn_repeats, "timed repetitions");

  auto* fd = app.add_subcommand("fuse-demo", "offset recovery under known misalignment");
  FuseDemoArgs fa;
  fd->add_option("--seed", fa.seed, "RNG seed");
  fd->add_option("--shift-range", fa.shift_range, "max |shift| in pixels");
  fd->add_option("--steps", fa.steps, "training steps");
  fd->add_option("--count", fa.count, "number of pairs");
  fd->add_option("--lr", fa.lr, "learning rate");

  auto* sy = app.add_subcommand("synth", "generate a synthetic multispectral pair dataset");
  std::string sy_spec, sy_out;
  sy->add_option("--spec", sy_spec, "pair spec file")->required();
  sy->add_option("--out", sy_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gc->parsed()) return run_gradcheck(gc_layer, gc_eps);
    if (tc->parsed()) return run_train_cls(ta);
    if (cx->parsed()) return run_complexity(cx_config, cx_swap, cx_format);
    if (bn->parsed()) return run_bench(bn_spec, bn_kind, bn_repeats);
    if (fd->parsed()) return run_fuse_demo(fa);
    if (sy->parsed()) return run_synth(sy_spec, sy_out);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
