#include "augseg/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "augseg/autodiff.hpp"
#include "augseg/error.hpp"
#include "augseg/featviz.hpp"
#include "augseg/fusion.hpp"
#include "augseg/io.hpp"
#include "augseg/metrics.hpp"
#include "augseg/ops.hpp"
#include "augseg/trainer.hpp"
#include "augseg/wavelet.hpp"

namespace augseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<std::uint64_t> env_seed() {
  if (const char* env = std::getenv("AUGSEG_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return std::optional<std::uint64_t>(v);
    } catch (const std::exception&) {
    }
    throw InputError(std::string("AUGSEG_SEED is not an unsigned integer: '") + env + "'");
  }
  return std::nullopt;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

// Config file: {"train": {...}, "network": {...}}; both parts optional.
void load_configs(const std::string& path, train::TrainConfig& tc, model::NetworkConfig& nc) {
  if (path.empty()) return;
  const json j = read_json_file(path);
  try {
    if (j.contains("train")) tc = j.at("train").get<train::TrainConfig>();
    if (j.contains("network")) nc = j.at("network").get<model::NetworkConfig>();
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what(), 0);
  } catch (const ContractError& e) {
    throw InputError(path + ": " + e.what());
  }
}

// Flag values that break a contract are the caller's mistake.
template <typename F>
void as_input(F&& f) {
  try {
    f();
  } catch (const ContractError& e) {
    throw InputError(e.what());
  } catch (const DimensionError& e) {
    throw InputError(e.what());
  }
}

std::string tensor_path(const std::string& prefix, const std::string& band) { return prefix + "_" + band + ".daug"; }

bool check(std::ostream& out, const std::string& name, bool ok) {
  out << (ok ? "ok   " : "FAIL ") << name << '\n';
  return ok;
}

}  // namespace

bool run_selftest(std::ostream& out) {
  std::mt19937_64 rng(2024);
  auto random = [&](Shape s, DType dt = DType::Float64) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(numel_of(s));
    for (auto& x : v) x = u(rng);
    return Tensor(std::move(s), std::move(v), dt);
  };
  bool all = true;

  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    Tensor f = random({2, 3, 5 + static_cast<std::size_t>(t % 4), 6 + static_cast<std::size_t>(t % 3)});
    worst = std::max(worst, max_abs_diff(wavelet::haar_idwt2(wavelet::haar_dwt2(f)), f));
  }
  all &= check(out, "haar perfect reconstruction (float64, < 1e-10)", worst < 1e-10);

  {
    wavelet::WtAugConfig keep;
    keep.keep_prob = {1, 1, 1, 1};
    Tensor f = random({1, 4, 8, 8}, DType::Float32);
    all &= check(out, "wt-aug identity at keep_prob 1", max_abs_diff(wavelet::wt_aug(f, keep, rng), f) < 1e-5);
  }
  {
    Tensor q({1, 1, 1}, {1.0}, DType::Float64), k({1, 2, 1}, {1.0, -1.0}, DType::Float64);
    Tensor a = fusion::attention_weights(q, k, 1);
    all &= check(out, "attention worked example 0.88080", std::abs(a[0] - 0.88080) < 1e-4 && std::abs(a[0] + a[1] - 1) < 1e-12);
  }
  {
    Tensor logits = random({1, 3, 3, 3});
    LabelMask target{Tensor({1, 3, 3}, {0, 1, 2, 2, 1, 0, 0, 0, 1}, DType::UInt8), 3};
    const double err = finite_diff_check([&](const Tensor& x) { return combined_loss(x, target); }, logits);
    all &= check(out, "combined loss gradient vs finite differences (< 1e-4)", err < 1e-4);
  }
  {
    Tensor dec = random({1, 4, 2, 2}), enc = random({1, 3, 2, 2});
    auto p = fusion::FusionParams::init(4, 3, 4, 2, 2, rng, DType::Float64);
    p.w_o = random({4, 4});
    const double err = finite_diff_check([&](const Tensor& x) { return sum(mul(fusion::cg_fuse(x, enc, p), x)); }, dec);
    all &= check(out, "cg-fuse gradient vs finite differences (< 1e-4)", err < 1e-4);
  }
  {
    std::vector<double> d{0.1, 0.2, 0.3, 0.4, 0.5};
    all &= check(out, "wilcoxon n=5 all positive p = 0.0625", metrics::wilcoxon_signed_rank(d).p == 0.0625);
    LabelMask a{Tensor({1, 1, 5}, {1, 0, 0, 0, 0}, DType::UInt8), 2};
    LabelMask b{Tensor({1, 1, 5}, {0, 0, 0, 1, 0}, DType::UInt8), 2};
    all &= check(out, "hd95 of single pixels 3 apart", metrics::hd95(a, b, 1) == 3.0 && metrics::hd95(a, a, 1) == 0.0);
  }
  {
    Tensor t = random({2, 3, 4}, DType::Float32);
    std::stringstream buf;
    io::write_daug(buf, t);
    all &= check(out, "DAUG round trip", bit_equal(io::read_daug(buf), t));
  }
  out << (all ? "selftest passed" : "selftest FAILED") << '\n';
  return all;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"augseg: wavelet feature augmentation and guided fusion for few-shot segmentation", "augseg"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool seed_given = false;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Random seed (falls back to $AUGSEG_SEED, then 0)")->each([&](const std::string&) {
      seed_given = true;
    });
  };
  std::function<void()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic segmentation dataset (PGM pairs + manifest.json)");
  std::size_t count = 20, test_count = 50, size = 64, classes = 3;
  std::string out_dir, corrupt_kind;
  data::CorruptionSpec corrupt_spec;
  synth->add_option("--count", count, "Training samples")->capture_default_str();
  synth->add_option("--test-count", test_count, "Test samples")->capture_default_str();
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--size", size, "Image height and width")->capture_default_str();
  synth->add_option("--classes", classes, "Classes including background")->capture_default_str();
  synth->add_option("--corrupt", corrupt_kind, "Corrupt every image: brightness, motion_blur, poisson, rand_mask");
  synth->add_option("--brightness", corrupt_spec.brightness_factor, "Brightness factor")->capture_default_str();
  synth->add_option("--blur-length", corrupt_spec.blur_length, "Motion blur length (pixels)")->capture_default_str();
  synth->add_option("--poisson-scale", corrupt_spec.poisson_scale, "Poisson counts per unit intensity")->capture_default_str();
  synth->add_option("--mask-prob", corrupt_spec.mask_prob, "Random pixel mask probability")->capture_default_str();
  add_seed(synth);
  synth->callback([&] {
    action = [&] {
      data::SynthConfig cfg;
      cfg.height = cfg.width = size;
      cfg.num_classes = classes;
      std::optional<data::CorruptionSpec> spec;
      as_input([&] {
        cfg.validate();
        if (!corrupt_kind.empty()) {
          corrupt_spec.kind = data::corruption_kind_from_string(corrupt_kind);
          corrupt_spec.validate();
          spec = corrupt_spec;
        }
      });
      auto m = data::write_dataset(out_dir, count, test_count, seed, cfg);
      if (spec) {
        for (const auto& e : m.entries) {
          auto s = spec.value();
          s.seed = seed ^ (e.seed * 0x9E3779B97F4A7C15ull);
          const auto img = io::from_gray(io::load_pgm(m.root / e.image));
          io::save_pgm(m.root / e.image, io::to_gray(data::corrupt(img, s)));
        }
      }
      out << "wrote " << m.entries.size() << " samples to " << out_dir << '\n';
    };
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Few-shot training with a frozen encoder");
  std::string data_dir, ckpt_dir, config_path, log_path, arm_name;
  std::optional<std::size_t> epochs, few_shot, batch;
  std::optional<double> lr;
  bool no_cg = false;
  train_cmd->add_option("--data", data_dir, "Dataset directory or manifest.json")->required();
  train_cmd->add_option("--out", ckpt_dir, "Checkpoint directory")->required();
  train_cmd->add_option("--config", config_path, "JSON config with optional \"train\" and \"network\" objects");
  train_cmd->add_option("--log", log_path, "Per-epoch CSV log (default: <out>/log.csv)");
  train_cmd->add_option("--epochs", epochs, "Epochs");
  train_cmd->add_option("--lr", lr, "Adam learning rate");
  train_cmd->add_option("--few-shot", few_shot, "Labeled samples to train on");
  train_cmd->add_option("--batch", batch, "Batch size");
  train_cmd->add_option("--arm", arm_name, "Augmentation: none, image_level, feature_spatial, feature_wavelet");
  train_cmd->add_flag("--no-cg", no_cg, "Disable contextual-guided fusion");
  add_seed(train_cmd);
  auto apply_train_flags = [&](train::TrainConfig& tc) {
    if (epochs) tc.epochs = *epochs;
    if (lr) tc.lr = *lr;
    if (few_shot) tc.few_shot = *few_shot;
    if (batch) tc.batch_size = *batch;
    if (!arm_name.empty()) tc.arm = model::augment_arm_from_string(arm_name);
    if (no_cg) tc.cg_fuse = false;
    if (seed_given) tc.seed = seed;
    tc.validate();
  };
  train_cmd->callback([&] {
    action = [&] {
      train::TrainConfig tc;
      model::NetworkConfig nc;
      load_configs(config_path, tc, nc);
      as_input([&] { apply_train_flags(tc); });
      const auto manifest = data::load_manifest(data_dir);
      const auto set = train::load_split(manifest, "train");
      auto result = train::train(tc, nc, set);
      auto ckpt = result.checkpoint(tc);
      model::save_checkpoint(ckpt_dir, ckpt);
      std::ostringstream log;
      train::write_log_csv(log, result.log);
      write_text(log_path.empty() ? fs::path(ckpt_dir) / "log.csv" : fs::path(log_path), log.str());
      const auto& last = result.log.back();
      out << "trained " << tc.epochs << " epochs on " << result.few_shot_ids.size() << " samples; final loss "
          << last.loss << ", train dice " << last.train_dice << '\n';
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (Dice and HD95 per class and sample)");
  std::string split = "test", metrics_out;
  eval_cmd->add_option("--checkpoint", ckpt_dir, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory or manifest.json")->required();
  eval_cmd->add_option("--split", split, "Split to evaluate")->capture_default_str();
  eval_cmd->add_option("--out", metrics_out, "Metrics CSV (default: stdout)");
  eval_cmd->callback([&] {
    action = [&] {
      const auto net = model::restore(model::load_checkpoint(ckpt_dir));
      const auto manifest = data::load_manifest(data_dir);
      const auto set = train::load_split(manifest, split);
      if (set.samples.empty()) throw InputError("split '" + split + "' is empty");
      const auto records = train::evaluate(net, set);
      std::ostringstream csv;
      metrics::write_metrics_csv(csv, records);
      if (metrics_out.empty()) {
        out << csv.str();
      } else {
        write_text(metrics_out, csv.str());
        double d = 0;
        for (const auto& r : records) d += r.mean_dice;
        out << "mean foreground dice " << d / static_cast<double>(records.size()) << " over " << records.size()
            << " samples\n";
      }
    };
  });

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate several arms over several seeds, with Wilcoxon tests");
  std::vector<std::string> arm_list{"none", "image_level", "feature_spatial", "feature_wavelet"};
  std::vector<std::uint64_t> seeds;
  std::string csv_out, json_out;
  ablate->add_option("--data", data_dir, "Dataset directory or manifest.json")->required();
  ablate->add_option("--arms", arm_list, "Arms as <arm>[/nocg]")->delimiter(',')->capture_default_str();
  ablate->add_option("--seeds", seeds, "Seeds (default: config seeds)")->delimiter(',');
  ablate->add_option("--config", config_path, "JSON config with optional \"train\" and \"network\" objects");
  ablate->add_option("--epochs", epochs, "Epochs per run");
  ablate->add_option("--few-shot", few_shot, "Labeled samples per run");
  ablate->add_option("--out-csv", csv_out, "Summary table CSV (default: stdout)");
  ablate->add_option("--out-json", json_out, "Wilcoxon report JSON");
  bool quiet = false;
  ablate->add_flag("--quiet", quiet, "No per-run progress lines");
  ablate->callback([&] {
    action = [&] {
      train::TrainConfig tc;
      model::NetworkConfig nc;
      load_configs(config_path, tc, nc);
      std::vector<train::ArmSpec> arms;
      as_input([&] {
        if (epochs) tc.epochs = *epochs;
        if (few_shot) tc.few_shot = *few_shot;
        if (!seeds.empty()) tc.seeds = seeds;
        tc.validate();
        for (const auto& a : arm_list) arms.push_back(train::parse_arm(a));
      });
      const auto manifest = data::load_manifest(data_dir);
      const auto report = train::ablation_run(arms, tc, nc, train::load_split(manifest, "train"),
                                              train::load_split(manifest, "test"), quiet ? nullptr : &err);
      std::ostringstream csv;
      train::write_ablation_csv(csv, report);
      if (csv_out.empty()) {
        out << csv.str();
      } else {
        write_text(csv_out, csv.str());
      }
      const auto j = train::wilcoxon_report(report).dump(2) + "\n";
      if (json_out.empty()) {
        out << j;
      } else {
        write_text(json_out, j);
      }
    };
  });

  // dwt
  auto* dwt = app.add_subcommand("dwt", "Haar decomposition of a [N,C,H,W] DAUG tensor into four sub-band files");
  std::string in_path, out_prefix;
  dwt->add_option("--in", in_path, "Input DAUG tensor")->required();
  dwt->add_option("--out-prefix", out_prefix, "Writes <prefix>_LL/LH/HL/HH.daug")->required();
  dwt->callback([&] {
    action = [&] {
      const Tensor f = io::load_daug(in_path);
      wavelet::SubbandSet s;
      as_input([&] { s = wavelet::haar_dwt2(f); });
      io::save_daug(tensor_path(out_prefix, "LL"), s.ll);
      io::save_daug(tensor_path(out_prefix, "LH"), s.lh);
      io::save_daug(tensor_path(out_prefix, "HL"), s.hl);
      io::save_daug(tensor_path(out_prefix, "HH"), s.hh);
      out << "wrote 4 sub-bands of shape " << shape_string(s.ll.shape()) << '\n';
    };
  });

  // wt-aug
  auto* wtaug = app.add_subcommand("wt-aug", "Wavelet-domain masking augmentation of a DAUG feature map");
  std::string out_path;
  std::vector<double> keep{0.8, 0.8, 0.8, 0.8};
  bool per_channel = false;
  wtaug->add_option("--in", in_path, "Input [N,C,H,W] DAUG tensor")->required();
  wtaug->add_option("--out", out_path, "Output DAUG tensor")->required();
  wtaug->add_option("--keep", keep, "Keep probabilities for LL,LH,HL,HH")->delimiter(',')->expected(4)->capture_default_str();
  wtaug->add_flag("--per-channel", per_channel, "Independent masks per batch item and channel");
  add_seed(wtaug);
  wtaug->callback([&] {
    action = [&] {
      wavelet::WtAugConfig cfg;
      std::copy(keep.begin(), keep.end(), cfg.keep_prob.begin());
      cfg.seed = seed;
      cfg.channel_shared = !per_channel;
      as_input([&] { cfg.validate(); });
      const Tensor f = io::load_daug(in_path);
      std::mt19937_64 rng(cfg.seed);
      Tensor g;
      as_input([&] { g = wavelet::wt_aug(f, cfg, rng); });
      io::save_daug(out_path, g);
      out << "wrote " << shape_string(g.shape()) << " to " << out_path << '\n';
    };
  });

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "Dice and HD95 between two label-mask PGMs");
  std::string pred_path, gt_path, sample_id = "sample";
  double spacing = 1.0;
  metrics_cmd->add_option("--pred", pred_path, "Predicted mask PGM (pixel value = class)")->required();
  metrics_cmd->add_option("--gt", gt_path, "Reference mask PGM")->required();
  metrics_cmd->add_option("--classes", classes, "Classes including background")->capture_default_str();
  metrics_cmd->add_option("--spacing", spacing, "Pixel spacing for HD95")->capture_default_str();
  metrics_cmd->add_option("--id", sample_id, "Sample identifier in the CSV")->capture_default_str();
  metrics_cmd->add_option("--out", metrics_out, "CSV output (default: stdout)");
  metrics_cmd->callback([&] {
    action = [&] {
      const auto pred = data::load_mask_pgm(pred_path, classes);
      const auto gt = data::load_mask_pgm(gt_path, classes);
      if (pred.values.shape() != gt.values.shape()) throw InputError("masks differ in size");
      if (!(spacing > 0.0)) throw InputError("spacing must be positive");
      std::vector<metrics::MetricsRecord> recs{metrics::evaluate_sample(pred, gt, sample_id, spacing)};
      std::ostringstream csv;
      metrics::write_metrics_csv(csv, recs, false);
      if (metrics_out.empty()) {
        out << csv.str();
      } else {
        write_text(metrics_out, csv.str());
      }
    };
  });

  // featviz
  auto* featviz = app.add_subcommand("featviz", "PCA color rendering of a [1,C,H,W] DAUG feature map (PPM)");
  std::size_t k = 3;
  featviz->add_option("--in", in_path, "Input DAUG tensor")->required();
  featviz->add_option("--out", out_path, "Output PPM")->required();
  featviz->add_option("--k", k, "Components (1-3)")->check(CLI::Range(1, 3))->capture_default_str();
  featviz->callback([&] {
    action = [&] {
      const Tensor f = io::load_daug(in_path);
      io::RgbImage img;
      as_input([&] {
        viz::PcaOptions opt;
        opt.components = k;
        img = viz::featviz(f, opt);
      });
      io::save_ppm(out_path, img);
      out << "wrote " << img.width << "x" << img.height << " PCA rendering to " << out_path << '\n';
    };
  });

  // selftest
  auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant checks");
  selftest->callback([&] {
    action = [&] {
      if (!run_selftest(out)) throw NumericError("selftest failed");
    };
  });

  try {
    if (const auto s = env_seed()) {
      seed = *s;
      seed_given = true;
    }
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "augseg: " << e.what() << '\n' << app.help();
    return 1;
  } catch (const InputError& e) {
    err << "augseg: " << e.what() << '\n';
    return 1;
  }

  try {
    if (action) action();
    return 0;
  } catch (const FormatError& e) {
    err << "augseg: format error: " << e.what() << '\n';
    return 1;
  } catch (const InputError& e) {
    err << "augseg: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "augseg: internal error: " << e.what() << '\n';
    return 2;
  }
}

int dispatch(int argc, const char* const* argv) { return dispatch(argc, argv, std::cout, std::cerr); }

}  // namespace augseg::cli
