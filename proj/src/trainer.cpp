#include "augseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "augseg/autodiff.hpp"
#include "augseg/error.hpp"
#include "augseg/objective.hpp"
#include "augseg/ops.hpp"

namespace augseg::train {

using nlohmann::json;

namespace {

// Independent generator per (seed, purpose, indices).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Tensor batch_images(const std::vector<const data::Sample*>& items) {
  const auto& s = items.front()->image.shape();
  std::vector<double> v;
  for (const auto* it : items) v.insert(v.end(), it->image.data().begin(), it->image.data().end());
  return Tensor({items.size(), s[0], s[1], s[2]}, std::move(v), items.front()->image.dtype());
}

LabelMask batch_masks(const std::vector<const data::Sample*>& items) {
  const auto& s = items.front()->mask.values.shape();
  std::vector<double> v;
  for (const auto* it : items) v.insert(v.end(), it->mask.values.data().begin(), it->mask.values.data().end());
  return LabelMask{Tensor({items.size(), s[1], s[2]}, std::move(v), DType::UInt8), items.front()->mask.num_classes};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("Adam betas must be in [0,1)");
  if (!(eps > 0.0)) throw ContractError("Adam eps must be positive");
  if (batch_size == 0) throw ContractError("batch size must be positive");
  if (few_shot == 0) throw ContractError("few-shot count must be positive");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr", c.lr},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"eps", c.eps},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"few_shot", c.few_shot},
           {"seed", c.seed},
           {"seeds", c.seeds},
           {"arm", model::to_string(c.arm)},
           {"cg_fuse", c.cg_fuse},
           {"ranges", c.ranges}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.few_shot = j.value("few_shot", d.few_shot);
  c.seed = j.value("seed", d.seed);
  c.seeds = j.value("seeds", d.seeds);
  c.arm = model::augment_arm_from_string(j.value("arm", model::to_string(d.arm)));
  c.cg_fuse = j.value("cg_fuse", d.cg_fuse);
  c.ranges = j.value("ranges", d.ranges);
}

void adam_step(const std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, const TrainConfig& cfg) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) throw ContractError("parameter " + name + " has no gradient for the Adam step");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (!m.defined()) m = Tensor::zeros(p.shape(), DType::Float64);
    if (!v.defined()) v = Tensor::zeros(p.shape(), DType::Float64);
    if (m.shape() != p.shape() || v.shape() != p.shape()) {
      throw ContractError("Adam moments for " + name + " do not match the parameter shape");
    }
    auto g = p.grad_data();
    auto md = m.mutable_data();
    auto vd = v.mutable_data();
    std::vector<double> next(p.data().begin(), p.data().end());
    for (std::size_t i = 0; i < next.size(); ++i) {
      md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * g[i];
      vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      next[i] -= cfg.lr * (md[i] / c1) / (std::sqrt(vd[i] / c2) + cfg.eps);
    }
    Tensor param = p;
    auto dst = param.mutable_data();
    quantize_all(next, param.dtype());
    std::copy(next.begin(), next.end(), dst.begin());
  }
}

void write_log_csv(std::ostream& os, const std::vector<EpochLog>& log) {
  os << "epoch,loss,train_dice\n";
  os.precision(10);
  for (const auto& e : log) os << e.epoch << ',' << e.loss << ',' << e.train_dice << '\n';
}

model::Checkpoint TrainResult::checkpoint(const TrainConfig& cfg) const {
  auto c = model::snapshot(net);
  for (const auto& [name, t] : adam.m) c.adam_m[name] = t.clone();
  for (const auto& [name, t] : adam.v) c.adam_v[name] = t.clone();
  c.adam_step = adam.t;
  c.seed = cfg.seed;
  c.epoch = log.empty() ? 0 : log.back().epoch;
  c.few_shot_ids = few_shot_ids;
  c.extra["train"] = cfg;
  c.extra["encoder_checksum"] = net.encoder_checksum();
  return c;
}

SampleSet load_split(const data::Manifest& manifest, const std::string& split) {
  SampleSet set;
  set.num_classes = manifest.config.num_classes;
  for (const auto& e : manifest.split(split)) set.samples.push_back(data::load_sample(manifest, e));
  return set;
}

model::NetworkConfig effective_network(const TrainConfig& cfg, model::NetworkConfig net, const SampleSet& data) {
  net.cg_fuse = cfg.cg_fuse;
  net.init_seed ^= cfg.seed * 0x9E3779B97F4A7C15ull;
  if (!data.samples.empty()) {
    net.num_classes = data.num_classes;
    net.input_height = data.samples.front().image.dim(1);
    net.input_width = data.samples.front().image.dim(2);
  }
  return net;
}

TrainResult train(const TrainConfig& cfg, const model::NetworkConfig& net_cfg, const SampleSet& train_set) {
  cfg.validate();
  const std::size_t n = train_set.samples.size();
  if (n == 0) throw InputError("training split is empty");
  if (cfg.few_shot > n) {
    throw ContractError("few-shot count " + std::to_string(cfg.few_shot) + " exceeds the " + std::to_string(n) +
                        " training samples");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto pick = stream(cfg.seed, 1);
  std::shuffle(order.begin(), order.end(), pick);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.few_shot));

  TrainResult r{model::Network(effective_network(cfg, net_cfg, train_set)), {}, {}, {}, 0, 0};
  for (auto i : chosen) r.few_shot_ids.push_back(train_set.samples[i].id);
  r.encoder_checksum_before = r.net.encoder_checksum();
  const auto params = r.net.parameters();
  const model::AugmentSettings aug{cfg.arm, cfg.ranges};

  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto shuffle_rng = stream(cfg.seed, 2, epoch);
    std::shuffle(chosen.begin(), chosen.end(), shuffle_rng);
    std::vector<double> losses, dices;
    for (std::size_t start = 0; start < chosen.size(); start += cfg.batch_size) {
      std::vector<const data::Sample*> items;
      std::vector<std::string> ids;
      for (std::size_t i = start; i < std::min(chosen.size(), start + cfg.batch_size); ++i) {
        items.push_back(&train_set.samples[chosen[i]]);
        ids.push_back(items.back()->id);
      }
      const Tensor images = batch_images(items);
      const LabelMask masks = batch_masks(items);
      for (const auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
      }
      auto aug_rng = stream(cfg.seed, 3, step++);
      double loss_value = 0.0;
      {
        GradTape tape;
        TapeScope scope(tape);
        Tensor logits = r.net.forward(images, model::Mode::Train, aug_rng, aug, ids);
        Tensor loss = combined_loss(logits, masks);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " (samples " + ids.front() + "...)");
        }
        tape.backward(loss);
        dices.push_back(metrics::mean_foreground_dice(argmax_labels(logits), masks));
      }
      adam_step(params, r.adam, cfg);
      losses.push_back(loss_value);
    }
    r.log.push_back({epoch, mean_of(losses), mean_of(dices)});
  }
  r.encoder_checksum_after = r.net.encoder_checksum();
  return r;
}

TrainResult train(const TrainConfig& cfg, const model::NetworkConfig& net, const data::Manifest& manifest) {
  return train(cfg, net, load_split(manifest, "train"));
}

std::vector<metrics::MetricsRecord> evaluate(const model::Network& net, const SampleSet& set) {
  NoGradScope no_grad;
  std::vector<metrics::MetricsRecord> out;
  std::mt19937_64 unused(0);
  for (const auto& s : set.samples) {
    const Tensor image = batch_images({&s});
    const LabelMask pred = argmax_labels(net.forward(image, model::Mode::Eval, unused, {}, {s.id}));
    out.push_back(metrics::evaluate_sample(pred, s.mask, s.id));
  }
  return out;
}

ArmSpec parse_arm(const std::string& text) {
  ArmSpec spec;
  spec.name = text;
  std::string arm = text;
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    arm = text.substr(0, slash);
    const auto flag = text.substr(slash + 1);
    if (flag == "nocg") {
      spec.cg_fuse = false;
    } else if (flag != "cg") {
      throw ContractError("arm suffix must be /cg or /nocg, got '" + flag + "'");
    }
  }
  spec.arm = model::augment_arm_from_string(arm);
  return spec;
}

AblationReport ablation_run(const std::vector<ArmSpec>& arms, const TrainConfig& cfg, const model::NetworkConfig& net,
                            const SampleSet& train_set, const SampleSet& test_set, std::ostream* progress) {
  if (arms.empty()) throw ContractError("ablation needs at least one arm");
  if (cfg.seeds.empty()) throw ContractError("ablation needs at least one seed");
  if (test_set.samples.empty()) throw InputError("test split is empty");
  AblationReport report;
  for (const auto& arm : arms) {
    ArmSummary summary;
    summary.name = arm.name;
    summary.sample_dice.assign(test_set.samples.size(), 0.0);
    std::vector<double> run_dice, run_hd95;
    for (auto seed : cfg.seeds) {
      TrainConfig run = cfg;
      run.seed = seed;
      run.arm = arm.arm;
      run.cg_fuse = arm.cg_fuse;
      const auto result = train(run, net, train_set);
      const auto records = evaluate(result.net, test_set);
      std::vector<double> d, h;
      for (std::size_t i = 0; i < records.size(); ++i) {
        d.push_back(records[i].mean_dice);
        h.push_back(records[i].mean_hd95);
        summary.sample_dice[i] += records[i].mean_dice / static_cast<double>(cfg.seeds.size());
      }
      run_dice.push_back(mean_of(d));
      run_hd95.push_back(mean_of(h));
      if (progress) {
        *progress << arm.name << " seed " << seed << ": dice " << run_dice.back() << " hd95 " << run_hd95.back()
                  << " final loss " << result.log.back().loss << std::endl;
      }
    }
    summary.runs = run_dice.size();
    summary.dice_mean = mean_of(run_dice);
    summary.dice_sd = sd_of(run_dice);
    summary.hd95_mean = mean_of(run_hd95);
    summary.hd95_sd = sd_of(run_hd95);
    report.arms.push_back(std::move(summary));
  }
  for (std::size_t i = 0; i < report.arms.size(); ++i)
    for (std::size_t j = i + 1; j < report.arms.size(); ++j) {
      std::vector<double> diffs;
      for (std::size_t k = 0; k < test_set.samples.size(); ++k) {
        diffs.push_back(report.arms[i].sample_dice[k] - report.arms[j].sample_dice[k]);
      }
      report.tests.push_back({report.arms[i].name, report.arms[j].name, metrics::wilcoxon_signed_rank(diffs)});
    }
  return report;
}

void write_ablation_csv(std::ostream& os, const AblationReport& report) {
  os << "arm,runs,dice_mean,dice_sd,hd95_mean,hd95_sd\n";
  os.precision(8);
  for (const auto& a : report.arms) {
    os << a.name << ',' << a.runs << ',' << a.dice_mean << ',' << a.dice_sd << ',' << a.hd95_mean << ',' << a.hd95_sd
       << '\n';
  }
}

json wilcoxon_report(const AblationReport& report) {
  json tests = json::array();
  for (const auto& t : report.tests) {
    json entry = metrics::to_json(t.result);
    entry["a"] = t.a;
    entry["b"] = t.b;
    tests.push_back(entry);
  }
  return json{{"metric", "per-sample foreground Dice, averaged over seeds"}, {"tests", tests}};
}

}  // namespace augseg::train
