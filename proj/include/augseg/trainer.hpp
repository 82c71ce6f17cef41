#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "augseg/metrics.hpp"
#include "augseg/model.hpp"
#include "augseg/synth.hpp"
#include "json.hpp"

namespace augseg::train {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 2;
  std::size_t epochs = 300;
  /// Labeled training samples used (first k of a seeded shuffle).
  std::size_t few_shot = 2;
  std::uint64_t seed = 0;
  /// Seeds the ablation harness repeats every arm with.
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  model::AugmentArm arm = model::AugmentArm::FeatureWavelet;
  bool cg_fuse = true;
  data::CorruptionRanges ranges;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamState {
  std::map<std::string, Tensor> m;  // float64, parameter shape
  std::map<std::string, Tensor> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update of every parameter from its grad buffer.
/// Throws ContractError when a parameter has no gradient.
void adam_step(const std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;        // mean step loss
  double train_dice = 0.0;  // mean foreground Dice of the train-mode predictions
};

void write_log_csv(std::ostream& os, const std::vector<EpochLog>& log);

/// The trained network, its optimizer and the per-epoch log.
struct TrainResult {
  model::Network net;
  AdamState adam;
  std::vector<EpochLog> log;
  std::vector<std::string> few_shot_ids;
  std::uint64_t encoder_checksum_before = 0;
  std::uint64_t encoder_checksum_after = 0;

  model::Checkpoint checkpoint(const TrainConfig& cfg) const;
};

/// Samples preloaded in memory.
struct SampleSet {
  std::vector<data::Sample> samples;
  std::size_t num_classes = 0;
};

SampleSet load_split(const data::Manifest& manifest, const std::string& split);

/// Network config as used by a training run: cg_fuse from cfg, trainable
/// weights initialized from cfg.seed, geometry from the data.
model::NetworkConfig effective_network(const TrainConfig& cfg, model::NetworkConfig net, const SampleSet& data);

/// Few-shot training of decoder, fusion and head weights; the encoder stays frozen.
/// Throws NumericError on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const model::NetworkConfig& net, const SampleSet& train_set);
TrainResult train(const TrainConfig& cfg, const model::NetworkConfig& net, const data::Manifest& manifest);

/// Eval-mode prediction, argmax, per-class Dice and HD95 for every sample.
std::vector<metrics::MetricsRecord> evaluate(const model::Network& net, const SampleSet& set);

/// One ablation arm: an augmentation strategy plus the fusion toggle.
struct ArmSpec {
  std::string name;
  model::AugmentArm arm = model::AugmentArm::None;
  bool cg_fuse = true;
};

/// "<arm>" or "<arm>/nocg" (also "<arm>/cg").
ArmSpec parse_arm(const std::string& text);

struct ArmSummary {
  std::string name;
  std::size_t runs = 0;
  double dice_mean = 0, dice_sd = 0;  // over seeds of the per-run mean foreground Dice
  double hd95_mean = 0, hd95_sd = 0;
  /// Per test sample foreground Dice averaged over seeds.
  std::vector<double> sample_dice;
};

struct PairTest {
  std::string a, b;
  metrics::WilcoxonResult result;
};

struct AblationReport {
  std::vector<ArmSummary> arms;
  std::vector<PairTest> tests;
};

/// Trains and evaluates every (arm, seed) pair on the same data, then runs a
/// Wilcoxon test over per-sample Dice for every pair of arms.
AblationReport ablation_run(const std::vector<ArmSpec>& arms, const TrainConfig& cfg, const model::NetworkConfig& net,
                            const SampleSet& train_set, const SampleSet& test_set, std::ostream* progress = nullptr);

void write_ablation_csv(std::ostream& os, const AblationReport& report);
nlohmann::json wilcoxon_report(const AblationReport& report);

}  // namespace augseg::train
