#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "augseg/fusion.hpp"
#include "augseg/synth.hpp"
#include "augseg/wavelet.hpp"
#include "json.hpp"

namespace augseg::model {

inline constexpr std::size_t kStages = 4;

enum class EncoderKind { Toy, File };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::Toy;
  std::size_t in_channels = 1;
  std::array<std::size_t, kStages> channels{16, 32, 48, 64};
  std::array<std::size_t, kStages> strides{4, 8, 16, 32};
  /// File encoder: per-stage DAUG path; "{stage}" becomes 1..4 and "{id}"
  /// the sample identifier.
  std::string path_template;
  std::uint64_t seed = 7;

  void validate() const;
};

struct NetworkConfig {
  EncoderSpec encoder;
  std::array<wavelet::WtAugConfig, kStages> wt_aug{};
  /// Output width of the decoder level that consumes stage s (s = 0..2);
  /// defaults to the matching encoder widths.
  std::array<std::size_t, kStages - 1> decoder_widths{16, 32, 48};
  /// Attention width per fusion block; 0 means the block's decoder width.
  std::size_t fusion_dim = 0;
  std::size_t fusion_heads = 4;
  std::size_t fusion_ff_mult = 4;
  bool positional_encoding = false;
  bool cg_fuse = true;
  /// With fusion on, CCU normally receives the raw stage features; this feeds
  /// it the augmented ones instead. With fusion off the augmented features
  /// always go to CCU, the only place left for them.
  bool augmented_ccu_skip = false;
  std::size_t num_classes = 3;
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  DType dtype = DType::Float32;
  std::uint64_t init_seed = 11;

  void validate() const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

enum class Mode { Train, Eval };

enum class AugmentArm { None, ImageLevel, FeatureSpatial, FeatureWavelet };

std::string to_string(AugmentArm arm);
/// Accepts none, image_level, feature_spatial, feature_wavelet.
AugmentArm augment_arm_from_string(const std::string& name);

/// What a train-mode forward does to its inputs or features.
struct AugmentSettings {
  AugmentArm arm = AugmentArm::FeatureWavelet;
  data::CorruptionRanges ranges;
};

struct CcuParams {
  Tensor conv_w;   // [C_out, C_fused + C_skip, 3, 3]
  Tensor conv_b;   // [C_out]
  Tensor up_w;     // [C_out, C_out, 2, 2]
  Tensor up_b;     // [C_out]
};

struct HeadParams {
  Tensor conv_w;   // [C_hidden, C_in, 3, 3]
  Tensor conv_b;
  Tensor cls_w;    // [K, C_hidden, 1, 1]
  Tensor cls_b;
};

/// Concatenate along channels, 3x3 conv + GELU, stride-2 transposed conv.
Tensor ccu(const Tensor& fused, const Tensor& skip, const CcuParams& p);

/// 3x3 conv + GELU, 1x1 conv to classes, bilinear resize to (h, w).
Tensor seg_head(const Tensor& feat, const HeadParams& p, std::size_t h, std::size_t w);

using Features = std::array<Tensor, kStages>;

class Network {
 public:
  /// Draws frozen encoder weights from encoder.seed and trainable weights
  /// from init_seed.
  explicit Network(NetworkConfig cfg);

  const NetworkConfig& config() const { return cfg_; }

  /// Stage features [N, C_s, H/s_s, W/s_s]. `sample_ids` (one per batch item)
  /// fill the "{id}" slot of the file encoder's path template.
  Features encode(const Tensor& image, const std::vector<std::string>& sample_ids = {}) const;

  /// Logits [N, K, H, W]. Train mode applies the augmentation arm using rng;
  /// eval mode never touches rng. WT-Aug leaves stages smaller than 2x2 and
  /// stages whose keep probabilities are all 1 untouched.
  Tensor forward(const Tensor& image, Mode mode, std::mt19937_64& rng, const AugmentSettings& aug = {},
                 const std::vector<std::string>& sample_ids = {}) const;

  /// Decoder, fusion and head weights under stable names. Fusion weights are
  /// left out when cg_fuse is off, since nothing reads them.
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  /// Frozen toy-encoder weights ("encoder.stageN"); empty for file encoders.
  std::vector<std::pair<std::string, Tensor>> encoder_parameters() const;

  /// FNV-1a over the encoder weight bytes.
  std::uint64_t encoder_checksum() const;

  /// Replaces a weight's values (shape must match). Used when restoring.
  void assign(const std::string& name, const Tensor& value);

  const CcuParams& ccu_params(std::size_t stage) const { return ccu_.at(stage); }
  const HeadParams& head_params() const { return head_; }
  const fusion::FusionParams& fusion_params(std::size_t stage) const { return fusion_.at(stage); }

 private:
  Tensor& lookup(const std::string& name);

  NetworkConfig cfg_;
  std::array<Tensor, kStages> encoder_;
  // Decoder levels are indexed by the encoder stage they consume (0..2).
  std::array<fusion::FusionParams, kStages - 1> fusion_;
  std::array<CcuParams, kStages - 1> ccu_;
  HeadParams head_;
};

/// Everything needed to rebuild a trained network and resume its optimizer.
struct Checkpoint {
  NetworkConfig config;
  std::map<std::string, Tensor> tensors;  // trainable and encoder weights
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;
  std::uint64_t adam_step = 0;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::vector<std::string> few_shot_ids;
  nlohmann::json extra = nlohmann::json::object();
};

Checkpoint snapshot(const Network& net);
/// Rebuilds the network; encoder weights stored in the checkpoint must match
/// the ones regenerated from the config (FormatError otherwise).
Network restore(const Checkpoint& ckpt);

/// Directory of DAUG tensors plus manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::uint64_t fnv1a(const Tensor& t, std::uint64_t h = 1469598103934665603ull);

}  // namespace augseg::model
