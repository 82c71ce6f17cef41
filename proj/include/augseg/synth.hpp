#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "augseg/objective.hpp"
#include "json.hpp"

namespace augseg::data {

struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 3;
  /// Shapes per image, each with its own foreground class (clamped to K-1).
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 3;
  /// Accepted band for the foreground pixel fraction.
  double min_foreground = 0.05;
  double max_foreground = 0.40;
  /// Each placed shape must keep at least this many visible mask pixels.
  std::size_t min_shape_pixels = 12;
  /// Sub-samples per axis used for anti-aliased rendering.
  std::size_t supersample = 4;
  double texture_amplitude = 0.12;
  std::size_t max_attempts = 1000;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct ShapeParams {
  enum class Kind { Ellipse, Rect };
  Kind kind = Kind::Ellipse;
  std::size_t cls = 1;
  double cy = 0, cx = 0;  // center, pixels
  double ry = 1, rx = 1;  // half extents, pixels
  double angle = 0;       // radians
  double intensity = 1;

  /// Membership of a continuous point (pixel centers sit at +0.5).
  bool contains(double y, double x) const;
};

struct Sample {
  std::string id;
  std::uint64_t seed = 0;
  Tensor image;     // [1,H,W] float32 in [0,1], multiples of 1/255
  LabelMask mask;   // [1,H,W]
  std::vector<ShapeParams> shapes;
};

/// Deterministic per (seed, cfg). Throws NumericError when no configuration
/// within the foreground band is found in cfg.max_attempts tries.
Sample gen_sample(std::uint64_t seed, const SynthConfig& cfg);

enum class CorruptionKind { Brightness, MotionBlur, Poisson, RandMask };

std::string to_string(CorruptionKind kind);
/// Throws ContractError on an unknown name.
CorruptionKind corruption_kind_from_string(const std::string& name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::Brightness;
  double brightness_factor = 1.0;   // > 0
  std::size_t blur_length = 5;      // >= 1 pixels
  double poisson_scale = 255.0;     // counts per unit intensity, > 0
  double mask_prob = 0.2;           // [0,1]
  std::uint64_t seed = 0;           // blur angle, noise and masks

  void validate() const;
};

/// Strength ranges the training-time augmentation draws from.
struct CorruptionRanges {
  double brightness_min = 0.6, brightness_max = 1.4;
  std::size_t blur_length = 5;
  double poisson_scale = 20.0;
  double mask_prob = 0.2;
};

void to_json(nlohmann::json& j, const CorruptionRanges& r);
void from_json(const nlohmann::json& j, CorruptionRanges& r);

/// One uniformly chosen family with strengths drawn from the ranges.
CorruptionSpec sample_corruption(std::mt19937_64& rng, const CorruptionRanges& ranges);

/// Odd-sized line kernel of the given length and angle, entries summing to 1.
std::vector<double> motion_kernel(std::size_t length, double angle, std::size_t& size);

/// Image-level corruption of any [..,H,W] tensor with values in [0,1]; the
/// result stays in [0,1]. Not recorded on the tape.
Tensor corrupt(const Tensor& image, const CorruptionSpec& spec);

/// The same four families applied per channel to a [N,C,H,W] feature map.
/// No clamping (features are unbounded); Poisson noise acts on magnitudes
/// and keeps signs. Not recorded on the tape.
Tensor feature_spatial_aug(const Tensor& feature, const CorruptionSpec& spec);

// ---- on-disk dataset -------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::uint64_t seed = 0;
  std::string split;  // "train" or "test"
  std::filesystem::path image;  // relative to the manifest directory
  std::filesystem::path mask;
};

struct Manifest {
  SynthConfig config;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory holding manifest.json

  std::vector<ManifestEntry> split(const std::string& name) const;
};

inline constexpr std::uint64_t kTestSeedOffset = 1'000'000;

/// Generates train samples with seeds seed+i and test samples with seeds
/// seed+1'000'000+i, writes PGM image/mask pairs and manifest.json into dir.
Manifest write_dataset(const std::filesystem::path& dir, std::size_t train_count, std::size_t test_count,
                       std::uint64_t seed, const SynthConfig& cfg);

/// Throws InputError for a missing file, FormatError for a malformed manifest.
Manifest load_manifest(const std::filesystem::path& path);

/// Reads one image/mask pair; checks the mask against num_classes.
Sample load_sample(const Manifest& manifest, const ManifestEntry& entry);

/// Mask as an 8-bit image with pixel value = class index.
void save_mask_pgm(const std::filesystem::path& path, const LabelMask& mask);
LabelMask load_mask_pgm(const std::filesystem::path& path, std::size_t num_classes);

}  // namespace augseg::data
