#include "augseg/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "augseg/autodiff.hpp"
#include "augseg/error.hpp"
#include "augseg/io.hpp"
#include "augseg/ops.hpp"

namespace augseg::model {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng, DType dtype) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), dtype);
}

// Kernel size and padding that shrink a map by exactly `ratio`.
std::pair<std::size_t, std::size_t> stage_geometry(std::size_t ratio) {
  if (ratio == 1) return {3, 1};
  const std::size_t pad = ratio / 2;
  return {ratio + 2 * pad, pad};
}

std::size_t stage_ratio(const EncoderSpec& e, std::size_t s) { return s == 0 ? e.strides[0] : e.strides[s] / e.strides[s - 1]; }

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

// A map without a single 2x2 block has nothing to decompose.
bool too_small_for_haar(const Tensor& f) { return f.dim(2) < 2 || f.dim(3) < 2; }

bool is_identity(const wavelet::WtAugConfig& c) {
  for (double p : c.keep_prob)
    if (p != 1.0) return false;
  return true;
}

std::string dtype_name(DType d) {
  switch (d) {
    case DType::Float32: return "float32";
    case DType::Float64: return "float64";
    case DType::UInt8: return "uint8";
  }
  return "?";
}

DType dtype_from_name(const std::string& s) {
  if (s == "float32") return DType::Float32;
  if (s == "float64") return DType::Float64;
  throw ContractError("network dtype must be float32 or float64, got '" + s + "'");
}

}  // namespace

void EncoderSpec::validate() const {
  if (in_channels == 0) throw ContractError("encoder needs at least one input channel");
  for (std::size_t s = 0; s < kStages; ++s) {
    if (channels[s] == 0) throw ContractError("encoder stage " + std::to_string(s + 1) + " has zero channels");
    if (strides[s] == 0) throw ContractError("encoder strides must be positive");
    if (s > 0 && (strides[s] < strides[s - 1] || strides[s] % strides[s - 1] != 0)) {
      throw ContractError("encoder strides must be nondecreasing and each divide the next");
    }
  }
  if (strides[2] * 2 != strides[3] || strides[1] * 2 != strides[2] || strides[0] * 2 != strides[1]) {
    throw ContractError("decoder upsampling doubles resolution per level, so strides must double per stage");
  }
  if (kind == EncoderKind::File && path_template.find("{stage}") == std::string::npos) {
    throw ContractError("file encoder path template must contain {stage}");
  }
}

void NetworkConfig::validate() const {
  encoder.validate();
  for (const auto& w : wt_aug) w.validate();
  for (auto w : decoder_widths)
    if (w == 0) throw ContractError("decoder widths must be positive");
  if (num_classes < 2) throw ContractError("num_classes must be >= 2 (background + foreground)");
  if (num_classes > 255) throw ContractError("num_classes must fit a uint8 mask");
  if (input_height % encoder.strides[3] != 0 || input_width % encoder.strides[3] != 0 || input_height == 0 ||
      input_width == 0) {
    throw ContractError("input size " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                        " is not divisible by the deepest stride " + std::to_string(encoder.strides[3]));
  }
  for (std::size_t s = 0; s + 1 < kStages; ++s) {
    const std::size_t c_dec = s == kStages - 2 ? encoder.channels[kStages - 1] : decoder_widths[s + 1];
    const std::size_t d = fusion_dim == 0 ? c_dec : fusion_dim;
    if (fusion_heads == 0 || d % fusion_heads != 0) {
      throw ContractError("fusion width " + std::to_string(d) + " is not divisible by fusion_heads");
    }
  }
  if (fusion_ff_mult == 0) throw ContractError("fusion_ff_mult must be positive");
  if (dtype == DType::UInt8) throw ContractError("network dtype must be floating point");
}

void to_json(json& j, const NetworkConfig& c) {
  json stages = json::array();
  for (const auto& w : c.wt_aug) {
    stages.push_back({{"keep_prob", w.keep_prob}, {"seed", w.seed}, {"channel_shared", w.channel_shared}});
  }
  j = json{{"encoder",
            {{"kind", c.encoder.kind == EncoderKind::Toy ? "toy" : "file"},
             {"in_channels", c.encoder.in_channels},
             {"channels", c.encoder.channels},
             {"strides", c.encoder.strides},
             {"path_template", c.encoder.path_template},
             {"seed", c.encoder.seed}}},
           {"wt_aug", stages},
           {"decoder_widths", c.decoder_widths},
           {"fusion_dim", c.fusion_dim},
           {"fusion_heads", c.fusion_heads},
           {"fusion_ff_mult", c.fusion_ff_mult},
           {"positional_encoding", c.positional_encoding},
           {"cg_fuse", c.cg_fuse},
           {"augmented_ccu_skip", c.augmented_ccu_skip},
           {"num_classes", c.num_classes},
           {"input_height", c.input_height},
           {"input_width", c.input_width},
           {"dtype", dtype_name(c.dtype)},
           {"init_seed", c.init_seed}};
}

void from_json(const json& j, NetworkConfig& c) {
  NetworkConfig d;
  c = d;
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    const auto kind = e.value("kind", std::string("toy"));
    if (kind != "toy" && kind != "file") throw ContractError("encoder kind must be toy or file");
    c.encoder.kind = kind == "toy" ? EncoderKind::Toy : EncoderKind::File;
    c.encoder.in_channels = e.value("in_channels", d.encoder.in_channels);
    c.encoder.channels = e.value("channels", d.encoder.channels);
    c.encoder.strides = e.value("strides", d.encoder.strides);
    c.encoder.path_template = e.value("path_template", d.encoder.path_template);
    c.encoder.seed = e.value("seed", d.encoder.seed);
  }
  if (j.contains("wt_aug")) {
    const auto& w = j.at("wt_aug");
    if (!w.is_array() || w.size() != kStages) throw ContractError("wt_aug must list 4 stage configs");
    for (std::size_t s = 0; s < kStages; ++s) {
      c.wt_aug[s].keep_prob = w[s].value("keep_prob", d.wt_aug[s].keep_prob);
      c.wt_aug[s].seed = w[s].value("seed", d.wt_aug[s].seed);
      c.wt_aug[s].channel_shared = w[s].value("channel_shared", d.wt_aug[s].channel_shared);
    }
  }
  c.decoder_widths = j.value("decoder_widths", d.decoder_widths);
  c.fusion_dim = j.value("fusion_dim", d.fusion_dim);
  c.fusion_heads = j.value("fusion_heads", d.fusion_heads);
  c.fusion_ff_mult = j.value("fusion_ff_mult", d.fusion_ff_mult);
  c.positional_encoding = j.value("positional_encoding", d.positional_encoding);
  c.cg_fuse = j.value("cg_fuse", d.cg_fuse);
  c.augmented_ccu_skip = j.value("augmented_ccu_skip", d.augmented_ccu_skip);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.input_height = j.value("input_height", d.input_height);
  c.input_width = j.value("input_width", d.input_width);
  c.dtype = dtype_from_name(j.value("dtype", std::string("float32")));
  c.init_seed = j.value("init_seed", d.init_seed);
}

std::string to_string(AugmentArm arm) {
  switch (arm) {
    case AugmentArm::None: return "none";
    case AugmentArm::ImageLevel: return "image_level";
    case AugmentArm::FeatureSpatial: return "feature_spatial";
    case AugmentArm::FeatureWavelet: return "feature_wavelet";
  }
  throw ContractError("unknown augmentation arm");
}

AugmentArm augment_arm_from_string(const std::string& name) {
  for (auto a : {AugmentArm::None, AugmentArm::ImageLevel, AugmentArm::FeatureSpatial, AugmentArm::FeatureWavelet}) {
    if (to_string(a) == name) return a;
  }
  throw ContractError("unknown augmentation arm '" + name + "'");
}

Tensor ccu(const Tensor& fused, const Tensor& skip, const CcuParams& p) {
  if (fused.rank() != 4 || skip.rank() != 4 || fused.dim(0) != skip.dim(0) || fused.dim(2) != skip.dim(2) ||
      fused.dim(3) != skip.dim(3)) {
    throw ContractError("ccu inputs must share batch and spatial extents: " + shape_string(fused.shape()) + " vs " +
                        shape_string(skip.shape()));
  }
  Tensor cat = concat({fused, skip}, 1);
  if (p.conv_w.dim(1) != cat.dim(1)) {
    throw ContractError("ccu expects " + std::to_string(p.conv_w.dim(1)) + " concatenated channels, got " +
                        std::to_string(cat.dim(1)));
  }
  Tensor h = gelu(conv2d(cat, p.conv_w, p.conv_b, {1, 1}));
  return conv_transpose2d(h, p.up_w, p.up_b, {2, 0});
}

Tensor seg_head(const Tensor& feat, const HeadParams& p, std::size_t h, std::size_t w) {
  if (feat.rank() != 4) throw ContractError("seg_head expects [N,C,H,W], got " + shape_string(feat.shape()));
  if (h < feat.dim(2) || w < feat.dim(3)) throw ContractError("seg_head target size is smaller than its input");
  Tensor hidden = gelu(conv2d(feat, p.conv_w, p.conv_b, {1, 1}));
  Tensor logits = conv2d(hidden, p.cls_w, p.cls_b);
  return resize_bilinear(logits, h, w);
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto& e = cfg_.encoder;
  const DType dt = cfg_.dtype;
  if (e.kind == EncoderKind::Toy) {
    std::mt19937_64 rng(e.seed);
    std::size_t in = e.in_channels;
    for (std::size_t s = 0; s < kStages; ++s) {
      const auto [k, pad] = stage_geometry(stage_ratio(e, s));
      (void)pad;
      encoder_[s] = he_normal({e.channels[s], in, k, k}, in * k * k, rng, dt);
      in = e.channels[s];
    }
  }
  std::mt19937_64 rng(cfg_.init_seed);
  const auto& c = e.channels;
  const auto& w = cfg_.decoder_widths;
  for (std::size_t s = kStages - 1; s-- > 0;) {
    const std::size_t c_dec = s == kStages - 2 ? c[kStages - 1] : w[s + 1];
    const std::size_t d = cfg_.fusion_dim == 0 ? c_dec : cfg_.fusion_dim;
    fusion_[s] = fusion::FusionParams::init(c_dec, c[s], d, cfg_.fusion_heads, cfg_.fusion_ff_mult, rng, dt);
  }
  for (std::size_t s = kStages - 1; s-- > 0;) {
    const std::size_t c_dec = s == kStages - 2 ? c[kStages - 1] : w[s + 1];
    const std::size_t c_in = c_dec + c[s];
    auto& p = ccu_[s];
    p.conv_w = he_normal({w[s], c_in, 3, 3}, c_in * 9, rng, dt);
    p.conv_b = Tensor::zeros({w[s]}, dt);
    p.up_w = he_normal({w[s], w[s], 2, 2}, w[s], rng, dt);
    p.up_b = Tensor::zeros({w[s]}, dt);
  }
  head_.conv_w = he_normal({w[0], w[0], 3, 3}, w[0] * 9, rng, dt);
  head_.conv_b = Tensor::zeros({w[0]}, dt);
  head_.cls_w = he_normal({cfg_.num_classes, w[0], 1, 1}, w[0], rng, dt);
  head_.cls_b = Tensor::zeros({cfg_.num_classes}, dt);
  for (auto& [name, t] : parameters()) t.set_requires_grad(true);
}

std::vector<std::pair<std::string, Tensor>> Network::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t s = kStages - 1; s-- > 0;) {
    const std::string level = std::to_string(s + 1);
    if (cfg_.cg_fuse) {
      auto f = fusion_[s];
      for (auto& [name, t] : f.named_tensors()) out.emplace_back("fusion" + level + "." + name, *t);
    }
    out.emplace_back("ccu" + level + ".conv_w", ccu_[s].conv_w);
    out.emplace_back("ccu" + level + ".conv_b", ccu_[s].conv_b);
    out.emplace_back("ccu" + level + ".up_w", ccu_[s].up_w);
    out.emplace_back("ccu" + level + ".up_b", ccu_[s].up_b);
  }
  out.emplace_back("head.conv_w", head_.conv_w);
  out.emplace_back("head.conv_b", head_.conv_b);
  out.emplace_back("head.cls_w", head_.cls_w);
  out.emplace_back("head.cls_b", head_.cls_b);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Network::encoder_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (cfg_.encoder.kind != EncoderKind::Toy) return out;
  for (std::size_t s = 0; s < kStages; ++s) out.emplace_back("encoder.stage" + std::to_string(s + 1), encoder_[s]);
  return out;
}

std::uint64_t fnv1a(const Tensor& t, std::uint64_t h) {
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 1099511628211ull;
    }
  };
  for (auto e : t.shape()) mix(e);
  for (double v : t.data()) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

std::uint64_t Network::encoder_checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : encoder_parameters()) h = fnv1a(t, h);
  return h;
}

Tensor& Network::lookup(const std::string& name) {
  for (std::size_t s = 0; s + 1 < kStages; ++s) {
    const std::string level = std::to_string(s + 1);
    for (auto& [n, t] : fusion_[s].named_tensors())
      if (name == "fusion" + level + "." + n) return *t;
    if (name == "ccu" + level + ".conv_w") return ccu_[s].conv_w;
    if (name == "ccu" + level + ".conv_b") return ccu_[s].conv_b;
    if (name == "ccu" + level + ".up_w") return ccu_[s].up_w;
    if (name == "ccu" + level + ".up_b") return ccu_[s].up_b;
  }
  if (name == "head.conv_w") return head_.conv_w;
  if (name == "head.conv_b") return head_.conv_b;
  if (name == "head.cls_w") return head_.cls_w;
  if (name == "head.cls_b") return head_.cls_b;
  throw ContractError("no trainable parameter named '" + name + "'");
}

void Network::assign(const std::string& name, const Tensor& value) {
  Tensor& t = lookup(name);
  if (t.shape() != value.shape()) {
    throw ContractError("shape mismatch for " + name + ": " + shape_string(t.shape()) + " vs " +
                        shape_string(value.shape()));
  }
  auto dst = t.mutable_data();
  const Tensor converted = value.to(t.dtype());
  auto src = converted.data();
  std::copy(src.begin(), src.end(), dst.begin());
}

Features Network::encode(const Tensor& image, const std::vector<std::string>& sample_ids) const {
  const auto& e = cfg_.encoder;
  if (image.rank() != 4 || image.dim(1) != e.in_channels) {
    throw DimensionError("encoder expects [N," + std::to_string(e.in_channels) + ",H,W], got " +
                         shape_string(image.shape()));
  }
  const std::size_t n = image.dim(0), h = image.dim(2), w = image.dim(3);
  if (h % e.strides[3] != 0 || w % e.strides[3] != 0) {
    throw ContractError("input " + std::to_string(h) + "x" + std::to_string(w) +
                        " not divisible by the deepest stride " + std::to_string(e.strides[3]));
  }
  Features out;
  if (e.kind == EncoderKind::Toy) {
    NoGradScope frozen;
    Tensor x = mul_scalar(add_scalar(image.to(cfg_.dtype), -0.5), 2.0);
    for (std::size_t s = 0; s < kStages; ++s) {
      const auto [k, pad] = stage_geometry(stage_ratio(e, s));
      (void)k;
      x = gelu(conv2d(x, encoder_[s], {}, {stage_ratio(e, s), pad}));
      out[s] = x;
    }
    return out;
  }
  const bool per_sample = e.path_template.find("{id}") != std::string::npos;
  if (per_sample && sample_ids.size() != n) {
    throw InputError("file encoder needs one sample id per batch item");
  }
  for (std::size_t s = 0; s < kStages; ++s) {
    const Shape want{1, e.channels[s], h / e.strides[s], w / e.strides[s]};
    std::vector<Tensor> parts;
    for (std::size_t b = 0; b < n; ++b) {
      std::string path = replace_all(e.path_template, "{stage}", std::to_string(s + 1));
      if (per_sample) path = replace_all(path, "{id}", sample_ids[b]);
      Tensor t;
      try {
        t = io::load_daug(path);
      } catch (const Error& err) {
        throw InputError("encoder stage " + std::to_string(s + 1) + ": " + err.what());
      }
      if (t.shape() != want) {
        throw InputError("encoder stage " + std::to_string(s + 1) + " feature " + path + " has shape " +
                         shape_string(t.shape()) + ", expected " + shape_string(want));
      }
      parts.push_back(t.to(cfg_.dtype));
    }
    out[s] = n == 1 ? parts[0] : concat(parts, 0);
  }
  return out;
}

Tensor Network::forward(const Tensor& image, Mode mode, std::mt19937_64& rng, const AugmentSettings& aug,
                        const std::vector<std::string>& sample_ids) const {
  if (image.rank() != 4 || image.dim(2) != cfg_.input_height || image.dim(3) != cfg_.input_width) {
    throw DimensionError("network expects [N," + std::to_string(cfg_.encoder.in_channels) + "," +
                         std::to_string(cfg_.input_height) + "," + std::to_string(cfg_.input_width) + "] input, got " +
                         shape_string(image.shape()));
  }
  const bool train = mode == Mode::Train;
  Tensor input = image;
  if (train && aug.arm == AugmentArm::ImageLevel) {
    const std::size_t per = image.numel() / image.dim(0);
    std::vector<double> v(image.data().begin(), image.data().end());
    for (std::size_t b = 0; b < image.dim(0); ++b) {
      Shape one = image.shape();
      one[0] = 1;
      Tensor slice(one, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(b * per),
                                            v.begin() + static_cast<std::ptrdiff_t>((b + 1) * per)),
                   image.dtype());
      Tensor c = data::corrupt(slice, data::sample_corruption(rng, aug.ranges));
      std::copy(c.data().begin(), c.data().end(), v.begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    input = Tensor(image.shape(), std::move(v), image.dtype());
  }
  const Features raw = encode(input, sample_ids);
  Features augd = raw;
  if (train) {
    for (std::size_t s = 0; s < kStages; ++s) {
      if (aug.arm == AugmentArm::FeatureSpatial) {
        augd[s] = data::feature_spatial_aug(raw[s], data::sample_corruption(rng, aug.ranges));
      } else if (aug.arm == AugmentArm::FeatureWavelet && !is_identity(cfg_.wt_aug[s]) &&
                 !too_small_for_haar(raw[s])) {
        NoGradScope frozen;
        augd[s] = wavelet::wt_aug(raw[s], cfg_.wt_aug[s], rng);
      }
    }
  }
  const fusion::FusionOptions opt{cfg_.positional_encoding, 1e-5};
  Tensor d = resize_bilinear(augd[kStages - 1], raw[kStages - 2].dim(2), raw[kStages - 2].dim(3));
  for (std::size_t s = kStages - 1; s-- > 0;) {
    Tensor fused = cfg_.cg_fuse ? fusion::cg_fuse(d, augd[s], fusion_[s], opt) : d;
    const Tensor& skip = cfg_.cg_fuse && !cfg_.augmented_ccu_skip ? raw[s] : augd[s];
    d = ccu(fused, skip, ccu_[s]);
  }
  return seg_head(d, head_, cfg_.input_height, cfg_.input_width);
}

// ---- checkpoints -----------------------------------------------------------

Checkpoint snapshot(const Network& net) {
  Checkpoint c;
  c.config = net.config();
  for (const auto& [name, t] : net.parameters()) c.tensors[name] = t.clone();
  for (const auto& [name, t] : net.encoder_parameters()) c.tensors[name] = t.clone();
  return c;
}

Network restore(const Checkpoint& ckpt) {
  Network net(ckpt.config);
  for (const auto& [name, t] : net.parameters()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint lacks parameter " + name, 0);
    net.assign(name, it->second);
  }
  for (const auto& [name, t] : net.encoder_parameters()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint lacks encoder weight " + name, 0);
    if (!bit_equal(it->second, t)) {
      throw FormatError("encoder weight " + name + " differs from the frozen initialization", 0);
    }
  }
  return net;
}

namespace {

json tensor_entries(const fs::path& dir, const std::string& sub, const std::map<std::string, Tensor>& tensors) {
  json list = json::array();
  if (tensors.empty()) return list;
  fs::create_directories(dir / sub);
  for (const auto& [name, t] : tensors) {
    const auto rel = fs::path(sub) / (name + ".daug");
    io::save_daug(dir / rel, t);
    list.push_back({{"name", name}, {"file", rel.generic_string()}, {"shape", t.shape()}, {"dtype", dtype_name(t.dtype())}});
  }
  return list;
}

std::map<std::string, Tensor> read_entries(const fs::path& dir, const json& list) {
  std::map<std::string, Tensor> out;
  for (const auto& e : list) {
    const auto name = e.at("name").get<std::string>();
    Tensor t = io::load_daug(dir / e.at("file").get<std::string>());
    if (t.shape() != e.at("shape").get<Shape>()) {
      throw FormatError("tensor " + name + " has shape " + shape_string(t.shape()) + " but the manifest says otherwise", 0);
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  json j;
  j["format"] = "augseg-checkpoint";
  j["version"] = 1;
  j["config"] = ckpt.config;
  j["seed"] = ckpt.seed;
  j["epoch"] = ckpt.epoch;
  j["few_shot_ids"] = ckpt.few_shot_ids;
  j["tensors"] = tensor_entries(dir, "params", ckpt.tensors);
  j["optimizer"] = {{"step", ckpt.adam_step},
                    {"m", tensor_entries(dir, "adam_m", ckpt.adam_m)},
                    {"v", tensor_entries(dir, "adam_v", ckpt.adam_v)}};
  j["extra"] = ckpt.extra;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw InputError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto file = dir / "manifest.json";
  std::ifstream in(file);
  if (!in) throw InputError("cannot open checkpoint manifest " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what(), e.byte);
  }
  Checkpoint c;
  try {
    if (j.value("format", std::string()) != "augseg-checkpoint") throw FormatError("not an augseg checkpoint", 0);
    c.config = j.at("config").get<NetworkConfig>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<std::size_t>();
    c.few_shot_ids = j.at("few_shot_ids").get<std::vector<std::string>>();
    c.tensors = read_entries(dir, j.at("tensors"));
    const auto& opt = j.at("optimizer");
    c.adam_step = opt.at("step").get<std::uint64_t>();
    c.adam_m = read_entries(dir, opt.at("m"));
    c.adam_v = read_entries(dir, opt.at("v"));
    c.extra = j.value("extra", json::object());
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what(), 0);
  } catch (const ContractError& e) {
    throw FormatError(file.string() + ": " + e.what(), 0);
  }
  return c;
}

}  // namespace augseg::model
