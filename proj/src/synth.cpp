#include "augseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "augseg/error.hpp"
#include "augseg/io.hpp"

namespace augseg::data {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthConfig::validate() const {
  if (height < 8 || width < 8) throw ContractError("synthetic images must be at least 8x8");
  if (num_classes < 2 || num_classes > 255) throw ContractError("num_classes must be in [2,255]");
  if (min_shapes < 1 || min_shapes > max_shapes) throw ContractError("need 1 <= min_shapes <= max_shapes");
  if (!(min_foreground >= 0.0 && min_foreground < max_foreground && max_foreground <= 1.0)) {
    throw ContractError("foreground band must satisfy 0 <= min < max <= 1");
  }
  if (supersample < 1) throw ContractError("supersample must be >= 1");
  if (texture_amplitude < 0.0 || texture_amplitude > 0.5) throw ContractError("texture_amplitude must be in [0,0.5]");
  if (max_attempts < 1) throw ContractError("max_attempts must be >= 1");
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"height", c.height},
           {"width", c.width},
           {"num_classes", c.num_classes},
           {"min_shapes", c.min_shapes},
           {"max_shapes", c.max_shapes},
           {"min_foreground", c.min_foreground},
           {"max_foreground", c.max_foreground},
           {"min_shape_pixels", c.min_shape_pixels},
           {"supersample", c.supersample},
           {"texture_amplitude", c.texture_amplitude},
           {"max_attempts", c.max_attempts}};
}

void from_json(const json& j, SynthConfig& c) {
  SynthConfig d;
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.min_shapes = j.value("min_shapes", d.min_shapes);
  c.max_shapes = j.value("max_shapes", d.max_shapes);
  c.min_foreground = j.value("min_foreground", d.min_foreground);
  c.max_foreground = j.value("max_foreground", d.max_foreground);
  c.min_shape_pixels = j.value("min_shape_pixels", d.min_shape_pixels);
  c.supersample = j.value("supersample", d.supersample);
  c.texture_amplitude = j.value("texture_amplitude", d.texture_amplitude);
  c.max_attempts = j.value("max_attempts", d.max_attempts);
}

bool ShapeParams::contains(double y, double x) const {
  const double dy = y - cy, dx = x - cx;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (dx * c + dy * s) / rx;
  const double v = (-dx * s + dy * c) / ry;
  if (kind == Kind::Ellipse) return u * u + v * v <= 1.0;
  return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
}

namespace {

// Smooth background: a coarse random grid, bilinearly interpolated.
std::vector<double> texture(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  constexpr std::size_t g = 5;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::array<double, g * g> grid;
  for (auto& v : grid) v = u(rng);
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / static_cast<double>(h - 1) * (g - 1);
    const auto y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), g - 2);
    const double fy = gy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / static_cast<double>(w - 1) * (g - 1);
      const auto x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), g - 2);
      const double fx = gx - static_cast<double>(x0);
      const double top = grid[y0 * g + x0] * (1 - fx) + grid[y0 * g + x0 + 1] * fx;
      const double bot = grid[(y0 + 1) * g + x0] * (1 - fx) + grid[(y0 + 1) * g + x0 + 1] * fx;
      out[y * w + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

// Index of the topmost shape covering the point, or -1.
int top_shape(const std::vector<ShapeParams>& shapes, double y, double x) {
  for (int i = static_cast<int>(shapes.size()) - 1; i >= 0; --i) {
    if (shapes[static_cast<std::size_t>(i)].contains(y, x)) return i;
  }
  return -1;
}

}  // namespace

Sample gen_sample(std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.height, w = cfg.width, k = cfg.num_classes;
  const std::size_t lo = std::min(cfg.min_shapes, k - 1), hi = std::min(cfg.max_shapes, k - 1);
  const double side = static_cast<double>(std::min(h, w));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double a, double b) { return a + (b - a) * unit(rng); };

  for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const auto count = lo + static_cast<std::size_t>(unit(rng) * static_cast<double>(hi - lo + 1));
    std::vector<std::size_t> classes(k - 1);
    for (std::size_t c = 0; c < k - 1; ++c) classes[c] = c + 1;
    std::shuffle(classes.begin(), classes.end(), rng);

    std::vector<ShapeParams> shapes(std::min(count, hi));
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      auto& s = shapes[i];
      s.kind = unit(rng) < 0.5 ? ShapeParams::Kind::Ellipse : ShapeParams::Kind::Rect;
      s.cls = classes[i];
      s.cy = between(0.2, 0.8) * static_cast<double>(h);
      s.cx = between(0.2, 0.8) * static_cast<double>(w);
      s.ry = between(0.07, 0.2) * side;
      s.rx = between(0.07, 0.2) * side;
      s.angle = between(0.0, std::numbers::pi);
      s.intensity = 0.45 + 0.45 * static_cast<double>(s.cls) / static_cast<double>(k - 1) + between(-0.04, 0.04);
    }
    const double base = between(0.15, 0.3);
    const auto tex = texture(h, w, rng);

    std::vector<double> labels(h * w, 0.0);
    std::vector<std::size_t> visible(shapes.size(), 0);
    std::size_t fg = 0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const int t = top_shape(shapes, static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5);
        if (t < 0) continue;
        labels[y * w + x] = static_cast<double>(shapes[static_cast<std::size_t>(t)].cls);
        ++visible[static_cast<std::size_t>(t)];
        ++fg;
      }
    const double frac = static_cast<double>(fg) / static_cast<double>(h * w);
    if (frac < cfg.min_foreground || frac > cfg.max_foreground) continue;
    if (std::any_of(visible.begin(), visible.end(), [&](std::size_t v) { return v < cfg.min_shape_pixels; })) {
      continue;
    }

    const std::size_t ss = cfg.supersample;
    std::vector<double> pixels(h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double bg = base + cfg.texture_amplitude * tex[y * w + x];
        double acc = 0.0;
        for (std::size_t sy = 0; sy < ss; ++sy)
          for (std::size_t sx = 0; sx < ss; ++sx) {
            const double py = static_cast<double>(y) + (static_cast<double>(sy) + 0.5) / static_cast<double>(ss);
            const double px = static_cast<double>(x) + (static_cast<double>(sx) + 0.5) / static_cast<double>(ss);
            const int t = top_shape(shapes, py, px);
            acc += t < 0 ? bg : shapes[static_cast<std::size_t>(t)].intensity;
          }
        const double v = std::clamp(acc / static_cast<double>(ss * ss), 0.0, 1.0);
        pixels[y * w + x] = std::nearbyint(v * 255.0) / 255.0;
      }

    Sample out;
    out.seed = seed;
    out.id = "seed_" + std::to_string(seed);
    out.image = Tensor({1, h, w}, std::move(pixels), DType::Float32);
    out.mask = LabelMask{Tensor({1, h, w}, std::move(labels), DType::UInt8), k};
    out.shapes = std::move(shapes);
    return out;
  }
  throw NumericError("no synthetic layout within the foreground band after " + std::to_string(cfg.max_attempts) +
                     " attempts (seed " + std::to_string(seed) + ")");
}

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::MotionBlur: return "motion_blur";
    case CorruptionKind::Poisson: return "poisson";
    case CorruptionKind::RandMask: return "rand_mask";
  }
  throw ContractError("unknown corruption kind");
}

CorruptionKind corruption_kind_from_string(const std::string& name) {
  for (auto k : {CorruptionKind::Brightness, CorruptionKind::MotionBlur, CorruptionKind::Poisson,
                 CorruptionKind::RandMask}) {
    if (to_string(k) == name) return k;
  }
  throw ContractError("unknown corruption kind '" + name + "'");
}

void CorruptionSpec::validate() const {
  switch (kind) {
    case CorruptionKind::Brightness:
      if (!(brightness_factor > 0.0) || !std::isfinite(brightness_factor)) {
        throw ContractError("brightness factor must be positive");
      }
      break;
    case CorruptionKind::MotionBlur:
      if (blur_length < 1 || blur_length > 63) throw ContractError("blur length must be in [1,63]");
      break;
    case CorruptionKind::Poisson:
      if (!(poisson_scale > 0.0) || !std::isfinite(poisson_scale)) throw ContractError("poisson scale must be positive");
      break;
    case CorruptionKind::RandMask:
      if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw ContractError("mask probability must be in [0,1]");
      break;
    default: throw ContractError("unknown corruption kind");
  }
}

void to_json(json& j, const CorruptionRanges& r) {
  j = json{{"brightness_min", r.brightness_min},
           {"brightness_max", r.brightness_max},
           {"blur_length", r.blur_length},
           {"poisson_scale", r.poisson_scale},
           {"mask_prob", r.mask_prob}};
}

void from_json(const json& j, CorruptionRanges& r) {
  CorruptionRanges d;
  r.brightness_min = j.value("brightness_min", d.brightness_min);
  r.brightness_max = j.value("brightness_max", d.brightness_max);
  r.blur_length = j.value("blur_length", d.blur_length);
  r.poisson_scale = j.value("poisson_scale", d.poisson_scale);
  r.mask_prob = j.value("mask_prob", d.mask_prob);
}

CorruptionSpec sample_corruption(std::mt19937_64& rng, const CorruptionRanges& ranges) {
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CorruptionSpec spec;
  spec.kind = static_cast<CorruptionKind>(pick(rng));
  spec.brightness_factor = ranges.brightness_min + (ranges.brightness_max - ranges.brightness_min) * unit(rng);
  spec.blur_length = ranges.blur_length;
  spec.poisson_scale = ranges.poisson_scale;
  spec.mask_prob = ranges.mask_prob;
  spec.seed = rng();
  return spec;
}

std::vector<double> motion_kernel(std::size_t length, double angle, std::size_t& size) {
  if (length < 1) throw ContractError("blur length must be >= 1");
  size = length % 2 == 1 ? length : length + 1;
  std::vector<double> k(size * size, 0.0);
  const double c = static_cast<double>(size - 1) / 2.0;
  // Equal-length pieces of a segment of the given length, each credited to
  // the cell holding its midpoint.
  const double len = static_cast<double>(length);
  const std::size_t steps = 8 * length;
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = -len / 2.0 + (static_cast<double>(i) + 0.5) * len / static_cast<double>(steps);
    const auto cell = [&](double v) {
      return static_cast<std::size_t>(std::clamp(std::nearbyint(v), 0.0, static_cast<double>(size - 1)));
    };
    k[cell(c + t * std::sin(angle)) * size + cell(c + t * std::cos(angle))] += 1.0;
  }
  double total = 0.0;
  for (double v : k) total += v;
  for (double& v : k) v /= total;
  return k;
}

namespace {

Tensor apply_corruption(const Tensor& x, const CorruptionSpec& spec, bool image_domain) {
  spec.validate();
  if (x.rank() < 2) throw DimensionError("corruption needs spatial axes, got " + shape_string(x.shape()));
  const auto& s = x.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1], plane = h * w;
  const std::size_t planes = x.numel() / plane;
  auto in = x.data();
  std::vector<double> out(in.begin(), in.end());
  std::mt19937_64 rng(spec.seed);
  auto finish = [&](double v) { return image_domain ? std::clamp(v, 0.0, 1.0) : v; };

  switch (spec.kind) {
    case CorruptionKind::Brightness:
      for (auto& v : out) v = finish(v * spec.brightness_factor);
      break;
    case CorruptionKind::MotionBlur: {
      std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
      std::size_t size = 0;
      const auto kernel = motion_kernel(spec.blur_length, angle(rng), size);
      const long c = static_cast<long>(size - 1) / 2;
      const long hl = static_cast<long>(h), wl = static_cast<long>(w);
      for (std::size_t p = 0; p < planes; ++p) {
        const double* src = in.data() + p * plane;
        for (long y = 0; y < hl; ++y)
          for (long xx = 0; xx < wl; ++xx) {
            double acc = 0.0;
            for (long i = 0; i < static_cast<long>(size); ++i)
              for (long j = 0; j < static_cast<long>(size); ++j) {
                const double kv = kernel[static_cast<std::size_t>(i) * size + static_cast<std::size_t>(j)];
                if (kv == 0.0) continue;
                const long yy = std::clamp(y + i - c, 0L, hl - 1), xs = std::clamp(xx + j - c, 0L, wl - 1);
                acc += kv * src[yy * wl + xs];
              }
            out[p * plane + static_cast<std::size_t>(y * wl + xx)] = finish(acc);
          }
      }
      break;
    }
    case CorruptionKind::Poisson:
      for (auto& v : out) {
        const double lambda = std::abs(v) * spec.poisson_scale;
        double count = 0.0;
        if (lambda > 0.0) count = static_cast<double>(std::poisson_distribution<long long>(lambda)(rng));
        const double mag = count / spec.poisson_scale;
        v = finish(v < 0.0 ? -mag : mag);
      }
      break;
    case CorruptionKind::RandMask: {
      std::bernoulli_distribution drop(spec.mask_prob);
      for (auto& v : out)
        if (drop(rng)) v = 0.0;
      break;
    }
  }
  return Tensor(x.shape(), std::move(out), x.dtype());
}

}  // namespace

Tensor corrupt(const Tensor& image, const CorruptionSpec& spec) {
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("corrupt expects an image with values in [0,1]");
  }
  return apply_corruption(image, spec, true);
}

Tensor feature_spatial_aug(const Tensor& feature, const CorruptionSpec& spec) {
  if (feature.rank() != 4) throw DimensionError("feature_spatial_aug expects [N,C,H,W], got " + shape_string(feature.shape()));
  return apply_corruption(feature, spec, false);
}

// ---- on-disk dataset -------------------------------------------------------

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(e);
  return out;
}

void save_mask_pgm(const fs::path& path, const LabelMask& mask) {
  mask.validate();
  if (mask.batch() != 1) throw ContractError("mask files hold a single [1,H,W] mask");
  io::save_pgm(path, io::to_gray(mask.values));
}

LabelMask load_mask_pgm(const fs::path& path, std::size_t num_classes) {
  const auto img = io::load_pgm(path);
  std::vector<double> v(img.pixels.begin(), img.pixels.end());
  LabelMask m{Tensor({1, img.height, img.width}, std::move(v), DType::UInt8), num_classes};
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return m;
}

Manifest write_dataset(const fs::path& dir, std::size_t train_count, std::size_t test_count, std::uint64_t seed,
                       const SynthConfig& cfg) {
  cfg.validate();
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  Manifest m;
  m.config = cfg;
  m.seed = seed;
  m.root = dir;
  auto emit = [&](const std::string& split, std::size_t count, std::uint64_t base) {
    for (std::size_t i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_%04zu", split.c_str(), i);
      ManifestEntry e{id, base + i, split, fs::path("images") / (std::string(id) + ".pgm"),
                      fs::path("masks") / (std::string(id) + ".pgm")};
      const auto s = gen_sample(e.seed, cfg);
      io::save_pgm(dir / e.image, io::to_gray(s.image));
      save_mask_pgm(dir / e.mask, s.mask);
      m.entries.push_back(std::move(e));
    }
  };
  emit("train", train_count, seed);
  emit("test", test_count, seed + kTestSeedOffset);

  json j;
  j["format"] = "augseg-dataset";
  j["version"] = 1;
  j["seed"] = seed;
  j["config"] = cfg;
  j["samples"] = json::array();
  for (const auto& e : m.entries) {
    j["samples"].push_back(
        {{"id", e.id}, {"seed", e.seed}, {"split", e.split}, {"image", e.image.generic_string()}, {"mask", e.mask.generic_string()}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw InputError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
  return m;
}

Manifest load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream in(file);
  if (!in) throw InputError("cannot open manifest " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what(), e.byte);
  }
  Manifest m;
  m.root = file.parent_path();
  try {
    if (j.value("format", std::string()) != "augseg-dataset") throw FormatError("not an augseg dataset manifest", 0);
    m.config = j.at("config").get<SynthConfig>();
    m.config.validate();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.seed = s.at("seed").get<std::uint64_t>();
      e.split = s.at("split").get<std::string>();
      e.image = s.at("image").get<std::string>();
      e.mask = s.at("mask").get<std::string>();
      if (e.split != "train" && e.split != "test") throw FormatError("unknown split '" + e.split + "'", 0);
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what(), 0);
  } catch (const ContractError& e) {
    throw FormatError(file.string() + ": " + e.what(), 0);
  }
  return m;
}

Sample load_sample(const Manifest& manifest, const ManifestEntry& entry) {
  Sample s;
  s.id = entry.id;
  s.seed = entry.seed;
  const auto img = io::load_pgm(manifest.root / entry.image);
  s.image = io::from_gray(img);
  s.mask = load_mask_pgm(manifest.root / entry.mask, manifest.config.num_classes);
  if (s.mask.height() != img.height || s.mask.width() != img.width) {
    throw InputError("image and mask sizes differ for sample " + entry.id);
  }
  return s;
}

}  // namespace augseg::data
