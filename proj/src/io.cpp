#include "augseg/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>

#include "augseg/error.hpp"

namespace augseg::io {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'U', 'G'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

class ByteReader {
 public:
  explicit ByteReader(std::istream& is) : is_(is) {}

  std::uint64_t offset() const { return offset_; }

  void read(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
      throw FormatError(std::string("truncated file while reading ") + what, offset_ + got);
    }
    offset_ += n;
  }

  std::uint64_t read_le(std::size_t bytes, const char* what) {
    std::uint8_t buf[8];
    read(buf, bytes, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }

  int peek() { return is_.peek(); }

  /// Bytes left in a seekable stream; nullopt when it cannot be measured.
  std::optional<std::uint64_t> remaining() {
    const auto here = is_.tellg();
    if (here == std::istream::pos_type(-1)) return std::nullopt;
    is_.seekg(0, std::ios::end);
    const auto end = is_.tellg();
    is_.seekg(here);
    if (end == std::istream::pos_type(-1) || !is_) {
      is_.clear();
      is_.seekg(here);
      return std::nullopt;
    }
    return static_cast<std::uint64_t>(end - here);
  }

  /// Fails early when a declared payload cannot fit in what is left, so a
  /// damaged header never turns into a giant allocation.
  void require(std::uint64_t bytes, const char* what) {
    if (const auto left = remaining(); left && *left < bytes) {
      throw FormatError(std::string("truncated file: ") + what + " needs " + std::to_string(bytes) + " bytes, " +
                            std::to_string(*left) + " present",
                        offset_ + *left);
    }
  }

  /// Reads n bytes in bounded chunks (streams that cannot report their size).
  void read_chunked(std::vector<std::uint8_t>& dst, std::uint64_t n, const char* what) {
    constexpr std::uint64_t kChunk = 1 << 20;
    dst.clear();
    while (dst.size() < n) {
      const auto step = static_cast<std::size_t>(std::min<std::uint64_t>(kChunk, n - dst.size()));
      const auto at = dst.size();
      dst.resize(at + step);
      read(dst.data() + at, step, what);
    }
  }

  int get() {
    const int c = is_.get();
    if (c != std::char_traits<char>::eof()) ++offset_;
    return c;
  }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

void write_le(std::ostream& os, std::uint64_t v, std::size_t bytes) {
  char buf[8];
  for (std::size_t i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, static_cast<std::streamsize>(bytes));
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

// Netpbm header token: skips whitespace and '#' comments.
std::uint64_t read_header_uint(ByteReader& r, const char* what) {
  for (;;) {
    const int c = r.peek();
    if (c == '#') {
      while (r.peek() != '\n' && r.peek() != std::char_traits<char>::eof()) r.get();
    } else if (c != std::char_traits<char>::eof() && std::isspace(c)) {
      r.get();
    } else {
      break;
    }
  }
  const std::uint64_t start = r.offset();
  std::uint64_t v = 0;
  int digits = 0;
  while (r.peek() != std::char_traits<char>::eof() && std::isdigit(r.peek())) {
    v = v * 10 + static_cast<std::uint64_t>(r.get() - '0');
    if (++digits > 9) throw FormatError(std::string("header value too long for ") + what, start);
  }
  if (digits == 0) throw FormatError(std::string("expected ") + what, r.offset());
  return v;
}

struct NetpbmHeader {
  std::size_t width, height;
};

NetpbmHeader read_netpbm_header(ByteReader& r, char kind) {
  char magic[2];
  r.read(magic, 2, "magic");
  if (magic[0] != 'P' || magic[1] != kind) {
    throw FormatError(std::string("not a binary P") + kind + " file", 0);
  }
  const auto w = read_header_uint(r, "width");
  const auto h = read_header_uint(r, "height");
  const auto offset = r.offset();
  const auto maxval = read_header_uint(r, "maxval");
  if (w == 0 || h == 0) throw FormatError("zero image extent", offset);
  if (maxval == 0 || maxval > 255) throw FormatError("only 8-bit maxval is supported", offset);
  const int sep = r.get();
  if (sep == std::char_traits<char>::eof() || !std::isspace(sep)) {
    throw FormatError("missing whitespace after header", r.offset());
  }
  return {static_cast<std::size_t>(w), static_cast<std::size_t>(h)};
}

}  // namespace

void write_daug(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  write_le(os, kDaugVersion, 4);
  write_le(os, static_cast<std::uint8_t>(t.dtype()), 1);
  write_le(os, t.rank(), 1);
  for (auto e : t.shape()) write_le(os, e, 8);
  for (double v : t.data()) {
    switch (t.dtype()) {
      case DType::Float32: write_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4); break;
      case DType::Float64: write_le(os, std::bit_cast<std::uint64_t>(v), 8); break;
      case DType::UInt8: write_le(os, static_cast<std::uint8_t>(v), 1); break;
    }
  }
  if (!os) throw InputError("write failure while emitting DAUG tensor");
}

Tensor read_daug(std::istream& is) {
  ByteReader r(is);
  char magic[4];
  r.read(magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("bad DAUG magic", 0);
  const auto version = r.read_le(4, "version");
  if (version != kDaugVersion) {
    throw FormatError("unsupported DAUG version " + std::to_string(version), 4);
  }
  const auto code = r.read_le(1, "dtype");
  if (code < 1 || code > 3) throw FormatError("unknown dtype code " + std::to_string(code), 8);
  const auto dtype = static_cast<DType>(code);
  const auto rank = r.read_le(1, "rank");
  if (rank < 1 || rank > 4) throw FormatError("rank must be 1-4, got " + std::to_string(rank), 9);
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    const auto at = r.offset();
    const auto e = r.read_le(8, "extent");
    if (e == 0 || e > kMaxElements || count * e > kMaxElements) {
      throw FormatError("implausible extent " + std::to_string(e), at);
    }
    count *= e;
    shape.push_back(static_cast<std::size_t>(e));
  }
  const std::uint64_t width = dtype == DType::Float64 ? 8 : dtype == DType::Float32 ? 4 : 1;
  r.require(count * width, "payload");
  std::vector<std::uint8_t> raw;
  r.read_chunked(raw, count * width, "payload");
  std::vector<double> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < width; ++b) bits |= static_cast<std::uint64_t>(raw[i * width + b]) << (8 * b);
    switch (dtype) {
      case DType::Float32: values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(bits)); break;
      case DType::Float64: values[i] = std::bit_cast<double>(bits); break;
      case DType::UInt8: values[i] = static_cast<double>(bits); break;
    }
  }
  return Tensor(std::move(shape), std::move(values), dtype);
}

void save_daug(const std::filesystem::path& path, const Tensor& t) {
  auto out = open_out(path);
  write_daug(out, t);
}

Tensor load_daug(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_daug(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_pgm(std::ostream& os, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height) throw ContractError("PGM pixel count mismatch");
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw InputError("write failure while emitting PGM");
}

GrayImage read_pgm(std::istream& is) {
  ByteReader r(is);
  const auto hdr = read_netpbm_header(r, '5');
  GrayImage img{hdr.width, hdr.height, {}};
  r.require(std::uint64_t{hdr.width} * hdr.height, "pixel data");
  r.read_chunked(img.pixels, std::uint64_t{hdr.width} * hdr.height, "pixel data");
  return img;
}

void save_pgm(const std::filesystem::path& path, const GrayImage& img) {
  auto out = open_out(path);
  write_pgm(out, img);
}

GrayImage load_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_pgm(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_ppm(std::ostream& os, const RgbImage& img) {
  if (img.pixels.size() != 3 * img.width * img.height) throw ContractError("PPM pixel count mismatch");
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw InputError("write failure while emitting PPM");
}

RgbImage read_ppm(std::istream& is) {
  ByteReader r(is);
  const auto hdr = read_netpbm_header(r, '6');
  RgbImage img{hdr.width, hdr.height, {}};
  r.require(3 * std::uint64_t{hdr.width} * hdr.height, "pixel data");
  r.read_chunked(img.pixels, 3 * std::uint64_t{hdr.width} * hdr.height, "pixel data");
  return img;
}

void save_ppm(const std::filesystem::path& path, const RgbImage& img) {
  auto out = open_out(path);
  write_ppm(out, img);
}

RgbImage load_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_ppm(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

GrayImage to_gray(const Tensor& image) {
  const auto& s = image.shape();
  std::size_t h = 0, w = 0;
  if (s.size() == 2) {
    h = s[0];
    w = s[1];
  } else if (s.size() == 3 && s[0] == 1) {
    h = s[1];
    w = s[2];
  } else {
    throw DimensionError("to_gray expects [H,W] or [1,H,W], got " + shape_string(s));
  }
  GrayImage img{w, h, std::vector<std::uint8_t>(w * h)};
  auto v = image.data();
  const bool levels = image.dtype() == DType::UInt8;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = levels ? v[i] : std::clamp(v[i], 0.0, 1.0) * 255.0;
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(x), 0.0, 255.0));
  }
  return img;
}

Tensor from_gray(const GrayImage& img) {
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
  return Tensor({1, img.height, img.width}, std::move(v), DType::Float32);
}

}  // namespace augseg::io
