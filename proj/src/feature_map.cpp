#include "deepmorph/feature_map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "deepmorph/errors.hpp"

namespace deepmorph {

namespace {

void check_dims(int channels, int width, int height) {
  if (channels <= 0 || width <= 0 || height <= 0) {
    std::ostringstream os;
    os << "invalid map shape " << channels << "x" << width << "x" << height;
    throw ShapeError(os.str());
  }
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() +
                     " vs " + b.shape_string());
  }
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  out.write(bytes, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t le_bytes(const unsigned char* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

bool fits_float32(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) {
    return static_cast<double>(static_cast<float>(v)) == v &&
           std::signbit(static_cast<float>(v)) == std::signbit(v);
  });
}

}  // namespace

FeatureMap::FeatureMap(int channels, int width, int height, double fill)
    : channels_(channels), width_(width), height_(height) {
  check_dims(channels, width, height);
  data_.assign(static_cast<std::size_t>(channels) * width * height, fill);
}

FeatureMap::FeatureMap(int channels, int width, int height, std::vector<double> values)
    : channels_(channels), width_(width), height_(height), data_(std::move(values)) {
  check_dims(channels, width, height);
  if (data_.size() != static_cast<std::size_t>(channels) * width * height) {
    throw ShapeError("value count " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string());
  }
}

std::span<double> FeatureMap::plane(int c) {
  return std::span<double>(data_).subspan(c * plane_size(), plane_size());
}

std::span<const double> FeatureMap::plane(int c) const {
  return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
}

std::string FeatureMap::shape_string() const {
  std::ostringstream os;
  os << channels_ << "x" << width_ << "x" << height_;
  return os.str();
}

void FeatureMap::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

BinaryMap::BinaryMap(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw ShapeError("invalid binary map shape " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  data_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t BinaryMap::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), 1));
}

FeatureMap BinaryMap::to_feature_map() const {
  std::vector<double> v(data_.begin(), data_.end());
  return FeatureMap(1, width_, height_, std::move(v));
}

FeatureMap map_add(const FeatureMap& a, const FeatureMap& b) {
  require_same_shape(a, b, "map_add");
  FeatureMap out = a;
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  require_finite(out, "map_add");
  return out;
}

FeatureMap negate(const FeatureMap& m) {
  FeatureMap out = m;
  for (double& v : out.values()) v = -v;
  return out;
}

FeatureMap scaled(const FeatureMap& m, double factor) {
  FeatureMap out = m;
  for (double& v : out.values()) v *= factor;
  require_finite(out, "scaled");
  return out;
}

FeatureMap extract_channel(const FeatureMap& m, int channel) {
  if (channel < 0 || channel >= m.channels()) {
    throw IndexError("channel " + std::to_string(channel) + " out of range for " +
                     m.shape_string());
  }
  auto src = m.plane(channel);
  return FeatureMap(1, m.width(), m.height(), std::vector<double>(src.begin(), src.end()));
}

FeatureMap stack_channels(std::span<const FeatureMap> parts) {
  if (parts.empty()) throw ShapeError("stack_channels: nothing to stack");
  int channels = 0;
  for (const auto& p : parts) {
    if (p.width() != parts[0].width() || p.height() != parts[0].height()) {
      throw ShapeError("stack_channels: extent mismatch");
    }
    channels += p.channels();
  }
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(channels) * parts[0].plane_size());
  for (const auto& p : parts) values.insert(values.end(), p.values().begin(), p.values().end());
  return FeatureMap(channels, parts[0].width(), parts[0].height(), std::move(values));
}

BinaryMap threshold(const FeatureMap& m, int channel, double t) {
  if (channel < 0 || channel >= m.channels()) {
    throw IndexError("channel " + std::to_string(channel) + " out of range for " +
                     m.shape_string());
  }
  BinaryMap out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) out.set(x, y, m.at(channel, y, x) > t);
  }
  return out;
}

void require_finite(const FeatureMap& m, const char* what) {
  for (double v : m.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
  }
}

void write_map(std::ostream& out, const FeatureMap& m) {
  if (m.empty()) throw ShapeError("cannot serialize an empty map");
  const bool narrow = fits_float32(m.values());
  put_u16(out, kMapMagic);
  put_u16(out, narrow ? 1 : 2);
  put_u32(out, static_cast<std::uint32_t>(m.channels()));
  put_u32(out, static_cast<std::uint32_t>(m.width()));
  put_u32(out, static_cast<std::uint32_t>(m.height()));
  for (double v : m.values()) {
    if (narrow) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw IoError("write failed");
}

FeatureMap read_map(std::istream& in) {
  unsigned char header[kMapHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kMapHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kMapHeaderBytes)) {
    throw MalformedHeaderError("map header shorter than 16 bytes");
  }
  const auto magic = static_cast<std::uint16_t>(le_bytes(header, 2));
  const auto version = static_cast<std::uint16_t>(le_bytes(header + 2, 2));
  if (magic != kMapMagic) throw MalformedHeaderError("bad map magic");
  if (version != 1 && version != 2) {
    throw MalformedHeaderError("unsupported map version " + std::to_string(version));
  }
  const auto c = le_bytes(header + 4, 4);
  const auto w = le_bytes(header + 8, 4);
  const auto h = le_bytes(header + 12, 4);
  if (c == 0 || w == 0 || h == 0 || c > (1u << 16) || w > (1u << 16) || h > (1u << 16)) {
    throw MalformedHeaderError("map header declares an invalid shape");
  }
  const std::size_t count = c * w * h;
  const std::size_t width_bytes = version == 1 ? 4 : 8;
  std::vector<unsigned char> payload(count * width_bytes);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != payload.size()) {
    throw TruncatedPayloadError("map payload truncated: expected " + std::to_string(count) +
                                " values, found " + std::to_string(got / width_bytes));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = payload.data() + i * width_bytes;
    values[i] = version == 1
                    ? static_cast<double>(std::bit_cast<float>(
                          static_cast<std::uint32_t>(le_bytes(p, 4))))
                    : std::bit_cast<double>(le_bytes(p, 8));
    if (!std::isfinite(values[i])) throw MalformedHeaderError("map payload holds non-finite value");
  }
  return FeatureMap(static_cast<int>(c), static_cast<int>(w), static_cast<int>(h),
                    std::move(values));
}

void save_map(const FeatureMap& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_map(out, m);
}

FeatureMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_map(in);
}

void write_pgm(std::ostream& out, int width, int height, std::span<const std::uint8_t> gray) {
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!out) throw IoError("pgm write failed");
}

void save_pgm(const FeatureMap& m, int channel, const std::filesystem::path& path) {
  if (channel < 0 || channel >= m.channels()) throw IndexError("pgm channel out of range");
  std::vector<std::uint8_t> gray(m.plane_size());
  auto src = m.plane(channel);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_pgm(out, m.width(), m.height(), gray);
}

}  // namespace deepmorph
