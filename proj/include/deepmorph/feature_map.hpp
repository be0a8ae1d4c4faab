#ifndef DEEPMORPH_FEATURE_MAP_HPP_
#define DEEPMORPH_FEATURE_MAP_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace deepmorph {

/// Dense C x W x H grid of reals stored row-major as (channel, row, column).
///
/// Pixel (x, y) is column x, row y; its centre sits at the continuous point
/// (x, y). Everything downstream (morphology scan order, argmax tie-breaking,
/// rasterization) relies on this traversal order.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int width, int height, double fill = 0.0);
  FeatureMap(int channels, int width, int height, std::vector<double> values);

  int channels() const { return channels_; }
  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }
  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> plane(int c);
  std::span<const double> plane(int c) const;

  bool same_shape(const FeatureMap& other) const {
    return channels_ == other.channels_ && width_ == other.width_ &&
           height_ == other.height_;
  }
  std::string shape_string() const;
  void fill(double v);

  /// Element-wise equality of shape and values (no tolerance).
  bool operator==(const FeatureMap& other) const = default;

 private:
  int channels_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Per-pixel {0,1} mask.
class BinaryMap {
 public:
  BinaryMap() = default;
  BinaryMap(int width, int height, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  bool inside(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  std::uint8_t at(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  void set(int x, int y, bool on) {
    data_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0;
  }
  std::span<const std::uint8_t> values() const { return data_; }
  std::size_t count() const;

  /// The mask as a 1-channel map of 0.0 / 1.0.
  FeatureMap to_feature_map() const;

  bool operator==(const BinaryMap& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

FeatureMap map_add(const FeatureMap& a, const FeatureMap& b);
FeatureMap negate(const FeatureMap& m);
FeatureMap scaled(const FeatureMap& m, double factor);

/// Single channel of a map as its own 1-channel map.
FeatureMap extract_channel(const FeatureMap& m, int channel);
/// Stacks 1-channel-or-more maps of equal extent along the channel axis.
FeatureMap stack_channels(std::span<const FeatureMap> parts);

/// pixel = 1 iff value > t.
BinaryMap threshold(const FeatureMap& m, int channel, double t);

/// Throws NumericError naming `what` if any value is NaN or infinite.
void require_finite(const FeatureMap& m, const char* what);

// Binary container: 16-byte little-endian header
//   u16 magic "DM" | u16 version | u32 channels | u32 width | u32 height
// then C*W*H IEEE-754 little-endian values. Version 1 stores float32,
// version 2 float64; writers pick version 1 whenever every value survives
// the narrowing unchanged, so round trips are always bit-exact.
inline constexpr std::uint16_t kMapMagic = 0x4D44;  // bytes 'D','M'
inline constexpr std::size_t kMapHeaderBytes = 16;

void write_map(std::ostream& out, const FeatureMap& m);
FeatureMap read_map(std::istream& in);
void save_map(const FeatureMap& m, const std::filesystem::path& path);
FeatureMap load_map(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) of one channel, values in [0,1] scaled to
/// [0,255] and clamped.
void save_pgm(const FeatureMap& m, int channel, const std::filesystem::path& path);
void write_pgm(std::ostream& out, int width, int height,
               std::span<const std::uint8_t> gray);

}  // namespace deepmorph

#endif  // DEEPMORPH_FEATURE_MAP_HPP_
