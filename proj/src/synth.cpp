#include "deepmorph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <tuple>

#include "deepmorph/errors.hpp"
#include "deepmorph/rng.hpp"

namespace deepmorph {

namespace {

void check_range(const IntRange& r, int min_lo, const char* name) {
  if (r.lo > r.hi || r.lo < min_lo) {
    throw InvalidArgument(std::string("invalid range for ") + name + ": [" +
                          std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
  }
}

void check_range(const RealRange& r, double min_lo, const char* name) {
  if (!(r.lo <= r.hi) || r.lo < min_lo || !std::isfinite(r.hi)) {
    throw InvalidArgument(std::string("invalid range for ") + name);
  }
}

struct Rect {
  int x0, y0, x1, y1;  // inclusive pixel bounds

  bool near(const Rect& o, int margin) const {
    return x0 - margin <= o.x1 && o.x0 <= x1 + margin && y0 - margin <= o.y1 &&
           o.y0 <= y1 + margin;
  }
};

// One curved strip: centre line y = base + amp * sin(pi (x - x0) / (len - 1)).
struct Strip {
  int x0 = 0;
  int len = 0;
  double base = 0.0;
  double amp = 0.0;
  int thickness = 0;
  double band = 0.0;

  double centre(double x) const {
    if (len <= 1) return base;
    return base + amp * std::sin(std::numbers::pi * (x - x0) / (len - 1));
  }
  int top_row(int x) const {
    return static_cast<int>(std::lround(centre(x) - (thickness - 1) / 2.0));
  }
  Rect band_box() const {
    const double lo = std::min(base, base + amp) - band / 2.0;
    const double hi = std::max(base, base + amp) + band / 2.0;
    return {x0, static_cast<int>(std::floor(lo)), x0 + len - 1, static_cast<int>(std::ceil(hi))};
  }
  // 14-point polygon: upper side left to right, lower side right to left.
  TextPolygon polygon() const {
    constexpr int kPerSide = 7;
    TextPolygon p;
    const double left = x0 - 0.5;
    const double right = x0 + len - 0.5;
    std::vector<Point> lower;
    for (int k = 0; k < kPerSide; ++k) {
      const double x = left + (right - left) * k / (kPerSide - 1);
      const double c = centre(std::clamp(x, double(x0), double(x0 + len - 1)));
      p.vertices.push_back({x, c - band / 2.0});
      lower.push_back({x, c + band / 2.0});
    }
    p.vertices.insert(p.vertices.end(), lower.rbegin(), lower.rend());
    return p;
  }
};

}  // namespace

void validate(const SynthConfig& c) {
  if (c.map_size < 16 || c.map_size > 4096) throw InvalidArgument("map_size must be in [16, 4096]");
  check_range(c.instances, 0, "instances");
  check_range(c.thickness, 1, "thickness");
  check_range(c.band_height, 1.0, "band_height");
  check_range(c.length, 2, "length");
  check_range(c.curvature, 0.0, "curvature");
  check_range(c.noise_blobs, 0, "noise_blobs");
  check_range(c.noise_size, 1, "noise_size");
  check_range(c.gaps, 0, "gaps");
  check_range(c.gap_width, 1, "gap_width");
  if (c.noise_size.hi > 3) throw InvalidArgument("noise blobs are at most 3 pixels per side");
  if (c.gap_width.hi > 4) throw InvalidArgument("gaps are at most 4 pixels wide");
  if (!(c.edge_value > 0.5 && c.edge_value <= 1.0)) throw InvalidArgument("edge_value must be in (0.5, 1]");
  if (c.noise_clearance < 3) throw InvalidArgument("noise_clearance must be >= 3");
  if (c.instance_spacing < 0 || c.placement_retries < 1) {
    throw InvalidArgument("instance_spacing must be >= 0 and placement_retries >= 1");
  }
  if (c.border < 0) throw InvalidArgument("border must be non-negative");
  if (c.length.hi + 2 * c.border > c.map_size) {
    throw InvalidArgument("strip length plus borders exceeds the map");
  }
  if (c.thickness.hi > c.band_height.lo) {
    throw InvalidArgument("strip thickness must not exceed the band height");
  }
}

std::optional<SynthSample> generate(const SynthConfig& config) {
  validate(config);
  Rng rng(config.seed);
  const int size = config.map_size;

  // Strips: rejection-sampled placements with spaced bounding boxes.
  std::vector<Strip> strips;
  const int count = rng.uniform_int(config.instances.lo, config.instances.hi);
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < config.placement_retries && !placed; ++attempt) {
      Strip s;
      s.len = rng.uniform_int(config.length.lo, config.length.hi);
      s.thickness = rng.uniform_int(config.thickness.lo, config.thickness.hi);
      s.band = rng.uniform(config.band_height.lo, config.band_height.hi);
      const double kappa = rng.uniform(config.curvature.lo, config.curvature.hi);
      const double amp = kappa * (s.len - 1) * (s.len - 1) / (std::numbers::pi * std::numbers::pi);
      s.amp = (rng.coin() ? 1.0 : -1.0) * std::min(amp, s.len / 4.0);
      const int edge = config.border;
      s.x0 = rng.uniform_int(edge, size - edge - s.len);
      const double lo = s.band / 2.0 + edge - std::min(0.0, s.amp);
      const double hi = size - 1.0 - edge - s.band / 2.0 - std::max(0.0, s.amp);
      if (lo > hi) continue;
      s.base = rng.uniform(lo, hi);
      const Rect box = s.band_box();
      placed = std::none_of(strips.begin(), strips.end(), [&](const Strip& o) {
        return o.band_box().near(box, config.instance_spacing);
      });
      if (placed) strips.push_back(s);
    }
    if (!placed) return std::nullopt;
  }

  SynthSample out;
  out.clean = FeatureMap(1, size, size);
  out.th = FeatureMap(1, size, size);
  out.ta = FeatureMap(1, size, size);
  for (const Strip& s : strips) out.truths.push_back(s.polygon());
  const BinaryMap band_mask = rasterize_polygons(out.truths, size, size);

  for (std::size_t k = 0; k < strips.size(); ++k) {
    const Strip& s = strips[k];
    const auto bottom = sample_bottom(bottom_long_side(out.truths[k]), kBottomSampleStep);
    const double half = std::max(1.0, (s.thickness - 1) / 2.0);
    for (int x = s.x0; x < s.x0 + s.len; ++x) {
      const int top = s.top_row(x);
      const double mid = top + (s.thickness - 1) / 2.0;
      for (int y = top; y < top + s.thickness; ++y) {
        if (y < 0 || y >= size) continue;
        out.clean.at(0, y, x) = 1.0 - (1.0 - config.edge_value) * std::abs(y - mid) / half;
        const HeightAngle ha = height_angle_at({double(x), double(y)}, bottom);
        out.th.at(0, y, x) = ha.height;
        out.ta.at(0, y, x) = ha.angle;
      }
    }
  }
  out.corrupted = out.clean;

  // Gaps: whole-column cuts through the interior of a strip.
  const int gap_count = strips.empty() ? 0 : rng.uniform_int(config.gaps.lo, config.gaps.hi);
  std::vector<std::vector<std::pair<int, int>>> cuts(strips.size());
  for (int g = 0; g < gap_count; ++g) {
    bool placed = false;
    for (int attempt = 0; attempt < config.placement_retries && !placed; ++attempt) {
      const auto k = static_cast<std::size_t>(rng.uniform_int(0, int(strips.size()) - 1));
      const Strip& s = strips[k];
      const int width = rng.uniform_int(config.gap_width.lo, config.gap_width.hi);
      const int margin = std::max(2, s.len / 5);
      const int first = s.x0 + margin;
      const int last = s.x0 + s.len - margin - width;
      if (first > last) continue;
      const int start = rng.uniform_int(first, last);
      placed = std::none_of(cuts[k].begin(), cuts[k].end(), [&](const auto& c) {
        return start <= c.second + 1 && c.first <= start + width;
      });
      if (!placed) continue;
      cuts[k].push_back({start, start + width - 1});
      for (int x = start; x < start + width; ++x) {
        const int top = s.top_row(x);
        for (int y = top; y < top + s.thickness; ++y) {
          if (y < 0 || y >= size) continue;
          out.corrupted.at(0, y, x) = 0.0;
          ++out.gap_pixels;
        }
      }
    }
    if (!placed) return std::nullopt;
  }

  // Noise blobs: small rectangles well clear of every text band and of
  // each other, carrying plausible height / angle values.
  const int blob_count = rng.uniform_int(config.noise_blobs.lo, config.noise_blobs.hi);
  std::vector<Rect> blobs;
  const int clear = config.noise_clearance;
  for (int b = 0; b < blob_count; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < config.placement_retries && !placed; ++attempt) {
      const int w = rng.uniform_int(config.noise_size.lo, config.noise_size.hi);
      const int h = rng.uniform_int(config.noise_size.lo, config.noise_size.hi);
      const int x = rng.uniform_int(config.border, size - config.border - w);
      const int y = rng.uniform_int(config.border, size - config.border - h);
      const Rect r{x, y, x + w - 1, y + h - 1};
      bool ok = std::none_of(blobs.begin(), blobs.end(),
                             [&](const Rect& o) { return o.near(r, clear); });
      for (int yy = r.y0 - clear; ok && yy <= r.y1 + clear; ++yy) {
        for (int xx = r.x0 - clear; ok && xx <= r.x1 + clear; ++xx) {
          if (band_mask.inside(xx, yy) && band_mask.at(xx, yy)) ok = false;
        }
      }
      if (!ok) continue;
      placed = true;
      blobs.push_back(r);
      const double value = rng.uniform(config.edge_value, 1.0);
      const double th = rng.uniform(config.band_height.lo, config.band_height.hi);
      const double ta = canonical_angle(-std::numbers::pi / 2 + rng.uniform(-0.2, 0.2));
      for (int yy = r.y0; yy <= r.y1; ++yy) {
        for (int xx = r.x0; xx <= r.x1; ++xx) {
          out.corrupted.at(0, yy, xx) = value;
          out.th.at(0, yy, xx) = th;
          out.ta.at(0, yy, xx) = ta;
          ++out.noise_pixels;
        }
      }
    }
    if (!placed) return std::nullopt;
  }
  return out;
}

Corpus make_corpus(const SynthConfig& config, std::size_t train_count, std::size_t test_count) {
  validate(config);
  Corpus corpus;
  const std::size_t total = train_count + test_count;
  constexpr std::uint64_t kMaxDrawsPerSample = 64;
  std::uint64_t stream = 0;
  for (std::size_t i = 0; i < total; ++i) {
    std::optional<SynthSample> sample;
    for (std::uint64_t draw = 0; draw < kMaxDrawsPerSample && !sample; ++draw) {
      SynthConfig c = config;
      c.seed = derive_seed(config.seed, stream++);
      sample = generate(c);
      if (!sample) ++corpus.skipped;
    }
    if (!sample) throw InvalidArgument("synthetic config is infeasible: placement keeps failing");
    (i < train_count ? corpus.train : corpus.test).push_back(std::move(*sample));
  }
  return corpus;
}

namespace {

std::string sample_stem(std::size_t i) {
  std::ostringstream s;
  s.width(4);
  s.fill('0');
  s << i;
  return s.str();
}

}  // namespace

void save_split(const std::filesystem::path& dir, const std::string& split,
                const std::vector<SynthSample>& samples) {
  const auto root = dir / split;
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SynthSample& s = samples[i];
    const FeatureMap parts[] = {s.corrupted, s.clean, s.th, s.ta};
    save_map(stack_channels(parts), root / (sample_stem(i) + ".map"));
    std::ofstream txt(root / (sample_stem(i) + ".txt"), std::ios::binary);
    if (!txt) throw IoError("cannot write annotations under " + root.string());
    write_annotations(txt, s.truths);
    if (!txt) throw IoError("write failed under " + root.string());
  }
}

std::vector<SynthSample> load_split(const std::filesystem::path& dir, const std::string& split) {
  const auto root = dir / split;
  if (!std::filesystem::is_directory(root)) throw IoError("missing corpus split " + root.string());
  std::vector<SynthSample> out;
  for (std::size_t i = 0;; ++i) {
    const auto map_path = root / (sample_stem(i) + ".map");
    if (!std::filesystem::exists(map_path)) break;
    const FeatureMap m = load_map(map_path);
    if (m.channels() != 4) throw ShapeError("corpus map " + map_path.string() + " must have 4 channels");
    SynthSample s;
    s.corrupted = extract_channel(m, 0);
    s.clean = extract_channel(m, 1);
    s.th = extract_channel(m, 2);
    s.ta = extract_channel(m, 3);
    std::ifstream txt(root / (sample_stem(i) + ".txt"), std::ios::binary);
    if (!txt) throw IoError("missing annotations for " + map_path.string());
    s.truths = read_annotations(txt);
    out.push_back(std::move(s));
  }
  return out;
}

DetectionReport& DetectionReport::operator+=(const DetectionReport& other) {
  *this = make_report(tp + other.tp, fp + other.fp, fn + other.fn);
  return *this;
}

DetectionReport make_report(std::size_t tp, std::size_t fp, std::size_t fn) {
  DetectionReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
  const double s = r.precision + r.recall;
  r.f_measure = s == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / s;
  return r;
}

namespace {

// Pixel centres covered by a polygon, as sorted packed (y, x) keys.
std::vector<std::int64_t> pixel_keys(const TextPolygon& p) {
  std::vector<std::int64_t> keys;
  if (p.vertices.size() < 3) return keys;
  double x0 = p.vertices[0].x, x1 = x0, y0 = p.vertices[0].y, y1 = y0;
  for (const Point& v : p.vertices) {
    x0 = std::min(x0, v.x);
    x1 = std::max(x1, v.x);
    y0 = std::min(y0, v.y);
    y1 = std::max(y1, v.y);
  }
  constexpr std::int64_t kStride = std::int64_t{1} << 32;
  for (auto y = static_cast<std::int64_t>(std::ceil(y0)); y <= std::floor(y1); ++y) {
    for (auto x = static_cast<std::int64_t>(std::ceil(x0)); x <= std::floor(x1); ++x) {
      if (point_in_polygon({double(x), double(y)}, p)) keys.push_back(y * kStride + x);
    }
  }
  return keys;
}

double key_iou(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  return double(inter) / double(a.size() + b.size() - inter);
}

bool vertex_less(const TextPolygon& a, const TextPolygon& b) {
  return std::lexicographical_compare(
      a.vertices.begin(), a.vertices.end(), b.vertices.begin(), b.vertices.end(),
      [](const Point& p, const Point& q) { return std::tie(p.x, p.y) < std::tie(q.x, q.y); });
}

}  // namespace

double polygon_iou(const TextPolygon& a, const TextPolygon& b) {
  return key_iou(pixel_keys(a), pixel_keys(b));
}

DetectionReport evaluate(const std::vector<TextPolygon>& detections,
                         const std::vector<TextPolygon>& truths, double iou_threshold) {
  std::vector<std::vector<std::int64_t>> dk, tk;
  for (const auto& d : detections) dk.push_back(pixel_keys(d));
  for (const auto& t : truths) tk.push_back(pixel_keys(t));

  struct Pair {
    double iou;
    std::size_t det;
    std::size_t truth;
  };
  std::vector<Pair> pairs;
  for (std::size_t d = 0; d < dk.size(); ++d) {
    for (std::size_t t = 0; t < tk.size(); ++t) {
      const double iou = key_iou(dk[d], tk[t]);
      if (iou >= iou_threshold && iou > 0.0) pairs.push_back({iou, d, t});
    }
  }
  // Ties resolve by truth index and then by detection geometry, never by
  // detection order, so permuting the detections cannot change the result.
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.truth != b.truth) return a.truth < b.truth;
    return vertex_less(detections[a.det], detections[b.det]);
  });
  std::vector<bool> det_used(dk.size(), false), truth_used(tk.size(), false);
  std::size_t tp = 0;
  for (const Pair& p : pairs) {
    if (det_used[p.det] || truth_used[p.truth]) continue;
    det_used[p.det] = truth_used[p.truth] = true;
    ++tp;
  }
  return make_report(tp, detections.size() - tp, truths.size() - tp);
}

RunStats summarize(const std::vector<std::optional<double>>& values) {
  RunStats s;
  s.runs = values.size();
  std::vector<double> v;
  for (const auto& x : values) {
    if (x) v.push_back(*x);
  }
  s.missing = s.runs - v.size();
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / double(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.std_population = std::sqrt(sq / double(v.size()));
  return s;
}

}  // namespace deepmorph
