#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "deepmorph/errors.hpp"
#include "deepmorph/geometry.hpp"

namespace deepmorph {

namespace bg = boost::geometry;

namespace {

using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint>;
using BgMulti = bg::model::multi_polygon<BgPolygon>;

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const Point& p, const Point& q, const Point& r) {
  return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) && std::min(p.y, r.y) <= q.y &&
         q.y <= std::max(p.y, r.y);
}

bool segments_intersect(const Point& p1, const Point& p2, const Point& p3, const Point& p4) {
  const double d1 = cross(p3, p4, p1);
  const double d2 = cross(p3, p4, p2);
  const double d3 = cross(p1, p2, p3);
  const double d4 = cross(p1, p2, p4);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  return (d1 == 0 && on_segment(p3, p1, p4)) || (d2 == 0 && on_segment(p3, p2, p4)) ||
         (d3 == 0 && on_segment(p1, p3, p2)) || (d4 == 0 && on_segment(p1, p4, p2));
}

BgPolygon to_boost(const TextPolygon& p) {
  BgPolygon poly;
  for (const auto& v : p.vertices) bg::append(poly.outer(), BgPoint(v.x, v.y));
  bg::append(poly.outer(), BgPoint(p.vertices.front().x, p.vertices.front().y));
  bg::correct(poly);
  return poly;
}

double length(const LineSegment& s) { return std::hypot(s.b.x - s.a.x, s.b.y - s.a.y); }

bool is_simple(const std::vector<Point>& v) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) return false;
    }
  }
  return true;
}

// Shifts every edge inward by `distance` and intersects neighbouring lines.
// Exact when no edge collapses; returns nothing when the result would need
// topology changes (edge reversal, self-intersection).
std::optional<TextPolygon> miter_offset(const TextPolygon& p, double distance) {
  const auto& v = p.vertices;
  const std::size_t n = v.size();
  const double orient = signed_area(v) > 0.0 ? 1.0 : -1.0;
  // Shifted edge k runs from a[k] along dir[k].
  std::vector<Point> a(n), dir(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Point& p0 = v[k];
    const Point& p1 = v[(k + 1) % n];
    const double len = std::hypot(p1.x - p0.x, p1.y - p0.y);
    if (len == 0.0) return std::nullopt;
    dir[k] = {(p1.x - p0.x) / len, (p1.y - p0.y) / len};
    // Interior lies to the left of each edge for positive orientation.
    const Point normal{-dir[k].y * orient, dir[k].x * orient};
    a[k] = {p0.x + normal.x * distance, p0.y + normal.y * distance};
  }
  TextPolygon out;
  out.vertices.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t prev = (k + n - 1) % n;
    const double den = dir[prev].x * dir[k].y - dir[prev].y * dir[k].x;
    if (std::abs(den) < 1e-12) {
      out.vertices[k] = a[k];
      continue;
    }
    const double t = ((a[k].x - a[prev].x) * dir[k].y - (a[k].y - a[prev].y) * dir[k].x) / den;
    out.vertices[k] = {a[prev].x + t * dir[prev].x, a[prev].y + t * dir[prev].y};
  }
  for (std::size_t k = 0; k < n; ++k) {
    const Point& q0 = out.vertices[k];
    const Point& q1 = out.vertices[(k + 1) % n];
    if ((q1.x - q0.x) * dir[k].x + (q1.y - q0.y) * dir[k].y <= 0.0) return std::nullopt;
  }
  if (signed_area(out.vertices) * orient <= 0.0 || !is_simple(out.vertices)) return std::nullopt;
  return out;
}

}  // namespace

double signed_area(const std::vector<Point>& ring) {
  double acc = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

double polygon_area(const TextPolygon& p) { return std::abs(signed_area(p.vertices)); }

double perimeter(const TextPolygon& p) {
  double acc = 0.0;
  const std::size_t n = p.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    acc += length({p.vertices[i], p.vertices[(i + 1) % n]});
  }
  return acc;
}

void validate_polygon(const TextPolygon& p) {
  const auto& v = p.vertices;
  if (v.size() < 3) throw AnnotationError("polygon needs at least 3 vertices");
  for (const auto& q : v) {
    if (!std::isfinite(q.x) || !std::isfinite(q.y)) throw AnnotationError("polygon vertex is not finite");
  }
  if (!(polygon_area(p) > 0.0)) throw AnnotationError("polygon has zero area");
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) {
        throw AnnotationError("polygon is self-intersecting");
      }
    }
  }
}

bool point_in_polygon(const Point& q, const TextPolygon& p) {
  bool inside = false;
  const auto& v = p.vertices;
  const std::size_t n = v.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((v[i].y > q.y) != (v[j].y > q.y) &&
        q.x < (v[j].x - v[i].x) * (q.y - v[i].y) / (v[j].y - v[i].y) + v[i].x) {
      inside = !inside;
    }
  }
  return inside;
}

double shrink_distance(const TextPolygon& p, double ratio) {
  if (!(ratio > 0.0 && ratio <= 0.5)) throw InvalidArgument("shrink ratio must lie in (0, 0.5]");
  const double r = 1.0 - ratio;
  return polygon_area(p) * (1.0 - r * r) / perimeter(p);
}

TextPolygon offset_polygon_inward(const TextPolygon& p, double distance) {
  validate_polygon(p);
  if (distance < 0.0) throw InvalidArgument("inward offset distance must be >= 0");
  if (distance == 0.0) return p;
  if (auto exact = miter_offset(p, distance)) return *exact;
  BgMulti result;
  bg::strategy::buffer::distance_symmetric<double> dist(-distance);
  bg::strategy::buffer::side_straight side;
  bg::strategy::buffer::join_miter join;
  bg::strategy::buffer::end_flat end;
  bg::strategy::buffer::point_square point;
  bg::buffer(to_boost(p), result, dist, side, join, end, point);

  const BgPolygon* best = nullptr;
  double best_area = 0.0;
  for (const auto& piece : result) {
    const double a = std::abs(bg::area(piece));
    if (a > best_area) {
      best_area = a;
      best = &piece;
    }
  }
  TextPolygon out;
  if (best == nullptr || best_area <= 1e-12) return out;
  const auto& ring = best->outer();
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) out.vertices.push_back({ring[i].x(), ring[i].y()});
  return out;
}

TextPolygon shrink_polygon(const TextPolygon& p, double ratio) {
  validate_polygon(p);
  return offset_polygon_inward(p, shrink_distance(p, ratio));
}

Polyline bottom_long_side(const TextPolygon& p) {
  const auto& v = p.vertices;
  const std::size_t n = v.size();
  if (n < 4 || n % 2 != 0) {
    throw AnnotationError("bottom side needs an even vertex count >= 4, got " + std::to_string(n));
  }
  Polyline a;
  Polyline b;
  if (n == 4) {
    const double pair02 = length({v[0], v[1]}) + length({v[2], v[3]});
    const double pair13 = length({v[1], v[2]}) + length({v[3], v[0]});
    if (std::abs(pair02 - pair13) <= 1e-9 * std::max(pair02, pair13)) {
      throw AnnotationError("quadrilateral has no unique pair of long sides");
    }
    if (pair02 > pair13) {
      a = {v[0], v[1]};
      b = {v[2], v[3]};
    } else {
      a = {v[1], v[2]};
      b = {v[3], v[0]};
    }
  } else {
    a.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
    b.assign(v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  }
  auto mean_y = [](const Polyline& side) {
    double s = 0.0;
    for (const auto& q : side) s += q.y;
    return s / static_cast<double>(side.size());
  };
  const double ya = mean_y(a);
  const double yb = mean_y(b);
  if (std::abs(ya - yb) <= 1e-9) throw AnnotationError("long sides are level; bottom side is ambiguous");
  Polyline bottom = ya > yb ? a : b;
  if (bottom.front().x > bottom.back().x) std::reverse(bottom.begin(), bottom.end());
  return bottom;
}

std::vector<LineSegment> sample_bottom(const Polyline& line, double step) {
  if (!(step > 0.0)) throw InvalidArgument("sampling step must be positive");
  if (line.size() < 2) throw InvalidArgument("polyline needs at least two points");
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < line.size(); ++i) {
    cumulative.push_back(cumulative.back() + length({line[i - 1], line[i]}));
  }
  const double total = cumulative.back();
  if (!(total > 1e-12)) throw InvalidArgument("polyline has zero length");

  auto point_at = [&](double s) {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
    std::size_t k = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
    k = std::clamp<std::size_t>(k, 1, line.size() - 1);
    const double span = cumulative[k] - cumulative[k - 1];
    const double t = span > 0 ? (s - cumulative[k - 1]) / span : 0.0;
    return Point{line[k - 1].x + t * (line[k].x - line[k - 1].x),
                 line[k - 1].y + t * (line[k].y - line[k - 1].y)};
  };

  std::vector<Point> cuts{line.front()};
  for (int k = 1;; ++k) {
    const double s = k * step;
    if (s >= total - 1e-9) break;
    cuts.push_back(point_at(s));
  }
  cuts.push_back(line.back());
  std::vector<LineSegment> segs;
  for (std::size_t i = 1; i < cuts.size(); ++i) segs.push_back({cuts[i - 1], cuts[i]});
  return segs;
}

double point_segment_distance(const Point& q, const LineSegment& s, Point* foot) {
  const double dx = s.b.x - s.a.x;
  const double dy = s.b.y - s.a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((q.x - s.a.x) * dx + (q.y - s.a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Point f{s.a.x + t * dx, s.a.y + t * dy};
  if (foot != nullptr) *foot = f;
  return std::hypot(q.x - f.x, q.y - f.y);
}

double canonical_angle(double radians) {
  double a = std::fmod(radians + std::numbers::pi / 2, std::numbers::pi);
  if (a < 0) a += std::numbers::pi;
  return a - std::numbers::pi / 2;
}

HeightAngle height_angle_at(const Point& q, const std::vector<LineSegment>& bottom) {
  if (bottom.empty()) throw InvalidArgument("no bottom segments");
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  Point best_foot;
  for (std::size_t k = 0; k < bottom.size(); ++k) {
    Point foot;
    const double d = point_segment_distance(q, bottom[k], &foot);
    if (d < best) {
      best = d;
      best_k = k;
      best_foot = foot;
    }
  }
  HeightAngle out;
  out.height = 2.0 * best;
  if (best > 0.0) {
    out.angle = canonical_angle(std::atan2(best_foot.y - q.y, best_foot.x - q.x));
  } else {
    // On the side itself: use the side's normal direction.
    const auto& s = bottom[best_k];
    out.angle = canonical_angle(std::atan2(s.b.y - s.a.y, s.b.x - s.a.x) + std::numbers::pi / 2);
  }
  return out;
}

GeoMaps build_tc_th_ta(const std::vector<TextPolygon>& polys, int width, int height) {
  FeatureMap tr_fg(1, width, height);
  FeatureMap tc_fg(1, width, height);
  GeoMaps maps{FeatureMap(), FeatureMap(), FeatureMap(1, width, height), FeatureMap(1, width, height)};
  for (const auto& poly : polys) {
    validate_polygon(poly);
    const BinaryMap region = rasterize_polygons({poly}, width, height);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (region.at(x, y)) tr_fg.at(0, y, x) = 1.0;
      }
    }
    const TextPolygon centre = shrink_polygon(poly, kShrinkRatio);
    if (centre.empty()) continue;
    const auto bottom = sample_bottom(bottom_long_side(poly), kBottomSampleStep);
    const BinaryMap core = rasterize_polygons({centre}, width, height);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!core.at(x, y)) continue;
        const HeightAngle ha = height_angle_at({double(x), double(y)}, bottom);
        tc_fg.at(0, y, x) = 1.0;
        maps.th.at(0, y, x) = ha.height;
        maps.ta.at(0, y, x) = ha.angle;
      }
    }
  }
  auto one_hot = [](const FeatureMap& fg) {
    FeatureMap bg = fg;
    for (double& v : bg.values()) v = 1.0 - v;
    const FeatureMap parts[] = {bg, fg};
    return stack_channels(parts);
  };
  maps.tr = one_hot(tr_fg);
  maps.tc = one_hot(tc_fg);
  return maps;
}

}  // namespace deepmorph
