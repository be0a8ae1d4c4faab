#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepmorph/errors.hpp"
#include "deepmorph/geometry.hpp"

namespace deepmorph {

namespace {

// cos/sin with values within 1e-12 of an axis snapped onto it, so that
// axis-aligned segments rasterize with exact half-open edges.
Point unit_direction(double theta) {
  auto snap = [](double v) {
    if (std::abs(v) < 1e-12) return 0.0;
    if (std::abs(v - 1.0) < 1e-12) return 1.0;
    if (std::abs(v + 1.0) < 1e-12) return -1.0;
    return v;
  };
  return {snap(std::cos(theta)), snap(std::sin(theta))};
}

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Point line_intersection(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
  const double a1 = cross(q1, q2, p1);
  const double a2 = cross(q1, q2, p2);
  const double t = a1 / (a1 - a2);
  return {p1.x + t * (p2.x - p1.x), p1.y + t * (p2.y - p1.y)};
}

}  // namespace

double tw_from_th(double th) { return std::clamp(th / 4.0, 2.0, 8.0); }

std::array<Point, 4> segment_corners(const TextSegment& s) {
  const Point u = unit_direction(s.theta);
  const Point v{-u.y, u.x};
  const double hh = s.h / 2;
  const double hw = s.w / 2;
  auto corner = [&](double a, double b) {
    return Point{s.x + a * u.x + b * v.x, s.y + a * u.y + b * v.y};
  };
  return {corner(-hh, -hw), corner(hh, -hw), corner(hh, hw), corner(-hh, hw)};
}

bool segment_contains(const TextSegment& s, const Point& q) {
  const Point u = unit_direction(s.theta);
  const double dx = q.x - s.x;
  const double dy = q.y - s.y;
  const double a = dx * u.x + dy * u.y;
  const double b = -dx * u.y + dy * u.x;
  return -s.h / 2 <= a && a < s.h / 2 && -s.w / 2 <= b && b < s.w / 2;
}

std::vector<TextSegment> propose_segments(const BinaryMap& tc, const FeatureMap& th,
                                          const FeatureMap& ta, const FeatureMap* score) {
  auto matches = [&](const FeatureMap& m) {
    return m.width() == tc.width() && m.height() == tc.height();
  };
  if (!matches(th) || !matches(ta) || (score != nullptr && !matches(*score))) {
    throw ShapeError("propose_segments: maps must share the text-centre extent");
  }
  std::vector<TextSegment> segs;
  for (int y = 0; y < tc.height(); ++y) {
    for (int x = 0; x < tc.width(); ++x) {
      if (!tc.at(x, y)) continue;
      const double h = th.at(0, y, x);
      if (!(h > 0.0)) continue;
      segs.push_back({double(x), double(y), h, tw_from_th(h), ta.at(0, y, x),
                      score != nullptr ? score->at(0, y, x) : 1.0});
    }
  }
  return segs;
}

double convex_intersection_area(const std::vector<Point>& a, const std::vector<Point>& b) {
  if (a.size() < 3 || b.size() < 3) return 0.0;
  // Clip `a` against each edge of `b`; the inside side depends on b's winding.
  const double orientation = signed_area(b) >= 0 ? 1.0 : -1.0;
  std::vector<Point> poly = a;
  for (std::size_t i = 0; i < b.size() && !poly.empty(); ++i) {
    const Point& e1 = b[i];
    const Point& e2 = b[(i + 1) % b.size()];
    std::vector<Point> next;
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Point& cur = poly[k];
      const Point& prev = poly[(k + poly.size() - 1) % poly.size()];
      const bool cur_in = orientation * cross(e1, e2, cur) >= 0;
      const bool prev_in = orientation * cross(e1, e2, prev) >= 0;
      if (cur_in) {
        if (!prev_in) next.push_back(line_intersection(prev, cur, e1, e2));
        next.push_back(cur);
      } else if (prev_in) {
        next.push_back(line_intersection(prev, cur, e1, e2));
      }
    }
    poly = std::move(next);
  }
  return poly.size() < 3 ? 0.0 : std::abs(signed_area(poly));
}

double rotated_iou(const TextSegment& a, const TextSegment& b) {
  const auto ca = segment_corners(a);
  const auto cb = segment_corners(b);
  const double inter = convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
  const double uni = a.h * a.w + b.h * b.w - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<TextSegment> nms_segments(const std::vector<TextSegment>& segs, double iou_threshold) {
  std::vector<std::size_t> order(segs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return segs[a].score > segs[b].score; });
  std::vector<TextSegment> kept;
  std::vector<double> kept_radius;
  for (std::size_t idx : order) {
    const TextSegment& cand = segs[idx];
    const double radius = 0.5 * std::hypot(cand.h, cand.w);
    bool suppressed = false;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const double reach = radius + kept_radius[k];
      const double dx = cand.x - kept[k].x;
      const double dy = cand.y - kept[k].y;
      if (dx * dx + dy * dy >= reach * reach) continue;
      if (rotated_iou(cand, kept[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(cand);
      kept_radius.push_back(radius);
    }
  }
  return kept;
}

FeatureMap rasterize_segments(const std::vector<TextSegment>& segs, int width, int height) {
  FeatureMap out(1, width, height);
  for (const auto& s : segs) {
    const auto corners = segment_corners(s);
    double x0 = corners[0].x, x1 = corners[0].x, y0 = corners[0].y, y1 = corners[0].y;
    for (const auto& c : corners) {
      x0 = std::min(x0, c.x);
      x1 = std::max(x1, c.x);
      y0 = std::min(y0, c.y);
      y1 = std::max(y1, c.y);
    }
    const int xa = std::max(0, static_cast<int>(std::floor(x0)));
    const int xb = std::min(width - 1, static_cast<int>(std::ceil(x1)));
    const int ya = std::max(0, static_cast<int>(std::floor(y0)));
    const int yb = std::min(height - 1, static_cast<int>(std::ceil(y1)));
    for (int y = ya; y <= yb; ++y) {
      for (int x = xa; x <= xb; ++x) {
        if (segment_contains(s, {double(x), double(y)})) out.at(0, y, x) = 1.0;
      }
    }
  }
  return out;
}

BinaryMap rasterize_polygons(const std::vector<TextPolygon>& polys, int width, int height) {
  BinaryMap out(width, height);
  for (const auto& p : polys) {
    if (p.empty()) continue;
    double x0 = p.vertices[0].x, x1 = x0, y0 = p.vertices[0].y, y1 = y0;
    for (const auto& v : p.vertices) {
      x0 = std::min(x0, v.x);
      x1 = std::max(x1, v.x);
      y0 = std::min(y0, v.y);
      y1 = std::max(y1, v.y);
    }
    const int xa = std::max(0, static_cast<int>(std::floor(x0)));
    const int xb = std::min(width - 1, static_cast<int>(std::ceil(x1)));
    const int ya = std::max(0, static_cast<int>(std::floor(y0)));
    const int yb = std::min(height - 1, static_cast<int>(std::ceil(y1)));
    for (int y = ya; y <= yb; ++y) {
      for (int x = xa; x <= xb; ++x) {
        if (point_in_polygon({double(x), double(y)}, p)) out.set(x, y, true);
      }
    }
  }
  return out;
}

}  // namespace deepmorph
