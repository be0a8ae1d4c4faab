#ifndef DEEPMORPH_GEOMETRY_HPP_
#define DEEPMORPH_GEOMETRY_HPP_

#include <array>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "deepmorph/feature_map.hpp"

namespace deepmorph {

/// Continuous image coordinates: pixel (x, y) has its centre at (x, y).
struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

using Polyline = std::vector<Point>;

struct LineSegment {
  Point a;
  Point b;
};

/// Closed ring of vertices (the closing edge is implicit). An empty vertex
/// list is the "collapsed" marker returned by shrinking.
struct TextPolygon {
  std::vector<Point> vertices;

  bool empty() const { return vertices.empty(); }
  bool operator==(const TextPolygon&) const = default;
};

double signed_area(const std::vector<Point>& ring);
double polygon_area(const TextPolygon& p);
double perimeter(const TextPolygon& p);

/// Throws AnnotationError unless the polygon has >= 3 finite vertices,
/// positive area and no self-intersections.
void validate_polygon(const TextPolygon& p);

/// Even-odd crossing test; points exactly on an edge follow the usual
/// half-open convention, so adjacent polygons never both claim a pixel.
bool point_in_polygon(const Point& q, const TextPolygon& p);

/// Inward offset d = A (1 - r^2) / L with r = 1 - ratio.
double shrink_distance(const TextPolygon& p, double ratio);

/// Inward offset by an explicit distance (mitred corners). Returns the empty
/// marker when the polygon vanishes; when it splits, the largest piece.
TextPolygon offset_polygon_inward(const TextPolygon& p, double distance);

/// offset_polygon_inward(p, shrink_distance(p, ratio)), ratio in (0, 0.5].
TextPolygon shrink_polygon(const TextPolygon& p, double ratio = 0.2);

/// The lower of the two long sides of a polygon annotated as two
/// equal-length vertex runs (or a 4-vertex quadrilateral), ordered left to
/// right. Throws AnnotationError for odd vertex counts or ambiguous splits.
Polyline bottom_long_side(const TextPolygon& p);

/// Cuts a polyline at every multiple of `step` in arclength. A trailing
/// remainder shorter than `step` stays as its own short segment.
std::vector<LineSegment> sample_bottom(const Polyline& line, double step = 4.0);

double point_segment_distance(const Point& q, const LineSegment& s, Point* foot = nullptr);

/// Maps any angle into [-pi/2, pi/2).
double canonical_angle(double radians);

struct HeightAngle {
  double height = 0.0;
  double angle = 0.0;
};

/// Twice the distance from `q` to the nearest segment, and the angle of the
/// line from `q` to its foot point against the horizontal.
HeightAngle height_angle_at(const Point& q, const std::vector<LineSegment>& bottom);

/// Ground-truth geometry maps. tr/tc are one-hot 2-channel maps (channel 1
/// is text), th/ta single channel.
struct GeoMaps {
  FeatureMap tr;
  FeatureMap tc;
  FeatureMap th;
  FeatureMap ta;
};

inline constexpr double kShrinkRatio = 0.2;
inline constexpr double kBottomSampleStep = 4.0;

/// Later polygons overwrite th/ta of earlier ones where their centre regions
/// overlap.
GeoMaps build_tc_th_ta(const std::vector<TextPolygon>& polys, int width, int height);

/// Text width from text height: clip(th / 4, 2, 8).
double tw_from_th(double th);

/// Rotated rectangle proposed at a text-centre pixel. The height axis points
/// along `theta` (the direction of the distance line to the bottom side), the
/// width axis is perpendicular to it.
struct TextSegment {
  double x = 0.0;
  double y = 0.0;
  double h = 0.0;
  double w = 0.0;
  double theta = 0.0;
  double score = 1.0;
};

std::array<Point, 4> segment_corners(const TextSegment& s);
/// Half-open inclusion in the segment frame: -h/2 <= u < h/2, -w/2 <= v < w/2.
bool segment_contains(const TextSegment& s, const Point& q);

/// One segment per tc pixel with th > 0; score taken from `score` (channel 0)
/// when given, otherwise 1.
std::vector<TextSegment> propose_segments(const BinaryMap& tc, const FeatureMap& th,
                                          const FeatureMap& ta, const FeatureMap* score = nullptr);

/// Area of the intersection of two convex polygons (Sutherland-Hodgman).
double convex_intersection_area(const std::vector<Point>& a, const std::vector<Point>& b);
double rotated_iou(const TextSegment& a, const TextSegment& b);

/// Greedy suppression in descending score order (stable on ties): a segment
/// is dropped when its IoU with an already kept one exceeds the threshold.
std::vector<TextSegment> nms_segments(const std::vector<TextSegment>& segs,
                                      double iou_threshold = 0.5);

/// Union of filled segments as a 1-channel {0,1} map, pixel-centre rule.
FeatureMap rasterize_segments(const std::vector<TextSegment>& segs, int width, int height);
BinaryMap rasterize_polygons(const std::vector<TextPolygon>& polys, int width, int height);

inline constexpr std::size_t kDefaultMinRegionArea = 16;

/// Outer boundary of every 8-connected component with at least `min_area`
/// pixels. Boundaries run along pixel edges, so interior holes are filled
/// and the polygon covers exactly the pixels of the hole-filled component.
std::vector<TextPolygon> extract_regions(const BinaryMap& mask,
                                         std::size_t min_area = kDefaultMinRegionArea);

/// One instance per line: x1,y1,x2,y2,...; blank lines and '#' comments skipped.
std::vector<TextPolygon> read_annotations(std::istream& in);
void write_annotations(std::ostream& out, const std::vector<TextPolygon>& polys);

}  // namespace deepmorph

#endif  // DEEPMORPH_GEOMETRY_HPP_
