#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "deepmorph/errors.hpp"
#include "deepmorph/geometry.hpp"

namespace deepmorph {

namespace {

struct Grid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;

  bool get(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height &&
           cells[static_cast<std::size_t>(y) * width + x] != 0;
  }
};

// Walks the pixel-edge boundary with the region on the right-hand side
// (clockwise on screen), preferring left turns so that diagonally touching
// pixels stay on one boundary (8-connectivity). Starts on the top edge of
// the first region pixel in scan order.
std::vector<Point> trace_outer(const Grid& g, int sx, int sy) {
  static constexpr int kDx[4] = {1, 0, -1, 0};  // E, S, W, N in y-down coordinates
  static constexpr int kDy[4] = {0, 1, 0, -1};
  auto pixel = [&](int cx, int cy, int dir, bool left) {
    // Pixel ahead of corner (cx, cy) on the left or right of heading `dir`.
    const int lx = kDy[dir];
    const int ly = -kDx[dir];
    const int ox = left ? kDx[dir] + lx : kDx[dir] - lx;
    const int oy = left ? kDy[dir] + ly : kDy[dir] - ly;
    // Pixel centre sits at corner + 0.5 * (ox, oy); pixel index = centre - 0.5.
    return g.get(cx + (ox - 1) / 2, cy + (oy - 1) / 2);
  };

  std::vector<Point> ring;
  int cx = sx;
  int cy = sy;
  int dir = 0;
  ring.push_back({double(cx), double(cy)});
  const int start_x = cx;
  const int start_y = cy;
  for (;;) {
    cx += kDx[dir];
    cy += kDy[dir];
    if (cx == start_x && cy == start_y && dir == 3) break;
    int next;
    if (pixel(cx, cy, dir, true)) {
      next = (dir + 3) % 4;
    } else if (pixel(cx, cy, dir, false)) {
      next = dir;
    } else {
      next = (dir + 1) % 4;
    }
    if (next != dir) ring.push_back({double(cx), double(cy)});
    dir = next;
    if (cx == start_x && cy == start_y && dir == 0) break;
  }
  return ring;
}

}  // namespace

std::vector<TextPolygon> extract_regions(const BinaryMap& mask, std::size_t min_area) {
  const int width = mask.width();
  const int height = mask.height();
  std::vector<int> label(static_cast<std::size_t>(width) * height, -1);
  std::vector<TextPolygon> regions;
  std::vector<std::pair<int, int>> stack;
  std::vector<std::pair<int, int>> members;
  int next_label = 0;

  for (int y0 = 0; y0 < height; ++y0) {
    for (int x0 = 0; x0 < width; ++x0) {
      if (!mask.at(x0, y0) || label[static_cast<std::size_t>(y0) * width + x0] >= 0) continue;
      const int id = next_label++;
      members.clear();
      stack.assign(1, {x0, y0});
      label[static_cast<std::size_t>(y0) * width + x0] = id;
      int bx0 = x0, bx1 = x0, by0 = y0, by1 = y0;
      while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        members.push_back({x, y});
        bx0 = std::min(bx0, x);
        bx1 = std::max(bx1, x);
        by0 = std::min(by0, y);
        by1 = std::max(by1, y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx;
            const int ny = y + dy;
            if (!mask.inside(nx, ny) || !mask.at(nx, ny)) continue;
            int& l = label[static_cast<std::size_t>(ny) * width + nx];
            if (l >= 0) continue;
            l = id;
            stack.push_back({nx, ny});
          }
        }
      }
      if (members.size() < min_area) continue;

      // Local grid with a one-pixel frame; fill everything the outside
      // cannot reach through 4-connected background.
      Grid g;
      g.width = bx1 - bx0 + 3;
      g.height = by1 - by0 + 3;
      g.cells.assign(static_cast<std::size_t>(g.width) * g.height, 1);
      std::vector<std::uint8_t> component(g.cells.size(), 0);
      for (auto [x, y] : members) {
        component[static_cast<std::size_t>(y - by0 + 1) * g.width + (x - bx0 + 1)] = 1;
      }
      std::vector<std::pair<int, int>> flood{{0, 0}};
      g.cells[0] = 0;
      while (!flood.empty()) {
        auto [x, y] = flood.back();
        flood.pop_back();
        static constexpr int kNx[4] = {1, -1, 0, 0};
        static constexpr int kNy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = x + kNx[k];
          const int ny = y + kNy[k];
          if (nx < 0 || ny < 0 || nx >= g.width || ny >= g.height) continue;
          const std::size_t idx = static_cast<std::size_t>(ny) * g.width + nx;
          if (g.cells[idx] == 0 || component[idx]) continue;
          g.cells[idx] = 0;
          flood.push_back({nx, ny});
        }
      }
      // The first member in scan order is the top-left-most pixel.
      const auto first = *std::min_element(members.begin(), members.end(), [](auto a, auto b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
      });
      const auto ring = trace_outer(g, first.first - bx0 + 1, first.second - by0 + 1);
      TextPolygon poly;
      poly.vertices.reserve(ring.size());
      // Local corner (X, Y) is the top-left corner of local pixel (X, Y).
      for (const auto& c : ring) {
        poly.vertices.push_back({c.x + bx0 - 1 - 0.5, c.y + by0 - 1 - 0.5});
      }
      regions.push_back(std::move(poly));
    }
  }
  return regions;
}

std::vector<TextPolygon> read_annotations(std::istream& in) {
  std::vector<TextPolygon> polys;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<double> coords;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      const auto b = field.find_first_not_of(" \t\r");
      const auto e = field.find_last_not_of(" \t\r");
      if (b == std::string::npos) {
        throw AnnotationError("line " + std::to_string(line_no) + ": empty coordinate");
      }
      double v = 0.0;
      const char* begin = field.data() + b;
      const char* end = field.data() + e + 1;
      auto [ptr, ec] = std::from_chars(begin, end, v);
      if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw AnnotationError("line " + std::to_string(line_no) + ": bad coordinate '" +
                              field.substr(b, e - b + 1) + "'");
      }
      coords.push_back(v);
    }
    if (coords.size() % 2 != 0 || coords.size() < 6) {
      throw AnnotationError("line " + std::to_string(line_no) +
                            ": expected an even number (>= 6) of coordinates");
    }
    TextPolygon p;
    for (std::size_t i = 0; i < coords.size(); i += 2) p.vertices.push_back({coords[i], coords[i + 1]});
    polys.push_back(std::move(p));
  }
  return polys;
}

void write_annotations(std::ostream& out, const std::vector<TextPolygon>& polys) {
  char buf[64];
  for (const auto& p : polys) {
    bool first = true;
    for (const auto& v : p.vertices) {
      for (double c : {v.x, v.y}) {
        if (!first) out << ',';
        first = false;
        // Shortest round-trip form; integral values print without a fraction.
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), c);
        out.write(buf, ptr - buf);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("annotation write failed");
}

}  // namespace deepmorph
