#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "difnav/core/error.hpp"

namespace difnav::navsim {

inline constexpr double kCellSize = 0.25;
inline constexpr double kForwardStep = 0.25;
inline constexpr int kHeadingSteps = 24;  // 15 degree increments
inline constexpr double kHeadingIncrement = 2.0 * std::numbers::pi / kHeadingSteps;
inline constexpr int kMaxLandmarks = 26;

enum class Category { kOpenArea, kNarrowSpace, kMaze };

inline std::string_view category_name(Category c) {
  switch (c) {
    case Category::kOpenArea:
      return "open_area";
    case Category::kNarrowSpace:
      return "narrow_space";
    case Category::kMaze:
      return "maze";
  }
  return "?";
}

inline Category parse_category(std::string_view s) {
  if (s == "open_area") return Category::kOpenArea;
  if (s == "narrow_space") return Category::kNarrowSpace;
  if (s == "maze") return Category::kMaze;
  throw ParameterError("unknown scene category: " + std::string(s));
}

struct Vec2 {
  double x = 0;
  double y = 0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Planar agent pose. The heading is kept as an integer count of 15 degree increments.
struct Pose {
  Vec2 position;
  int heading_index = 0;

  Pose() = default;
  Pose(Vec2 p, int h) : position(p), heading_index(((h % kHeadingSteps) + kHeadingSteps) % kHeadingSteps) {}
  Pose(double x, double y, int h) : Pose(Vec2{x, y}, h) {}

  double heading() const { return heading_index * kHeadingIncrement; }
  bool operator==(const Pose&) const = default;
};

/// Unit vector of a heading index; exact on the axes.
inline Vec2 heading_direction(int heading_index) {
  const int h = ((heading_index % kHeadingSteps) + kHeadingSteps) % kHeadingSteps;
  switch (h) {
    case 0:
      return {1.0, 0.0};
    case 6:
      return {0.0, 1.0};
    case 12:
      return {-1.0, 0.0};
    case 18:
      return {0.0, -1.0};
    default:
      return {std::cos(h * kHeadingIncrement), std::sin(h * kHeadingIncrement)};
  }
}

/// Rotates an agent-frame vector (forward, left) into the world frame.
inline Vec2 agent_to_world(const Pose& pose, Vec2 local) {
  const Vec2 d = heading_direction(pose.heading_index);
  return {d.x * local.x - d.y * local.y, d.y * local.x + d.x * local.y};
}

inline Vec2 world_to_agent(const Pose& pose, Vec2 world) {
  const Vec2 d = heading_direction(pose.heading_index);
  return {d.x * world.x + d.y * world.y, -d.y * world.x + d.x * world.y};
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a <= 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

/// Signed rotation steps (15 degrees each) nearest to an agent-frame angle.
inline int rotation_steps_for(double angle) {
  return static_cast<int>(std::lround(wrap_angle(angle) / kHeadingIncrement));
}

/// Occupancy grid. Cell (x, y) covers [x*cs, (x+1)*cs) x [y*cs, (y+1)*cs).
struct GridWorld {
  int width = 0;
  int height = 0;
  double cell_size = kCellSize;
  Category category = Category::kOpenArea;
  std::vector<std::uint8_t> occupied;
  std::vector<std::int8_t> landmark;  // -1 when the cell carries no landmark

  GridWorld() = default;
  GridWorld(int w, int h, Category c, double cs = kCellSize)
      : width(w), height(h), cell_size(cs), category(c), occupied(static_cast<std::size_t>(w * h), 0),
        landmark(static_cast<std::size_t>(w * h), -1) {}

  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width) + c.x; }
  Cell cell_at(std::size_t i) const { return {static_cast<int>(i % width), static_cast<int>(i / width)}; }
  bool inside(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  bool is_occupied(Cell c) const { return !inside(c) || occupied[index(c)]; }
  bool is_free(Cell c) const { return !is_occupied(c); }
  void set_occupied(Cell c, bool v) { occupied[index(c)] = v ? 1 : 0; }
  int landmark_at(Cell c) const { return inside(c) ? landmark[index(c)] : -1; }

  Cell cell_of(Vec2 p) const {
    return {static_cast<int>(std::floor(p.x / cell_size)), static_cast<int>(std::floor(p.y / cell_size))};
  }
  Vec2 center_of(Cell c) const { return {(c.x + 0.5) * cell_size, (c.y + 0.5) * cell_size}; }
  bool contains(Vec2 p) const { return inside(cell_of(p)); }
  bool is_free(Vec2 p) const { return is_free(cell_of(p)); }

  std::size_t free_count() const {
    std::size_t n = 0;
    for (auto o : occupied) n += o == 0;
    return n;
  }

  /// Ids of landmarks present, ascending, each once.
  std::vector<int> landmark_ids() const {
    std::vector<int> ids;
    for (auto l : landmark)
      if (l >= 0 && std::find(ids.begin(), ids.end(), l) == ids.end()) ids.push_back(l);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  /// Mean position of a landmark's cells, snapped to the nearest of those cells' centers.
  std::optional<Vec2> landmark_center(int id) const {
    Vec2 sum{};
    std::vector<Cell> cells;
    for (std::size_t i = 0; i < landmark.size(); ++i)
      if (landmark[i] == id) {
        cells.push_back(cell_at(i));
        sum = sum + center_of(cells.back());
      }
    if (cells.empty()) return std::nullopt;
    const Vec2 mean = sum * (1.0 / static_cast<double>(cells.size()));
    Vec2 best = center_of(cells[0]);
    for (const auto& c : cells)
      if (distance(center_of(c), mean) < distance(best, mean)) best = center_of(c);
    return best;
  }

  /// Border occupied, at least one free cell, landmark cells free.
  void validate() const {
    if (width < 3 || height < 3) throw FormatError("grid too small");
    for (int x = 0; x < width; ++x)
      if (!occupied[index({x, 0})] || !occupied[index({x, height - 1})]) throw FormatError("grid border not occupied");
    for (int y = 0; y < height; ++y)
      if (!occupied[index({0, y})] || !occupied[index({width - 1, y})]) throw FormatError("grid border not occupied");
    if (free_count() == 0) throw FormatError("grid has no free cell");
    for (std::size_t i = 0; i < landmark.size(); ++i)
      if (landmark[i] >= 0 && occupied[i]) throw FormatError("landmark on occupied cell");
  }

  bool operator==(const GridWorld&) const = default;
};

inline char landmark_letter(int id) { return static_cast<char>('A' + id); }

}  // namespace difnav::navsim
