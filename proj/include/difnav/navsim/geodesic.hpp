#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/navsim/grid.hpp"

namespace difnav::navsim {

/// Path cost as (straight moves, diagonal moves). Kept integral so comparisons are exact.
struct MoveCount {
  int straight = 0;
  int diagonal = 0;

  double meters(double cell_size) const { return cell_size * (straight + diagonal * std::numbers::sqrt2); }
  MoveCount operator+(MoveCount o) const { return {straight + o.straight, diagonal + o.diagonal}; }
  bool operator==(const MoveCount&) const = default;
};

/// Exact a1 + b1*sqrt2 < a2 + b2*sqrt2 over integers.
inline bool cost_less(MoveCount lhs, MoveCount rhs) {
  const long long a = static_cast<long long>(lhs.straight) - rhs.straight;   // want a < b*sqrt2
  const long long b = static_cast<long long>(rhs.diagonal) - lhs.diagonal;
  if (b >= 0) return a < 0 || a * a < 2 * b * b;
  return a < 0 && a * a > 2 * b * b;
}

struct Neighbor {
  Cell cell;
  bool diagonal;
};

/// 8-connected free neighbours. A diagonal move needs both orthogonal cells free.
inline int free_neighbors(const GridWorld& grid, Cell c, Neighbor out[8]) {
  int n = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const Cell nb{c.x + dx, c.y + dy};
      if (grid.is_occupied(nb)) continue;
      const bool diag = dx != 0 && dy != 0;
      if (diag && (grid.is_occupied({c.x + dx, c.y}) || grid.is_occupied({c.x, c.y + dy}))) continue;
      out[n++] = {nb, diag};
    }
  return n;
}

/// Single-source cell distances toward a fixed point, with a predecessor tree.
class DistanceField {
 public:
  DistanceField(const GridWorld& grid, Vec2 source) : grid_(&grid), source_(source) {
    if (!grid.contains(source) || grid.is_occupied(grid.cell_of(source)))
      throw InvalidEndpointError("geodesic endpoint (" + std::to_string(source.x) + ", " + std::to_string(source.y) +
                                 ") is not in a free cell");
    const std::size_t n = grid.occupied.size();
    cost_.assign(n, {});
    reached_.assign(n, 0);
    settled_.assign(n, 0);
    next_.assign(n, -1);
    source_cell_ = grid.cell_of(source);
    run();
  }

  const GridWorld& grid() const { return *grid_; }
  Vec2 source() const { return source_; }
  Cell source_cell() const { return source_cell_; }

  bool reached(Cell c) const { return grid_->inside(c) && reached_[grid_->index(c)]; }
  MoveCount cell_cost(Cell c) const { return cost_[grid_->index(c)]; }

  /// Geodesic meters from `p` to the source; nullopt when unreachable.
  std::optional<double> distance_from(Vec2 p) const {
    if (!grid_->contains(p) || grid_->is_occupied(grid_->cell_of(p)))
      throw InvalidEndpointError("geodesic endpoint (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                 ") is not in a free cell");
    const Cell c = grid_->cell_of(p);
    if (c == source_cell_) return distance(p, source_);
    if (!reached(c)) return std::nullopt;
    // The end terms are summed first so that the result is symmetric in the endpoints.
    return cell_cost(c).meters(grid_->cell_size) +
           (distance(p, grid_->center_of(c)) + distance(grid_->center_of(source_cell_), source_));
  }

  /// Points realizing distance_from: p, cell centers toward the source, then the source.
  std::optional<std::vector<Vec2>> path_from(Vec2 p) const {
    if (!distance_from(p)) return std::nullopt;
    std::vector<Vec2> path{p};
    Cell c = grid_->cell_of(p);
    if (c == source_cell_) {
      if (!(p == source_)) path.push_back(source_);
      return path;
    }
    while (true) {
      path.push_back(grid_->center_of(c));
      if (c == source_cell_) break;
      c = grid_->cell_at(static_cast<std::size_t>(next_[grid_->index(c)]));
    }
    path.push_back(source_);
    return path;
  }

 private:
  struct Item {
    MoveCount cost;
    std::size_t index;
  };
  struct Worse {
    bool operator()(const Item& a, const Item& b) const {
      if (cost_less(a.cost, b.cost)) return false;
      if (cost_less(b.cost, a.cost)) return true;
      return a.index > b.index;
    }
  };

  void run() {
    std::priority_queue<Item, std::vector<Item>, Worse> open;
    const std::size_t s = grid_->index(source_cell_);
    reached_[s] = 1;
    open.push({{}, s});
    Neighbor nbs[8];
    while (!open.empty()) {
      const Item top = open.top();
      open.pop();
      if (settled_[top.index] || !(top.cost == cost_[top.index])) continue;
      settled_[top.index] = 1;
      const Cell c = grid_->cell_at(top.index);
      const int k = free_neighbors(*grid_, c, nbs);
      for (int i = 0; i < k; ++i) {
        const std::size_t j = grid_->index(nbs[i].cell);
        if (settled_[j]) continue;
        const MoveCount cand = top.cost + (nbs[i].diagonal ? MoveCount{0, 1} : MoveCount{1, 0});
        if (!reached_[j] || cost_less(cand, cost_[j])) {
          reached_[j] = 1;
          cost_[j] = cand;
          next_[j] = static_cast<std::int64_t>(top.index);
          open.push({cand, j});
        }
      }
    }
  }

  const GridWorld* grid_;
  Vec2 source_;
  Cell source_cell_;
  std::vector<MoveCount> cost_;
  std::vector<std::uint8_t> reached_;
  std::vector<std::uint8_t> settled_;
  std::vector<std::int64_t> next_;
};

/// Shortest 8-connected free-space distance between two points; nullopt when disconnected.
inline std::optional<double> geodesic_distance(const GridWorld& grid, Vec2 p, Vec2 q) {
  if (!grid.contains(p) || grid.is_occupied(grid.cell_of(p)))
    throw InvalidEndpointError("geodesic endpoint (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                               ") is not in a free cell");
  return DistanceField(grid, q).distance_from(p);
}

/// Positions [p, center(cell p), ..., center(cell q), q]; nullopt when disconnected.
inline std::optional<std::vector<Vec2>> shortest_path(const GridWorld& grid, Vec2 p, Vec2 q) {
  if (!grid.contains(p) || grid.is_occupied(grid.cell_of(p)))
    throw InvalidEndpointError("geodesic endpoint (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                               ") is not in a free cell");
  return DistanceField(grid, q).path_from(p);
}

/// Length of a polyline.
inline double path_length(const std::vector<Vec2>& path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += distance(path[i - 1], path[i]);
  return len;
}

}  // namespace difnav::navsim
