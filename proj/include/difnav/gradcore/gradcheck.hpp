#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "difnav/core/rng.hpp"
#include "difnav/gradcore/graph.hpp"

namespace difnav::gradcore {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.rel_error);
    return m;
  }
  bool passed(double tol) const { return max_rel_error() < tol; }
};

/// Compares reverse-mode gradients against central finite differences.
///
/// The error per parameter tensor is ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// over the checked entries; tensors whose gradients are both below `abs_floor` count as exact.
/// `max_entries` > 0 checks a seeded random subset of each tensor.
template <class BuildLoss>
GradCheckResult check_gradients(ParamStore<double>& store, BuildLoss build_loss, double step = 1e-3,
                                std::size_t max_entries = 0, std::uint64_t seed = 0, double abs_floor = 1e-10) {
  GradMap<double> analytic;
  {
    Graph<double> g(&store);
    Var<double> loss = build_loss(g);
    analytic = backward(g, loss);
  }
  auto eval = [&]() {
    Graph<double> g(&store, false);
    return build_loss(g).item();
  };
  Rng rng(seed);
  GradCheckResult result;
  for (auto& [name, tensor] : store) {
    std::vector<std::size_t> idx(tensor.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_entries && idx.size() > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
    }
    double diff2 = 0, a2 = 0, n2 = 0;
    const auto& ga = analytic.at(name);
    for (std::size_t i : idx) {
      const double orig = tensor.data[i];
      tensor.data[i] = orig + step;
      const double up = eval();
      tensor.data[i] = orig - step;
      const double down = eval();
      tensor.data[i] = orig;
      const double numeric = (up - down) / (2 * step);
      diff2 += (numeric - ga[i]) * (numeric - ga[i]);
      a2 += ga[i] * ga[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    GradCheckEntry e{name, idx.size(), 0.0};
    if (denom > abs_floor) e.rel_error = std::sqrt(diff2) / denom;
    result.entries.push_back(e);
  }
  return result;
}

}  // namespace difnav::gradcore
