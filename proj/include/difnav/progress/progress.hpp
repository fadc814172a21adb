#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "difnav/gradcore/layers.hpp"
#include "difnav/navsim/geodesic.hpp"

namespace difnav::progress {

using gradcore::Graph;
using gradcore::ParamStore;
using gradcore::Shape;
using gradcore::Var;

enum class StopMode { kDistance, kClassify, kClassifyWeighted };

inline std::string_view stop_mode_name(StopMode m) {
  switch (m) {
    case StopMode::kDistance:
      return "distance";
    case StopMode::kClassify:
      return "classify";
    case StopMode::kClassifyWeighted:
      return "classify_weighted";
  }
  return "?";
}

inline StopMode parse_stop_mode(std::string_view s) {
  if (s == "distance") return StopMode::kDistance;
  if (s == "classify") return StopMode::kClassify;
  if (s == "classify_weighted") return StopMode::kClassifyWeighted;
  throw ParameterError("unknown stop mode: " + std::string(s));
}

struct ProgressConfig {
  StopMode mode = StopMode::kDistance;
  std::size_t in_dim = 64;
  std::size_t hidden = 64;
  double tau = 0.1;
  int max_decisions = 40;
  double lambda = 1e-4;
  double pos_weight = 10.0;    // classify_weighted only
  double reach_radius = 3.0;   // meters; "reached" label for the classification heads

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("stop threshold must lie in (0, 1)");
    if (max_decisions < 1) throw ParameterError("max decisions must be >= 1");
    if (lambda < 0.0) throw ParameterError("distance loss weight must be >= 0");
    if (!(pos_weight > 0.0)) throw ParameterError("positive-class weight must be > 0");
  }
};

template <class T>
void add_progress_params(ParamStore<T>& s, const ProgressConfig& c, Rng& rng) {
  using gradcore::add_linear;
  if (c.mode == StopMode::kDistance) {
    add_linear(s, "pg.fc1", c.in_dim, c.hidden, rng);
    add_linear(s, "pg.fc2", c.hidden, c.hidden, rng);
    add_linear(s, "pg.fc3", c.hidden, 1, rng);
  } else {
    add_linear(s, "pg.cls.fc1", c.in_dim, c.hidden, rng);
    gradcore::add_norm(s, "pg.cls.ln", c.hidden);
    add_linear(s, "pg.cls.fc2", c.hidden, 1, rng);
  }
}

struct DistanceTarget {
  double value = 1.0;
  bool unreachable = false;
};

/// Remaining geodesic distance over the episode's initial geodesic distance, clamped to [0, 1].
inline DistanceTarget normalized_distance(const navsim::GridWorld& grid, navsim::Vec2 p, navsim::Vec2 goal,
                                          double initial_geodesic) {
  if (!(initial_geodesic > 0.0)) throw ParameterError("initial geodesic distance must be > 0");
  const auto d = navsim::geodesic_distance(grid, p, goal);
  if (!d) return {1.0, true};
  return {std::clamp(*d / initial_geodesic, 0.0, 1.0), false};
}

/// Same as above with a precomputed field rooted at the goal.
inline DistanceTarget normalized_distance(const navsim::DistanceField& field, navsim::Vec2 p,
                                          double initial_geodesic) {
  if (!(initial_geodesic > 0.0)) throw ParameterError("initial geodesic distance must be > 0");
  const auto d = field.distance_from(p);
  if (!d) return {1.0, true};
  return {std::clamp(*d / initial_geodesic, 0.0, 1.0), false};
}

/// Predicted normalized distance in [0, 1], shape [B].
template <class T>
Var<T> predict_distance(Graph<T>& g, const ProgressConfig& c, Var<T> state) {
  using namespace gradcore;
  if (c.mode != StopMode::kDistance) throw ContractError("predict_distance requires distance mode");
  Var<T> h = relu(linear(g, "pg.fc2", relu(linear(g, "pg.fc1", state))));
  return reshape(sigmoid(linear(g, "pg.fc3", h)), Shape{state.shape()[0]});
}

/// Reached-class logits, shape [B].
template <class T>
Var<T> predict_logit(Graph<T>& g, const ProgressConfig& c, Var<T> state) {
  using namespace gradcore;
  if (c.mode == StopMode::kDistance) throw ContractError("predict_logit requires a classification mode");
  Var<T> h = relu(norm(g, "pg.cls.ln", linear(g, "pg.cls.fc1", state)));
  return reshape(linear(g, "pg.cls.fc2", h), Shape{state.shape()[0]});
}

/// Head output used by the stop rule: distance estimate or reached probability.
template <class T>
Var<T> progress_score(Graph<T>& g, const ProgressConfig& c, Var<T> state) {
  if (c.mode == StopMode::kDistance) return predict_distance(g, c, state);
  return gradcore::sigmoid(predict_logit(g, c, state));
}

/// lambda * MSE on normalized distances, or lambda * BCE on reached labels in classification modes.
template <class T>
Var<T> distance_loss(Graph<T>& g, const ProgressConfig& c, Var<T> state, const std::vector<double>& distances,
                     const std::vector<double>& reached) {
  const std::size_t b = state.shape()[0];
  const T lambda = static_cast<T>(c.lambda);
  if (c.mode == StopMode::kDistance) {
    if (distances.size() != b) throw DimensionError("distance target count does not match batch");
    std::vector<T> t(distances.begin(), distances.end());
    return gradcore::scale(gradcore::mse(predict_distance(g, c, state), g.constant({b}, t)), lambda);
  }
  if (reached.size() != b) throw DimensionError("reached label count does not match batch");
  const T w = c.mode == StopMode::kClassifyWeighted ? static_cast<T>(c.pos_weight) : T(1);
  std::vector<T> labels(reached.begin(), reached.end());
  return gradcore::scale(gradcore::bce_with_logits(predict_logit(g, c, state), labels, w), lambda);
}

/// `decision` counts from 1; reaching max_decisions forces a stop.
inline bool should_stop(double score, int decision, const ProgressConfig& c) {
  if (decision >= c.max_decisions) return true;
  if (c.mode == StopMode::kDistance) return score < c.tau;
  return score > 0.5;
}

}  // namespace difnav::progress
