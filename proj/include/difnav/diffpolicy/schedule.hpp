#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/core/rng.hpp"

namespace difnav::diffpolicy {

inline constexpr double kMaxBeta = 0.999;

/// Squared-cosine variance-preserving schedule. Index 0 is the clean sample.
struct NoiseSchedule {
  int steps = 10;
  double offset = 0.008;
  std::vector<double> alpha_bar;  // [0..K], alpha_bar[0] == 1
  std::vector<double> alpha;      // [0..K], alpha[k] = alpha_bar[k] / alpha_bar[k-1]
  std::vector<double> beta;       // 1 - alpha
  std::vector<double> sigma;      // reverse noise scale, sigma[1] == 0
};

inline NoiseSchedule build_schedule(int steps = 10, double offset = 0.008) {
  if (steps < 1) throw ParameterError("schedule needs K >= 1, got " + std::to_string(steps));
  if (!(offset > 0.0) || !std::isfinite(offset)) throw ParameterError("schedule offset must be > 0");
  auto f = [&](int k) {
    const double c = std::cos((static_cast<double>(k) / steps + offset) / (1.0 + offset) * std::numbers::pi / 2);
    return c * c;
  };
  NoiseSchedule s;
  s.steps = steps;
  s.offset = offset;
  s.alpha_bar.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  s.alpha.assign(s.alpha_bar.size(), 1.0);
  s.beta.assign(s.alpha_bar.size(), 0.0);
  s.sigma.assign(s.alpha_bar.size(), 0.0);
  const double f0 = f(0);
  for (int k = 1; k <= steps; ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    // f(K) is ~0, so capping beta keeps alpha_bar strictly positive.
    s.beta[i] = std::min(1.0 - (f(k) / f0) / (f(k - 1) / f0), kMaxBeta);
    s.alpha[i] = 1.0 - s.beta[i];
    s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
    s.sigma[i] = std::sqrt(s.beta[i] * (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]));
  }
  return s;
}

inline void check_step(const NoiseSchedule& s, int k) {
  if (k < 1 || k > s.steps)
    throw ParameterError("diffusion step " + std::to_string(k) + " outside 1.." + std::to_string(s.steps));
}

/// Forward noising: sqrt(alpha_bar_k) a0 + sqrt(1 - alpha_bar_k) noise.
inline std::vector<double> q_sample(const std::vector<double>& a0, int k, const std::vector<double>& noise,
                                    const NoiseSchedule& s) {
  check_step(s, k);
  if (noise.size() != a0.size()) throw DimensionError("q_sample noise size does not match action");
  const double ab = s.alpha_bar[static_cast<std::size_t>(k)];
  std::vector<double> out(a0.size());
  for (std::size_t i = 0; i < a0.size(); ++i) out[i] = std::sqrt(ab) * a0[i] + std::sqrt(1.0 - ab) * noise[i];
  return out;
}

/// One reverse step given a noise estimate and a standard normal draw `z` (ignored at k = 1).
///
/// Without clipping this is (a - (1 - alpha)/sqrt(1 - alpha_bar) eps) / sqrt(alpha) + sigma z.
/// With clipping the implied clean sample is clamped to [-1, 1] and mixed with `a` by the
/// posterior coefficients, which is the same map whenever no clamping occurs.
inline std::vector<double> denoise_update(const std::vector<double>& a, int k, const std::vector<double>& eps,
                                          const NoiseSchedule& s, const std::vector<double>& z, bool clip) {
  check_step(s, k);
  if (eps.size() != a.size() || (k > 1 && z.size() != a.size()))
    throw DimensionError("denoise_update operand sizes differ");
  const std::size_t i = static_cast<std::size_t>(k);
  const double ab = s.alpha_bar[i], ab_prev = s.alpha_bar[i - 1], al = s.alpha[i], be = s.beta[i];
  std::vector<double> out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    double mean;
    if (clip) {
      const double x0 = std::clamp((a[j] - std::sqrt(1.0 - ab) * eps[j]) / std::sqrt(ab), -1.0, 1.0);
      mean = std::sqrt(ab_prev) * be / (1.0 - ab) * x0 + std::sqrt(al) * (1.0 - ab_prev) / (1.0 - ab) * a[j];
    } else {
      mean = (a[j] - (1.0 - al) / std::sqrt(1.0 - ab) * eps[j]) / std::sqrt(al);
    }
    out[j] = k > 1 ? mean + s.sigma[i] * z[j] : mean;
  }
  return out;
}

inline std::vector<double> gaussian(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

}  // namespace difnav::diffpolicy
