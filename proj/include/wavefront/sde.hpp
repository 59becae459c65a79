// Lambda-Wright-Fisher SDE with selection, Bolthausen-Sznitman case:
//
//   dY = -alpha Y (1 - Y) dt + jumps  y -> y + p (1{u <= y} - y)
//
// with jumps driven by a Poisson measure of intensity dt du dp/p^2. Between
// jumps the drift is integrated by its exact logistic flow; jumps with size
// below p_min are dropped. They are centered in u, so the truncation adds no
// drift and removes quadratic variation at most p_min/4 per unit time.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wavefront/rng.hpp"

namespace wavefront::sde {

struct SdeConfig {
  double alpha = 0.0;
  double y0 = 0.5;
  double t_end = 1.0;
  double p_min = 1e-4;
};

/// Throws ParameterError on p_min outside (0, 1), y0 outside [0, 1],
/// negative alpha or t_end.
void validate(const SdeConfig& config);

/// Exact solution of dy/dt = -alpha y (1 - y) after time dt.
double drift_flow(double y, double alpha, double dt);

/// Rate of jumps with size in [p_min, 1]: 1/p_min - 1.
double jump_rate(double p_min);

struct Jump {
  double wait = 0.0;
  double size = 0.0;
  double mark = 0.0;
};

Jump next_jump(double p_min, Rng& rng);

/// y + p(1 - y) if u <= y, else y(1 - p).
double apply_jump(double y, double size, double mark);

/// Values within this distance of 0 or 1 are moved onto the boundary.
inline constexpr double kBoundarySnap = 1e-15;

struct SdePath {
  std::vector<double> times;   // jump times, first entry 0
  std::vector<double> values;  // value right after each jump
  double alpha = 0.0;
  double t_end = 0.0;
  double p_min = 0.0;
  std::uint64_t seed = 0;
  /// Upper bound on the quadratic variation dropped by the truncation.
  double neglected_variation = 0.0;

  /// Path value at time t in [0, t_end], flowing the drift from the last jump.
  double value_at(double t) const;
};

SdePath simulate_sde(const SdeConfig& config, std::uint64_t seed);

/// Values of one path at increasing times in [0, t_end], without storing it.
std::vector<double> sample_at(const SdeConfig& config, std::span<const double> times,
                              Rng& rng);

/// Ensemble of path values: result[c][r] is replicate r at times[c].
/// Replicate r uses seed derive_seed(seed, r).
std::vector<std::vector<double>> sample_ensemble(const SdeConfig& config,
                                                 std::span<const double> times,
                                                 std::size_t replicates,
                                                 std::uint64_t seed,
                                                 unsigned threads = 1);

}  // namespace wavefront::sde
