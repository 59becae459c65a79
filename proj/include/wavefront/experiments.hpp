// Replicate orchestration shared by the command-line tool and the acceptance
// runs.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wavefront/moran.hpp"
#include "wavefront/params.hpp"
#include "wavefront/stats.hpp"

namespace wavefront::experiments {

/// Replicate i uses seed derive_seed(seed, i); results are ordered by i.
std::vector<moran::MoranTrajectory> run_replicates(const ModelParams& params,
                                                   const moran::MoranOptions& options,
                                                   std::uint64_t seed, std::size_t count,
                                                   unsigned threads = 1);

/// y_at(t) of every trajectory at every rescaled time: result[c][r].
std::vector<std::vector<double>> y_samples(std::span<const moran::MoranTrajectory> runs,
                                           std::span<const double> times);

struct TrendSetup {
  std::vector<ModelParams> levels;   // increasing N, same s/mu, alpha, y, T
  std::vector<double> checkpoints;   // rescaled times > 2
  std::size_t replicates = 20;       // per level
  std::size_t sde_replicates = 10000;
  double p_min = 1e-4;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  moran::MoranOptions options;
  stats::TrendOptions trend;
};

struct TrendResult {
  stats::ComparisonReport report;
  std::vector<stats::TrendLevel> levels;
  std::vector<std::vector<double>> reference;  // SDE at checkpoints - 2
};

/// Runs every level and the SDE started at y_N with the same alpha, then
/// builds stats::trend_report. Level l uses base seed derive_seed(seed, l),
/// the SDE derive_seed(seed, levels.size()).
TrendResult moran_vs_sde_trend(const TrendSetup& setup);

}  // namespace wavefront::experiments
