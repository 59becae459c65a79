#include "wavefront/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wavefront/parallel.hpp"
#include "wavefront/sde.hpp"

namespace wavefront::experiments {

std::vector<moran::MoranTrajectory> run_replicates(const ModelParams& params,
                                                   const moran::MoranOptions& options,
                                                   std::uint64_t seed, std::size_t count,
                                                   unsigned threads) {
  const auto scalings = derive_scalings(params);
  std::vector<moran::MoranTrajectory> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    out[i] = moran::run_trajectory(params, scalings, options, derive_seed(seed, i));
  });
  return out;
}

std::vector<std::vector<double>> y_samples(std::span<const moran::MoranTrajectory> runs,
                                           std::span<const double> times) {
  std::vector<std::vector<double>> out(times.size());
  for (std::size_t c = 0; c < times.size(); ++c)
    for (const auto& run : runs) out[c].push_back(run.y_at(times[c]));
  return out;
}

TrendResult moran_vs_sde_trend(const TrendSetup& setup) {
  if (setup.levels.size() < 2) throw std::invalid_argument("trend needs at least two levels");
  if (setup.checkpoints.empty()) throw std::invalid_argument("trend needs checkpoints");
  const auto& first = setup.levels.front();
  const double ratio = first.selection / first.mutation_rate;
  for (const auto& p : setup.levels) {
    validate(p);
    const bool same = std::abs(p.selection / p.mutation_rate - ratio) <= 1e-12 * ratio &&
                      p.weak_selection == first.weak_selection &&
                      p.initial_y_fraction == first.initial_y_fraction &&
                      p.horizon == first.horizon;
    if (!same) throw std::invalid_argument("trend levels must share s/mu, alpha, y and T");
  }
  for (double t : setup.checkpoints)
    if (!(t >= 2.0 && t <= first.horizon))
      throw std::invalid_argument("trend checkpoints must lie in [2, T]");

  TrendResult result;
  for (std::size_t l = 0; l < setup.levels.size(); ++l) {
    const auto runs = run_replicates(setup.levels[l], setup.options,
                                     derive_seed(setup.seed, l), setup.replicates,
                                     setup.threads);
    result.levels.push_back({setup.levels[l].population_size,
                             y_samples(runs, setup.checkpoints)});
  }

  sde::SdeConfig config;
  config.alpha = first.weak_selection;
  config.y0 = derive_scalings(first).y_quantized;
  config.p_min = setup.p_min;
  std::vector<double> shifted;
  for (double t : setup.checkpoints) shifted.push_back(t - 2.0);
  config.t_end = *std::max_element(shifted.begin(), shifted.end());
  std::vector<double> sorted = shifted;
  std::sort(sorted.begin(), sorted.end());
  const auto ensemble = sde::sample_ensemble(config, sorted, setup.sde_replicates,
                                             derive_seed(setup.seed, setup.levels.size()),
                                             setup.threads);
  for (double t : shifted) {
    const auto at = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    result.reference.push_back(ensemble[static_cast<std::size_t>(at)]);
  }

  result.report = stats::trend_report(result.levels, result.reference, setup.checkpoints,
                                      setup.trend);
  result.report.inputs["replicates"] = setup.replicates;
  result.report.inputs["sde_replicates"] = setup.sde_replicates;
  result.report.inputs["p_min"] = setup.p_min;
  result.report.inputs["alpha"] = first.weak_selection;
  result.report.inputs["y_N"] = config.y0;
  return result;
}

}  // namespace wavefront::experiments
