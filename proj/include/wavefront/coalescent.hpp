// Block-count chains of Lambda-coalescents, and the moment duality with the
// neutral Lambda-Wright-Fisher SDE.
//
// Only the number of blocks is simulated. From k blocks, each sub-family of
// l blocks merges at rate lambda_{k,l} = int p^{l-2} (1-p)^{k-l} Lambda(dp).
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wavefront/rng.hpp"

namespace wavefront::coalescent {

enum class LambdaMeasure {
  Kingman,             // Lambda = delta_0
  BolthausenSznitman,  // Lambda = Lebesgue on [0, 1]
};

/// Rate at which one given sub-family of l among k blocks merges.
/// Throws std::invalid_argument unless 2 <= l <= k.
double lambda_rate(int blocks, int merger, LambdaMeasure measure);

/// Sum over l of C(k, l) lambda_{k,l}, evaluated term by term in log space.
/// Throws std::invalid_argument for k < 2.
double total_rate(int blocks, LambdaMeasure measure);

/// P(merger size = l) for l = 0..k; entries 0 and 1 are zero.
std::vector<double> merger_size_probabilities(int blocks, LambdaMeasure measure);

/// Merger size drawn from k blocks. Bolthausen-Sznitman uses the closed-form
/// inverse of the CDF k(1 - 1/l)/(k - 1).
int sample_merger_size(int blocks, LambdaMeasure measure, Rng& rng);

struct BlockCountPath {
  std::vector<double> times;  // first entry 0
  std::vector<int> blocks;    // strictly decreasing
  std::uint64_t seed = 0;

  int value_at(double t) const;
};

BlockCountPath simulate_block_counts(int initial_blocks, double t_end,
                                     LambdaMeasure measure, std::uint64_t seed);

/// Number of blocks at time t, without storing the path.
int blocks_at(int initial_blocks, double t, LambdaMeasure measure, Rng& rng);

struct DualityReport {
  int blocks = 0;
  double y = 0.0;
  double t = 0.0;
  std::size_t replicates = 0;
  double p_min = 0.0;
  double sde_moment = 0.0;  // E[Y_t^k | Y_0 = y]
  double sde_se = 0.0;
  double coalescent_moment = 0.0;  // E[y^{K_t} | K_0 = k]
  double coalescent_se = 0.0;
  double gap = 0.0;
  double combined_se = 0.0;
  bool pass = false;  // gap <= 3 combined_se
};

/// Both sides of E[Y_t^k | Y_0 = y] = E[y^{K_t} | K_0 = k] for the
/// Bolthausen-Sznitman coalescent, each from its own Monte Carlo ensemble.
/// Only the neutral case is dual; throws std::invalid_argument if alpha != 0.
DualityReport duality_gap(int blocks, double y, double t, std::size_t replicates,
                          double p_min, std::uint64_t seed, double alpha = 0.0,
                          unsigned threads = 1);

/// E[y^{K_t} | K_0 = 2] for Bolthausen-Sznitman: y + (y^2 - y) e^{-t}.
double two_block_moment(double y, double t);

}  // namespace wavefront::coalescent
