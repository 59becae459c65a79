#include "wavefront/coalescent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "wavefront/parallel.hpp"
#include "wavefront/sde.hpp"
#include "wavefront/stats.hpp"

namespace wavefront::coalescent {

namespace {

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Closed forms used by the simulators; total_rate() is the generic route.
double holding_rate(int k, LambdaMeasure measure) {
  if (measure == LambdaMeasure::Kingman) return 0.5 * k * (k - 1.0);
  return k - 1.0;
}

// log lambda_{k,l}; -inf where the rate vanishes. Kept in log space because
// the Beta value underflows long before C(k, l) lambda_{k,l} does.
double log_lambda(int k, int l, LambdaMeasure measure) {
  if (measure == LambdaMeasure::Kingman)
    return l == 2 ? 0.0 : -std::numeric_limits<double>::infinity();
  return std::lgamma(l - 1.0) + std::lgamma(k - l + 1.0) - std::lgamma(k);
}

}  // namespace

double lambda_rate(int k, int l, LambdaMeasure measure) {
  if (l < 2 || l > k)
    throw std::invalid_argument("lambda_rate needs 2 <= l <= k, got k=" +
                                std::to_string(k) + " l=" + std::to_string(l));
  if (measure == LambdaMeasure::Kingman) return l == 2 ? 1.0 : 0.0;
  // Beta(l - 1, k - l + 1) = (l-2)! (k-l)! / (k-1)!
  return std::exp(log_lambda(k, l, measure));
}

double total_rate(int k, LambdaMeasure measure) {
  if (k < 2) throw std::invalid_argument("total_rate needs k >= 2");
  double sum = 0.0;
  for (int l = 2; l <= k; ++l) {
    const double log_rate = log_lambda(k, l, measure);
    if (std::isfinite(log_rate)) sum += std::exp(log_choose(k, l) + log_rate);
  }
  return sum;
}

std::vector<double> merger_size_probabilities(int k, LambdaMeasure measure) {
  std::vector<double> p(static_cast<std::size_t>(std::max(k, 1)) + 1, 0.0);
  if (k < 2) return p;
  const double total = total_rate(k, measure);
  for (int l = 2; l <= k; ++l) {
    const double log_rate = log_lambda(k, l, measure);
    if (std::isfinite(log_rate))
      p[static_cast<std::size_t>(l)] = std::exp(log_choose(k, l) + log_rate) / total;
  }
  return p;
}

int sample_merger_size(int k, LambdaMeasure measure, Rng& rng) {
  if (k < 2) throw std::invalid_argument("no merger possible with fewer than 2 blocks");
  if (measure == LambdaMeasure::Kingman) return 2;
  const double u = rng.uniform();
  const double bound = 1.0 / (1.0 - u * (k - 1.0) / k);
  return std::clamp(static_cast<int>(std::ceil(bound)), 2, k);
}

int BlockCountPath::value_at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return blocks.front();
  return blocks[static_cast<std::size_t>(std::distance(times.begin(), it) - 1)];
}

BlockCountPath simulate_block_counts(int k0, double t_end, LambdaMeasure measure,
                                     std::uint64_t seed) {
  if (k0 < 1) throw std::invalid_argument("initial block count must be >= 1");
  Rng rng(seed);
  BlockCountPath path;
  path.seed = seed;
  path.times.push_back(0.0);
  path.blocks.push_back(k0);
  double t = 0.0;
  int k = k0;
  while (k > 1) {
    t += rng.exponential(holding_rate(k, measure));
    if (t >= t_end) break;
    k -= sample_merger_size(k, measure, rng) - 1;
    path.times.push_back(t);
    path.blocks.push_back(k);
  }
  return path;
}

int blocks_at(int k0, double t_end, LambdaMeasure measure, Rng& rng) {
  if (k0 < 1) throw std::invalid_argument("initial block count must be >= 1");
  double t = 0.0;
  int k = k0;
  while (k > 1) {
    t += rng.exponential(holding_rate(k, measure));
    if (t >= t_end) break;
    k -= sample_merger_size(k, measure, rng) - 1;
  }
  return k;
}

DualityReport duality_gap(int k, double y, double t, std::size_t replicates,
                          double p_min, std::uint64_t seed, double alpha,
                          unsigned threads) {
  if (alpha != 0.0)
    throw std::invalid_argument("moment duality holds only for alpha = 0");
  if (k < 1) throw std::invalid_argument("duality needs k >= 1");
  if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("y must lie in [0, 1]");
  if (replicates < 2) throw std::invalid_argument("duality needs >= 2 replicates");

  const sde::SdeConfig config{0.0, y, t, p_min};
  const double times[] = {t};
  const auto ensemble = sde::sample_ensemble(config, times, replicates,
                                             derive_seed(seed, 0), threads);

  std::vector<double> dual(replicates);
  const auto coalescent_seed = derive_seed(seed, 1);
  parallel_for(replicates, threads, [&](std::size_t r) {
    Rng rng(derive_seed(coalescent_seed, r));
    dual[r] = std::pow(y, blocks_at(k, t, LambdaMeasure::BolthausenSznitman, rng));
  });

  DualityReport report;
  report.blocks = k;
  report.y = y;
  report.t = t;
  report.replicates = replicates;
  report.p_min = p_min;
  const auto a = stats::moment_with_se(ensemble[0], k);
  const auto b = stats::moment_with_se(dual, 1);
  report.sde_moment = a.mean;
  report.sde_se = a.se;
  report.coalescent_moment = b.mean;
  report.coalescent_se = b.se;
  report.gap = std::abs(a.mean - b.mean);
  report.combined_se = std::hypot(a.se, b.se);
  report.pass = report.gap <= 3.0 * report.combined_se;
  return report;
}

double two_block_moment(double y, double t) { return y + (y * y - y) * std::exp(-t); }

}  // namespace wavefront::coalescent
