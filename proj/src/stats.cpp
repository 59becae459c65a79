#include "wavefront/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "wavefront/rng.hpp"

namespace wavefront::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double ks_sorted(std::span<const double> a, std::span<const double> b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void Table::add_row(std::vector<double> row) {
  if (row.size() != columns.size())
    throw std::invalid_argument("table row width does not match its columns");
  rows.push_back(std::move(row));
}

void ComparisonReport::decide() { pass = statistic >= lower && statistic <= upper; }

double ks_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance: empty sample");
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  return ks_sorted(sa, sb);
}

double ks_p_value(double distance, std::size_t n_a, std::size_t n_b) {
  const double ne = static_cast<double>(n_a) * static_cast<double>(n_b) /
                    static_cast<double>(n_a + n_b);
  const double root = std::sqrt(ne);
  const double lambda = (root + 0.12 + 0.11 / root) * distance;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

MomentEstimate moment_with_se(std::span<const double> samples, int k) {
  if (k < 1) throw std::invalid_argument("moment order must be >= 1");
  if (samples.size() < 2) throw std::invalid_argument("moment_with_se needs n >= 2");
  const double n = static_cast<double>(samples.size());
  auto power = [k](double x) { return k == 1 ? x : std::pow(x, k); };
  // Summed relative to the first value: exact for a constant sample.
  const double pivot = power(samples.front());
  double sum = 0.0;
  for (double x : samples) sum += power(x) - pivot;
  const double mean = pivot + sum / n;
  double ss = 0.0;
  for (double x : samples) {
    const double d = power(x) - mean;
    ss += d * d;
  }
  // Plug-in standard deviation (divisor n).
  return {mean, std::sqrt(ss / n) / std::sqrt(n)};
}

double chi_square_p_value(double statistic, int dof) {
  if (dof < 1) throw std::invalid_argument("chi-square needs dof >= 1");
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

ChiSquare chi_square_test(std::span<const std::int64_t> observed,
                          std::span<const double> probabilities) {
  if (observed.size() != probabilities.size())
    throw std::invalid_argument("chi-square: observed and expected differ in length");
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  if (n <= 0.0) throw std::invalid_argument("chi-square: no observations");
  ChiSquare out;
  int cells = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (probabilities[i] <= 0.0) {
      if (observed[i] != 0)
        throw std::invalid_argument("chi-square: count in a zero-probability cell");
      continue;
    }
    const double expected = n * probabilities[i];
    const double d = static_cast<double>(observed[i]) - expected;
    out.statistic += d * d / expected;
    ++cells;
  }
  out.dof = cells - 1;
  out.p_value = chi_square_p_value(out.statistic, out.dof);
  return out;
}

double bootstrap_ks_se(std::span<const double> a, std::span<const double> b,
                       int resamples, std::uint64_t seed) {
  if (a.empty() || b.empty()) throw std::invalid_argument("bootstrap: empty sample");
  if (resamples < 2) throw std::invalid_argument("bootstrap needs >= 2 resamples");
  Rng rng(seed);
  std::vector<double> ra(a.size()), rb(b.size()), d(static_cast<std::size_t>(resamples));
  for (auto& out : d) {
    for (auto& x : ra) x = a[rng.below(a.size())];
    for (auto& x : rb) x = b[rng.below(b.size())];
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    out = ks_sorted(ra, rb);
  }
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / resamples;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (resamples - 1));
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

// ---------------------------------------------------------------------------

std::vector<FamilyObservation> family_observations(
    std::span<const moran::TauRecord> records, const DerivedScalings& scalings,
    double horizon) {
  const double lo = 2.0 * scalings.time_scale;
  const double hi = (horizon - 1.0) * scalings.time_scale;
  std::vector<FamilyObservation> out;
  for (const auto& rec : records) {
    if (rec.time < lo || rec.time > hi || !rec.early_fraction) continue;
    out.push_back({rec.lead, *rec.early_fraction});
  }
  return out;
}

ComparisonReport family_size_tail_check(std::span<const FamilyObservation> pooled,
                                        const FamilySizeOptions& options) {
  if (pooled.size() < options.min_observations)
    throw InsufficientDataError("family-size check needs at least " +
                                std::to_string(options.min_observations) +
                                " observations, got " + std::to_string(pooled.size()));
  if (options.grid.empty()) throw std::invalid_argument("empty family-size grid");

  ComparisonReport report;
  report.name = "family-size";
  report.inputs = {{"observations", pooled.size()},
                   {"grid", options.grid},
                   {"tolerance", options.tolerance},
                   {"min_observations", options.min_observations}};
  report.details.columns = {"y", "estimate", "target", "relative_deviation", "count_above"};
  const double n = static_cast<double>(pooled.size());
  double worst = 0.0;
  for (double y : options.grid) {
    if (!(y > 0.0 && y < 1.0)) throw std::invalid_argument("grid points must lie in (0, 1)");
    double sum = 0.0;
    std::size_t above = 0;
    for (const auto& obs : pooled) {
      if (obs.fraction > y) {
        sum += obs.lead;
        ++above;
      }
    }
    const double estimate = sum / n;
    const double target = family_tail_target(y);
    const double dev = std::abs(estimate - target) / target;
    worst = std::max(worst, dev);
    if (above == 0) report.notes.push_back("undersampled: no S_j above y = " + fmt(y));
    report.details.add_row({y, estimate, target, dev, static_cast<double>(above)});
  }
  report.statistic = worst;
  report.lower = 0.0;
  report.upper = options.tolerance;
  report.decide();
  return report;
}

ComparisonReport tau_spacing_check(std::span<const moran::TauRecord> records,
                                   const DerivedScalings& scalings, double horizon,
                                   const TauSpacingOptions& options) {
  const std::vector<moran::TauRecord> one(records.begin(), records.end());
  return tau_spacing_check(std::span(&one, 1), scalings, horizon, options);
}

ComparisonReport tau_spacing_check(std::span<const std::vector<moran::TauRecord>> runs,
                                   const DerivedScalings& scalings, double horizon,
                                   const TauSpacingOptions& options) {
  const double a_n = scalings.time_scale;
  const double lo = 2.0 * a_n;
  const double hi = (horizon - 1.0) * a_n;

  ComparisonReport report;
  report.name = "tau-spacing";
  report.details.columns = {"run", "j", "tau_j", "q_j", "spacing", "r_j"};
  std::vector<double> ratios;
  for (std::size_t run = 0; run < runs.size(); ++run) {
    std::vector<const moran::TauRecord*> by_type;
    for (const auto& rec : runs[run]) by_type.push_back(&rec);
    std::sort(by_type.begin(), by_type.end(),
              [](const auto* x, const auto* y) { return x->type < y->type; });
    for (std::size_t i = 0; i + 1 < by_type.size(); ++i) {
      const auto& cur = *by_type[i];
      const auto& next = *by_type[i + 1];
      if (next.type != cur.type + 1 || cur.time < lo || cur.time > hi) continue;
      const double spacing = next.time - cur.time;
      const double r = cur.lead * spacing / a_n;
      ratios.push_back(r);
      report.details.add_row({static_cast<double>(run), static_cast<double>(cur.type),
                              cur.time, cur.lead, spacing, r});
    }
  }
  if (ratios.size() < options.min_spacings)
    throw InsufficientDataError("tau-spacing check needs at least " +
                                std::to_string(options.min_spacings) +
                                " consecutive taus in the window, got " +
                                std::to_string(ratios.size()));

  const auto inside = std::count_if(ratios.begin(), ratios.end(), [&](double r) {
    return r >= options.band_low && r <= options.band_high;
  });
  report.inputs = {{"a_N", a_n},
                   {"horizon", horizon},
                   {"window", {lo, hi}},
                   {"band", {options.band_low, options.band_high}},
                   {"runs", runs.size()},
                   {"spacings", ratios.size()},
                   {"fraction_in_band",
                    static_cast<double>(inside) / static_cast<double>(ratios.size())}};
  report.statistic = median(ratios);
  report.lower = options.band_low;
  report.upper = options.band_high;
  report.decide();
  return report;
}

// ---------------------------------------------------------------------------

std::vector<ZPoint> z_path(std::span<const moran::Checkpoint> checkpoints,
                           const ModelParams& params, int type, double start) {
  const auto first = std::lower_bound(
      checkpoints.begin(), checkpoints.end(), start,
      [](const moran::Checkpoint& cp, double t) { return cp.time < t; });
  if (first == checkpoints.end())
    throw InsufficientDataError("no checkpoint at or after the start time " + fmt(start));

  const double s = params.selection;
  const double mu = params.mutation_rate;
  const double t0 = first->time;
  const double m0 = first->integrated_mean_type;
  const double w0 = static_cast<double>(first->count(type));

  std::vector<ZPoint> out;
  double integral = 0.0;
  double prev_t = t0;
  double prev_f = static_cast<double>(first->count(type - 1));
  for (auto it = first; it != checkpoints.end(); ++it) {
    const double dt = it->time - t0;
    const double growth = (s * type - mu) * dt - s * (it->integrated_mean_type - m0);
    const double discount = std::exp(-growth);
    const double f = static_cast<double>(it->count(type - 1)) * discount;
    integral += 0.5 * (f + prev_f) * (it->time - prev_t);
    prev_t = it->time;
    prev_f = f;
    out.push_back({it->time,
                   discount * static_cast<double>(it->count(type)) - mu * integral - w0});
  }
  return out;
}

ComparisonReport martingale_diagnostic(std::span<const moran::MoranTrajectory> runs,
                                       const ModelParams& params, int type,
                                       std::span<const double> offsets) {
  if (offsets.empty()) throw std::invalid_argument("martingale diagnostic needs offsets");
  std::vector<std::vector<double>> values(offsets.size());
  std::size_t skipped = 0;
  for (const auto& run : runs) {
    const auto* rec = run.registry.find(type);
    if (rec == nullptr || run.checkpoints.empty()) {
      ++skipped;
      continue;
    }
    const auto path = z_path(run.checkpoints, params, type, rec->time);
    std::vector<double> row;
    for (double off : offsets) {
      const auto it = std::lower_bound(
          path.begin(), path.end(), rec->time + off,
          [](const ZPoint& p, double t) { return p.time < t; });
      if (it == path.end()) break;
      row.push_back(it->value);
    }
    if (row.size() != offsets.size()) {
      ++skipped;
      continue;
    }
    for (std::size_t m = 0; m < row.size(); ++m) values[m].push_back(row[m]);
  }
  if (values[0].size() < 2)
    throw InsufficientDataError("martingale diagnostic: fewer than 2 usable replicates");

  ComparisonReport report;
  report.name = "martingale";
  report.inputs = {{"type", type},
                   {"offsets", std::vector<double>(offsets.begin(), offsets.end())},
                   {"replicates", runs.size()},
                   {"used", values[0].size()},
                   {"skipped", skipped},
                   {"selection", params.selection},
                   {"mutation_rate", params.mutation_rate}};
  report.details.columns = {"offset", "mean", "se", "ratio"};
  double worst = 0.0;
  for (std::size_t m = 0; m < offsets.size(); ++m) {
    const auto est = moment_with_se(values[m], 1);
    double ratio;
    if (est.se > 0.0)
      ratio = std::abs(est.mean) / est.se;
    else
      ratio = est.mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    worst = std::max(worst, ratio);
    report.details.add_row({offsets[m], est.mean, est.se, ratio});
  }
  report.statistic = worst;
  report.lower = 0.0;
  report.upper = 3.0;
  report.decide();
  return report;
}

// ---------------------------------------------------------------------------

ComparisonReport trend_report(std::span<const TrendLevel> levels,
                              const std::vector<std::vector<double>>& reference,
                              std::span<const double> checkpoints,
                              const TrendOptions& options) {
  if (levels.size() < 2) throw std::invalid_argument("trend needs at least two values of N");
  if (checkpoints.empty()) throw std::invalid_argument("trend needs checkpoints");
  if (reference.size() != checkpoints.size())
    throw std::invalid_argument("mismatched checkpoint grids: reference ensemble");
  for (const auto& level : levels)
    if (level.samples.size() != checkpoints.size())
      throw std::invalid_argument("mismatched checkpoint grids: N = " +
                                  std::to_string(level.population_size));

  std::vector<const TrendLevel*> order;
  for (const auto& level : levels) order.push_back(&level);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return a->population_size < b->population_size;
  });

  ComparisonReport report;
  report.name = "trend";
  report.details.columns = {"t", "N", "replicates", "ks", "bootstrap_se", "excess"};
  std::vector<std::int64_t> sizes;
  for (const auto* level : order) sizes.push_back(level->population_size);
  report.inputs = {{"population_sizes", sizes},
                   {"checkpoints", std::vector<double>(checkpoints.begin(), checkpoints.end())},
                   {"reference_replicates", reference.empty() ? 0 : reference[0].size()},
                   {"bootstrap_resamples", options.bootstrap_resamples},
                   {"se_multiplier", options.se_multiplier},
                   {"seed", options.seed}};

  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    double prev_d = kNaN, prev_se = kNaN;
    for (std::size_t l = 0; l < order.size(); ++l) {
      const auto& sample = order[l]->samples[c];
      const double d = ks_distance(sample, reference[c]);
      const double se = bootstrap_ks_se(sample, reference[c], options.bootstrap_resamples,
                                        derive_seed(options.seed, c * order.size() + l));
      double excess = kNaN;
      if (l > 0) {
        excess = d - prev_d - options.se_multiplier * std::hypot(se, prev_se);
        worst = std::max(worst, excess);
      }
      report.details.add_row({checkpoints[c], static_cast<double>(order[l]->population_size),
                              static_cast<double>(sample.size()), d, se, excess});
      prev_d = d;
      prev_se = se;
    }
  }
  report.statistic = worst;
  report.upper = 0.0;
  report.decide();
  return report;
}

}  // namespace wavefront::stats
