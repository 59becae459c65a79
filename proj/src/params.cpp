#include "wavefront/params.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wavefront {

namespace {

void require(bool ok, const char* constraint, const ModelParams& p) {
  if (ok) return;
  std::ostringstream os;
  os << "invalid model parameters: violated " << constraint
     << " (N=" << p.population_size << ", mu=" << p.mutation_rate
     << ", s=" << p.selection << ", alpha=" << p.weak_selection
     << ", y=" << p.initial_y_fraction << ", T=" << p.horizon << ")";
  throw ParameterError(os.str());
}

}  // namespace

void validate(const ModelParams& p) {
  require(std::isfinite(p.mutation_rate) && std::isfinite(p.selection) &&
              std::isfinite(p.weak_selection) &&
              std::isfinite(p.initial_y_fraction) && std::isfinite(p.horizon),
          "finite parameters", p);
  require(p.mutation_rate > 0.0, "0 < mu", p);
  require(p.mutation_rate < p.selection, "mu < s", p);
  require(p.selection < 1.0, "s < 1", p);
  require(p.selection / p.mutation_rate > 1.0, "s/mu > 1", p);
  require(static_cast<double>(p.population_size) >
              p.selection / p.mutation_rate,
          "N > s/mu", p);
  require(p.weak_selection >= 0.0, "alpha >= 0", p);
  require(p.initial_y_fraction > 0.0 && p.initial_y_fraction < 1.0,
          "0 < y < 1", p);
  require(p.horizon > 2.0, "T > 2", p);
}

DerivedScalings derive_scalings(const ModelParams& p) {
  validate(p);
  const double ratio = p.selection / p.mutation_rate;
  const double log_ratio = std::log(ratio);

  DerivedScalings d;
  d.wave_width = std::log(static_cast<double>(p.population_size)) / log_ratio;
  d.time_scale = log_ratio / p.selection;
  d.ceil_s_over_mu = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::ceil(ratio)));
  d.tau_threshold_count = static_cast<std::int64_t>(std::floor(ratio)) + 1;

  // Both alleles must be present at marking time.
  const auto ceil_count = d.ceil_s_over_mu;
  auto marked = static_cast<std::int64_t>(
      std::llround(p.initial_y_fraction * static_cast<double>(ceil_count)));
  marked = std::clamp<std::int64_t>(marked, 1, ceil_count - 1);
  d.y_marked_count = marked;
  d.y_quantized =
      static_cast<double>(marked) / static_cast<double>(ceil_count);
  return d;
}

AssumptionReport check_assumptions(const ModelParams& p) {
  const DerivedScalings d = derive_scalings(p);
  const double log_ratio = std::log(p.selection / p.mutation_rate);

  AssumptionReport r;
  r.a1_value = d.wave_width / std::log(1.0 / p.selection);
  r.a2_value = d.wave_width * std::log(d.wave_width) / log_ratio;
  r.a3_value = p.selection * d.wave_width;

  auto warn = [&r](const std::string& what, double value) {
    std::ostringstream os;
    os << what << " (value " << value << ")";
    r.warnings.push_back(os.str());
  };
  if (r.a1_value < kA1WarnBelow)
    warn("A1: k_N/ln(1/s) below 1, wave width not large against ln(1/s)",
         r.a1_value);
  if (r.a2_value > kA2WarnAbove)
    warn("A2: k_N ln(k_N)/ln(s/mu) above 0.5", r.a2_value);
  if (r.a3_value > kA3WarnAbove)
    warn("A3: s k_N above 0.1, fitness of leading types not close to 1",
         r.a3_value);
  if (p.mutation_rate <= 1.0 / static_cast<double>(p.population_size))
    warn("mu <= 1/N, outside the 1/N^a << mu << s^b regime", p.mutation_rate);
  return r;
}

double EarlyWindow::end(double tau, double selection, double lead) const {
  const double rate = selection * lead;
  const double length = (log_coeff * std::log(1.0 / rate) + offset) / rate;
  return tau + std::max(0.0, length);
}

double default_delta(double horizon, double epsilon) {
  return std::min({1.0 / 100.0, 1.0 / (19.0 * horizon),
                   epsilon * epsilon * epsilon});
}

double early_offset(double horizon, double epsilon, double delta) {
  return std::log(24000.0 * horizon / (delta * delta * epsilon));
}

EarlyWindow default_early_window(double horizon) {
  constexpr double epsilon = 0.1;
  return EarlyWindow{1.0,
                     early_offset(horizon, epsilon,
                                  default_delta(horizon, epsilon))};
}

}  // namespace wavefront
