// Model parameters of the Moran model with strong selection and the weak
// selection mechanism acting between the X and Y groups, together with the
// scaling quantities derived from them.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavefront {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelParams {
  std::int64_t population_size = 0;  // N
  double mutation_rate = 0.0;        // per individual, per unit time
  double selection = 0.0;            // strong selection coefficient s
  double weak_selection = 0.0;       // alpha, advantage of X over Y
  double initial_y_fraction = 0.5;   // target Y fraction at marking time
  double horizon = 5.0;              // T, in units of the wave time scale

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct DerivedScalings {
  double wave_width = 0.0;               // k_N = ln N / ln(s/mu)
  double time_scale = 0.0;               // a_N = ln(s/mu) / s
  std::int64_t ceil_s_over_mu = 0;       // smallest n >= 1 with n >= s/mu
  std::int64_t tau_threshold_count = 0;  // smallest n with n > s/mu
  double y_quantized = 0.0;              // y_N
  std::int64_t y_marked_count = 0;       // y_N * ceil(s/mu)

  friend bool operator==(const DerivedScalings&,
                         const DerivedScalings&) = default;
};

struct AssumptionReport {
  double a1_value = 0.0;  // k_N / ln(1/s), should be large
  double a2_value = 0.0;  // k_N ln k_N / ln(s/mu), should be small
  double a3_value = 0.0;  // s k_N, should be small
  std::vector<std::string> warnings;
};

/// Warning thresholds for the finite-N assumption diagnostics. The limits are
/// asymptotic, so these are advisory only.
inline constexpr double kA1WarnBelow = 1.0;
inline constexpr double kA2WarnAbove = 0.5;
inline constexpr double kA3WarnAbove = 0.1;

/// Throws ParameterError naming the first violated constraint.
void validate(const ModelParams& params);

DerivedScalings derive_scalings(const ModelParams& params);

AssumptionReport check_assumptions(const ModelParams& params);

/// Constants of the early-mutation window
///   xi_j = tau_j + (log_coeff * ln(1/(s q_j)) + offset) / (s q_j),
/// clipped below at tau_j.
struct EarlyWindow {
  double log_coeff = 1.0;
  double offset = 0.0;

  double end(double tau, double selection, double lead) const;
};

/// Default proof accuracy parameter delta = min(1/100, 1/(19T), eps^3),
/// taken just inside the admissible region.
double default_delta(double horizon, double epsilon);

/// b = ln(24000 T / (delta^2 eps)).
double early_offset(double horizon, double epsilon, double delta);

/// Early window with log_coeff = 1 and offset b at epsilon = 0.1.
EarlyWindow default_early_window(double horizon);

}  // namespace wavefront
