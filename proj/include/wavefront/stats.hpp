// Estimators and checks comparing simulated trajectories with the limit
// objects: the dx/x^2 law of early family sizes, the tau spacing, the
// martingale Z_j and the SDE marginals.
//
// Every check is a pure function of its input arrays and thresholds.
#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavefront/moran.hpp"
#include "wavefront/params.hpp"

namespace wavefront::stats {

/// Raised when a check does not get enough data to say anything.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Free-form numeric table; NaN marks a missing value.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> row);
};

struct ComparisonReport {
  std::string name;
  nlohmann::json inputs = nlohmann::json::object();
  double statistic = 0.0;
  // Acceptance band [lower, upper]; pass iff the statistic lies inside.
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool pass = false;
  std::vector<std::string> notes;
  Table details;

  /// Sets pass from statistic and band.
  void decide();
};

// ---------------------------------------------------------------------------
// Basic estimators

/// Sup distance between the empirical CDFs. Throws std::invalid_argument on
/// an empty sample.
double ks_distance(std::span<const double> a, std::span<const double> b);

/// Asymptotic two-sample Kolmogorov p-value, with the Stephens correction.
double ks_p_value(double distance, std::size_t n_a, std::size_t n_b);

struct MomentEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Mean of x^k with SE = sample std / sqrt(n). Needs n >= 2 and k >= 1.
MomentEstimate moment_with_se(std::span<const double> samples, int k);

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

/// Pearson goodness of fit of counts against probabilities summing to 1.
/// Cells with zero probability must have zero count and are skipped.
ChiSquare chi_square_test(std::span<const std::int64_t> observed,
                          std::span<const double> probabilities);

/// Upper tail of the chi-square distribution.
double chi_square_p_value(double statistic, int dof);

/// Bootstrap standard error of ks_distance(a, b), resampling both sides.
double bootstrap_ks_se(std::span<const double> a, std::span<const double> b,
                       int resamples, std::uint64_t seed);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Family sizes

struct FamilyObservation {
  double lead = 1.0;      // q_j
  double fraction = 0.0;  // S_j
};

/// Registry rows with tau_j in the stationary window [2 a_N, (T - 1) a_N] and
/// a final early fraction.
std::vector<FamilyObservation> family_observations(
    std::span<const moran::TauRecord> records, const DerivedScalings& scalings,
    double horizon);

struct FamilySizeOptions {
  std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double tolerance = 0.3;  // on the relative deviation
  std::size_t min_observations = 1000;
};

/// nu((y, 1]) for nu(dx) = dx / x^2.
constexpr double family_tail_target(double y) { return 1.0 / y - 1.0; }

/// Compares mean(q_j 1{S_j > y}) with 1/y - 1 on the grid. The statistic is
/// the largest relative deviation.
ComparisonReport family_size_tail_check(std::span<const FamilyObservation> pooled,
                                        const FamilySizeOptions& options = {});

// ---------------------------------------------------------------------------
// Tau spacing

struct TauSpacingOptions {
  double band_low = 0.8;
  double band_high = 1.2;
  std::size_t min_spacings = 10;
};

/// r_j = q_j (tau_{j+1} - tau_j) / a_N over consecutive taus with tau_j in
/// [2 a_N, (T - 1) a_N]; passes when the median lies in the band.
ComparisonReport tau_spacing_check(std::span<const moran::TauRecord> records,
                                   const DerivedScalings& scalings, double horizon,
                                   const TauSpacingOptions& options = {});

/// Same, pooling the spacings of several independent runs.
ComparisonReport tau_spacing_check(std::span<const std::vector<moran::TauRecord>> runs,
                                   const DerivedScalings& scalings, double horizon,
                                   const TauSpacingOptions& options = {});

// ---------------------------------------------------------------------------
// Martingale Z_j

struct ZPoint {
  double time = 0.0;
  double value = 0.0;
};

/// Z_j restarted at the checkpoint at time `start`:
///   exp(-int G_j) W_j - mu int W_{j-1} exp(-int G_j) du - W_j(start)
/// with G_j = s (j - M) - mu, evaluated at every checkpoint from `start` on.
/// The mean type integral is exact; the W_{j-1} integral is a trapezoid over
/// the checkpoints.
std::vector<ZPoint> z_path(std::span<const moran::Checkpoint> checkpoints,
                           const ModelParams& params, int type, double start);

/// For each trajectory, Z_type is started at tau_type and read at the first
/// checkpoint at or after tau_type + offset, for every offset. Replicates
/// without tau_type or without checkpoints that late are skipped. Passes if
/// |mean| <= 3 SE at every offset.
ComparisonReport martingale_diagnostic(std::span<const moran::MoranTrajectory> runs,
                                       const ModelParams& params, int type,
                                       std::span<const double> offsets);

// ---------------------------------------------------------------------------
// Convergence trend

struct TrendLevel {
  std::int64_t population_size = 0;
  std::vector<std::vector<double>> samples;  // [checkpoint][replicate]
};

struct TrendOptions {
  int bootstrap_resamples = 200;
  double se_multiplier = 2.0;
  std::uint64_t seed = 0;
};

/// KS distance between each level's ensemble and the reference ensemble at
/// every checkpoint. The statistic is the largest increase from one level to
/// the next (in order of N) beyond se_multiplier bootstrap SEs of the pair;
/// passes when it is <= 0.
ComparisonReport trend_report(std::span<const TrendLevel> levels,
                              const std::vector<std::vector<double>>& reference,
                              std::span<const double> checkpoints,
                              const TrendOptions& options = {});

}  // namespace wavefront::stats
