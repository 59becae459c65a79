// Acceptance runs: one PASS/FAIL line per criterion, full reports as JSON.
//
//   acceptance [--json FILE] [--threads N] [criterion ...]
//
// Exit status is 0 only when every selected criterion passes. Tolerances are
// pinned below and are not configurable.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavefront/coalescent.hpp"
#include "wavefront/experiments.hpp"
#include "wavefront/io.hpp"
#include "wavefront/moran.hpp"
#include "wavefront/parallel.hpp"
#include "wavefront/params.hpp"
#include "wavefront/rng.hpp"
#include "wavefront/sde.hpp"
#include "wavefront/stats.hpp"

using namespace wavefront;
using nlohmann::json;

namespace {

// Reference point: N = 10^6, mu = 10^-4, s = 0.01, alpha = 1, y = 0.3, T = 5.
const ModelParams kReference{1'000'000, 1e-4, 0.01, 1.0, 0.3, 5.0};
constexpr std::uint64_t kReferenceSeed = 1;  // replicate i: derive_seed(1, i)
constexpr std::size_t kReferenceReplicates = 20;

// 1: conservation and determinism
constexpr double kReferenceBudgetSeconds = 1800.0;
constexpr std::int64_t kSmokeN = 10'000;
constexpr double kSmokeBudgetSeconds = 5.0;

// 2: rate identities
constexpr int kMaxBlocks = 10'000;
constexpr double kRateTolerance = 1e-10;
constexpr int kMergerDraws = 100'000;
constexpr double kMergerMinP = 0.01;

// 3: duality
constexpr std::size_t kDualityReplicates = 100'000;
constexpr double kDualityPMin = 1e-4;
constexpr double kSeMultiplier = 3.0;

// 4: SDE integrator
constexpr int kFlowGrid = 100;
constexpr double kFlowTolerance = 1e-12;
constexpr std::uint64_t kJumpApplications = 1'000'000;

// 5, 6: structural checks on the reference replicates
constexpr double kSpacingLow = 0.8;
constexpr double kSpacingHigh = 1.2;
const std::vector<double> kFamilyGrid{0.2, 0.4, 0.6, 0.8};
constexpr double kFamilyTolerance = 0.3;

// 7, 8: s/mu = 10.42, not an integer
const ModelParams kNeutral{100'000, 0.0048, 0.05, 0.0, 0.3, 4.0};
constexpr std::size_t kNeutralReplicates = 200;
const ModelParams kSmoke{10'000, 0.0048, 0.05, 1.0, 0.3, 4.0};
constexpr std::size_t kMartingaleReplicates = 1'100;
constexpr std::size_t kMartingaleMinUsed = 1'000;

// 9: trend across N with s/mu = 100 throughout
constexpr std::size_t kTrendReplicates4 = 200;
constexpr std::size_t kTrendReplicates5 = 50;
constexpr std::size_t kTrendSdeReplicates = 10'000;
constexpr double kTrendSeMultiplier = 2.0;
const std::vector<double> kTrendTimes{3.0, 4.0};

struct Outcome {
  bool pass = false;
  std::string summary;
  json report = json::object();
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

moran::MoranOptions reference_options() {
  moran::MoranOptions o;
  o.early = default_early_window(kReference.horizon);
  o.check_every_event = true;
  return o;
}

// Every artifact the CLI writes for one trajectory.
std::string artifacts(const moran::MoranTrajectory& run, const DerivedScalings& sc) {
  std::ostringstream out;
  io::write_registry_csv(out, run.registry.records());
  io::write_y_path_csv(out, run.y_path);
  io::write_checkpoints_csv(out, run.checkpoints);
  out << io::trajectory_summary(run, sc).dump(2) << '\n';
  return out.str();
}

class Acceptance {
 public:
  explicit Acceptance(unsigned threads) : threads_(threads) {}

  Outcome conservation();
  Outcome rates();
  Outcome duality();
  Outcome integrator();
  Outcome spacing();
  Outcome families();
  Outcome neutral();
  Outcome martingale();
  Outcome trend();

 private:
  const std::vector<moran::MoranTrajectory>& reference();

  unsigned threads_;
  std::optional<std::vector<moran::MoranTrajectory>> reference_;
  double first_seconds_ = 0.0;
};

// Replicate 0 alone, timed, then the rest in parallel.
const std::vector<moran::MoranTrajectory>& Acceptance::reference() {
  if (reference_) return *reference_;
  const auto sc = derive_scalings(kReference);
  const auto options = reference_options();
  std::vector<moran::MoranTrajectory> runs(kReferenceReplicates);
  const auto start = std::chrono::steady_clock::now();
  runs[0] = moran::run_trajectory(kReference, sc, options, derive_seed(kReferenceSeed, 0));
  first_seconds_ = seconds_since(start);
  parallel_for(kReferenceReplicates - 1, threads_, [&](std::size_t i) {
    runs[i + 1] =
        moran::run_trajectory(kReference, sc, options, derive_seed(kReferenceSeed, i + 1));
  });
  reference_ = std::move(runs);
  return *reference_;
}

Outcome Acceptance::conservation() {
  const auto sc = derive_scalings(kReference);
  const auto& runs = reference();
  std::size_t conserved = 0;
  std::uint64_t events = 0;
  for (const auto& r : runs) {
    if (r.conservation_checks == r.counts.total() && r.conservation_checks > 0) ++conserved;
    events += r.counts.total() + r.discarded_events;
  }

  const auto again =
      moran::run_trajectory(kReference, sc, reference_options(), derive_seed(kReferenceSeed, 0));
  const bool identical = artifacts(again, sc) == artifacts(runs[0], sc);

  ModelParams smoke = kReference;
  smoke.population_size = kSmokeN;
  const auto start = std::chrono::steady_clock::now();
  const auto small =
      moran::run_trajectory(smoke, derive_scalings(smoke), reference_options(), 7);
  const double smoke_seconds = seconds_since(start);
  const bool smoke_ok = small.conservation_checks == small.counts.total();

  Outcome o;
  o.pass = conserved == runs.size() && identical && first_seconds_ <= kReferenceBudgetSeconds &&
           smoke_ok && smoke_seconds < kSmokeBudgetSeconds;
  o.summary = fmt(
      "%zu/%zu runs conserved N after every event (%.3g events checked); rerun %s; "
      "replicate 0 %.0f s for %.3g events (limit %.0f s); N=1e4 smoke %.2f s (limit %.0f s)",
      conserved, runs.size(), static_cast<double>(events),
      identical ? "byte-identical" : "DIFFERS", first_seconds_,
      static_cast<double>(runs[0].counts.total()), kReferenceBudgetSeconds, smoke_seconds,
      kSmokeBudgetSeconds);
  o.report = {{"conserved", conserved},
              {"replicates", runs.size()},
              {"events_checked", events},
              {"identical_rerun", identical},
              {"replicate0_seconds", first_seconds_},
              {"replicate0_events", runs[0].counts.total()},
              {"smoke_seconds", smoke_seconds}};
  return o;
}

Outcome Acceptance::rates() {
  using coalescent::LambdaMeasure;
  double worst = 0.0;
  int worst_k = 2;
  for (int k = 2; k <= kMaxBlocks; ++k) {
    const double rel =
        std::abs(coalescent::total_rate(k, LambdaMeasure::BolthausenSznitman) - (k - 1)) /
        (k - 1);
    if (rel > worst) {
      worst = rel;
      worst_k = k;
    }
  }
  Rng rng(derive_seed(2, 0));
  std::vector<std::int64_t> counts(3, 0);
  for (int i = 0; i < kMergerDraws; ++i) {
    const int l = coalescent::sample_merger_size(4, LambdaMeasure::BolthausenSznitman, rng);
    if (l < 2 || l > 4) throw std::logic_error("merger size out of range");
    ++counts[static_cast<std::size_t>(l - 2)];
  }
  const std::vector<double> law{2.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0};
  const auto chi = stats::chi_square_test(counts, law);

  Outcome o;
  o.pass = worst <= kRateTolerance && chi.p_value > kMergerMinP;
  o.summary = fmt(
      "max relative error of total_rate(k) vs k-1 over k in [2, %d]: %.2e at k=%d (limit %.0e); "
      "k=4 merger sizes %lld/%lld/%lld, chi2=%.3f p=%.3f (limit > %.2f)",
      kMaxBlocks, worst, worst_k, kRateTolerance, static_cast<long long>(counts[0]),
      static_cast<long long>(counts[1]), static_cast<long long>(counts[2]), chi.statistic,
      chi.p_value, kMergerMinP);
  o.report = {{"max_relative_error", worst},
              {"worst_k", worst_k},
              {"merger_counts", counts},
              {"chi_square", chi.statistic},
              {"p_value", chi.p_value}};
  return o;
}

Outcome Acceptance::duality() {
  Outcome o;
  o.pass = true;
  o.report = json::array();
  double worst = 0.0;
  double worst_formula = 0.0;
  std::uint64_t index = 0;
  for (int k : {2, 3}) {
    for (double y : {0.3, 0.7}) {
      for (double t : {0.5, 1.0}) {
        const auto r = coalescent::duality_gap(k, y, t, kDualityReplicates, kDualityPMin,
                                               derive_seed(3, index++), 0.0, threads_);
        const double ratio = r.gap / r.combined_se;
        bool ok = r.gap <= kSeMultiplier * r.combined_se;
        worst = std::max(worst, ratio);
        auto row = io::duality_json(r);
        if (k == 2) {
          const double exact = coalescent::two_block_moment(y, t);
          const double formula = std::abs(r.coalescent_moment - exact) / r.coalescent_se;
          ok = ok && formula <= kSeMultiplier;
          worst_formula = std::max(worst_formula, formula);
          row["two_block_moment"] = exact;
          row["formula_ratio"] = formula;
        }
        o.pass = o.pass && ok;
        o.report.push_back(row);
      }
    }
  }
  o.summary = fmt(
      "8 cases, 1e5 replicates per side: max |gap|/SE = %.2f; k=2 closed form vs coalescent MC "
      "max |diff|/SE = %.2f (limit %.0f)",
      worst, worst_formula, kSeMultiplier);
  return o;
}

Outcome Acceptance::integrator() {
  double worst = 0.0;
  std::size_t compositions = 0;
  for (int i = 0; i < kFlowGrid; ++i) {
    const double y = (i + 0.5) / kFlowGrid;
    for (double alpha : {0.1, 1.0, 7.0}) {
      for (auto [a, b] : {std::pair{0.01, 0.02}, std::pair{0.4, 0.7}, std::pair{2.0, 3.0}}) {
        const double two = sde::drift_flow(sde::drift_flow(y, alpha, a), alpha, b);
        const double one = sde::drift_flow(y, alpha, a + b);
        worst = std::max(worst, std::abs(two - one) / one);
        ++compositions;
      }
    }
  }

  // Paths at the reference truncation until enough jumps have been applied.
  std::uint64_t jumps = 0, outside = 0, paths = 0;
  for (std::uint64_t seed = 0; jumps < kJumpApplications; ++seed, ++paths) {
    Rng start(derive_seed(4, seed));
    const sde::SdeConfig config{2.0, start.uniform(), 1.0, 1e-4};
    const auto path = sde::simulate_sde(config, derive_seed(4, seed));
    jumps += path.values.size() - 1;
    for (double v : path.values)
      if (!(v >= 0.0 && v <= 1.0)) ++outside;
  }

  Outcome o;
  o.pass = worst <= kFlowTolerance && outside == 0;
  o.summary = fmt(
      "semigroup on %zu compositions (100-point grid): max relative error %.2e (limit %.0e); "
      "%llu jumps over %llu paths, %llu values outside [0, 1]",
      compositions, worst, kFlowTolerance, static_cast<unsigned long long>(jumps),
      static_cast<unsigned long long>(paths), static_cast<unsigned long long>(outside));
  o.report = {{"compositions", compositions},
              {"max_relative_error", worst},
              {"jumps", jumps},
              {"paths", paths},
              {"outside", outside}};
  return o;
}

Outcome Acceptance::spacing() {
  const auto sc = derive_scalings(kReference);
  std::vector<std::vector<moran::TauRecord>> registries;
  for (const auto& r : reference()) registries.push_back(r.registry.records());
  stats::TauSpacingOptions options;
  options.band_low = kSpacingLow;
  options.band_high = kSpacingHigh;
  const auto report = stats::tau_spacing_check(registries, sc, kReference.horizon, options);

  std::vector<double> r;
  for (const auto& row : report.details.rows) r.push_back(row[5]);
  std::sort(r.begin(), r.end());
  Outcome o;
  o.pass = report.pass;
  o.summary = fmt(
      "median q_j(tau_{j+1}-tau_j)/a_N = %.3f over %zu spacings pooled from %zu runs "
      "(quartiles %.3f, %.3f; band [%.1f, %.1f])",
      report.statistic, r.size(), registries.size(), r[r.size() / 4], r[3 * r.size() / 4],
      kSpacingLow, kSpacingHigh);
  o.report = io::report_json(report);
  return o;
}

Outcome Acceptance::families() {
  const auto sc = derive_scalings(kReference);
  std::vector<stats::FamilyObservation> pooled;
  for (const auto& r : reference()) {
    const auto recs = r.registry.records();
    const auto obs = stats::family_observations(recs, sc, kReference.horizon);
    pooled.insert(pooled.end(), obs.begin(), obs.end());
  }
  stats::FamilySizeOptions options;
  options.grid = kFamilyGrid;
  options.tolerance = kFamilyTolerance;
  options.min_observations = 1;  // the pool is whatever 20 reference runs give
  const auto report = stats::family_size_tail_check(pooled, options);

  std::string rows;
  for (const auto& row : report.details.rows)
    rows += fmt(" y=%.1f: %.3f vs %.3f;", row[0], row[1], row[2]);
  Outcome o;
  o.pass = report.pass;
  o.summary = fmt("%zu observations from %zu runs;%s max relative deviation %.3f (limit %.1f)",
                  pooled.size(), reference().size(), rows.c_str(), report.statistic,
                  kFamilyTolerance);
  o.report = io::report_json(report);
  return o;
}

Outcome Acceptance::neutral() {
  const auto sc = derive_scalings(kNeutral);
  moran::MoranOptions options;
  options.early = default_early_window(kNeutral.horizon);
  const auto runs = experiments::run_replicates(kNeutral, options, derive_seed(7, 0),
                                                kNeutralReplicates, threads_);
  const std::vector<double> times{3.0, 4.0};
  const auto samples = experiments::y_samples(runs, times);

  Outcome o;
  o.pass = true;
  o.report = {{"y_N", sc.y_quantized}, {"replicates", runs.size()}, {"times", json::array()}};
  std::string rows;
  for (std::size_t c = 0; c < times.size(); ++c) {
    const auto est = stats::moment_with_se(samples[c], 1);
    const double ratio = std::abs(est.mean - sc.y_quantized) / est.se;
    o.pass = o.pass && ratio <= kSeMultiplier;
    rows += fmt(" t=%.0f: %.4f (SE %.4f, %.2f SE);", times[c], est.mean, est.se, ratio);
    o.report["times"].push_back(
        {{"t", times[c]}, {"mean", est.mean}, {"se", est.se}, {"ratio", ratio}});
  }
  o.summary = fmt("alpha=0, N=1e5, %zu runs, y_N=%.4f;%s limit %.0f SE", runs.size(),
                  sc.y_quantized, rows.c_str(), kSeMultiplier);
  return o;
}

Outcome Acceptance::martingale() {
  const auto sc = derive_scalings(kSmoke);
  const double step = sc.time_scale / sc.wave_width;
  moran::MoranOptions options;
  options.early = default_early_window(kSmoke.horizon);
  options.checkpoint_interval = step / 40.0;

  // Mid-window type: the median type whose tau falls in [2 a_N, (T - 1) a_N]
  // on a pilot run.
  const auto pilot = moran::run_trajectory(kSmoke, sc, options, derive_seed(8, 1));
  std::vector<int> window;
  for (const auto& rec : pilot.registry.records())
    if (rec.time >= 2.0 * sc.time_scale && rec.time <= (kSmoke.horizon - 1.0) * sc.time_scale)
      window.push_back(rec.type);
  if (window.empty()) throw std::runtime_error("pilot run has no tau in the window");
  const int type = window[window.size() / 2];

  std::vector<double> offsets;
  for (int m = 1; m <= 5; ++m) offsets.push_back(0.2 * m * step);
  const auto runs = experiments::run_replicates(kSmoke, options, derive_seed(8, 0),
                                                kMartingaleReplicates, threads_);
  const auto report = stats::martingale_diagnostic(runs, kSmoke, type, offsets);
  const std::size_t used = report.inputs["used"];

  std::string rows;
  for (const auto& row : report.details.rows) rows += fmt(" %.2f", row[3]);
  Outcome o;
  o.pass = report.pass && used >= kMartingaleMinUsed;
  o.summary = fmt(
      "Z_%d at offsets 0.2..1.0 a_N/k_N over %zu runs (limit >= %zu): |mean|/SE =%s "
      "(limit %.0f)",
      type, used, kMartingaleMinUsed, rows.c_str(), kSeMultiplier);
  o.report = io::report_json(report);
  return o;
}

Outcome Acceptance::trend() {
  moran::MoranOptions options;
  options.early = default_early_window(kReference.horizon);
  std::vector<stats::TrendLevel> levels;
  std::uint64_t level_seed = 0;
  for (auto [n, count] : {std::pair{std::int64_t{10'000}, kTrendReplicates4},
                          std::pair{std::int64_t{100'000}, kTrendReplicates5}}) {
    ModelParams p = kReference;
    p.population_size = n;
    const auto runs = experiments::run_replicates(p, options, derive_seed(9, level_seed++),
                                                  count, threads_);
    levels.push_back({n, experiments::y_samples(runs, kTrendTimes)});
  }
  levels.push_back(
      {kReference.population_size, experiments::y_samples(reference(), kTrendTimes)});

  const auto sc = derive_scalings(kReference);
  std::vector<double> shifted;
  for (double t : kTrendTimes) shifted.push_back(t - 2.0);
  const auto sde_samples = sde::sample_ensemble(
      {kReference.weak_selection, sc.y_quantized, shifted.back(), 1e-4}, shifted,
      kTrendSdeReplicates, derive_seed(9, 99), threads_);

  stats::TrendOptions trend;
  trend.se_multiplier = kTrendSeMultiplier;
  trend.seed = derive_seed(9, 100);
  const auto report = stats::trend_report(levels, sde_samples, kTrendTimes, trend);

  std::string rows;
  for (const auto& row : report.details.rows)
    rows += fmt(" t=%.0f N=%.0e: %.3f+-%.3f;", row[0], row[1], row[3], row[4]);
  Outcome o;
  o.pass = report.pass;
  o.summary = fmt("KS to SDE marginal:%s worst increase beyond %.0f SE: %.3f (limit 0)",
                  rows.c_str(), kTrendSeMultiplier, report.statistic);
  o.report = io::report_json(report);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  std::string json_path = "acceptance.json";
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("criteria", selected, "Criteria to run (default: all)")
      ->check(CLI::Range(1, 9));
  app.add_option("--json", json_path, "Report file");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  Acceptance acc(threads);
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"conservation & determinism", [&] { return acc.conservation(); }}},
      {2, {"Bolthausen-Sznitman rates", [&] { return acc.rates(); }}},
      {3, {"moment duality", [&] { return acc.duality(); }}},
      {4, {"SDE integrator", [&] { return acc.integrator(); }}},
      {5, {"tau spacing", [&] { return acc.spacing(); }}},
      {6, {"early family sizes", [&] { return acc.families(); }}},
      {7, {"neutral label martingale", [&] { return acc.neutral(); }}},
      {8, {"Z_j martingale", [&] { return acc.martingale(); }}},
      {9, {"convergence trend", [&] { return acc.trend(); }}},
  };

  json results = json::object();
  bool all = true;
  for (int c : selected) {
    const auto& [name, run] = criteria.at(c);
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("error: ") + e.what();
    }
    const double elapsed = seconds_since(start);
    all = all && o.pass;
    std::printf("criterion %d %s [%s] %s (%.0f s)\n", c, o.pass ? "PASS" : "FAIL", name,
                o.summary.c_str(), elapsed);
    std::fflush(stdout);
    results[std::to_string(c)] = {{"name", name},
                                  {"pass", o.pass},
                                  {"summary", o.summary},
                                  {"seconds", elapsed},
                                  {"report", o.report}};
    std::ofstream(json_path) << results.dump(2) << '\n';
  }
  return all ? 0 : 1;
}
