// Event-driven simulation of the Moran model with strong selection.
//
// Individuals are never stored. The population is a window of types, each
// type holding four exchangeable cells: (X, non-early), (X, early),
// (Y, non-early), (Y, early). Deaths happen at total rate N and mutations at
// total rate N mu, so a single aggregate clock with categorical sub-sampling
// gives the exact jump chain.
//
// The group labels X/Y are inert for the type dynamics: they only partition
// cells, and a killing (a Y mutant replaced by an X birth one type up) moves
// exactly the same type counts as the mutation it replaces.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <stdexcept>
#include <variant>
#include <vector>

#include "wavefront/params.hpp"
#include "wavefront/rng.hpp"

namespace wavefront::moran {

/// Raised when the dynamics cannot continue: every fitness clipped to zero,
/// the wave stalled, or marking found inconsistent tau bookkeeping.
class ModelDegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Cell : std::uint8_t { X = 0, XEarly = 1, Y = 2, YEarly = 3 };

constexpr bool is_y(Cell c) { return c == Cell::Y || c == Cell::YEarly; }
constexpr bool is_early(Cell c) { return c == Cell::XEarly || c == Cell::YEarly; }
constexpr Cell make_cell(bool y_group, bool early) {
  return static_cast<Cell>((y_group ? 2 : 0) + (early ? 1 : 0));
}

struct TypeCells {
  std::array<std::int64_t, 4> count{};

  std::int64_t operator[](Cell c) const {
    return count[static_cast<std::size_t>(c)];
  }
  std::int64_t total() const { return count[0] + count[1] + count[2] + count[3]; }
  std::int64_t x_total() const { return count[0] + count[1]; }
  std::int64_t y_total() const { return count[2] + count[3]; }
  std::int64_t early_total() const { return count[1] + count[3]; }
};

struct CellRef {
  int type = 0;
  Cell cell = Cell::X;

  friend bool operator==(const CellRef&, const CellRef&) = default;
};

/// Sum with Neumaier compensation; the clock and the running integral of the
/// mean type accumulate ~10^9 tiny increments.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      carry_ += (sum_ - t) + v;
    else
      carry_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

class PopulationState {
 public:
  /// All individuals of type 0, group X, non-early; clock 0; unlabeled.
  explicit PopulationState(std::int64_t population_size);

  std::int64_t population_size() const { return size_; }
  double clock() const { return clock_.value() + pending_clock_; }
  double mean_type() const {
    return static_cast<double>(type_sum_) / static_cast<double>(size_);
  }
  /// Integral of the mean type over [0, clock].
  double integrated_mean_type() const {
    return integral_.value() + pending_integral_;
  }
  bool labeled() const { return labeled_; }
  void set_labeled(bool labeled) { labeled_ = labeled; }

  /// Lowest and highest types with non-zero count.
  int lowest_type() const { return base_; }
  int highest_type() const { return base_ + static_cast<int>(cells_.size()) - 1; }

  std::int64_t count(int type) const;
  std::int64_t count(int type, Cell cell) const;
  TypeCells cells(int type) const;

  /// Contiguous views over [lowest_type, highest_type].
  std::span<const TypeCells> window() const { return cells_; }
  std::span<const std::int64_t> totals() const { return totals_; }
  /// Per type, the sum of squared cell counts.
  std::span<const std::int64_t> squares() const { return squares_; }
  /// Sums over types of Q_j and of j Q_j, Q_j the squared cell counts.
  std::int64_t square_sum() const { return square_sum_; }
  std::int64_t type_square_sum() const { return type_square_sum_; }

  /// Adds delta individuals to a cell; the type window grows or shrinks so
  /// that its end types are non-empty.
  void add(int type, Cell cell, std::int64_t delta);

  /// Advances the clock, accumulating the mean type over the elapsed time.
  void advance(double dt);

  /// Recomputes from cells: population total and mean type.
  std::int64_t recount() const;
  double recomputed_mean_type() const;

 private:
  std::int64_t size_;
  int base_ = 0;
  std::vector<TypeCells> cells_;
  std::vector<std::int64_t> totals_;
  std::vector<std::int64_t> squares_;
  std::int64_t type_sum_ = 0;  // sum over types of j * W_j, exact
  std::int64_t square_sum_ = 0;
  std::int64_t type_square_sum_ = 0;
  // Short runs of increments are summed plainly, then folded into the
  // compensated totals.
  static constexpr int kFoldEvery = 4096;
  CompensatedSum clock_;
  CompensatedSum integral_;
  double pending_clock_ = 0.0;
  double pending_integral_ = 0.0;
  int pending_steps_ = 0;
  bool labeled_ = false;
};

struct TauRecord {
  int type = 0;            // j
  double time = 0.0;       // tau_j
  double mean_type = 0.0;  // M(tau_j)
  double lead = 1.0;       // q_j = max(1, j - M(tau_j))
  double early_end = 0.0;  // xi_j
  std::optional<double> early_fraction;  // S_j, set at tau_{j+1}
  std::optional<double> y_observed;      // Y_{j-1}(tau_j) / ceil(s/mu)
};

class TauRegistry {
 public:
  bool contains(int type) const { return find(type) != nullptr; }
  const TauRecord* find(int type) const;
  TauRecord* find(int type);
  const TauRecord& at(int type) const;

  /// Throws std::logic_error when the type already has a tau.
  void insert(const TauRecord& record);

  /// Highest type with a recorded tau; 0 when empty.
  int highest_type() const;
  std::size_t size() const { return size_; }

  /// Records ordered by type.
  std::vector<TauRecord> records() const;

 private:
  std::vector<std::optional<TauRecord>> by_type_;
  std::size_t size_ = 0;
};

struct Death {
  CellRef victim;
  CellRef parent;
};
struct Mutation {
  CellRef source;  // the mutant before it moved one type up
  bool early = false;
};
struct Killing {
  int type = 0;  // type of the killed Y individual
};

struct Event {
  double time = 0.0;
  std::variant<Death, Mutation, Killing> kind;
};

struct EventCounts {
  std::uint64_t deaths = 0;  // simulated deaths; skipped null deaths excluded
  std::uint64_t mutations = 0;
  std::uint64_t killings = 0;
  std::uint64_t killing_clamps = 0;  // times alpha/q * X/W exceeded 1

  std::uint64_t total() const { return deaths + mutations + killings; }
};

struct Checkpoint {
  double time = 0.0;
  double mean_type = 0.0;
  double integrated_mean_type = 0.0;
  int base_type = 0;
  std::vector<std::int64_t> counts;  // W_j for j = base_type, base_type+1, ...

  std::int64_t count(int type) const {
    const int i = type - base_type;
    if (i < 0 || i >= static_cast<int>(counts.size())) return 0;
    return counts[static_cast<std::size_t>(i)];
  }
};

struct MoranOptions {
  EarlyWindow early;
  /// Extra checkpoints on the grid k * interval; 0 keeps only tau checkpoints.
  double checkpoint_interval = 0.0;
  /// The run stops once a type above this index appears.
  int max_type = 100000;
  /// Cadence of the from-scratch cache check, in events; 0 disables.
  std::uint64_t verify_every = 1'000'000;
  /// Recount the population after every event.
  bool check_every_event = false;
  /// Leave out deaths whose parent sits in the victim's own cell. They change
  /// nothing, so the chain of the remaining events has the same law; the
  /// clock runs at the reduced total rate. Applies while every fitness is
  /// positive.
  bool skip_null_deaths = true;
};

/// Everything that evolves during a run, copyable as a snapshot.
struct MoranRun {
  PopulationState state;
  TauRegistry registry;
  EventCounts counts;
  std::vector<Checkpoint> checkpoints;
  double next_checkpoint = 0.0;
  double last_tau_time = 0.0;
  std::uint64_t conservation_checks = 0;
  std::uint64_t verify_countdown = 0;

  explicit MoranRun(std::int64_t population_size) : state(population_size) {}
};

PopulationState init_population(const ModelParams& params);

/// Sum over types of W_j max(1 + s(j - M), 0). Equals N when every active
/// fitness is positive.
double total_fitness(const PopulationState& state, double selection);

/// The individual at position r in (type, cell) order, 0 <= r < N.
CellRef individual_at(const PopulationState& state, std::int64_t r);

/// Uniform individual; type proportional to W_j, cell proportional to counts.
CellRef sample_individual(const PopulationState& state, Rng& rng);

/// Fitness-proportional parent. Sampled before the victim is removed.
CellRef sample_parent(const PopulationState& state, double selection, Rng& rng);

/// min(1, alpha / lead * X_j / W_j): chance that a (Y, j) mutation becomes a
/// killing. Zero when W_j is zero.
double killing_probability(double alpha, double lead, std::int64_t x_count,
                           std::int64_t type_count);

/// Sum over cells of n_c^2 f_c / N: the rate of deaths whose parent comes from
/// the victim's own cell. Requires every fitness to be positive.
double null_death_rate(const PopulationState& state, double selection);

/// Victim and parent of a death conditioned on lying in different cells.
/// `u` is uniform on [0, N - null_death_rate) and picks the victim.
std::pair<CellRef, CellRef> sample_distinct_pair(const PopulationState& state,
                                                 double selection, double u, Rng& rng);

/// Marks exactly y_marked_count individuals of type fittest_type - 1 as Y,
/// each individual of a lower type as Y with probability y_N, everything else
/// X. Requires W_{fittest_type-1} to equal the tau threshold count.
void mark_groups(PopulationState& state, int fittest_type,
                 const DerivedScalings& scalings, Rng& rng);

class MoranStepper {
 public:
  MoranStepper(const ModelParams& params, const DerivedScalings& scalings,
               MoranOptions options);

  /// Fresh run: init_population, tau_1 = 0 recorded.
  MoranRun start() const;

  /// One Gillespie step: death with probability 1/(1+mu), mutation (or
  /// killing) otherwise. The victim or mutant is uniform over individuals.
  Event step(MoranRun& run, Rng& rng) const;

  /// Records tau_{type+1} if W_type just exceeded s/mu for the first time.
  bool record_tau(MoranRun& run, int type) const;

  /// Full consistency check; throws std::logic_error on failure.
  void verify(const MoranRun& run) const;

  const ModelParams& params() const { return params_; }
  const DerivedScalings& scalings() const { return scalings_; }
  const MoranOptions& options() const { return options_; }

 private:
  void checkpoint(MoranRun& run, double time, double integral) const;
  bool is_early_arrival(const MoranRun& run, int type) const;
  double killing_lead(const MoranRun& run, int type) const;

  ModelParams params_;
  DerivedScalings scalings_;
  MoranOptions options_;
  double total_rate_;
};

struct YPoint {
  double time = 0.0;  // rescaled, t = clock / a_N
  double value = 0.0;
};

struct MoranTrajectory {
  TauRegistry registry;
  std::vector<YPoint> y_path;
  std::vector<Checkpoint> checkpoints;
  EventCounts counts;
  std::uint64_t seed = 0;
  int marked_type = 0;  // j(2)
  double end_time = 0.0;
  bool type_cap_reached = false;
  std::uint64_t discarded_events = 0;  // phase-1 events past tau_{j(2)}, rejected replays
  std::uint64_t rejected_replays = 0;
  std::uint64_t conservation_checks = 0;

  /// Value of the step function at rescaled time t >= 2.
  double y_at(double t) const;
};

/// Phase 1 simulates unlabeled until 2 a_N, snapshotting at every new highest
/// tau. The run restarts from the snapshot at tau_{j(2)}, marks the groups,
/// and continues with killings active until T a_N; a replay that records a
/// higher tau before 2 a_N is discarded and redrawn.
inline constexpr int kMaxReplays = 10000;
MoranTrajectory run_trajectory(const ModelParams& params,
                               const DerivedScalings& scalings,
                               const MoranOptions& options, std::uint64_t seed);

/// Stream index of the marking randomness; the main stream stays untouched so
/// a labeled run with alpha = 0 follows the unlabeled type dynamics exactly.
inline constexpr std::uint64_t kMarkingStream = 0x6d61726b;

}  // namespace wavefront::moran
