#include "wavefront/moran.hpp"

#include <algorithm>
#include <limits>
#include <sstream>
#include <tuple>

namespace wavefront::moran {

// ---------------------------------------------------------------------------
// PopulationState

PopulationState::PopulationState(std::int64_t population_size)
    : size_(population_size), cells_(1), totals_(1, population_size),
      squares_(1, population_size * population_size),
      square_sum_(population_size * population_size) {
  if (population_size <= 0)
    throw ParameterError("population size must be positive");
  if (population_size > 2'000'000'000)
    throw ParameterError("population size above 2e9 is not supported");
  cells_[0].count[static_cast<std::size_t>(Cell::X)] = population_size;
}

std::int64_t PopulationState::count(int type) const {
  const int i = type - base_;
  if (i < 0 || i >= static_cast<int>(totals_.size())) return 0;
  return totals_[static_cast<std::size_t>(i)];
}

std::int64_t PopulationState::count(int type, Cell cell) const {
  return cells(type)[cell];
}

TypeCells PopulationState::cells(int type) const {
  const int i = type - base_;
  if (i < 0 || i >= static_cast<int>(cells_.size())) return {};
  return cells_[static_cast<std::size_t>(i)];
}

void PopulationState::add(int type, Cell cell, std::int64_t delta) {
  if (type > highest_type()) {
    const auto n = static_cast<std::size_t>(type - base_ + 1);
    cells_.resize(n);
    totals_.resize(n, 0);
    squares_.resize(n, 0);
  } else if (type < base_) {
    const auto grow = static_cast<std::size_t>(base_ - type);
    cells_.insert(cells_.begin(), grow, TypeCells{});
    totals_.insert(totals_.begin(), grow, 0);
    squares_.insert(squares_.begin(), grow, 0);
    base_ = type;
  }
  const auto i = static_cast<std::size_t>(type - base_);
  auto& slot = cells_[i].count[static_cast<std::size_t>(cell)];
  const std::int64_t before = slot;
  slot += delta;
  if (slot < 0) throw std::logic_error("negative cell count");
  totals_[i] += delta;
  type_sum_ += static_cast<std::int64_t>(type) * delta;
  const std::int64_t dsq = slot * slot - before * before;
  squares_[i] += dsq;
  square_sum_ += dsq;
  type_square_sum_ += static_cast<std::int64_t>(type) * dsq;

  if (totals_.front() == 0 || totals_.back() == 0) {
    std::size_t lead = 0;
    while (lead + 1 < totals_.size() && totals_[lead] == 0) ++lead;
    if (lead > 0) {
      cells_.erase(cells_.begin(), cells_.begin() + static_cast<std::ptrdiff_t>(lead));
      totals_.erase(totals_.begin(), totals_.begin() + static_cast<std::ptrdiff_t>(lead));
      squares_.erase(squares_.begin(), squares_.begin() + static_cast<std::ptrdiff_t>(lead));
      base_ += static_cast<int>(lead);
    }
    while (totals_.size() > 1 && totals_.back() == 0) {
      cells_.pop_back();
      totals_.pop_back();
      squares_.pop_back();
    }
  }
}

void PopulationState::advance(double dt) {
  pending_clock_ += dt;
  pending_integral_ += mean_type() * dt;
  if (++pending_steps_ == kFoldEvery) {
    clock_.add(pending_clock_);
    integral_.add(pending_integral_);
    pending_clock_ = 0.0;
    pending_integral_ = 0.0;
    pending_steps_ = 0;
  }
}

std::int64_t PopulationState::recount() const {
  std::int64_t n = 0;
  for (const auto& c : cells_) n += c.total();
  return n;
}

double PopulationState::recomputed_mean_type() const {
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < cells_.size(); ++i)
    sum += (base_ + static_cast<std::int64_t>(i)) * cells_[i].total();
  return static_cast<double>(sum) / static_cast<double>(size_);
}

// ---------------------------------------------------------------------------
// TauRegistry

const TauRecord* TauRegistry::find(int type) const {
  if (type < 0 || type >= static_cast<int>(by_type_.size())) return nullptr;
  const auto& slot = by_type_[static_cast<std::size_t>(type)];
  return slot ? &*slot : nullptr;
}

TauRecord* TauRegistry::find(int type) {
  if (type < 0 || type >= static_cast<int>(by_type_.size())) return nullptr;
  auto& slot = by_type_[static_cast<std::size_t>(type)];
  return slot ? &*slot : nullptr;
}

const TauRecord& TauRegistry::at(int type) const {
  const auto* r = find(type);
  if (r == nullptr) throw std::out_of_range("no tau recorded for type");
  return *r;
}

void TauRegistry::insert(const TauRecord& record) {
  if (record.type < 0) throw std::logic_error("negative type index");
  if (contains(record.type)) {
    std::ostringstream os;
    os << "duplicate tau assignment for type " << record.type;
    throw std::logic_error(os.str());
  }
  const auto i = static_cast<std::size_t>(record.type);
  if (by_type_.size() <= i) by_type_.resize(i + 1);
  by_type_[i] = record;
  ++size_;
}

int TauRegistry::highest_type() const {
  for (auto i = by_type_.size(); i-- > 0;)
    if (by_type_[i]) return static_cast<int>(i);
  return 0;
}

std::vector<TauRecord> TauRegistry::records() const {
  std::vector<TauRecord> out;
  out.reserve(size_);
  for (const auto& slot : by_type_)
    if (slot) out.push_back(*slot);
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

PopulationState init_population(const ModelParams& params) {
  return PopulationState(params.population_size);
}

double total_fitness(const PopulationState& state, double selection) {
  const double mean = state.mean_type();
  const int base = state.lowest_type();
  if (1.0 + selection * (base - mean) > 0.0)
    return static_cast<double>(state.population_size());
  double total = 0.0;
  const auto totals = state.totals();
  for (std::size_t i = 0; i < totals.size(); ++i) {
    const double f =
        std::max(1.0 + selection * (base + static_cast<int>(i) - mean), 0.0);
    total += static_cast<double>(totals[i]) * f;
  }
  return total;
}

namespace {

Cell pick_cell(const TypeCells& cells, std::int64_t r) {
  for (std::size_t c = 0; c < 3; ++c) {
    if (r < cells.count[c]) return static_cast<Cell>(c);
    r -= cells.count[c];
  }
  return Cell::YEarly;
}

}  // namespace

CellRef individual_at(const PopulationState& state, std::int64_t r) {
  const auto totals = state.totals();
  const auto window = state.window();
  for (std::size_t i = 0; i < totals.size(); ++i) {
    if (r < totals[i])
      return {state.lowest_type() + static_cast<int>(i), pick_cell(window[i], r)};
    r -= totals[i];
  }
  throw std::logic_error("population total below N");
}

CellRef sample_individual(const PopulationState& state, Rng& rng) {
  return individual_at(state, static_cast<std::int64_t>(rng.below(
                                  static_cast<std::uint64_t>(state.population_size()))));
}

CellRef sample_parent(const PopulationState& state, double selection, Rng& rng) {
  const double total = total_fitness(state, selection);
  if (!(total > 0.0))
    throw ModelDegeneracyError("every fitness is clipped to zero");

  const auto totals = state.totals();
  const auto window = state.window();
  const int base = state.lowest_type();
  double r = rng.uniform() * total;

  // Fitness of the lowest type; each type up adds s.
  double fitness = 1.0 + selection * (base - state.mean_type());
  std::size_t last = totals.size();
  for (std::size_t i = 0; i < totals.size(); ++i, fitness += selection) {
    if (fitness <= 0.0 || totals[i] == 0) continue;
    last = i;
    const double weight = static_cast<double>(totals[i]) * fitness;
    if (r < weight) {
      const auto k = std::min(totals[i] - 1, static_cast<std::int64_t>(r / fitness));
      return {base + static_cast<int>(i), pick_cell(window[i], k)};
    }
    r -= weight;
  }
  // Rounding left r just past the last weight.
  if (last == totals.size())
    throw ModelDegeneracyError("every fitness is clipped to zero");
  return {base + static_cast<int>(last),
          pick_cell(window[last], totals[last] - 1)};
}

double killing_probability(double alpha, double lead, std::int64_t x_count,
                           std::int64_t type_count) {
  if (type_count <= 0) return 0.0;
  const double p = alpha / lead * static_cast<double>(x_count) / static_cast<double>(type_count);
  return std::min(1.0, p);
}

double null_death_rate(const PopulationState& state, double selection) {
  // sum_j Q_j (1 + s (j - M)) with exact integer sums
  const double q = static_cast<double>(state.square_sum());
  const double jq = static_cast<double>(state.type_square_sum());
  const double mass = q + selection * (jq - state.mean_type() * q);
  return mass / static_cast<double>(state.population_size());
}

std::pair<CellRef, CellRef> sample_distinct_pair(const PopulationState& state,
                                                 double selection, double u, Rng& rng) {
  const auto window = state.window();
  const auto totals = state.totals();
  const auto squares = state.squares();
  const int base = state.lowest_type();
  const double size = static_cast<double>(state.population_size());
  const double low = 1.0 + selection * (base - state.mean_type());

  // Victim cell a has weight n_a (N - n_a f_a) / N; per type that sums to
  // W_j - f_j Q_j / N.
  std::size_t vi = window.size();
  double fitness = low;
  std::size_t last = window.size();
  for (std::size_t i = 0; i < window.size(); ++i, fitness += selection) {
    const double weight = static_cast<double>(totals[i]) -
                          fitness * static_cast<double>(squares[i]) / size;
    if (weight <= 0.0) continue;
    last = i;
    if (u < weight) {
      vi = i;
      break;
    }
    u -= weight;
  }
  if (vi == window.size()) {
    if (last == window.size()) throw std::logic_error("no death can change the population");
    vi = last;
    fitness = low + selection * static_cast<double>(vi);
  }
  const double victim_fitness = fitness;
  std::size_t vc = 4, last_cell = 4;
  for (std::size_t c = 0; c < 4; ++c) {
    const double n = static_cast<double>(window[vi].count[c]);
    const double weight = n * (size - n * victim_fitness) / size;
    if (weight <= 0.0) continue;
    last_cell = c;
    if (u < weight) {
      vc = c;
      break;
    }
    u -= weight;
  }
  if (vc == 4) vc = last_cell;
  if (vc == 4) throw std::logic_error("victim type has no eligible cell");
  const CellRef victim{base + static_cast<int>(vi), static_cast<Cell>(vc)};

  // Parent proportional to n_b f_b over all other cells.
  const double own = static_cast<double>(window[vi].count[vc]) * victim_fitness;
  double r = rng.uniform() * (size - own);
  fitness = low;
  std::size_t pi = window.size();
  last = window.size();
  for (std::size_t i = 0; i < window.size(); ++i, fitness += selection) {
    double weight = static_cast<double>(totals[i]) * fitness;
    if (i == vi) weight -= own;
    if (weight <= 0.0) continue;
    last = i;
    if (r < weight) {
      pi = i;
      break;
    }
    r -= weight;
  }
  if (pi == window.size()) {
    if (last == window.size()) throw std::logic_error("no parent outside the victim's cell");
    pi = last;
    fitness = low + selection * static_cast<double>(pi);
    r = std::numeric_limits<double>::infinity();
  }
  std::size_t pc = 4;
  for (std::size_t c = 0; c < 4; ++c) {
    if (pi == vi && c == vc) continue;
    const auto n = window[pi].count[c];
    if (n == 0) continue;
    pc = c;
    const double weight = static_cast<double>(n) * fitness;
    if (r < weight) break;
    r -= weight;
  }
  if (pc == 4) throw std::logic_error("parent type has no eligible cell");
  return {victim, CellRef{base + static_cast<int>(pi), static_cast<Cell>(pc)}};
}

void mark_groups(PopulationState& state, int fittest_type,
                 const DerivedScalings& scalings, Rng& rng) {
  if (state.labeled())
    throw std::logic_error("groups are already marked");
  const int marked = fittest_type - 1;
  if (state.count(marked) != scalings.tau_threshold_count) {
    std::ostringstream os;
    os << "marking at tau_" << fittest_type << " expects W_" << marked << " = "
       << scalings.tau_threshold_count << ", found " << state.count(marked);
    throw ModelDegeneracyError(os.str());
  }

  // Exactly y_N ceil(s/mu) distinct individuals of the marked type, sampled
  // without replacement across its X cells.
  for (std::int64_t k = 0; k < scalings.y_marked_count; ++k) {
    const auto c = state.cells(marked);
    const auto r = static_cast<std::int64_t>(
        rng.below(static_cast<std::uint64_t>(c.x_total())));
    const Cell from = r < c[Cell::X] ? Cell::X : Cell::XEarly;
    state.add(marked, from, -1);
    state.add(marked, make_cell(true, is_early(from)), +1);
  }

  for (int type = state.lowest_type(); type < marked; ++type) {
    for (Cell from : {Cell::X, Cell::XEarly}) {
      const auto n = state.count(type, from);
      const auto k = rng.binomial(n, scalings.y_quantized);
      if (k == 0) continue;
      state.add(type, make_cell(true, is_early(from)), k);
      state.add(type, from, -k);
    }
  }
  state.set_labeled(true);
}

// ---------------------------------------------------------------------------
// MoranStepper

MoranStepper::MoranStepper(const ModelParams& params,
                           const DerivedScalings& scalings, MoranOptions options)
    : params_(params), scalings_(scalings), options_(options) {
  validate(params_);
  total_rate_ = static_cast<double>(params_.population_size) *
                (1.0 + params_.mutation_rate);
}

MoranRun MoranStepper::start() const {
  MoranRun run(params_.population_size);
  run.next_checkpoint = options_.checkpoint_interval;
  run.verify_countdown = options_.verify_every;
  record_tau(run, 0);
  return run;
}

void MoranStepper::checkpoint(MoranRun& run, double time, double integral) const {
  const auto& st = run.state;
  Checkpoint cp;
  cp.time = time;
  cp.mean_type = st.mean_type();
  cp.integrated_mean_type = integral;
  cp.base_type = st.lowest_type();
  cp.counts.assign(st.totals().begin(), st.totals().end());
  run.checkpoints.push_back(std::move(cp));
}

bool MoranStepper::is_early_arrival(const MoranRun& run, int type) const {
  const auto* rec = run.registry.find(type);
  if (rec == nullptr) return false;
  const double now = run.state.clock();
  return now >= rec->time && now <= rec->early_end;
}

double MoranStepper::killing_lead(const MoranRun& run, int type) const {
  if (const auto* rec = run.registry.find(type)) return rec->lead;
  // Provisional lead until tau_type is known.
  return std::max(1.0, type - run.state.mean_type());
}

bool MoranStepper::record_tau(MoranRun& run, int type) const {
  auto& st = run.state;
  if (st.count(type) < scalings_.tau_threshold_count) return false;
  const int next = type + 1;
  if (run.registry.contains(next)) return false;

  TauRecord rec;
  rec.type = next;
  rec.time = st.clock();
  rec.mean_type = st.mean_type();
  rec.lead = std::max(1.0, next - rec.mean_type);
  rec.early_end = options_.early.end(rec.time, params_.selection, rec.lead);
  const auto cells = st.cells(type);
  if (st.labeled()) {
    rec.y_observed = std::min(
        1.0, static_cast<double>(cells.y_total()) /
                 static_cast<double>(scalings_.ceil_s_over_mu));
  }
  if (auto* prev = run.registry.find(type)) {
    prev->early_fraction = static_cast<double>(cells.early_total()) /
                           static_cast<double>(cells.total());
  }
  run.registry.insert(rec);
  run.last_tau_time = rec.time;
  checkpoint(run, rec.time, st.integrated_mean_type());
  return true;
}

Event MoranStepper::step(MoranRun& run, Rng& rng) const {
  auto& st = run.state;
  const double size = static_cast<double>(st.population_size());
  const double selection = params_.selection;

  double death_rate = size;
  double rate = total_rate_;
  const bool thinned =
      options_.skip_null_deaths && 1.0 + selection * (st.lowest_type() - st.mean_type()) > 0.0;
  if (thinned) {
    death_rate = std::max(0.0, size - null_death_rate(st, selection));
    rate = death_rate + size * params_.mutation_rate;
  }
  const double dt = rng.exponential(rate);

  if (options_.checkpoint_interval > 0.0) {
    const double t0 = st.clock();
    while (run.next_checkpoint <= t0 + dt) {
      const double at = run.next_checkpoint;
      checkpoint(run, at, st.integrated_mean_type() + st.mean_type() * (at - t0));
      run.next_checkpoint = at + options_.checkpoint_interval;
    }
  }
  st.advance(dt);

  Event event;
  event.time = st.clock();
  // One draw on [0, rate) selects both the event kind and the individual.
  const double u = rng.uniform() * rate;
  if (u < death_rate) {
    CellRef victim, parent;
    if (thinned) {
      std::tie(victim, parent) = sample_distinct_pair(st, selection, u, rng);
    } else {
      victim = individual_at(st, static_cast<std::int64_t>(u));
      parent = sample_parent(st, selection, rng);
    }
    ++run.counts.deaths;
    if (!(victim == parent)) {
      st.add(parent.type, parent.cell, +1);
      st.add(victim.type, victim.cell, -1);
      record_tau(run, parent.type);
    }
    event.kind = Death{victim, parent};
  } else {
    const auto index = std::min(
        st.population_size() - 1,
        static_cast<std::int64_t>((u - death_rate) / params_.mutation_rate));
    const CellRef mutant = individual_at(st, index);
    const int target = mutant.type + 1;
    const bool early = is_early_arrival(run, target);
    bool killed = false;

    if (st.labeled() && is_y(mutant.cell) && params_.weak_selection > 0.0) {
      const auto cells = st.cells(mutant.type);
      const double lead = killing_lead(run, target);
      const double p =
          killing_probability(params_.weak_selection, lead, cells.x_total(), cells.total());
      if (params_.weak_selection / lead * static_cast<double>(cells.x_total()) >
          static_cast<double>(cells.total()))
        ++run.counts.killing_clamps;
      killed = p > 0.0 && rng.uniform() < p;
    }

    if (killed) {
      // Compensating birth from an (X, j) parent; the child's early flag
      // follows the same window rule as a mutant's.
      st.add(target, make_cell(false, early), +1);
      st.add(mutant.type, mutant.cell, -1);
      ++run.counts.killings;
      event.kind = Killing{mutant.type};
    } else {
      st.add(target, make_cell(is_y(mutant.cell), early), +1);
      st.add(mutant.type, mutant.cell, -1);
      ++run.counts.mutations;
      event.kind = Mutation{mutant, early};
    }
    record_tau(run, target);
  }

  if (options_.check_every_event) {
    if (st.recount() != st.population_size())
      throw std::logic_error("population size not conserved");
    ++run.conservation_checks;
  }
  if (options_.verify_every != 0 && --run.verify_countdown == 0) {
    verify(run);
    run.verify_countdown = options_.verify_every;
  }
  return event;
}

void MoranStepper::verify(const MoranRun& run) const {
  const auto& st = run.state;
  if (st.recount() != st.population_size())
    throw std::logic_error("population size not conserved");
  if (st.recomputed_mean_type() != st.mean_type())
    throw std::logic_error("cached mean type out of sync");
  std::int64_t q = 0, jq = 0;
  for (int j = st.lowest_type(); j <= st.highest_type(); ++j) {
    std::int64_t qj = 0;
    for (auto n : st.cells(j).count) qj += n * n;
    if (qj != st.squares()[static_cast<std::size_t>(j - st.lowest_type())])
      throw std::logic_error("cached squared counts out of sync");
    q += qj;
    jq += j * qj;
  }
  if (q != st.square_sum() || jq != st.type_square_sum())
    throw std::logic_error("cached squared-count sums out of sync");

  const double fast = total_fitness(st, params_.selection);
  double slow = 0.0;
  for (int j = st.lowest_type(); j <= st.highest_type(); ++j)
    slow += static_cast<double>(st.count(j)) *
            std::max(1.0 + params_.selection * (j - st.mean_type()), 0.0);
  if (std::abs(fast - slow) > 1e-9 * static_cast<double>(st.population_size()))
    throw std::logic_error("total fitness fast path disagrees with recount");

  for (int j = st.lowest_type(); j <= st.highest_type(); ++j) {
    if (!run.registry.contains(j) && st.cells(j).early_total() != 0)
      throw std::logic_error("early cells populated before tau");
    if (!st.labeled() && st.cells(j).y_total() != 0)
      throw std::logic_error("Y cells populated before marking");
  }
}

// ---------------------------------------------------------------------------
// Trajectory

double MoranTrajectory::y_at(double t) const {
  if (y_path.empty()) throw std::logic_error("empty y path");
  auto it = std::upper_bound(y_path.begin(), y_path.end(), t,
                             [](double v, const YPoint& p) { return v < p.time; });
  if (it == y_path.begin()) return y_path.front().value;
  return std::prev(it)->value;
}

MoranTrajectory run_trajectory(const ModelParams& params,
                               const DerivedScalings& scalings,
                               const MoranOptions& options, std::uint64_t seed) {
  const MoranStepper stepper(params, scalings, options);
  Rng rng(seed);
  Rng marking_rng(derive_seed(seed, kMarkingStream));

  const double a_n = scalings.time_scale;
  const double marking_time = 2.0 * a_n;
  const double end_time = params.horizon * a_n;
  const double stall_limit = 10.0 * a_n / scalings.wave_width;

  std::uint32_t stall_countdown = 1;
  auto check_stall = [&](const MoranRun& run) {
    if (--stall_countdown != 0) return;
    stall_countdown = 1024;
    if (run.state.clock() - run.last_tau_time > stall_limit) {
      std::ostringstream os;
      os << "no new tau for " << run.state.clock() - run.last_tau_time
         << " time units after tau_" << run.registry.highest_type()
         << " (limit 10 a_N/k_N = " << stall_limit << ")";
      throw ModelDegeneracyError(os.str());
    }
  };

  MoranTrajectory out;
  out.seed = seed;

  // Phase 1: types only. The snapshot follows j(t) = max{j : tau_j <= t}; a
  // small population can record taus out of type order.
  MoranRun run = stepper.start();
  MoranRun snapshot = run;
  std::uint64_t events_at_snapshot = 0;
  bool cap = false;
  while (run.state.clock() <= marking_time) {
    const int highest = run.registry.highest_type();
    stepper.step(run, rng);
    if (run.registry.highest_type() != highest && run.state.clock() <= marking_time) {
      snapshot = run;
      events_at_snapshot = run.counts.total();
    }
    check_stall(run);
    if (run.state.highest_type() > options.max_type) {
      cap = true;
      break;
    }
  }
  out.discarded_events = run.counts.total() - events_at_snapshot;

  const int fittest = snapshot.registry.highest_type();
  if (fittest < 2)
    throw ModelDegeneracyError("wave has not started by time 2 a_N");

  // Phase 2: restart from tau_{j(2)} with groups. The continuation must again
  // record no higher tau before 2 a_N; replays that do are rejected, which
  // samples exactly the conditional law given the phase-1 history.
  mark_groups(snapshot.state, fittest, scalings, marking_rng);
  snapshot.registry.find(fittest)->y_observed = scalings.y_quantized;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxReplays)
      throw ModelDegeneracyError("no replay from tau_" + std::to_string(fittest) +
                                 " reached 2 a_N without a new tau");
    run = snapshot;
    bool rejected = false;
    while (!cap && run.state.clock() <= end_time) {
      stepper.step(run, rng);
      check_stall(run);
      if (run.state.highest_type() > options.max_type) cap = true;
      if (run.state.clock() <= marking_time && run.registry.highest_type() != fittest) {
        rejected = true;
        break;
      }
    }
    if (!rejected) break;
    out.discarded_events += run.counts.total() - events_at_snapshot;
    ++out.rejected_replays;
  }

  out.marked_type = fittest;
  out.end_time = run.state.clock();
  out.type_cap_reached = cap;
  out.counts = run.counts;
  out.conservation_checks = run.conservation_checks;
  // Y^N_t is read at tau_{j(t)}: one step per new highest tau.
  out.y_path.push_back({2.0, scalings.y_quantized});
  auto records = run.registry.records();
  std::stable_sort(records.begin(), records.end(),
                   [](const TauRecord& a, const TauRecord& b) { return a.time < b.time; });
  int highest = fittest;
  for (const auto& rec : records) {
    if (rec.type <= highest || rec.time > end_time) continue;
    highest = rec.type;
    out.y_path.push_back({rec.time / a_n, rec.y_observed.value_or(0.0)});
  }
  out.checkpoints = std::move(run.checkpoints);
  out.registry = std::move(run.registry);
  return out;
}

}  // namespace wavefront::moran
