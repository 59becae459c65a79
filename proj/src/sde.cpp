#include "wavefront/sde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wavefront/params.hpp"
#include "wavefront/parallel.hpp"

namespace wavefront::sde {

namespace {

double snap(double y) {
  if (y < kBoundarySnap) return 0.0;
  if (y > 1.0 - kBoundarySnap) return 1.0;
  return y;
}

bool absorbed(double y) { return y == 0.0 || y == 1.0; }

// Drives one path to t_end. on_interval(t0, y0, t1) is called for every
// stretch of pure drift [t0, t1); on_jump(t, y) after every jump. Stops early
// once the path is absorbed.
template <class OnInterval, class OnJump>
void integrate(const SdeConfig& config, Rng& rng, OnInterval&& on_interval,
               OnJump&& on_jump) {
  double t = 0.0;
  double y = snap(config.y0);
  while (!absorbed(y)) {
    const Jump jump = next_jump(config.p_min, rng);
    if (t + jump.wait >= config.t_end) break;
    on_interval(t, y, t + jump.wait);
    y = drift_flow(y, config.alpha, jump.wait);
    t += jump.wait;
    y = snap(apply_jump(y, jump.size, jump.mark));
    on_jump(t, y);
  }
  on_interval(t, y, config.t_end);
}

}  // namespace

void validate(const SdeConfig& c) {
  if (!(c.p_min > 0.0 && c.p_min < 1.0))
    throw ParameterError("p_min must lie in (0, 1)");
  if (!(c.y0 >= 0.0 && c.y0 <= 1.0))
    throw ParameterError("y0 must lie in [0, 1]");
  if (!(c.alpha >= 0.0)) throw ParameterError("alpha must be >= 0");
  if (!(c.t_end >= 0.0)) throw ParameterError("t_end must be >= 0");
}

double drift_flow(double y, double alpha, double dt) {
  if (alpha == 0.0 || dt == 0.0 || absorbed(y)) return y;
  const double decay = std::exp(-alpha * dt);
  return snap(y * decay / (1.0 - y + y * decay));
}

double jump_rate(double p_min) { return 1.0 / p_min - 1.0; }

Jump next_jump(double p_min, Rng& rng) {
  Jump j;
  j.wait = rng.exponential(jump_rate(p_min));
  j.size = p_min / (1.0 - rng.uniform() * (1.0 - p_min));
  j.mark = rng.uniform();
  return j;
}

double apply_jump(double y, double size, double mark) {
  const double out = mark <= y ? y + size * (1.0 - y) : y * (1.0 - size);
  return std::clamp(out, 0.0, 1.0);
}

double SdePath::value_at(double t) const {
  if (times.empty()) throw std::logic_error("empty SDE path");
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(
      0, std::distance(times.begin(), it) - 1));
  return drift_flow(values[i], alpha, std::max(0.0, t - times[i]));
}

SdePath simulate_sde(const SdeConfig& config, std::uint64_t seed) {
  validate(config);
  Rng rng(seed);
  SdePath path;
  path.alpha = config.alpha;
  path.t_end = config.t_end;
  path.p_min = config.p_min;
  path.seed = seed;
  path.neglected_variation = config.p_min / 4.0 * config.t_end;
  path.times.push_back(0.0);
  path.values.push_back(snap(config.y0));
  integrate(
      config, rng, [](double, double, double) {},
      [&](double t, double y) {
        path.times.push_back(t);
        path.values.push_back(y);
      });
  return path;
}

std::vector<double> sample_at(const SdeConfig& config, std::span<const double> times,
                              Rng& rng) {
  validate(config);
  if (!std::is_sorted(times.begin(), times.end()))
    throw std::invalid_argument("sample times must be increasing");
  std::vector<double> out(times.size());
  std::size_t next = 0;
  integrate(
      config, rng,
      [&](double t0, double y0, double t1) {
        const bool last = t1 >= config.t_end;
        while (next < times.size() && (times[next] < t1 || (last && times[next] <= t1))) {
          out[next] = drift_flow(y0, config.alpha, std::max(0.0, times[next] - t0));
          ++next;
        }
      },
      [](double, double) {});
  if (next != times.size())
    throw std::invalid_argument("sample times exceed t_end");
  return out;
}

std::vector<std::vector<double>> sample_ensemble(const SdeConfig& config,
                                                 std::span<const double> times,
                                                 std::size_t replicates,
                                                 std::uint64_t seed, unsigned threads) {
  std::vector<std::vector<double>> out(times.size(), std::vector<double>(replicates));
  parallel_for(replicates, threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    const auto values = sample_at(config, times, rng);
    for (std::size_t c = 0; c < times.size(); ++c) out[c][r] = values[c];
  });
  return out;
}

}  // namespace wavefront::sde
