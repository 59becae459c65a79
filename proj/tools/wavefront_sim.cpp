// wavefront-sim: simulate the Moran model, the limiting SDE and coalescent
// block counts, and run the comparison checks on the results.
//
// Exit status: 0 success (all selected checks pass), 1 a check failed,
// 2 bad usage or configuration, 3 the simulation could not proceed.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "wavefront/coalescent.hpp"
#include "wavefront/experiments.hpp"
#include "wavefront/io.hpp"
#include "wavefront/moran.hpp"
#include "wavefront/parallel.hpp"
#include "wavefront/params.hpp"
#include "wavefront/sde.hpp"
#include "wavefront/stats.hpp"

#ifndef WAVEFRONT_VERSION
#define WAVEFRONT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace wavefront;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by every subcommand.
struct Common {
  std::optional<std::string> config_path;
  std::map<std::string, std::string> overrides;
  unsigned threads = 1;
  std::optional<std::string> out;
  std::optional<std::string> run_name;
  std::vector<std::string> argv;
};

io::RunConfig resolve(const Common& common) {
  io::RunConfig config;
  if (common.config_path) config = io::load_config(*common.config_path);
  for (const auto& [key, value] : common.overrides) io::apply_setting(config, key, value);
  if (config.replicates < 1) throw ParameterError("replicates must be >= 1");
  return config;
}

std::string run_directory_name(std::uint64_t seed) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << '-' << std::hex << std::setw(8)
     << std::setfill('0') << (splitmix64(seed) & 0xffffffffULL);
  return os.str();
}

fs::path make_run_directory(const Common& common, std::uint64_t seed) {
  fs::path root;
  if (common.out)
    root = *common.out;
  else if (const char* env = std::getenv("WAVEFRONT_SIM_OUT"))
    root = env;
  else
    root = "runs";
  fs::path dir = root / (common.run_name ? *common.run_name : run_directory_name(seed));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create output directory " + dir.string());
  // Probe writability up front rather than after hours of simulation.
  const auto probe = dir / ".write-test";
  {
    std::ofstream test(probe);
    if (!test) throw std::runtime_error("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe);
  return dir;
}

class Run {
 public:
  Run(std::string subcommand, const Common& common, const io::RunConfig& config)
      : subcommand_(std::move(subcommand)), common_(common), config_(config),
        dir_(make_run_directory(common, config.seed)),
        start_(std::chrono::steady_clock::now()) {}

  const fs::path& dir() const { return dir_; }
  json& extra() { return extra_; }

  void write(const fs::path& name, const std::string& text) const { io::write_file(dir_ / name, text); }

  void finish() const {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    json manifest = {{"subcommand", subcommand_},
                     {"parameters", config_.to_json()},
                     {"options", extra_},
                     {"seed", config_.seed},
                     {"replicates", config_.replicates},
                     {"threads", common_.threads},
                     {"output_directory", dir_.string()},
                     {"command_line", common_.argv},
                     {"tool_version", WAVEFRONT_VERSION},
                     {"wall_clock_seconds", elapsed.count()}};
    write("manifest.json", manifest.dump(2) + "\n");
    std::cout << dir_.string() << '\n';
  }

 private:
  std::string subcommand_;
  const Common& common_;
  io::RunConfig config_;
  fs::path dir_;
  json extra_ = json::object();
  std::chrono::steady_clock::time_point start_;
};

std::string replicate_dir(std::size_t i) {
  std::ostringstream os;
  os << "replicate_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

// ---------------------------------------------------------------------------

struct MoranFlags {
  double checkpoint_interval = 0.0;
  std::uint64_t verify_every = 1'000'000;
  bool check_every_event = false;
  bool all_deaths = false;
  int max_type = 100000;
};

moran::MoranOptions moran_options(const io::RunConfig& config, const MoranFlags& flags) {
  moran::MoranOptions options;
  options.early = config.early_window();
  options.checkpoint_interval = flags.checkpoint_interval;
  options.verify_every = flags.verify_every;
  options.check_every_event = flags.check_every_event;
  options.skip_null_deaths = !flags.all_deaths;
  options.max_type = flags.max_type;
  return options;
}

json moran_flags_json(const MoranFlags& f) {
  return {{"checkpoint_interval", f.checkpoint_interval},
          {"verify_every", f.verify_every},
          {"check_every_event", f.check_every_event},
          {"all_deaths", f.all_deaths},
          {"max_type", f.max_type}};
}

int cmd_simulate_moran(const Common& common, const MoranFlags& flags) {
  const auto config = resolve(common);
  const auto params = config.model();
  validate(params);
  const auto scalings = derive_scalings(params);
  Run run("simulate-moran", common, config);
  run.extra() = moran_flags_json(flags);

  const auto count = static_cast<std::size_t>(config.replicates);
  const auto trajectories = experiments::run_replicates(params, moran_options(config, flags),
                                                        config.seed, count, common.threads);
  std::vector<std::vector<moran::TauRecord>> registries;
  json summaries = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const auto& t = trajectories[i];
    const fs::path sub = replicate_dir(i);
    auto records = t.registry.records();
    run.write(sub / "registry.csv", render([&](auto& os) { io::write_registry_csv(os, records); }));
    run.write(sub / "y_path.csv", render([&](auto& os) { io::write_y_path_csv(os, t.y_path); }));
    if (flags.checkpoint_interval > 0.0)
      run.write(sub / "checkpoints.csv",
                render([&](auto& os) { io::write_checkpoints_csv(os, t.checkpoints); }));
    auto summary = io::trajectory_summary(t, scalings);
    run.write(sub / "summary.json", summary.dump(2) + "\n");
    summaries.push_back(std::move(summary));
    registries.push_back(std::move(records));
  }
  run.write("registry.csv",
            render([&](auto& os) { io::write_combined_registry_csv(os, registries); }));
  json scaling_json = {{"k_N", scalings.wave_width},
                       {"a_N", scalings.time_scale},
                       {"ceil_s_over_mu", scalings.ceil_s_over_mu},
                       {"tau_threshold_count", scalings.tau_threshold_count},
                       {"y_N", scalings.y_quantized}};
  run.write("summary.json", json{{"scalings", scaling_json}, {"replicates", summaries}}.dump(2) + "\n");
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_simulate_sde(const Common& common, std::optional<double> t_end_flag) {
  const auto config = resolve(common);
  sde::SdeConfig sc;
  sc.alpha = config.weak_selection;
  sc.y0 = config.y;
  sc.p_min = config.p_min;
  sc.t_end = t_end_flag.value_or(config.horizon - 2.0);
  sde::validate(sc);
  Run run("simulate-sde", common, config);
  run.extra() = {{"t_end", sc.t_end}, {"y0", sc.y0}};

  const auto count = static_cast<std::size_t>(config.replicates);
  std::vector<sde::SdePath> paths(count);
  parallel_for(count, common.threads, [&](std::size_t i) {
    paths[i] = sde::simulate_sde(sc, derive_seed(config.seed, i));
  });
  std::vector<std::vector<double>> terminal(1);
  for (std::size_t i = 0; i < count; ++i) {
    run.write(fs::path(replicate_dir(i)) / "path.csv",
              render([&](auto& os) { io::write_sde_path_csv(os, paths[i]); }));
    terminal[0].push_back(paths[i].value_at(sc.t_end));
  }
  run.write("terminal.csv", render([&](auto& os) {
              io::write_ensemble_csv(os, {sc.t_end}, terminal);
            }));
  run.finish();
  return 0;
}

int cmd_simulate_coalescent(const Common& common, int k0, double t_end, const std::string& measure_name) {
  const auto config = resolve(common);
  coalescent::LambdaMeasure measure;
  if (measure_name == "bs")
    measure = coalescent::LambdaMeasure::BolthausenSznitman;
  else if (measure_name == "kingman")
    measure = coalescent::LambdaMeasure::Kingman;
  else
    throw UsageError("unknown measure '" + measure_name + "'");
  if (k0 < 1) throw ParameterError("k0 must be >= 1");
  if (!(t_end >= 0.0)) throw ParameterError("t_end must be >= 0");
  Run run("simulate-coalescent", common, config);
  run.extra() = {{"k0", k0}, {"t_end", t_end}, {"measure", measure_name}};

  const auto count = static_cast<std::size_t>(config.replicates);
  std::vector<coalescent::BlockCountPath> paths(count);
  parallel_for(count, common.threads, [&](std::size_t i) {
    paths[i] = coalescent::simulate_block_counts(k0, t_end, measure, derive_seed(config.seed, i));
  });
  for (std::size_t i = 0; i < count; ++i)
    run.write(fs::path(replicate_dir(i)) / "blocks.csv",
              render([&](auto& os) { io::write_block_path_csv(os, paths[i]); }));
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------

struct CheckFlags {
  std::vector<std::string> which;
  std::optional<std::string> registry;
  int k = 2;
  double t = 1.0;
  std::size_t min_observations = 1000;
  int type = 0;
  std::vector<double> offsets;
  std::vector<std::int64_t> levels;
  std::vector<double> checkpoints{3.0, 4.0};
  std::size_t sde_replicates = 10000;
  MoranFlags moran;
};

std::vector<std::vector<moran::TauRecord>> load_registries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open registry " + path);
  std::string first;
  std::getline(in, first);
  in.seekg(0);
  if (first.rfind("replicate,", 0) == 0) return io::read_combined_registry_csv(in);
  return {io::read_registry_csv(in)};
}

std::vector<std::vector<moran::TauRecord>> registries_for(const CheckFlags& flags,
                                                          const io::RunConfig& config,
                                                          unsigned threads) {
  if (flags.registry) return load_registries(*flags.registry);
  const auto runs = experiments::run_replicates(config.model(), moran_options(config, flags.moran),
                                                config.seed,
                                                static_cast<std::size_t>(config.replicates), threads);
  std::vector<std::vector<moran::TauRecord>> out;
  for (const auto& r : runs) out.push_back(r.registry.records());
  return out;
}

stats::ComparisonReport check_assumptions_report(const io::RunConfig& config) {
  const auto params = config.model();
  const auto a = check_assumptions(params);
  stats::ComparisonReport report;
  report.name = "assumptions";
  report.inputs = config.to_json();
  report.details.columns = {"a1_value", "a2_value", "a3_value"};
  report.details.add_row({a.a1_value, a.a2_value, a.a3_value});
  report.notes = a.warnings;
  // Advisory: the count of warnings is reported, never failed on.
  report.statistic = static_cast<double>(a.warnings.size());
  report.lower = 0.0;
  report.decide();
  return report;
}

int cmd_check(const Common& common, const CheckFlags& flags) {
  static const std::vector<std::string> known = {"duality",    "tau-spacing", "family-size",
                                                 "martingale", "trend",       "assumptions"};
  if (flags.which.empty()) throw UsageError("check: name at least one check");
  for (const auto& w : flags.which)
    if (std::find(known.begin(), known.end(), w) == known.end())
      throw UsageError("unknown check '" + w + "'");

  const auto config = resolve(common);
  const auto params = config.model();
  validate(params);
  const auto scalings = derive_scalings(params);
  Run run("check", common, config);
  run.extra() = {{"which", flags.which}, {"moran", moran_flags_json(flags.moran)}};

  bool all_pass = true;
  auto emit = [&](const stats::ComparisonReport& report) {
    run.write(report.name + ".json", io::report_json(report).dump(2) + "\n");
    run.write(report.name + ".csv", render([&](auto& os) { io::write_report_csv(os, report); }));
    std::cout << report.name << ": " << (report.pass ? "PASS" : "FAIL")
              << " statistic=" << io::format_double(report.statistic) << '\n';
    all_pass = all_pass && report.pass;
  };

  for (const auto& which : flags.which) {
    if (which == "assumptions") {
      emit(check_assumptions_report(config));
    } else if (which == "duality") {
      const auto d = coalescent::duality_gap(flags.k, config.y, flags.t,
                                             static_cast<std::size_t>(config.replicates),
                                             config.p_min, config.seed, 0.0, common.threads);
      run.write("duality_gap.json", io::duality_json(d).dump(2) + "\n");
      stats::ComparisonReport report;
      report.name = "duality";
      report.inputs = io::duality_json(d);
      report.details.columns = {"k", "y", "t", "sde_moment", "sde_se", "coalescent_moment",
                                "coalescent_se", "gap", "combined_se"};
      report.details.add_row({static_cast<double>(d.blocks), d.y, d.t, d.sde_moment, d.sde_se,
                              d.coalescent_moment, d.coalescent_se, d.gap, d.combined_se});
      // gap <= 3 combined SE; a zero SE on both sides only passes on an exact match
      report.statistic = d.gap;
      report.lower = 0.0;
      report.upper = 3.0 * d.combined_se;
      report.decide();
      emit(report);
    } else if (which == "tau-spacing") {
      const auto runs = registries_for(flags, config, common.threads);
      emit(stats::tau_spacing_check(runs, scalings, params.horizon));
    } else if (which == "family-size") {
      const auto runs = registries_for(flags, config, common.threads);
      std::vector<stats::FamilyObservation> pooled;
      for (const auto& r : runs) {
        const auto obs = stats::family_observations(r, scalings, params.horizon);
        pooled.insert(pooled.end(), obs.begin(), obs.end());
      }
      stats::FamilySizeOptions options;
      options.min_observations = flags.min_observations;
      emit(stats::family_size_tail_check(pooled, options));
    } else if (which == "martingale") {
      auto mflags = flags.moran;
      const double step = scalings.time_scale / scalings.wave_width;
      if (mflags.checkpoint_interval <= 0.0) mflags.checkpoint_interval = step / 40.0;
      auto options = moran_options(config, mflags);
      int type = flags.type;
      if (type <= 0) {
        // Pilot run on its own seed: the first type whose tau passes 2 a_N.
        const auto pilot = moran::run_trajectory(params, scalings, options,
                                                 derive_seed(config.seed, 0x70696c6f74));
        type = pilot.marked_type + 1;
      }
      std::vector<double> offsets = flags.offsets;
      if (offsets.empty())
        for (int m = 1; m <= 5; ++m) offsets.push_back(0.2 * m * step);
      const auto runs = experiments::run_replicates(params, options, config.seed,
                                                    static_cast<std::size_t>(config.replicates),
                                                    common.threads);
      emit(stats::martingale_diagnostic(runs, params, type, offsets));
    } else if (which == "trend") {
      if (flags.levels.size() < 2) throw UsageError("trend: give at least two --levels");
      experiments::TrendSetup setup;
      for (auto n : flags.levels) {
        auto p = params;
        p.population_size = n;
        setup.levels.push_back(p);
      }
      setup.checkpoints = flags.checkpoints;
      setup.replicates = static_cast<std::size_t>(config.replicates);
      setup.sde_replicates = flags.sde_replicates;
      setup.p_min = config.p_min;
      setup.seed = config.seed;
      setup.threads = common.threads;
      setup.options = moran_options(config, flags.moran);
      setup.trend.seed = derive_seed(config.seed, 0x7472656e64);
      emit(experiments::moran_vs_sde_trend(setup).report);
    }
  }
  run.finish();
  return all_pass ? 0 : 1;
}

void add_moran_flags(CLI::App* app, MoranFlags& f) {
  app->add_option("--checkpoint-interval", f.checkpoint_interval,
                  "Extra checkpoints every this many time units (0: tau checkpoints only)");
  app->add_option("--verify-every", f.verify_every, "Full cache check cadence in events (0: off)");
  app->add_flag("--check-every-event", f.check_every_event, "Recount the population after every event");
  app->add_flag("--all-deaths", f.all_deaths, "Simulate null deaths too (slower, same law)");
  app->add_option("--max-type", f.max_type, "Stop once a type above this index appears");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moran model with strong selection: simulation and checks"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", WAVEFRONT_VERSION);

  Common common;
  common.argv.assign(argv, argv + argc);
  app.add_option("--config", common.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", common.threads, "Worker threads for replicates");
  app.add_option("--out", common.out, "Output root (default $WAVEFRONT_SIM_OUT or ./runs)");
  app.add_option("--run-name", common.run_name, "Run directory name (default timestamp-seedhash)");

  // Parameter overrides, named like the config keys.
  for (const auto& key : io::config_keys()) {
    app.add_option_function<std::string>(
        "--" + key, [&common, key](const std::string& v) { common.overrides[key] = v; },
        "Override config key " + key);
  }

  MoranFlags moran_flags;
  auto* moran_cmd = app.add_subcommand("simulate-moran", "Replicate Moran trajectories");
  add_moran_flags(moran_cmd, moran_flags);

  std::optional<double> sde_t_end;
  auto* sde_cmd = app.add_subcommand("simulate-sde", "Replicate paths of the limiting SDE");
  sde_cmd->add_option("--t-end", sde_t_end, "Path length (default T - 2)");

  int k0 = 10;
  double coal_t_end = 1.0;
  std::string measure = "bs";
  auto* coal_cmd = app.add_subcommand("simulate-coalescent", "Replicate block-count paths");
  coal_cmd->add_option("--k0", k0, "Initial number of blocks");
  coal_cmd->add_option("--t-end", coal_t_end, "Path length");
  coal_cmd->add_option("--measure", measure, "bs or kingman");

  CheckFlags check_flags;
  auto* check_cmd = app.add_subcommand("check", "Run comparison checks");
  check_cmd->add_option("which", check_flags.which,
                        "duality, tau-spacing, family-size, martingale, trend, assumptions")
      ->required();
  check_cmd->add_option("--registry", check_flags.registry, "Registry CSV instead of simulating");
  check_cmd->add_option("--k", check_flags.k, "duality: number of blocks");
  check_cmd->add_option("--t", check_flags.t, "duality: time");
  check_cmd->add_option("--min-observations", check_flags.min_observations,
                        "family-size: required pooled observations");
  check_cmd->add_option("--type", check_flags.type, "martingale: type j (default from a pilot run)");
  check_cmd->add_option("--offsets", check_flags.offsets, "martingale: times after tau_j");
  check_cmd->add_option("--levels", check_flags.levels, "trend: population sizes");
  check_cmd->add_option("--checkpoints", check_flags.checkpoints, "trend: rescaled times");
  check_cmd->add_option("--sde-replicates", check_flags.sde_replicates, "trend: SDE ensemble size");
  add_moran_flags(check_cmd, check_flags.moran);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*moran_cmd) return cmd_simulate_moran(common, moran_flags);
    if (*sde_cmd) return cmd_simulate_sde(common, sde_t_end);
    if (*coal_cmd) return cmd_simulate_coalescent(common, k0, coal_t_end, measure);
    if (*check_cmd) return cmd_check(common, check_flags);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const io::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const stats::InsufficientDataError& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
