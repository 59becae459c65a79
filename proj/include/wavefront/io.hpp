// Configuration files and the CSV/JSON artifacts written by the tools.
//
// Numbers are written in the shortest decimal form that reads back to the
// same double, so re-running a check on saved files reproduces it exactly.
// Missing values are empty CSV fields.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavefront/coalescent.hpp"
#include "wavefront/moran.hpp"
#include "wavefront/params.hpp"
#include "wavefront/sde.hpp"
#include "wavefront/stats.hpp"

namespace wavefront::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);

// ---------------------------------------------------------------------------
// Config

/// Everything a run can be configured with. Keys of the config file match the
/// field comments.
struct RunConfig {
  std::int64_t population_size = 1'000'000;  // N
  double mutation_rate = 1e-4;               // mu
  double selection = 0.01;                   // s
  double weak_selection = 1.0;               // alpha
  double y = 0.3;                            // y
  double horizon = 5.0;                      // T
  std::uint64_t seed = 1;                    // seed
  std::int64_t replicates = 1;               // replicates
  double p_min = 1e-4;                       // p_min
  double early_c1 = 1.0;                     // early_c1
  std::optional<double> early_c2;            // early_c2, default b(T)

  ModelParams model() const;
  EarlyWindow early_window() const;
  nlohmann::json to_json() const;
};

/// The recognised config keys, in file order.
const std::vector<std::string>& config_keys();

/// Parses `key = value` lines; '#' starts a comment. Throws FormatError on
/// syntax errors, unknown or repeated keys.
std::map<std::string, std::string> parse_key_values(std::istream& in,
                                                    const std::string& origin = "config");

/// Sets one field from its textual value; throws FormatError on an unknown key
/// or an unparsable value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

RunConfig load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Moran artifacts

void write_registry_csv(std::ostream& out, const std::vector<moran::TauRecord>& records);
std::vector<moran::TauRecord> read_registry_csv(std::istream& in);

/// Registry rows of several replicates, prefixed by a replicate column.
void write_combined_registry_csv(std::ostream& out,
                                 const std::vector<std::vector<moran::TauRecord>>& runs);
std::vector<std::vector<moran::TauRecord>> read_combined_registry_csv(std::istream& in);

void write_y_path_csv(std::ostream& out, const std::vector<moran::YPoint>& path);
std::vector<moran::YPoint> read_y_path_csv(std::istream& in);

/// Long format: one row per (checkpoint, type) with non-zero count.
void write_checkpoints_csv(std::ostream& out, const std::vector<moran::Checkpoint>& cps);
std::vector<moran::Checkpoint> read_checkpoints_csv(std::istream& in);

nlohmann::json trajectory_summary(const moran::MoranTrajectory& trajectory,
                                  const DerivedScalings& scalings);

// ---------------------------------------------------------------------------
// SDE and coalescent artifacts

void write_sde_path_csv(std::ostream& out, const sde::SdePath& path);
void write_block_path_csv(std::ostream& out, const coalescent::BlockCountPath& path);

/// One row per (replicate, checkpoint): replicate, t, value.
void write_ensemble_csv(std::ostream& out, const std::vector<double>& times,
                        const std::vector<std::vector<double>>& values);

nlohmann::json duality_json(const coalescent::DualityReport& report);

// ---------------------------------------------------------------------------
// Reports

nlohmann::json report_json(const stats::ComparisonReport& report);
void write_report_csv(std::ostream& out, const stats::ComparisonReport& report);

/// Writes text to a file, creating parent directories; throws on failure.
void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace wavefront::io
