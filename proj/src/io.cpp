#include "wavefront/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace wavefront::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

template <class T>
T parse_number(const std::string& text, const std::string& what) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw FormatError("cannot parse " + what + " from '" + text + "'");
  return value;
}

// Integers may also be written as 1e6 or 1000000.0.
std::int64_t parse_count(const std::string& text, const std::string& what) {
  std::int64_t value{};
  const auto* end = text.data() + text.size();
  if (auto [ptr, ec] = std::from_chars(text.data(), end, value); ec == std::errc() && ptr == end)
    return value;
  const double d = parse_number<double>(text, what);
  if (!(std::abs(d) < 9.0e18) || std::trunc(d) != d)
    throw FormatError("cannot parse " + what + " from '" + text + "': not an integer");
  return static_cast<std::int64_t>(d);
}

std::optional<double> parse_optional(const std::string& text, const std::string& what) {
  if (text.empty()) return std::nullopt;
  return parse_number<double>(text, what);
}

/// Reads a header line and checks it; returns the data lines split into fields.
std::vector<std::vector<std::string>> read_table(std::istream& in,
                                                 const std::vector<std::string>& header) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV input");
  const auto got = split(trim(line));
  if (got != header) throw FormatError("unexpected CSV header '" + trim(line) + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != header.size())
      throw FormatError("CSV row has " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    rows.push_back(std::move(fields));
  }
  return rows;
}

void write_header(std::ostream& out, const std::vector<std::string>& header) {
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
}

const std::vector<std::string> kRegistryHeader = {"j",   "tau_j", "q_j",    "m_at_tau",
                                                  "xi_j", "s_j",  "y_obs_j"};

void write_registry_row(std::ostream& out, const moran::TauRecord& r) {
  out << r.type << ',' << format_double(r.time) << ',' << format_double(r.lead) << ','
      << format_double(r.mean_type) << ',' << format_double(r.early_end) << ','
      << format_optional(r.early_fraction) << ',' << format_optional(r.y_observed) << '\n';
}

moran::TauRecord parse_registry_row(const std::vector<std::string>& f, std::size_t at) {
  moran::TauRecord r;
  r.type = parse_number<int>(f[at], "j");
  r.time = parse_number<double>(f[at + 1], "tau_j");
  r.lead = parse_number<double>(f[at + 2], "q_j");
  r.mean_type = parse_number<double>(f[at + 3], "m_at_tau");
  r.early_end = parse_number<double>(f[at + 4], "xi_j");
  r.early_fraction = parse_optional(f[at + 5], "s_j");
  r.y_observed = parse_optional(f[at + 6], "y_obs_j");
  return r;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return {};
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw FormatError("cannot format number");
  return std::string(buf, ptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

// ---------------------------------------------------------------------------

ModelParams RunConfig::model() const {
  return {population_size, mutation_rate, selection, weak_selection, y, horizon};
}

EarlyWindow RunConfig::early_window() const {
  EarlyWindow w = default_early_window(horizon);
  w.log_coeff = early_c1;
  if (early_c2) w.offset = *early_c2;
  return w;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {{"N", population_size}, {"mu", mutation_rate},
                      {"s", selection},       {"alpha", weak_selection},
                      {"y", y},               {"T", horizon},
                      {"seed", seed},         {"replicates", replicates},
                      {"p_min", p_min},       {"early_c1", early_c1}};
  j["early_c2"] = early_window().offset;
  return j;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {"N",          "mu",       "s",       "alpha",
                                                "y",          "T",        "seed",    "replicates",
                                                "p_min",      "early_c1", "early_c2"};
  return keys;
}

std::map<std::string, std::string> parse_key_values(std::istream& in,
                                                    const std::string& origin) {
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw FormatError(where + ": unknown key '" + key + "'");
    if (!out.emplace(key, value).second)
      throw FormatError(where + ": key '" + key + "' given twice");
  }
  return out;
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "N")
    c.population_size = parse_count(value, key);
  else if (key == "mu")
    c.mutation_rate = parse_number<double>(value, key);
  else if (key == "s")
    c.selection = parse_number<double>(value, key);
  else if (key == "alpha")
    c.weak_selection = parse_number<double>(value, key);
  else if (key == "y")
    c.y = parse_number<double>(value, key);
  else if (key == "T")
    c.horizon = parse_number<double>(value, key);
  else if (key == "seed")
    c.seed = parse_number<std::uint64_t>(value, key);
  else if (key == "replicates")
    c.replicates = parse_count(value, key);
  else if (key == "p_min")
    c.p_min = parse_number<double>(value, key);
  else if (key == "early_c1")
    c.early_c1 = parse_number<double>(value, key);
  else if (key == "early_c2")
    c.early_c2 = parse_number<double>(value, key);
  else
    throw FormatError("unknown key '" + key + "'");
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  RunConfig config;
  for (const auto& [key, value] : parse_key_values(in, path.string()))
    apply_setting(config, key, value);
  return config;
}

// ---------------------------------------------------------------------------

void write_registry_csv(std::ostream& out, const std::vector<moran::TauRecord>& records) {
  write_header(out, kRegistryHeader);
  for (const auto& r : records) write_registry_row(out, r);
}

std::vector<moran::TauRecord> read_registry_csv(std::istream& in) {
  std::vector<moran::TauRecord> out;
  for (const auto& f : read_table(in, kRegistryHeader)) out.push_back(parse_registry_row(f, 0));
  return out;
}

void write_combined_registry_csv(std::ostream& out,
                                 const std::vector<std::vector<moran::TauRecord>>& runs) {
  auto header = kRegistryHeader;
  header.insert(header.begin(), "replicate");
  write_header(out, header);
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (const auto& r : runs[i]) {
      out << i << ',';
      write_registry_row(out, r);
    }
}

std::vector<std::vector<moran::TauRecord>> read_combined_registry_csv(std::istream& in) {
  auto header = kRegistryHeader;
  header.insert(header.begin(), "replicate");
  std::vector<std::vector<moran::TauRecord>> out;
  for (const auto& f : read_table(in, header)) {
    const auto i = parse_number<std::size_t>(f[0], "replicate");
    if (i >= out.size()) out.resize(i + 1);
    out[i].push_back(parse_registry_row(f, 1));
  }
  return out;
}

void write_y_path_csv(std::ostream& out, const std::vector<moran::YPoint>& path) {
  out << "t_rescaled,y_value\n";
  for (const auto& p : path) out << format_double(p.time) << ',' << format_double(p.value) << '\n';
}

std::vector<moran::YPoint> read_y_path_csv(std::istream& in) {
  std::vector<moran::YPoint> out;
  for (const auto& f : read_table(in, {"t_rescaled", "y_value"}))
    out.push_back({parse_number<double>(f[0], "t_rescaled"), parse_number<double>(f[1], "y_value")});
  return out;
}

void write_checkpoints_csv(std::ostream& out, const std::vector<moran::Checkpoint>& cps) {
  out << "checkpoint,time,mean_type,integrated_mean_type,type,count\n";
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const auto& cp = cps[i];
    const std::string prefix = std::to_string(i) + ',' + format_double(cp.time) + ',' +
                               format_double(cp.mean_type) + ',' +
                               format_double(cp.integrated_mean_type) + ',';
    for (std::size_t k = 0; k < cp.counts.size(); ++k) {
      if (cp.counts[k] == 0) continue;
      out << prefix << cp.base_type + static_cast<int>(k) << ',' << cp.counts[k] << '\n';
    }
  }
}

std::vector<moran::Checkpoint> read_checkpoints_csv(std::istream& in) {
  std::vector<moran::Checkpoint> out;
  std::size_t current = static_cast<std::size_t>(-1);
  for (const auto& f : read_table(
           in, {"checkpoint", "time", "mean_type", "integrated_mean_type", "type", "count"})) {
    const auto index = parse_number<std::size_t>(f[0], "checkpoint");
    const int type = parse_number<int>(f[4], "type");
    const auto count = parse_number<std::int64_t>(f[5], "count");
    if (index != current) {
      if (index != out.size()) throw FormatError("checkpoint rows out of order");
      current = index;
      moran::Checkpoint cp;
      cp.time = parse_number<double>(f[1], "time");
      cp.mean_type = parse_number<double>(f[2], "mean_type");
      cp.integrated_mean_type = parse_number<double>(f[3], "integrated_mean_type");
      cp.base_type = type;
      out.push_back(std::move(cp));
    }
    auto& cp = out.back();
    const int offset = type - cp.base_type;
    if (offset < static_cast<int>(cp.counts.size()))
      throw FormatError("checkpoint types not increasing");
    cp.counts.resize(static_cast<std::size_t>(offset), 0);
    cp.counts.push_back(count);
  }
  return out;
}

nlohmann::json trajectory_summary(const moran::MoranTrajectory& t,
                                  const DerivedScalings& scalings) {
  return {{"seed", t.seed},
          {"marked_type", t.marked_type},
          {"end_time", t.end_time},
          {"end_time_rescaled", t.end_time / scalings.time_scale},
          {"type_cap_reached", t.type_cap_reached},
          {"taus", t.registry.size()},
          {"events",
           {{"deaths", t.counts.deaths},
            {"mutations", t.counts.mutations},
            {"killings", t.counts.killings},
            {"killing_clamps", t.counts.killing_clamps},
            {"discarded", t.discarded_events}}},
          {"rejected_replays", t.rejected_replays},
          {"conservation_checks", t.conservation_checks}};
}

// ---------------------------------------------------------------------------

void write_sde_path_csv(std::ostream& out, const sde::SdePath& path) {
  out << "time,value\n";
  for (std::size_t i = 0; i < path.times.size(); ++i)
    out << format_double(path.times[i]) << ',' << format_double(path.values[i]) << '\n';
}

void write_block_path_csv(std::ostream& out, const coalescent::BlockCountPath& path) {
  out << "time,k\n";
  for (std::size_t i = 0; i < path.times.size(); ++i)
    out << format_double(path.times[i]) << ',' << path.blocks[i] << '\n';
}

void write_ensemble_csv(std::ostream& out, const std::vector<double>& times,
                        const std::vector<std::vector<double>>& values) {
  out << "replicate,t,value\n";
  if (values.empty()) return;
  for (std::size_t r = 0; r < values[0].size(); ++r)
    for (std::size_t c = 0; c < times.size(); ++c)
      out << r << ',' << format_double(times[c]) << ',' << format_double(values[c][r]) << '\n';
}

nlohmann::json duality_json(const coalescent::DualityReport& r) {
  return {{"k", r.blocks},
          {"y", r.y},
          {"t", r.t},
          {"replicates", r.replicates},
          {"p_min", r.p_min},
          {"sde_moment", r.sde_moment},
          {"sde_se", r.sde_se},
          {"coalescent_moment", r.coalescent_moment},
          {"coalescent_se", r.coalescent_se},
          {"gap", r.gap},
          {"combined_se", r.combined_se},
          {"pass", r.pass}};
}

// ---------------------------------------------------------------------------

nlohmann::json report_json(const stats::ComparisonReport& report) {
  auto bound = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return nullptr;
    return v;
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.details.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (double v : row) r.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json());
    rows.push_back(std::move(r));
  }
  return {{"name", report.name},
          {"inputs", report.inputs},
          {"statistic", std::isfinite(report.statistic) ? nlohmann::json(report.statistic)
                                                        : nlohmann::json()},
          {"threshold", {{"lower", bound(report.lower)}, {"upper", bound(report.upper)}}},
          {"pass", report.pass},
          {"notes", report.notes},
          {"details", {{"columns", report.details.columns}, {"rows", rows}}}};
}

void write_report_csv(std::ostream& out, const stats::ComparisonReport& report) {
  write_header(out, report.details.columns);
  for (const auto& row : report.details.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace wavefront::io
