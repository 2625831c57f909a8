#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "etcoord/analysis.hpp"
#include "etcoord/scenarios.hpp"

namespace etcoord::io {

using json = nlohmann::json;
using Problem = NetworkProblem<double>;

/// Malformed or unreadable input file.
class FormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Problem definition plus the scenario extensions.
struct ScenarioFile {
  Problem problem;
  std::vector<Disturbance<double>> disturbances;
  json topology;  // documentation-only metadata
  json config;    // optional run settings, overridden by flags
  json document;  // the whole parsed file
};

Problem problem_from_json(const json& doc);
json problem_to_json(const Problem& p);

ScenarioFile scenario_from_json(const json& doc);
ScenarioFile load_scenario(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

/// Scenario document for the five-generator dispatch case.
json power_scenario_json(const PowerScenario<double>& sc);

/// Shortest text with 17 significant digits; round-trips exactly.
std::string format_double(double v);

void write_trajectory_csv(std::ostream& os, const Trajectory<double>& traj);
void write_events_csv(std::ostream& os, const EventLog<double>& log);
void write_histogram_csv(std::ostream& os, const Histogram<double>& hist);

/// Merged plot data for an event-triggered run and its continuous baseline.
/// One `sample` row per time step and one `event` row per event record.
void write_compare_csv(std::ostream& os, const Trajectory<double>& event_run, const EventLog<double>& log,
                       const Trajectory<double>& continuous_run);

json events_to_json(const EventLog<double>& log);
json stats_to_json(const MessageStats<double>& stats);
json report_to_json(const VerificationReport<double>& report);
json sweep_to_json(const SweepResult<double>& result);

/// Human-readable one-line-per-check summary.
void print_report(std::ostream& os, const VerificationReport<double>& report);

std::string sha256_hex(std::string_view bytes);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace etcoord::io
