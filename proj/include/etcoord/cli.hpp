#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "etcoord/io.hpp"

namespace etcoord::cli {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;  // I/O and anything unclassified
inline constexpr int usage = 2;
inline constexpr int domain = 3;
inline constexpr int numeric = 4;
inline constexpr int verification = 5;
}  // namespace exit_code

inline constexpr const char* kVersion = "0.1.0";

/// Every tunable of a run. Built from defaults, then the scenario's
/// `config` block, then command-line flags; the manifest stores the result
/// with the estimated bounds and the initial state filled in.
struct Settings {
  FlowKind flow = FlowKind::EventUnconstrained;
  double lambda = 0.2;
  double sigma = 0.9;
  double step = 1e-2;
  double horizon = 60;
  CoordinationMode mode = CoordinationMode::SensingBased;
  Integrator scheme = Integrator::Euler;
  double stop_tol = 1e-8;
  double zero_tol = 1e-12;
  std::uint64_t seed = 1;
  std::int64_t count = 10;
  std::int64_t jobs = 1;
  bool strict = false;
  std::optional<double> lipschitz;
  std::optional<double> hessian_bound;
  /// Region over which bounds are estimated when they are not given.
  std::optional<Boxes<double>> domain;
  std::optional<std::vector<double>> initial_state;
  /// Sampling range for sweep initial states on problems without boxes.
  double init_lo = -1;
  double init_hi = 1;
  double inflation = 1.1;
  std::int64_t samples = 64;
  std::int64_t histogram_bins = 20;
};

io::json settings_to_json(const Settings& s);

/// Overlays the keys present in `doc` onto `base`. Unknown keys and
/// ill-typed values raise io::FormatError.
Settings settings_from_json(const io::json& doc, Settings base = {});

/// Fills in the initial state and the trigger bounds, estimating the bounds
/// over the configured domain (or the boxes) when they are not given.
Settings resolve(const io::ScenarioFile& sc, Settings s);

SimConfig<double> make_config(const io::ScenarioFile& sc, const Settings& resolved);

/// Entry point. `args` excludes the program name. Output root defaults to
/// $ETCOORD_OUT, then to ./etcoord-out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace etcoord::cli
