#include "etcoord/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

namespace etcoord::cli {

namespace fs = std::filesystem;
using io::FormatError;
using io::json;

namespace {

constexpr const char* kTrajectory = "trajectory.csv";
constexpr const char* kEventsCsv = "events.csv";
constexpr const char* kEventsJson = "events.json";
constexpr const char* kStats = "stats.json";
constexpr const char* kVerification = "verification.json";
constexpr const char* kHistogram = "histogram.csv";
constexpr const char* kManifest = "manifest.json";
constexpr const char* kSweep = "sweep.json";
constexpr const char* kCompare = "compare.csv";
constexpr const char* kEventTrajectory = "event_trajectory.csv";
constexpr const char* kContinuousTrajectory = "continuous_trajectory.csv";

std::string_view scheme_name(Integrator s) { return s == Integrator::RK4 ? "rk4" : "euler"; }

std::optional<Integrator> parse_scheme(std::string_view name) {
  if (name == "euler") return Integrator::Euler;
  if (name == "rk4") return Integrator::RK4;
  return std::nullopt;
}

double real(const json& v, const std::string& key) {
  if (!v.is_number()) throw FormatError("config \"" + key + "\" must be a number");
  return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw FormatError("config \"" + key + "\" must be an integer");
  return v.get<std::int64_t>();
}

std::string text(const json& v, const std::string& key) {
  if (!v.is_string()) throw FormatError("config \"" + key + "\" must be a string");
  return v.get<std::string>();
}

std::vector<double> reals(const json& v, const std::string& key) {
  if (!v.is_array()) throw FormatError("config \"" + key + "\" must be an array");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(real(e, key));
  return out;
}

}  // namespace

json settings_to_json(const Settings& s) {
  json doc;
  doc["flow"] = std::string(to_string(s.flow));
  doc["lambda"] = s.lambda;
  doc["sigma"] = s.sigma;
  doc["step"] = s.step;
  doc["horizon"] = s.horizon;
  doc["mode"] = std::string(to_string(s.mode));
  doc["scheme"] = std::string(scheme_name(s.scheme));
  doc["stop_tol"] = s.stop_tol;
  doc["zero_tol"] = s.zero_tol;
  doc["seed"] = s.seed;
  doc["count"] = s.count;
  doc["jobs"] = s.jobs;
  doc["strict"] = s.strict;
  doc["lipschitz"] = s.lipschitz ? json(*s.lipschitz) : json(nullptr);
  doc["hessian_bound"] = s.hessian_bound ? json(*s.hessian_bound) : json(nullptr);
  if (s.domain) {
    json d = json::array();
    for (const auto& b : *s.domain) d.push_back({b.lower, b.upper});
    doc["domain"] = d;
  } else {
    doc["domain"] = nullptr;
  }
  doc["initial_state"] = s.initial_state ? json(*s.initial_state) : json(nullptr);
  doc["init_range"] = {s.init_lo, s.init_hi};
  doc["inflation"] = s.inflation;
  doc["samples"] = s.samples;
  doc["histogram_bins"] = s.histogram_bins;
  return doc;
}

Settings settings_from_json(const json& doc, Settings s) {
  if (!doc.is_object()) throw FormatError("config must be an object");
  for (const auto& [key, v] : doc.items()) {
    if (key == "flow") {
      const auto f = parse_flow_kind(text(v, key));
      if (!f) throw FormatError("unknown flow \"" + v.get<std::string>() + "\"");
      s.flow = *f;
    } else if (key == "mode") {
      const auto m = parse_coordination_mode(text(v, key));
      if (!m) throw FormatError("unknown mode \"" + v.get<std::string>() + "\"");
      s.mode = *m;
    } else if (key == "scheme") {
      const auto sc = parse_scheme(text(v, key));
      if (!sc) throw FormatError("unknown scheme \"" + v.get<std::string>() + "\"");
      s.scheme = *sc;
    } else if (key == "lambda") {
      s.lambda = real(v, key);
    } else if (key == "sigma") {
      s.sigma = real(v, key);
    } else if (key == "step") {
      s.step = real(v, key);
    } else if (key == "horizon") {
      s.horizon = real(v, key);
    } else if (key == "stop_tol") {
      s.stop_tol = real(v, key);
    } else if (key == "zero_tol") {
      s.zero_tol = real(v, key);
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw FormatError("config \"seed\" must be a nonnegative integer");
      s.seed = v.get<std::uint64_t>();
    } else if (key == "count") {
      s.count = integer(v, key);
      if (s.count < 1) throw FormatError("count must be at least 1");
    } else if (key == "jobs") {
      s.jobs = integer(v, key);
      if (s.jobs < 1) throw FormatError("jobs must be at least 1");
    } else if (key == "strict") {
      if (!v.is_boolean()) throw FormatError("config \"strict\" must be a boolean");
      s.strict = v.get<bool>();
    } else if (key == "lipschitz") {
      s.lipschitz = v.is_null() ? std::nullopt : std::optional<double>(real(v, key));
    } else if (key == "hessian_bound") {
      s.hessian_bound = v.is_null() ? std::nullopt : std::optional<double>(real(v, key));
    } else if (key == "domain") {
      if (v.is_null()) {
        s.domain.reset();
        continue;
      }
      if (!v.is_array()) throw FormatError("config \"domain\" must be an array of [lo, hi]");
      Boxes<double> d;
      for (const auto& b : v) {
        const auto pair = reals(b, key);
        if (pair.size() != 2) throw FormatError("each domain entry is [lo, hi]");
        d.push_back({pair[0], pair[1]});
      }
      s.domain = std::move(d);
    } else if (key == "initial_state") {
      s.initial_state = v.is_null() ? std::nullopt : std::optional<std::vector<double>>(reals(v, key));
    } else if (key == "init_range") {
      const auto r = reals(v, key);
      if (r.size() != 2 || !(r[0] <= r[1])) throw FormatError("init_range is [lo, hi] with lo <= hi");
      s.init_lo = r[0];
      s.init_hi = r[1];
    } else if (key == "inflation") {
      s.inflation = real(v, key);
    } else if (key == "samples") {
      s.samples = integer(v, key);
    } else if (key == "histogram_bins") {
      s.histogram_bins = integer(v, key);
      if (s.histogram_bins < 1) throw FormatError("histogram_bins must be at least 1");
    } else {
      throw FormatError("unknown config key \"" + key + "\"");
    }
  }
  return s;
}

Settings resolve(const io::ScenarioFile& sc, Settings s) {
  const auto& p = sc.problem;
  const auto n = static_cast<std::size_t>(p.size());
  if (!s.initial_state) s.initial_state = std::vector<double>(n, 0.0);
  if (s.initial_state->size() != n) throw FormatError("initial_state must have n entries");
  if (s.domain && s.domain->size() != n) throw FormatError("domain must have n entries");
  if (s.lipschitz && s.hessian_bound) return s;

  const bool explicit_domain = s.domain.has_value() || p.boxes().has_value();
  Boxes<double> domain;
  if (s.domain) {
    domain = *s.domain;
  } else if (p.boxes()) {
    domain = *p.boxes();
  } else {
    // Only used when every bound is analytic; checked below.
    for (std::size_t i = 0; i < n; ++i) {
      const double x0 = (*s.initial_state)[i];
      domain.push_back({std::min(s.init_lo, x0), std::max(s.init_hi, x0)});
    }
  }

  // Take the worst case over every coupling that will be in effect.
  std::vector<NetworkProblem<double>> phases{p};
  auto sorted = sc.disturbances;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  for (const auto& d : sorted) {
    phases.push_back(phases.back().with_coupling(phases.back().coupling().with_load_shift(d.dc)));
  }
  double L = 0;
  double H = 0;
  bool analytic = true;
  for (const auto& phase : phases) {
    const auto est = estimate_bounds(phase, domain, s.samples, s.inflation);
    L = std::max(L, est.lipschitz_grad_g);
    H = std::max(H, est.hessian_bound);
    analytic = analytic && (s.lipschitz || est.lipschitz_analytic) && (s.hessian_bound || est.hessian_analytic);
  }
  if (!explicit_domain && !analytic) {
    throw DomainError("bounds for non-quadratic costs need a \"domain\" in the config or explicit lipschitz/hessian_bound");
  }
  if (!s.lipschitz) s.lipschitz = L;
  if (!s.hessian_bound) s.hessian_bound = H;
  return s;
}

SimConfig<double> make_config(const io::ScenarioFile& sc, const Settings& s) {
  SimConfig<double> cfg;
  cfg.flow = s.flow;
  cfg.params.sigma = s.sigma;
  cfg.params.lambda = s.lambda;
  cfg.params.lipschitz = s.lipschitz.value_or(0.0);
  cfg.params.hessian_bound = s.hessian_bound.value_or(0.0);
  cfg.params.zero_tol = s.zero_tol;
  cfg.step = s.step;
  cfg.horizon = s.horizon;
  cfg.mode = s.mode;
  cfg.scheme = s.scheme;
  cfg.stop_tol = s.stop_tol;
  cfg.disturbances = sc.disturbances;
  const auto n = sc.problem.size();
  cfg.initial_state = Vector<double>::Zero(n);
  if (s.initial_state) {
    require_dimension(static_cast<Index>(s.initial_state->size()), n, "initial_state");
    for (Index i = 0; i < n; ++i) cfg.initial_state(i) = (*s.initial_state)[static_cast<std::size_t>(i)];
  }
  return cfg;
}

namespace {

/// Scenario bytes plus where they came from.
struct Input {
  std::string label;
  std::string text;
};

io::ScenarioFile parse_scenario(const Input& in) {
  json doc;
  try {
    doc = json::parse(in.text);
  } catch (const json::parse_error& e) {
    throw FormatError(in.label + ": " + e.what());
  }
  try {
    return io::scenario_from_json(doc);
  } catch (const json::exception& e) {
    throw FormatError(in.label + ": " + e.what());
  } catch (const DomainError& e) {
    throw FormatError(in.label + ": " + e.what());
  }
}

class OutputDir {
 public:
  OutputDir(fs::path root, std::string command, const Input& input, json config)
      : root_(std::move(root)), command_(std::move(command)), input_(input), config_(std::move(config)) {}

  void add(const std::string& name, const std::string& content) { files_.emplace_back(name, content); }

  /// Writes every file, then the manifest last so its presence marks a
  /// completed directory.
  void commit() {
    fs::create_directories(root_);
    json outputs = json::array();
    for (const auto& [name, content] : files_) {
      io::write_text(root_ / name, content);
      outputs.push_back(name);
    }
    outputs.push_back(kManifest);
    json manifest;
    manifest["tool"] = {{"name", "etcoord"}, {"version", kVersion}};
    manifest["command"] = command_;
    manifest["config"] = config_;
    manifest["inputs"] = {{"scenario", {{"path", input_.label}, {"sha256", io::sha256_hex(input_.text)}}}};
    manifest["scenario_text"] = input_.text;
    manifest["outputs"] = outputs;
    io::write_text(root_ / kManifest, manifest.dump(2) + "\n");
  }

 private:
  fs::path root_;
  std::string command_;
  const Input& input_;
  json config_;
  std::vector<std::pair<std::string, std::string>> files_;
};

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

std::optional<Vector<double>> oracle(const NetworkProblem<double>& final_problem, FlowKind flow) {
  try {
    return reference_optimizer(is_constrained(flow) ? final_problem : final_problem.without_boxes());
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

void print_stats(std::ostream& out, const MessageStats<double>& s) {
  out << "events: " << s.total_events << " (updates " << s.updates() << ", triggered " << s.trigger_events << ")\n";
  out << "messages: up " << s.messages_up << ", down " << s.messages_down << '\n';
  if (s.inter_event) {
    out << "inter-event time: min " << io::format_double(s.inter_event->min) << ", mean "
        << io::format_double(s.inter_event->mean) << ", std " << io::format_double(s.inter_event->stddev) << '\n';
  }
}

int cmd_run(const Input& in, const Settings& requested, const fs::path& out_dir, std::ostream& out) {
  const auto sc = parse_scenario(in);
  const Settings s = resolve(sc, requested);
  const auto cfg = make_config(sc, s);
  const auto res = run(sc.problem, cfg);
  const auto report = verify(res.trajectory, res.log, sc.problem, cfg, oracle(res.final_problem, cfg.flow));

  OutputDir dir(out_dir, "run", in, settings_to_json(s));
  dir.add(kTrajectory, render([&](std::ostream& os) { io::write_trajectory_csv(os, res.trajectory); }));
  dir.add(kEventsCsv, render([&](std::ostream& os) { io::write_events_csv(os, res.log); }));
  dir.add(kEventsJson, dump(io::events_to_json(res.log)));
  dir.add(kStats, dump(io::stats_to_json(res.stats)));
  dir.add(kVerification, dump(io::report_to_json(report)));
  const auto hist = interevent_histogram(res.log, static_cast<std::size_t>(s.histogram_bins));
  dir.add(kHistogram, render([&](std::ostream& os) { io::write_histogram_csv(os, hist); }));
  dir.commit();

  out << "flow " << to_string(cfg.flow) << ", " << res.trajectory.size() << " samples"
      << (res.stopped_early ? " (stopped early)" : "") << '\n';
  print_stats(out, res.stats);
  io::print_report(out, report);
  out << "wrote " << out_dir.string() << '\n';
  return s.strict && !report.all_passed() ? exit_code::verification : exit_code::ok;
}

int cmd_sweep(const Input& in, const Settings& requested, const fs::path& out_dir, std::ostream& out,
              std::ostream& err) {
  const auto sc = parse_scenario(in);
  const Settings s = resolve(sc, requested);
  auto tmpl = make_config(sc, s);
  const auto sampler = uniform_sampler(sc.problem, s.init_lo, s.init_hi);
  const auto result = sweep(sc.problem, tmpl, sampler, static_cast<std::size_t>(s.count), s.seed,
                            static_cast<unsigned>(s.jobs));

  OutputDir dir(out_dir, "sweep", in, settings_to_json(s));
  dir.add(kSweep, dump(io::sweep_to_json(result)));
  dir.commit();

  const auto& a = result.aggregate;
  out << "runs: " << a.succeeded << "/" << a.runs << " succeeded\n";
  if (a.miet_mean) {
    out << "min inter-event time: mean " << io::format_double(*a.miet_mean) << ", std "
        << io::format_double(*a.miet_std) << '\n';
  }
  out << "updates: mean " << io::format_double(a.updates_mean) << ", std " << io::format_double(a.updates_std) << '\n';
  out << "wrote " << out_dir.string() << '\n';
  for (const auto& e : result.entries) {
    if (!e.stats) err << "run " << e.index << " failed: " << e.error << '\n';
  }
  const bool failed = a.succeeded != a.runs;
  return s.strict && failed ? exit_code::verification : exit_code::ok;
}

int cmd_compare(const Input& in, const Settings& requested, const fs::path& out_dir, std::ostream& out) {
  const auto sc = parse_scenario(in);
  const Settings s = resolve(sc, requested);
  if (!is_event_triggered(s.flow)) throw FormatError("compare needs an event-triggered --flow");
  const auto cfg = make_config(sc, s);
  auto base_cfg = cfg;
  base_cfg.flow = continuous_counterpart(cfg.flow);

  const auto event_run = run(sc.problem, cfg);
  const auto base_run = run(sc.problem, base_cfg);
  const auto x_star = oracle(event_run.final_problem, cfg.flow);
  const auto event_report = verify(event_run.trajectory, event_run.log, sc.problem, cfg, x_star);
  const auto base_report = verify(base_run.trajectory, base_run.log, sc.problem, base_cfg, x_star);

  OutputDir dir(out_dir, "compare", in, settings_to_json(s));
  dir.add(kCompare, render([&](std::ostream& os) {
            io::write_compare_csv(os, event_run.trajectory, event_run.log, base_run.trajectory);
          }));
  dir.add(kEventsCsv, render([&](std::ostream& os) { io::write_events_csv(os, event_run.log); }));
  dir.add(kEventTrajectory, render([&](std::ostream& os) { io::write_trajectory_csv(os, event_run.trajectory); }));
  dir.add(kContinuousTrajectory,
          render([&](std::ostream& os) { io::write_trajectory_csv(os, base_run.trajectory); }));
  dir.add(kVerification,
          dump({{"event", io::report_to_json(event_report)}, {"continuous", io::report_to_json(base_report)}}));
  dir.commit();

  const double gap = (event_run.trajectory.states.back() - base_run.trajectory.states.back()).norm();
  out << "event-triggered run:\n";
  print_stats(out, event_run.stats);
  io::print_report(out, event_report);
  out << "continuous run: " << base_run.trajectory.size() - 1 << " steps\n";
  io::print_report(out, base_report);
  out << "final state distance: " << io::format_double(gap) << '\n';
  out << "wrote " << out_dir.string() << '\n';
  const bool ok = event_report.all_passed() && base_report.all_passed();
  return s.strict && !ok ? exit_code::verification : exit_code::ok;
}

int dispatch(const std::string& command, const Input& in, const Settings& s, const fs::path& out_dir,
             std::ostream& out, std::ostream& err) {
  if (command == "run") return cmd_run(in, s, out_dir, out);
  if (command == "sweep") return cmd_sweep(in, s, out_dir, out, err);
  if (command == "compare") return cmd_compare(in, s, out_dir, out);
  throw FormatError("unknown command \"" + command + "\"");
}

int cmd_replay(const fs::path& manifest_path, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  try {
    Input in{manifest.at("inputs").at("scenario").at("path").get<std::string>(),
             manifest.at("scenario_text").get<std::string>()};
    if (io::sha256_hex(in.text) != manifest.at("inputs").at("scenario").at("sha256").get<std::string>()) {
      throw FormatError("manifest scenario text does not match its recorded hash");
    }
    const Settings s = settings_from_json(manifest.at("config"));
    return dispatch(manifest.at("command").get<std::string>(), in, s, out_dir, out, err);
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
}

fs::path default_out() {
  if (const char* env = std::getenv("ETCOORD_OUT"); env != nullptr && *env != '\0') return env;
  return "etcoord-out";
}

/// Flags that override scenario config, collected as a config overlay.
struct Overrides {
  json doc = json::object();

  void add_shared(CLI::App* app) {
    app->add_option_function<std::string>(
           "--flow", [this](const std::string& v) { doc["flow"] = v; }, "flow variant")
        ->check(CLI::IsMember({"event-unconstrained", "event-constrained", "continuous-unconstrained",
                               "continuous-constrained"}));
    real(app, "--lambda", "lambda", "gradient gain");
    real(app, "--sigma", "sigma", "trigger threshold in (0, 1)");
    real(app, "--step", "step", "integration step");
    real(app, "--horizon", "horizon", "simulated time");
    app->add_option_function<std::string>(
           "--mode", [this](const std::string& v) { doc["mode"] = v; }, "coordination mode")
        ->check(CLI::IsMember({"sensing", "computation"}));
    app->add_option_function<std::string>(
           "--scheme", [this](const std::string& v) { doc["scheme"] = v; }, "integrator")
        ->check(CLI::IsMember({"euler", "rk4"}));
    real(app, "--stop-tol", "stop_tol", "residual norm that ends a run early (0 disables)");
    app->add_flag_callback("--strict", [this] { doc["strict"] = true; }, "exit 5 when verification fails");
  }

  void add_sweep(CLI::App* app) {
    app->add_option_function<std::uint64_t>(
        "--seed", [this](std::uint64_t v) { doc["seed"] = v; }, "random seed for initial states");
    app->add_option_function<std::int64_t>(
           "--count", [this](std::int64_t v) { doc["count"] = v; }, "number of runs")
        ->check(CLI::PositiveNumber);
    app->add_option_function<std::int64_t>(
           "--jobs", [this](std::int64_t v) { doc["jobs"] = v; }, "parallel runs")
        ->check(CLI::PositiveNumber);
  }

 private:
  void real(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<double>(flag, [this, key](double v) { doc[key] = v; }, help);
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event-triggered supervisor coordination simulator", "etcoord"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("etcoord ") + kVersion);

  std::string scenario;
  std::string manifest;
  std::string out_dir;
  Overrides overrides;

  auto* run_cmd = app.add_subcommand("run", "simulate one scenario and verify the run");
  auto* sweep_cmd = app.add_subcommand("sweep", "repeat a scenario from seeded random initial states");
  auto* compare_cmd = app.add_subcommand("compare", "event-triggered run next to its continuous baseline");
  auto* replay_cmd = app.add_subcommand("replay", "rerun from a manifest");
  for (auto* sub : {run_cmd, sweep_cmd, compare_cmd}) {
    sub->add_option("--scenario", scenario, "scenario JSON file")->required();
    overrides.add_shared(sub);
    sub->add_option("--out", out_dir, "output directory");
  }
  overrides.add_sweep(sweep_cmd);
  replay_cmd->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
  replay_cmd->add_option("--out", out_dir, "output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_code::ok;
  } catch (const CLI::CallForVersion&) {
    out << "etcoord " << kVersion << '\n';
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::usage;
  }

  const fs::path target = out_dir.empty() ? default_out() : fs::path(out_dir);
  try {
    if (replay_cmd->parsed()) return cmd_replay(manifest, target, out, err);
    const std::string command = run_cmd->parsed() ? "run" : sweep_cmd->parsed() ? "sweep" : "compare";
    const Input in{scenario, io::read_file(scenario)};
    const auto sc = parse_scenario(in);
    Settings s = settings_from_json(sc.config);
    s = settings_from_json(overrides.doc, s);
    return dispatch(command, in, s, target, out, err);
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const std::domain_error& e) {
    err << "domain error: " << e.what() << '\n';
    return exit_code::domain;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return exit_code::numeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::failure;
  }
}

}  // namespace etcoord::cli
