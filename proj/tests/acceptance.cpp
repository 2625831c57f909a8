// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <unistd.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "etcoord/cli.hpp"

using namespace etcoord;
using Vec = Vector<double>;
using Problem = NetworkProblem<double>;
using Big = boost::multiprecision::cpp_bin_float_50;
namespace fs = std::filesystem;

namespace {

constexpr double kLambda = 0.2;
constexpr double kSigma = 0.9;
constexpr double kStep = 1e-2;
constexpr double kHorizon = 60;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Sizes cycle through 2, 5, 10.
Index size_for(int k) {
  static constexpr Index sizes[] = {2, 5, 10};
  return sizes[k % 3];
}

SimConfig<double> config_for(const Problem& p, FlowKind flow, const Vec& x0) {
  Boxes<double> domain = p.boxes() ? *p.boxes() : Boxes<double>(static_cast<std::size_t>(p.size()), {-5, 5});
  const auto est = estimate_bounds(p, domain);
  if (!est.lipschitz_analytic || !est.hessian_analytic) throw std::logic_error("expected analytic bounds");
  SimConfig<double> cfg;
  cfg.flow = flow;
  cfg.params.lambda = kLambda;
  cfg.params.sigma = kSigma;
  cfg.params.lipschitz = est.lipschitz_grad_g;
  cfg.params.hessian_bound = est.hessian_bound;
  cfg.step = kStep;
  cfg.horizon = kHorizon;
  cfg.initial_state = x0;
  return cfg;
}

double max_violation(const Problem& p, const Trajectory<double>& traj) {
  double worst = 0;
  for (const auto& x : traj.states) {
    for (Index i = 0; i < p.size(); ++i) {
      worst = std::max({worst, p.box(i).lower - x(i), x(i) - p.box(i).upper});
    }
  }
  return worst;
}

Outcome descent() {
  const auto start = std::chrono::steady_clock::now();
  double worst = -1;
  int failures = 0;
  for (int k = 0; k < 20; ++k) {
    const auto inst = build_quadratic<double>(size_for(k), 1000 + static_cast<std::uint64_t>(k), false);
    const auto cfg = config_for(inst.problem, FlowKind::EventUnconstrained, inst.initial_state);
    const auto res = run(inst.problem, cfg);
    const double slack = 10 * kStep * kStep;
    for (std::size_t m = 1; m < res.trajectory.size(); ++m) {
      const double rise = res.trajectory.objective[m] - res.trajectory.objective[m - 1];
      worst = std::max(worst, rise);
      if (rise > slack) ++failures;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {failures == 0 && secs < 10,
          "20 instances, largest per-step rise " + fmt(worst) + " (slack " + fmt(10 * kStep * kStep) + "), " +
              fmt(secs) + " s"};
}

Outcome feasibility() {
  double worst = 0;
  int runs = 0;
  PowerScenario<double> sc;
  const auto pb = build_power(sc);
  auto cfg = config_for(pb.problem, FlowKind::EventConstrained, pb.initial_state);
  cfg.disturbances = pb.disturbances;
  worst = std::max(worst, max_violation(pb.problem, run(pb.problem, cfg).trajectory));
  ++runs;
  for (int k = 0; k < 20; ++k) {
    const auto inst = build_quadratic<double>(size_for(k), 2000 + static_cast<std::uint64_t>(k), true);
    if (!inst.problem.contains(inst.initial_state)) return {false, "instance start outside its boxes"};
    const auto c = config_for(inst.problem, FlowKind::EventConstrained, inst.initial_state);
    worst = std::max(worst, max_violation(inst.problem, run(inst.problem, c).trajectory));
    ++runs;
  }
  return {worst <= 1e-9, std::to_string(runs) + " runs, worst box violation " + fmt(worst)};
}

Outcome miet_values() {
  TriggerParams<double> u;
  u.lambda = 0.2;
  u.sigma = 0.9;
  u.hessian_bound = 1;
  u.lipschitz = 1;
  const Big lh = Big("0.2") * Big(1);
  const Big u_oracle = log(Big(1) + Big("0.9") * lh / Big(1)) / lh;
  const Big u_closed = Big(5) * log(Big("1.18"));
  const double u_got = miet_unconstrained(u);
  const double u_err = abs((Big(u_got) - u_oracle) / u_oracle).convert_to<double>();
  const double closed_err = abs((u_oracle - u_closed) / u_closed).convert_to<double>();

  TriggerParams<double> c = u;  // lambda H = 0.2 < 1
  const Big c_oracle = log(Big("0.9") / (Big("0.2") * Big(1)) + Big(1));
  const Big c_closed = log(Big("5.5"));
  const double c_got = miet_constrained(c);
  const double c_err = abs((Big(c_got) - c_oracle) / c_oracle).convert_to<double>();
  const double c_closed_err = abs((c_oracle - c_closed) / c_closed).convert_to<double>();

  const bool ok = u_err <= 1e-12 && c_err <= 1e-12 && closed_err < 1e-40 && c_closed_err < 1e-40;
  return {ok, "unconstrained " + fmt(u_got) + " (rel err " + fmt(u_err) + "), constrained " + fmt(c_got) +
                  " (rel err " + fmt(c_err) + ")"};
}

Outcome empirical_miet() {
  int runs = 0;
  int gaps = 0;
  int violations = 0;
  double tightest = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 60; ++k) {
    const bool constrained = k % 2 == 1;
    const auto inst = build_quadratic<double>(size_for(k / 2), 3000 + static_cast<std::uint64_t>(k), constrained);
    const auto flow = constrained ? FlowKind::EventConstrained : FlowKind::EventUnconstrained;
    const auto cfg = config_for(inst.problem, flow, inst.initial_state);
    if (constrained && !cfg.params.below_lambda_bar()) return {false, "instance violates lambda < 1/H"};
    const double bound = constrained ? miet_constrained(cfg.params) : miet_unconstrained(cfg.params);
    const auto res = run(inst.problem, cfg);
    ++runs;
    for (std::size_t e = 1; e < res.log.size(); ++e) {
      const double gap = res.log[e].time - res.log[e - 1].time;
      ++gaps;
      tightest = std::min(tightest, gap - (bound - kStep));
      if (gap < bound - kStep) ++violations;
    }
  }
  return {violations == 0 && runs >= 50 && gaps > 0,
          std::to_string(runs) + " runs, " + std::to_string(gaps) + " gaps, " + std::to_string(violations) +
              " violations, smallest slack " + fmt(tightest)};
}

Outcome ratio_bound() {
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t samples = 0;
  for (int k = 0; k < 20; ++k) {
    const auto inst = build_quadratic<double>(size_for(k), 4000 + static_cast<std::uint64_t>(k), false);
    const auto& p = inst.problem;
    const auto cfg = config_for(p, FlowKind::EventUnconstrained, inst.initial_state);
    const auto res = run(p, cfg);
    // Exact H for quadratic local costs.
    double H = 0;
    for (const auto& c : p.costs()) H = std::max(H, c.polynomial()->second_derivative(0.0));
    std::size_t e = 0;
    for (std::size_t m = 1; m < res.trajectory.size(); ++m) {
      const double t = res.trajectory.times[m];
      while (e + 1 < res.log.size() && res.log[e + 1].time < t) ++e;
      const auto& snap = res.log[e].snapshot;
      const double bound = std::expm1(kLambda * H * (t - snap.time)) / (kLambda * H);
      for (Index i = 0; i < p.size(); ++i) {
        const double z = p.cost(i).gradient(res.trajectory.states[m](i)) + snap.held_gradient(i);
        if (std::abs(z) <= cfg.params.zero_tol) continue;
        const double ratio = std::abs(res.trajectory.states[m](i) - snap.anchor_state(i)) / std::abs(z);
        worst = std::max(worst, ratio - bound);
        ++samples;
      }
    }
  }
  return {worst <= 1e-6 && samples > 0,
          std::to_string(samples) + " agent samples, worst excess " + fmt(worst) + " (tolerance 1e-6)"};
}

Outcome convergence() {
  double worst_event = 0;
  double worst_cont = 0;
  int savings_failures = 0;
  std::int64_t min_saving = std::numeric_limits<std::int64_t>::max();
  for (int k = 0; k < 20; ++k) {
    const bool constrained = k % 2 == 1;
    const auto inst = build_quadratic<double>(size_for(k / 2), 5000 + static_cast<std::uint64_t>(k), constrained);
    auto cfg = config_for(inst.problem,
                          constrained ? FlowKind::EventConstrained : FlowKind::EventUnconstrained, inst.initial_state);
    cfg.stop_tol = 0;  // full horizon for both runs
    const Vec xs = reference_optimizer(inst.problem);
    const auto ev = run(inst.problem, cfg);
    const auto base = run_baseline(inst.problem, cfg);
    worst_event = std::max(worst_event, (ev.trajectory.states.back() - xs).norm());
    worst_cont = std::max(worst_cont, (base.states.back() - xs).norm());
    const auto steps = static_cast<std::int64_t>(base.size()) - 1;
    min_saving = std::min(min_saving, steps - ev.stats.updates());
    if (ev.stats.updates() >= steps) ++savings_failures;
  }
  return {worst_event <= 1e-3 && worst_cont <= 1e-3 && savings_failures == 0,
          "20 instances, worst distance event " + fmt(worst_event) + ", continuous " + fmt(worst_cont) +
              ", smallest update saving " + std::to_string(min_saving) + " of 6000 steps"};
}

Outcome self_triggered() {
  // Scalar agent f = x^2/2 under a held gradient g: z(t) = z0 e^{-lambda t} and
  // |x - x0| = |z0| (1 - e^{-lambda t}), so the crossing is ln((L + sigma) / L) / lambda.
  const LocalCost<double> half_square = Polynomial<double>{0, 0, 0.5};
  double worst_scalar = 0;
  for (double L : {0.3, 1.0, 2.5, 7.0}) {
    for (double g : {-1.3, 0.4, 2.0}) {
      TriggerParams<double> prm;
      prm.lambda = kLambda;
      prm.sigma = kSigma;
      prm.lipschitz = L;
      prm.hessian_bound = 1;
      const double tau = std::log((L + kSigma) / L) / kLambda;
      const auto r = self_triggered_next(half_square, 0.25, g, 1.0, nullptr, prm);
      if (r.status != ScheduleStatus::Crossing) return {false, "scalar schedule found no crossing"};
      worst_scalar = std::max(worst_scalar, std::abs(r.time - (1.0 + tau)));
    }
  }

  const auto inst = build_quadratic<double>(5, 6001, false);
  auto cfg = config_for(inst.problem, FlowKind::EventUnconstrained, inst.initial_state);
  cfg.scheme = Integrator::RK4;
  cfg.horizon = 30;
  cfg.stop_tol = 0;
  const auto res = run(inst.problem, cfg);
  IntegratorConfig ic;
  ic.step = 1e-4;
  ic.horizon = 100;
  double worst_event = 0;
  for (std::size_t e = 0; e < res.log.size(); ++e) {
    const auto schedule =
        self_triggered_schedule(inst.problem, res.log[e].snapshot, cfg.params, cfg.flow, ic);
    const double predicted = next_event_time(schedule);
    if (e + 1 < res.log.size()) {
      worst_event = std::max(worst_event, std::abs(res.log[e + 1].time - predicted));
    } else if (predicted < cfg.horizon - cfg.step) {
      return {false, "schedule predicts an event the simulation never produced"};
    }
  }
  return {worst_scalar <= 1e-6 && worst_event <= cfg.step,
          "scalar worst error " + fmt(worst_scalar) + "; 5-agent instance " + std::to_string(res.log.size()) +
              " events, worst timing error " + fmt(worst_event) + " (step " + fmt(cfg.step) + ")"};
}

Outcome power_shape() {
  PowerScenario<double> sc;
  const std::vector<double> caps{0.7, 1.0, 0.8, 0.5, 0.3};
  if (sc.capacities != caps) return {false, "default capacities differ from the published values"};
  const auto pb = build_power(sc);
  auto cfg = config_for(pb.problem, FlowKind::EventConstrained, pb.initial_state);
  cfg.disturbances = pb.disturbances;
  const auto res = run(pb.problem, cfg);

  double worst = 0;
  for (const auto& x : res.trajectory.states) {
    for (std::size_t i = 0; i < caps.size(); ++i) {
      worst = std::max({worst, -x(static_cast<Index>(i)), x(static_cast<Index>(i)) - caps[i]});
    }
  }
  int before = 0;
  int after = 0;
  bool refreshed = false;
  for (const auto& r : res.log) {
    if (r.cause == EventCause::Disturbance && std::abs(r.time - 40) < kStep / 2) refreshed = true;
    if (r.cause != EventCause::Trigger) continue;
    (r.time < 40 ? before : after) += 1;
  }

  const Vec pre = reference_optimizer(pb.problem);
  const Vec post = reference_optimizer(res.final_problem);
  std::vector<Index> oracle_pinned;
  std::vector<Index> run_pinned;
  const Vec& final_x = res.trajectory.states.back();
  for (Index i = 0; i < 5; ++i) {
    const double cap = caps[static_cast<std::size_t>(i)];
    if (std::abs(post(i) - cap) <= 1e-9) oracle_pinned.push_back(i);
    if (std::abs(final_x(i) - cap) <= 1e-6) run_pinned.push_back(i);
  }
  // The second transient: the state leaves the pre-step optimum and settles at the new one.
  const auto at40 = static_cast<std::size_t>(std::llround(40 / kStep));
  const double moved = (final_x - res.trajectory.states[at40]).norm();
  const double settled = (final_x - post).norm();
  const auto events = static_cast<std::int64_t>(res.log.size());

  const bool ok = worst <= 1e-9 && refreshed && before >= 1 && after >= 1 && !oracle_pinned.empty() &&
                  run_pinned == oracle_pinned && (post - pre).norm() > 1e-6 && moved > 1e-3 && settled <= 1e-3 &&
                  events >= 2 && res.trajectory.times.back() <= kHorizon + 1e-9;
  std::string pinned;
  for (Index i : oracle_pinned) pinned += (pinned.empty() ? "" : ",") + std::to_string(i + 1);
  return {ok, std::to_string(events) + " events (" + std::to_string(before) + " triggered before t=40, " +
                  std::to_string(after) + " after), capacity excess " + fmt(worst) + ", pinned generator(s) {" +
                  pinned + "} match oracle: " + (run_pinned == oracle_pinned ? "yes" : "no") +
                  ", post-step distance to optimum " + fmt(settled)};
}

Outcome gradients() {
  std::vector<Problem> problems;
  problems.push_back(build_power(PowerScenario<double>{}).problem);
  for (Index n : {2, 5, 10}) problems.push_back(build_quadratic<double>(n, 7000 + static_cast<std::uint64_t>(n), false).problem);
  // Higher-degree polynomials exercise the non-quadratic paths.
  problems.emplace_back(std::vector<LocalCost<double>>{Polynomial<double>{0.3, -1, 0.5, 0.2, 0.25},
                                                       Polynomial<double>{0, 0.5, 1, 0, 0.1}},
                        AggregatorCoupling<double>{LocalCost<double>(Polynomial<double>{0, 1, 0.5, 0, 0.05}), 1.5});

  Rng rng(8080);
  const double h = 1e-5;
  double worst = 0;
  std::size_t checks = 0;
  const auto rel = [](double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); };
  for (const auto& p : problems) {
    for (Index i = 0; i < p.size(); ++i) {
      const auto& c = p.cost(i);
      for (int k = 0; k < 100; ++k) {
        const double x = uniform(rng, -2, 2);
        const double fd = (c.value(x + h) - c.value(x - h)) / (2 * h);
        worst = std::max(worst, rel(c.gradient(x), fd));
        ++checks;
      }
    }
    for (int k = 0; k < 100; ++k) {
      Vec x(p.size());
      for (Index i = 0; i < p.size(); ++i) x(i) = uniform(rng, -2, 2);
      const Vec g = grad_coupling(p, x);
      for (Index i = 0; i < p.size(); ++i) {
        Vec xp = x;
        Vec xm = x;
        xp(i) += h;
        xm(i) -= h;
        const double fd = (p.coupling().value(xp) - p.coupling().value(xm)) / (2 * h);
        worst = std::max(worst, rel(g(i), fd));
        ++checks;
      }
    }
  }
  return {worst <= 1e-6, std::to_string(checks) + " comparisons, worst relative error " + fmt(worst)};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("etcoord-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path scenarios = fs::path(ETCOORD_SOURCE_DIR) / "scenarios";

  const auto quad = build_quadratic<double>(5, 8888, true);
  io::json doc = io::problem_to_json(quad.problem);
  doc["config"] = {{"flow", "event-constrained"},
                   {"initial_state", std::vector<double>(quad.initial_state.data(),
                                                         quad.initial_state.data() + quad.initial_state.size())}};
  io::write_text(root / "quad5.json", doc.dump());

  const std::vector<std::vector<std::string>> cases{
      {"run", "--scenario", (scenarios / "power.json").string()},
      {"run", "--scenario", (scenarios / "q2.json").string(), "--mode", "computation"},
      {"run", "--scenario", (root / "quad5.json").string(), "--scheme", "rk4"},
  };
  std::ostringstream sink;
  int compared = 0;
  std::string problem;
  for (std::size_t c = 0; c < cases.size() && problem.empty(); ++c) {
    std::vector<fs::path> dirs;
    for (int rep = 0; rep < 2; ++rep) {
      auto args = cases[c];
      dirs.push_back(root / ("case" + std::to_string(c) + "_" + std::to_string(rep)));
      args.insert(args.end(), {"--out", dirs.back().string()});
      if (cli::run_cli(args, sink, sink) != 0) problem = "run failed";
    }
    dirs.push_back(root / ("case" + std::to_string(c) + "_replay"));
    if (cli::run_cli({"replay", "--manifest", (dirs[0] / "manifest.json").string(), "--out", dirs.back().string()},
                     sink, sink) != 0) {
      problem = "replay failed";
    }
    for (const char* f : {"trajectory.csv", "events.csv"}) {
      const std::string first = io::read_file(dirs[0] / f);
      for (std::size_t d = 1; d < dirs.size() && problem.empty(); ++d) {
        if (io::read_file(dirs[d] / f) != first) problem = std::string(f) + " differs";
        ++compared;
      }
    }
  }
  fs::remove_all(root);
  if (!problem.empty()) return {false, problem};
  return {true, std::to_string(compared) + " file pairs byte-identical (repeat runs and manifest replays)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 monotone descent", descent},
      {"2 anytime feasibility", feasibility},
      {"3 MIET formula values", miet_values},
      {"4 empirical inter-event times vs MIET", empirical_miet},
      {"5 ratio bound", ratio_bound},
      {"6 convergence and communication saving", convergence},
      {"7 self-triggered consistency", self_triggered},
      {"8 power scenario shape", power_shape},
      {"9 gradient consistency", gradients},
      {"10 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << '\n';
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
  return failed == 0 ? 0 : 1;
}
