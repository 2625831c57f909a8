#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "etcoord/coordinator.hpp"
#include "etcoord/random.hpp"
#include "etcoord/trigger.hpp"

namespace etcoord {

enum class Integrator { Euler, RK4 };

/// Step change of the aggregator's net-load constant c at a given time.
template <typename Scalar>
struct Disturbance {
  Scalar time = 0;
  Scalar dc = 0;
};

template <typename Scalar>
struct SimConfig {
  FlowKind flow = FlowKind::EventUnconstrained;
  TriggerParams<Scalar> params;
  Scalar step = Scalar(1e-2);
  Scalar horizon = 60;
  Vector<Scalar> initial_state;
  CoordinationMode mode = CoordinationMode::SensingBased;
  std::vector<Disturbance<Scalar>> disturbances;
  Integrator scheme = Integrator::Euler;
  /// Stop once the fresh residual norm drops below this (0 disables).
  Scalar stop_tol = Scalar(1e-8);
  /// Record V(x) = F(x) - F(x*) using the reference optimizer.
  bool record_lyapunov = false;
  Scalar feasibility_tol = Scalar(1e-9);
};

template <typename Scalar>
struct Trajectory {
  std::vector<Scalar> times;
  std::vector<Vector<Scalar>> states;
  std::vector<Scalar> objective;
  std::vector<Scalar> lyapunov;  // empty unless recorded
  std::vector<bool> feasible;
  std::vector<Scalar> violation;  // distance outside the boxes, per sample

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
};

template <typename Scalar>
struct RunResult {
  Trajectory<Scalar> trajectory;
  EventLog<Scalar> log;
  MessageStats<Scalar> stats;
  /// Problem in effect at the end of the run (after every disturbance).
  NetworkProblem<Scalar> final_problem;
  bool stopped_early = false;
};

namespace detail {

template <typename Scalar>
Scalar box_violation(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x) {
  Scalar worst = 0;
  if (!p.boxes()) return worst;
  for (Index i = 0; i < p.size(); ++i) worst = std::max(worst, p.box(i).violation(x(i)));
  return worst;
}

template <typename Scalar>
Scalar fresh_residual(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x, Scalar lambda, FlowKind kind) {
  if (is_constrained(kind)) return field_continuous(p, x, lambda, kind).norm();
  return grad_objective(p, x).norm();
}

template <typename Scalar>
void validate(const NetworkProblem<Scalar>& p, const SimConfig<Scalar>& cfg) {
  if (!(cfg.step > 0) || !std::isfinite(cfg.step)) throw DomainError("stepsize must be positive");
  if (!(cfg.horizon > 0) || !std::isfinite(cfg.horizon)) throw DomainError("horizon must be positive");
  require_dimension(cfg.initial_state.size(), p.size(), "initial state");
  if (is_event_triggered(cfg.flow)) {
    cfg.params.validate();
  } else if (!(cfg.params.lambda > 0)) {
    throw DomainError("lambda must be positive");
  }
  if (is_constrained(cfg.flow)) {
    if (!p.boxes()) throw DomainError("constrained flow requires box constraints");
    if (!p.contains(cfg.initial_state)) throw DomainError("initial state lies outside the feasible set");
  }
  for (const auto& d : cfg.disturbances) {
    if (!std::isfinite(d.time) || !std::isfinite(d.dc)) throw DomainError("disturbances must be finite");
  }
}

}  // namespace detail

/// Fixed-step integration of the selected flow. Event-triggered flows hold
/// the coupling gradient from the last broadcast and check every agent's
/// trigger after each step; continuous flows use a fresh gradient each step.
template <typename Scalar>
RunResult<Scalar> run(const NetworkProblem<Scalar>& p, const SimConfig<Scalar>& cfg) {
  detail::validate(p, cfg);

  auto disturbances = cfg.disturbances;
  std::stable_sort(disturbances.begin(), disturbances.end(),
                   [](const auto& a, const auto& b) { return a.time < b.time; });
  std::size_t next_disturbance = 0;

  NetworkProblem<Scalar> problem = p;
  while (next_disturbance < disturbances.size() && disturbances[next_disturbance].time <= 0) {
    problem = problem.with_coupling(problem.coupling().with_load_shift(disturbances[next_disturbance++].dc));
  }

  const Scalar lambda = cfg.params.lambda;
  const Scalar h = cfg.step;
  Vector<Scalar> x = cfg.initial_state;
  Coordinator<Scalar> coordinator(problem, cfg.mode, Scalar(0), x);

  std::optional<Scalar> optimal_value;
  const auto refresh_oracle = [&] {
    if (cfg.record_lyapunov) optimal_value = eval_objective(problem, reference_optimizer(problem));
  };
  refresh_oracle();

  Trajectory<Scalar> traj;
  const auto record = [&](Scalar t) {
    traj.times.push_back(t);
    traj.states.push_back(x);
    const Scalar obj = eval_objective(problem, x);
    traj.objective.push_back(obj);
    if (optimal_value) traj.lyapunov.push_back(obj - *optimal_value);
    const Scalar viol = detail::box_violation(problem, x);
    traj.violation.push_back(viol);
    traj.feasible.push_back(viol <= cfg.feasibility_tol);
  };
  record(0);

  const auto advance = [&](const SupervisorSnapshot<Scalar>& snap) {
    const auto F = [&](const Vector<Scalar>& y) { return field(problem, y, snap, lambda, cfg.flow); };
    if (cfg.scheme == Integrator::Euler) return Vector<Scalar>(x + h * F(x));
    const Vector<Scalar> k1 = F(x);
    const Vector<Scalar> k2 = F(x + h / 2 * k1);
    const Vector<Scalar> k3 = F(x + h / 2 * k2);
    const Vector<Scalar> k4 = F(x + h * k3);
    return Vector<Scalar>(x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4));
  };

  bool stopped_early = false;
  const auto steps = static_cast<std::int64_t>(std::ceil(cfg.horizon / h - Scalar(1e-9)));
  for (std::int64_t s = 1; s <= steps; ++s) {
    const Scalar t = static_cast<Scalar>(s) * h;
    const SupervisorSnapshot<Scalar> snap = coordinator.snapshot();
    x = advance(snap);
    if (!x.allFinite()) {
      throw NumericError("non-finite state at t = " + std::to_string(static_cast<double>(t)));
    }

    bool disturbed = false;
    while (next_disturbance < disturbances.size() && disturbances[next_disturbance].time <= t + h * Scalar(1e-9)) {
      problem = problem.with_coupling(problem.coupling().with_load_shift(disturbances[next_disturbance++].dc));
      disturbed = true;
    }
    const auto requests = evaluate_requests(problem, x, snap, cfg.params, cfg.flow);
    if (disturbed) {
      coordinator.force_refresh(problem, t, x, requests, EventCause::Disturbance);
      refresh_oracle();
    } else {
      coordinator.process_step(problem, t, x, requests);
    }
    record(t);

    if (cfg.stop_tol > 0 && next_disturbance == disturbances.size() &&
        detail::fresh_residual(problem, x, lambda, cfg.flow) < cfg.stop_tol) {
      stopped_early = true;
      break;
    }
  }

  auto stats = summarize(coordinator.log(), cfg.horizon);
  return {std::move(traj), coordinator.log(), std::move(stats), std::move(problem), stopped_early};
}

/// Same loop with the continuous counterpart of the configured flow.
template <typename Scalar>
Trajectory<Scalar> run_baseline(const NetworkProblem<Scalar>& p, SimConfig<Scalar> cfg) {
  cfg.flow = continuous_counterpart(cfg.flow);
  return run(p, cfg).trajectory;
}

template <typename Scalar>
using InitialStateSampler = std::function<Vector<Scalar>(Rng&)>;

/// Uniform initial states inside the problem's boxes, or inside [lo, hi]^n.
template <typename Scalar>
InitialStateSampler<Scalar> uniform_sampler(const NetworkProblem<Scalar>& p, Scalar lo = -1, Scalar hi = 1) {
  std::optional<Boxes<Scalar>> boxes = p.boxes();
  const Index n = p.size();
  return [boxes, n, lo, hi](Rng& rng) {
    Vector<Scalar> x(n);
    for (Index i = 0; i < n; ++i) {
      const Scalar a = boxes ? (*boxes)[static_cast<std::size_t>(i)].lower : lo;
      const Scalar b = boxes ? (*boxes)[static_cast<std::size_t>(i)].upper : hi;
      x(i) = static_cast<Scalar>(uniform(rng, static_cast<double>(a), static_cast<double>(b)));
    }
    return x;
  };
}

template <typename Scalar>
struct SweepEntry {
  std::size_t index = 0;
  Vector<Scalar> initial_state;
  std::optional<MessageStats<Scalar>> stats;
  std::string error;
};

template <typename Scalar>
struct SweepAggregate {
  std::size_t runs = 0;
  std::size_t succeeded = 0;
  /// Mean and spread over runs of each run's minimum inter-event time,
  /// counting only gaps that end in a trigger event.
  std::optional<Scalar> miet_mean;
  std::optional<Scalar> miet_std;
  Scalar updates_mean = 0;
  Scalar updates_std = 0;
  Scalar messages_up_mean = 0;
  Scalar messages_down_mean = 0;
};

template <typename Scalar>
struct SweepResult {
  std::vector<SweepEntry<Scalar>> entries;
  SweepAggregate<Scalar> aggregate;
};

namespace detail {

template <typename Scalar>
std::pair<Scalar, Scalar> mean_std(const std::vector<Scalar>& v) {
  Scalar sum = 0;
  for (Scalar a : v) sum += a;
  const Scalar mean = sum / static_cast<Scalar>(v.size());
  Scalar ss = 0;
  for (Scalar a : v) ss += (a - mean) * (a - mean);
  return {mean, std::sqrt(ss / static_cast<Scalar>(v.size()))};
}

}  // namespace detail

/// Runs `count` simulations from seeded initial states. Initial states are
/// drawn up front so results do not depend on `jobs`; entries are ordered by
/// run index. Failing runs are reported per entry and do not stop the sweep.
template <typename Scalar>
SweepResult<Scalar> sweep(const NetworkProblem<Scalar>& p, const SimConfig<Scalar>& tmpl,
                          const InitialStateSampler<Scalar>& sampler, std::size_t count, std::uint64_t seed,
                          unsigned jobs = 1) {
  if (count == 0) throw DomainError("sweep needs count >= 1");
  Rng rng(seed);
  SweepResult<Scalar> result;
  result.entries.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    result.entries[i].index = i;
    result.entries[i].initial_state = sampler(rng);
  }

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      auto& entry = result.entries[i];
      try {
        auto cfg = tmpl;
        cfg.initial_state = entry.initial_state;
        entry.stats = run(p, cfg).stats;
      } catch (const std::exception& e) {
        entry.error = e.what();
      }
    }
  };
  const unsigned workers = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  auto& agg = result.aggregate;
  agg.runs = count;
  std::vector<Scalar> miets;
  std::vector<Scalar> updates;
  std::vector<Scalar> ups;
  std::vector<Scalar> downs;
  for (const auto& e : result.entries) {
    if (!e.stats) continue;
    ++agg.succeeded;
    if (e.stats->triggered_inter_event) miets.push_back(e.stats->triggered_inter_event->min);
    updates.push_back(static_cast<Scalar>(e.stats->updates()));
    ups.push_back(static_cast<Scalar>(e.stats->messages_up));
    downs.push_back(static_cast<Scalar>(e.stats->messages_down));
  }
  if (!miets.empty()) {
    const auto [m, s] = detail::mean_std(miets);
    agg.miet_mean = m;
    agg.miet_std = s;
  }
  if (!updates.empty()) {
    std::tie(agg.updates_mean, agg.updates_std) = detail::mean_std(updates);
    agg.messages_up_mean = detail::mean_std(ups).first;
    agg.messages_down_mean = detail::mean_std(downs).first;
  }
  return result;
}

}  // namespace etcoord
