#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "etcoord/simulator.hpp"

namespace etcoord {

enum class CheckStatus { Pass, Fail, Skipped };

constexpr std::string_view to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::Skipped: return "skipped";
  }
  return "?";
}

/// One audited property. `margin` is the worst observed excess over the
/// allowed value: <= 0 passes, > 0 fails. Skipped checks carry a reason.
template <typename Scalar>
struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::Skipped;
  Scalar margin = 0;
  Scalar tolerance = 0;
  std::string detail;
};

template <typename Scalar>
struct VerificationReport {
  std::vector<CheckResult<Scalar>> checks;

  bool all_passed() const {
    return std::none_of(checks.begin(), checks.end(), [](const auto& c) { return c.status == CheckStatus::Fail; });
  }

  const CheckResult<Scalar>& at(std::string_view name) const {
    for (const auto& c : checks) {
      if (c.name == name) return c;
    }
    throw std::out_of_range("no check named " + std::string(name));
  }
};

template <typename Scalar>
struct VerifyOptions {
  Scalar descent_slack_factor = 10;  // per-step slack = factor * step^2
  Scalar feasibility_tol = Scalar(1e-9);
  Scalar ratio_tol = Scalar(1e-6);
  Scalar trigger_tol = Scalar(1e-12);
  Scalar convergence_tol = Scalar(1e-3);
};

namespace detail {

template <typename Scalar>
CheckResult<Scalar> judged(std::string name, Scalar margin, Scalar tol, std::string detail = {}) {
  return {std::move(name), margin <= 0 ? CheckStatus::Pass : CheckStatus::Fail, margin, tol, std::move(detail)};
}

template <typename Scalar>
CheckResult<Scalar> skipped(std::string name, std::string why) {
  return {std::move(name), CheckStatus::Skipped, 0, 0, std::move(why)};
}

template <typename Scalar>
bool is_event_time(const EventLog<Scalar>& log, Scalar t) {
  return std::any_of(log.begin(), log.end(), [t](const auto& r) { return r.time == t; });
}

/// Index of the snapshot governing the step that ends at sample time t:
/// the last record with time < t.
template <typename Scalar>
std::optional<std::size_t> governing_record(const EventLog<Scalar>& log, Scalar t) {
  std::optional<std::size_t> idx;
  for (std::size_t e = 0; e < log.size() && log[e].time < t; ++e) idx = e;
  return idx;
}

template <typename Scalar>
CheckResult<Scalar> check_descent(const Trajectory<Scalar>& traj, const EventLog<Scalar>& log, Scalar step,
                                  const VerifyOptions<Scalar>& opt) {
  const Scalar slack = opt.descent_slack_factor * step * step;
  if (traj.size() < 2) return skipped<Scalar>("monotone_descent", "fewer than two samples");
  Scalar worst = -std::numeric_limits<Scalar>::infinity();
  for (std::size_t m = 0; m + 1 < traj.size(); ++m) {
    const Scalar t = traj.times[m + 1];
    const bool disturbance = std::any_of(log.begin(), log.end(), [t](const auto& r) {
      return r.cause == EventCause::Disturbance && r.time == t;
    });
    if (disturbance) continue;
    worst = std::max(worst, traj.objective[m + 1] - traj.objective[m] - slack);
  }
  return judged("monotone_descent", worst, slack, "max per-step increase minus slack");
}

template <typename Scalar>
CheckResult<Scalar> check_feasibility(const Trajectory<Scalar>& traj, FlowKind flow, const VerifyOptions<Scalar>& opt) {
  if (!is_constrained(flow)) return skipped<Scalar>("feasibility", "unconstrained flow");
  Scalar worst = 0;
  for (Scalar v : traj.violation) worst = std::max(worst, v);
  return judged("feasibility", worst - opt.feasibility_tol, opt.feasibility_tol, "max box violation minus tolerance");
}

template <typename Scalar>
std::optional<Scalar> formula_miet(const TriggerParams<Scalar>& params, FlowKind flow) {
  if (!(params.lipschitz > 0)) return std::nullopt;
  if (is_constrained(flow)) {
    if (!params.below_lambda_bar()) return std::nullopt;
    return miet_constrained(params);
  }
  if (params.hessian_bound > 0) return miet_unconstrained(params);
  return miet_unconstrained_affine(params);
}

template <typename Scalar>
CheckResult<Scalar> check_miet(const EventLog<Scalar>& log, const TriggerParams<Scalar>& params, FlowKind flow,
                               Scalar step) {
  if (!is_event_triggered(flow)) return skipped<Scalar>("miet_bound", "continuous flow");
  const auto bound = formula_miet(params, flow);
  if (!bound) return skipped<Scalar>("miet_bound", "formula preconditions not met");
  std::optional<Scalar> min_gap;
  for (std::size_t e = 1; e < log.size(); ++e) {
    if (log[e].cause != EventCause::Trigger) continue;
    const Scalar gap = log[e].time - log[e - 1].time;
    min_gap = min_gap ? std::min(*min_gap, gap) : gap;
  }
  if (!min_gap) return skipped<Scalar>("miet_bound", "no triggered inter-event gaps");
  return judged("miet_bound", (*bound - step) - *min_gap, step,
                "formula MIET " + std::to_string(static_cast<double>(*bound)) + ", observed min gap " +
                    std::to_string(static_cast<double>(*min_gap)));
}

template <typename Scalar>
CheckResult<Scalar> check_ratio(const Trajectory<Scalar>& traj, const EventLog<Scalar>& log,
                                const NetworkProblem<Scalar>& p, const TriggerParams<Scalar>& params, FlowKind flow,
                                const VerifyOptions<Scalar>& opt) {
  if (flow != FlowKind::EventUnconstrained) return skipped<Scalar>("ratio_bound", "only audited for the unconstrained event flow");
  Scalar H = 0;
  for (const auto& c : p.costs()) {
    if (!c.has_constant_hessian()) return skipped<Scalar>("ratio_bound", "needs quadratic local costs for an exact H");
    H = std::max(H, c.hessian(Scalar(0)));
  }
  const Scalar lambda = params.lambda;
  Scalar worst = -std::numeric_limits<Scalar>::infinity();
  for (std::size_t m = 1; m < traj.size(); ++m) {
    const Scalar t = traj.times[m];
    const auto e = governing_record(log, t);
    if (!e) continue;
    const auto& snap = log[*e].snapshot;
    const Scalar elapsed = t - snap.time;
    const Scalar bound = H > 0 ? std::expm1(lambda * H * elapsed) / (lambda * H) : elapsed;
    for (Index i = 0; i < p.size(); ++i) {
      const Scalar z0 = p.cost(i).gradient(snap.anchor_state(i)) + snap.held_gradient(i);
      if (std::abs(z0) <= params.zero_tol) continue;
      const Scalar xi = traj.states[m](i);
      const Scalar drift = std::abs(xi - snap.anchor_state(i));
      const Scalar z = std::abs(p.cost(i).gradient(xi) + snap.held_gradient(i));
      const Scalar ratio = z > 0 ? drift / z : (drift > 0 ? std::numeric_limits<Scalar>::infinity() : Scalar(0));
      worst = std::max(worst, ratio - bound - opt.ratio_tol);
    }
  }
  if (!std::isfinite(worst) && worst < 0) return skipped<Scalar>("ratio_bound", "no agent with nonzero residual");
  return judged("ratio_bound", worst, opt.ratio_tol, "max of |x_i - x_i^k|/|z_i| minus comparison bound");
}

template <typename Scalar>
CheckResult<Scalar> check_trigger_condition(const Trajectory<Scalar>& traj, const EventLog<Scalar>& log,
                                            const NetworkProblem<Scalar>& p, const TriggerParams<Scalar>& params,
                                            FlowKind flow, const VerifyOptions<Scalar>& opt) {
  if (!is_event_triggered(flow)) return skipped<Scalar>("trigger_condition", "continuous flow");
  Scalar worst = -std::numeric_limits<Scalar>::infinity();
  for (std::size_t m = 1; m < traj.size(); ++m) {
    const Scalar t = traj.times[m];
    if (is_event_time(log, t)) continue;
    const auto e = governing_record(log, t);
    if (!e) continue;
    const auto& snap = log[*e].snapshot;
    const auto& x = traj.states[m];
    const Scalar drift = (x - snap.anchor_state).norm();
    Scalar lhs = 0;
    Scalar rhs = 0;
    if (is_constrained(flow)) {
      lhs = params.lambda * params.lipschitz * drift;
      rhs = params.sigma * residual_constrained(p, x, snap, params.lambda).norm();
    } else {
      lhs = params.lipschitz * drift;
      rhs = params.sigma * residual_unconstrained(p, x, snap).norm();
    }
    worst = std::max(worst, lhs - rhs - opt.trigger_tol * (1 + rhs));
  }
  if (!std::isfinite(worst)) return skipped<Scalar>("trigger_condition", "no samples between events");
  return judged("trigger_condition", worst, opt.trigger_tol, "max of L||x - x^k|| - sigma||z|| between events");
}

}  // namespace detail

/// Audits a finished run against the descent, feasibility, MIET, ratio-bound,
/// trigger-condition and convergence properties.
template <typename Scalar>
VerificationReport<Scalar> verify(const Trajectory<Scalar>& traj, const EventLog<Scalar>& log,
                                  const NetworkProblem<Scalar>& p, const SimConfig<Scalar>& cfg,
                                  const std::optional<Vector<Scalar>>& optimizer,
                                  const VerifyOptions<Scalar>& opt = {}) {
  if (traj.empty()) throw DomainError("verify needs a nonempty trajectory");
  VerificationReport<Scalar> report;
  report.checks.push_back(detail::check_descent(traj, log, cfg.step, opt));
  report.checks.push_back(detail::check_feasibility(traj, cfg.flow, opt));
  report.checks.push_back(detail::check_miet(log, cfg.params, cfg.flow, cfg.step));
  report.checks.push_back(detail::check_ratio(traj, log, p, cfg.params, cfg.flow, opt));
  report.checks.push_back(detail::check_trigger_condition(traj, log, p, cfg.params, cfg.flow, opt));
  if (optimizer) {
    const Scalar err = (traj.states.back() - *optimizer).norm();
    report.checks.push_back(detail::judged("convergence", err - opt.convergence_tol, opt.convergence_tol,
                                           "final distance to oracle " + std::to_string(static_cast<double>(err))));
  } else {
    report.checks.push_back(detail::skipped<Scalar>("convergence", "no oracle optimizer"));
  }
  return report;
}

template <typename Scalar>
struct Histogram {
  std::vector<Scalar> edges;  // counts.size() + 1 entries
  std::vector<std::int64_t> counts;
  Scalar min_gap = 0;

  bool empty() const { return counts.empty(); }
};

/// Histogram of consecutive event gaps with `bins` equal-width bins over
/// [min gap, max gap]; a single bin when every gap is identical.
template <typename Scalar>
Histogram<Scalar> interevent_histogram(const EventLog<Scalar>& log, std::size_t bins) {
  Histogram<Scalar> hist;
  const auto gaps = inter_event_gaps(log);
  if (gaps.empty() || bins == 0) return hist;
  const auto [lo_it, hi_it] = std::minmax_element(gaps.begin(), gaps.end());
  const Scalar lo = *lo_it;
  const Scalar hi = *hi_it;
  hist.min_gap = lo;
  if (!(hi > lo)) {
    hist.edges = {lo, hi};
    hist.counts = {static_cast<std::int64_t>(gaps.size())};
    return hist;
  }
  hist.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) {
    hist.edges.push_back(lo + (hi - lo) * static_cast<Scalar>(b) / static_cast<Scalar>(bins));
  }
  for (Scalar g : gaps) {
    auto b = static_cast<std::size_t>((g - lo) / (hi - lo) * static_cast<Scalar>(bins));
    ++hist.counts[std::min(b, bins - 1)];
  }
  return hist;
}

}  // namespace etcoord
