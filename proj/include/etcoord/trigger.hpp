#pragma once

#include <cmath>
#include <limits>
#include <type_traits>
#include <vector>

#include "etcoord/dynamics.hpp"

namespace etcoord {

template <typename Scalar>
struct TriggerParams {
  Scalar sigma = Scalar(0.9);
  Scalar lambda = Scalar(0.2);
  /// Lipschitz bound of grad g: over the initial sublevel set (unconstrained)
  /// or over the feasible set (constrained).
  Scalar lipschitz = 0;
  /// Upper bound on every f_i'' over the same domain.
  Scalar hessian_bound = 0;
  /// Residuals at or below this magnitude count as zero.
  Scalar zero_tol = Scalar(1e-12);

  void validate() const {
    if (!(sigma > 0 && sigma < 1)) throw DomainError("sigma must lie in (0, 1)");
    if (!(lambda > 0)) throw DomainError("lambda must be positive");
    if (!(lipschitz >= 0) || !std::isfinite(lipschitz)) throw DomainError("lipschitz bound must be finite and >= 0");
    if (!(hessian_bound >= 0) || !std::isfinite(hessian_bound)) throw DomainError("hessian bound must be finite and >= 0");
    if (!(zero_tol > 0)) throw DomainError("zero_tol must be positive");
  }

  /// lambda < 1 / hessian_bound, required by the constrained MIET bound.
  bool below_lambda_bar() const { return lambda * hessian_bound < 1; }
};

/// Per-agent quantities compared by the trigger rule.
template <typename Scalar>
struct TriggerSignal {
  Scalar drift = 0;     // |x_i - x_i^k|
  Scalar residual = 0;  // z_i or z-bar_i
};

template <typename Scalar>
TriggerSignal<Scalar> unconstrained_signal(Scalar xi, Scalar xik, Scalar held_gi, Scalar grad_fi) {
  return {std::abs(xi - xik), grad_fi + held_gi};
}

template <typename Scalar>
TriggerSignal<Scalar> constrained_signal(Scalar xi, Scalar xik, Scalar held_gi, Scalar grad_fi,
                                         const BoxConstraint<Scalar>& box, Scalar lambda) {
  return {std::abs(xi - xik), project_box(box, xi - lambda * (grad_fi + held_gi)) - xi};
}

/// True when L |x_i - x_i^k| >= sigma |z_i| and z_i is nonzero.
template <typename Scalar>
bool check_unconstrained(Scalar xi, Scalar xik, Scalar held_gi, Scalar grad_fi, const TriggerParams<Scalar>& params) {
  const auto s = unconstrained_signal(xi, xik, held_gi, grad_fi);
  const Scalar z = std::abs(s.residual);
  return z > params.zero_tol && params.lipschitz * s.drift >= params.sigma * z;
}

/// True when lambda L |x_i - x_i^k| >= sigma |z-bar_i| and z-bar_i is nonzero.
template <typename Scalar>
bool check_constrained(Scalar xi, Scalar xik, Scalar held_gi, Scalar grad_fi, const BoxConstraint<Scalar>& box,
                       const TriggerParams<Scalar>& params) {
  const auto s = constrained_signal(xi, xik, held_gi, grad_fi, box, params.lambda);
  const Scalar z = std::abs(s.residual);
  return z > params.zero_tol && params.lambda * params.lipschitz * s.drift >= params.sigma * z;
}

/// Evaluates every agent's predicate against the current snapshot. Agents are
/// independent; the caller ORs the result.
template <typename Scalar>
std::vector<bool> evaluate_requests(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x,
                                    const SupervisorSnapshot<Scalar>& snap, const TriggerParams<Scalar>& params,
                                    FlowKind kind) {
  std::vector<bool> requests(static_cast<std::size_t>(p.size()), false);
  if (!is_event_triggered(kind)) return requests;
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar gf = p.cost(i).gradient(x(i));
    const Scalar xk = snap.anchor_state(i);
    const Scalar gk = snap.held_gradient(i);
    requests[static_cast<std::size_t>(i)] = is_constrained(kind)
                                                ? check_constrained(x(i), xk, gk, gf, p.box(i), params)
                                                : check_unconstrained(x(i), xk, gk, gf, params);
  }
  return requests;
}

/// Lower bound on the inter-event time of the unconstrained rule:
/// (1 / (lambda H)) log(sigma lambda H / L + 1).
template <typename Scalar>
Scalar miet_unconstrained(const TriggerParams<Scalar>& params) {
  if (!(params.hessian_bound > 0) || !(params.lipschitz > 0)) {
    throw PreconditionError("miet_unconstrained needs positive hessian and lipschitz bounds");
  }
  if (!(params.lambda > 0) || !(params.sigma > 0 && params.sigma < 1)) {
    throw PreconditionError("miet_unconstrained needs lambda > 0 and sigma in (0, 1)");
  }
  const Scalar lh = params.lambda * params.hessian_bound;
  using std::log1p;
  return log1p(params.sigma * lh / params.lipschitz) / lh;
}

/// H -> 0 limit of miet_unconstrained (all local costs affine): sigma / L.
template <typename Scalar>
Scalar miet_unconstrained_affine(const TriggerParams<Scalar>& params) {
  if (!(params.lipschitz > 0)) throw PreconditionError("miet needs a positive lipschitz bound");
  return params.sigma / params.lipschitz;
}

/// Lower bound on the inter-event time of the constrained rule,
/// log(sigma / (lambda L) + 1), valid only for lambda < 1 / H.
template <typename Scalar>
Scalar miet_constrained(const TriggerParams<Scalar>& params) {
  if (!params.below_lambda_bar()) {
    throw PreconditionError("miet_constrained requires lambda < 1 / hessian_bound");
  }
  if (!(params.lipschitz > 0) || !(params.lambda > 0) || !(params.sigma > 0 && params.sigma < 1)) {
    throw PreconditionError("miet_constrained needs lipschitz > 0, lambda > 0, sigma in (0, 1)");
  }
  using std::log1p;
  return log1p(params.sigma / (params.lambda * params.lipschitz));
}

struct IntegratorConfig {
  double step = 1e-3;
  double horizon = 1e3;
};

enum class ScheduleStatus { Crossing, Never, Truncated };

template <typename Scalar>
struct ScheduledTime {
  /// Absolute time of the next request; +inf when the agent never requests.
  Scalar time = std::numeric_limits<Scalar>::infinity();
  ScheduleStatus status = ScheduleStatus::Never;
};

/// Self-triggered schedule for one agent: integrates the agent's scalar
/// closed loop x' = -lambda (f_i'(x) + g_i^k) (or its projected form when
/// `box` is given) from the anchor and returns the first time the trigger
/// equality holds. RK4 with bisection on the crossing step.
template <typename Scalar>
ScheduledTime<Scalar> self_triggered_next(const LocalCost<Scalar>& cost, Scalar anchor, Scalar held_gi,
                                          Scalar anchor_time, const std::type_identity_t<BoxConstraint<Scalar>>* box,
                                          const TriggerParams<Scalar>& params, const IntegratorConfig& cfg = {}) {
  const Scalar lambda = params.lambda;
  const auto rhs = [&](Scalar x) {
    if (box != nullptr) return project_box(*box, x - lambda * (cost.gradient(x) + held_gi)) - x;
    return -lambda * (cost.gradient(x) + held_gi);
  };
  const auto signal = [&](Scalar x) {
    return box != nullptr ? constrained_signal(x, anchor, held_gi, cost.gradient(x), *box, lambda)
                          : unconstrained_signal(x, anchor, held_gi, cost.gradient(x));
  };
  const Scalar gain = box != nullptr ? lambda * params.lipschitz : params.lipschitz;
  // >= 0 once the trigger has crossed
  const auto gap = [&](Scalar x) {
    const auto s = signal(x);
    return gain * s.drift - params.sigma * std::abs(s.residual);
  };
  const auto rk4 = [&](Scalar x, Scalar h) {
    const Scalar k1 = rhs(x);
    const Scalar k2 = rhs(x + h / 2 * k1);
    const Scalar k3 = rhs(x + h / 2 * k2);
    const Scalar k4 = rhs(x + h * k3);
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  };

  if (std::abs(signal(anchor).residual) <= params.zero_tol) return {};

  const Scalar h = static_cast<Scalar>(cfg.step);
  const auto steps = static_cast<std::int64_t>(std::ceil(cfg.horizon / cfg.step));
  Scalar x = anchor;
  for (std::int64_t s = 0; s < steps; ++s) {
    const Scalar next = rk4(x, h);
    if (!std::isfinite(next)) throw NumericError("self_triggered_next: integration blew up");
    if (gap(next) >= 0) {
      Scalar lo = 0;
      Scalar hi = h;
      for (int it = 0; it < 200 && hi - lo > std::numeric_limits<Scalar>::epsilon() * (1 + hi); ++it) {
        const Scalar mid = (lo + hi) / 2;
        (gap(rk4(x, mid)) >= 0 ? hi : lo) = mid;
      }
      return {anchor_time + static_cast<Scalar>(s) * h + hi, ScheduleStatus::Crossing};
    }
    if (std::abs(signal(next).residual) <= params.zero_tol) return {};
    x = next;
  }
  return {anchor_time + static_cast<Scalar>(steps) * h, ScheduleStatus::Truncated};
}

/// Per-agent self-triggered times for a snapshot; the next event is their min.
template <typename Scalar>
std::vector<ScheduledTime<Scalar>> self_triggered_schedule(const NetworkProblem<Scalar>& p,
                                                           const SupervisorSnapshot<Scalar>& snap,
                                                           const TriggerParams<Scalar>& params, FlowKind kind,
                                                           const IntegratorConfig& cfg = {}) {
  std::vector<ScheduledTime<Scalar>> out;
  out.reserve(static_cast<std::size_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) {
    const BoxConstraint<Scalar>* box = is_constrained(kind) ? &p.box(i) : nullptr;
    out.push_back(self_triggered_next(p.cost(i), snap.anchor_state(i), snap.held_gradient(i), snap.time, box,
                                      params, cfg));
  }
  return out;
}

template <typename Scalar>
Scalar next_event_time(const std::vector<ScheduledTime<Scalar>>& schedule) {
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (const auto& s : schedule) best = std::min(best, s.time);
  return best;
}

}  // namespace etcoord
