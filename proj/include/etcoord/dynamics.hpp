#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "etcoord/problem.hpp"

namespace etcoord {

enum class FlowKind { ContinuousUnconstrained, EventUnconstrained, ContinuousConstrained, EventConstrained };

constexpr bool is_constrained(FlowKind kind) {
  return kind == FlowKind::ContinuousConstrained || kind == FlowKind::EventConstrained;
}

constexpr bool is_event_triggered(FlowKind kind) {
  return kind == FlowKind::EventUnconstrained || kind == FlowKind::EventConstrained;
}

constexpr FlowKind continuous_counterpart(FlowKind kind) {
  return is_constrained(kind) ? FlowKind::ContinuousConstrained : FlowKind::ContinuousUnconstrained;
}

constexpr std::string_view to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::ContinuousUnconstrained: return "continuous-unconstrained";
    case FlowKind::EventUnconstrained: return "event-unconstrained";
    case FlowKind::ContinuousConstrained: return "continuous-constrained";
    case FlowKind::EventConstrained: return "event-constrained";
  }
  return "?";
}

inline std::optional<FlowKind> parse_flow_kind(std::string_view name) {
  for (auto kind : {FlowKind::ContinuousUnconstrained, FlowKind::EventUnconstrained, FlowKind::ContinuousConstrained,
                    FlowKind::EventConstrained}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

/// Coupling gradient held by every agent between supervisor broadcasts.
template <typename Scalar>
struct SupervisorSnapshot {
  Vector<Scalar> anchor_state;
  Vector<Scalar> held_gradient;
  Scalar time = 0;
  std::int64_t sequence_index = 0;
};

template <typename Scalar>
SupervisorSnapshot<Scalar> make_snapshot(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x, Scalar t,
                                         std::int64_t k) {
  return {x, grad_coupling(p, x), t, k};
}

namespace detail {

template <typename Scalar>
void require_boxes(const NetworkProblem<Scalar>& p) {
  if (!p.boxes()) throw DomainError("constrained flow requires box constraints");
}

// Pi_X(x - lambda (grad f(x) + coupling_grad)) - x
template <typename Scalar>
Vector<Scalar> projected_step(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x,
                              const Vector<Scalar>& coupling_grad, Scalar lambda) {
  require_boxes(p);
  Vector<Scalar> out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar inner = x(i) - lambda * (p.cost(i).gradient(x(i)) + coupling_grad(i));
    out(i) = project_box(p.box(i), inner) - x(i);
  }
  return out;
}

}  // namespace detail

/// -lambda (grad f(x) + held grad g(x^k)).
template <typename Scalar>
Vector<Scalar> field_unconstrained_event(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x,
                                         const SupervisorSnapshot<Scalar>& snap, Scalar lambda) {
  require_dimension(x.size(), p.size(), "field_unconstrained_event");
  require_dimension(snap.held_gradient.size(), p.size(), "snapshot");
  return -lambda * (local_gradients(p, x) + snap.held_gradient);
}

template <typename Scalar>
Vector<Scalar> field_constrained_event(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x,
                                       const SupervisorSnapshot<Scalar>& snap, Scalar lambda) {
  require_dimension(x.size(), p.size(), "field_constrained_event");
  require_dimension(snap.held_gradient.size(), p.size(), "snapshot");
  return detail::projected_step(p, x, snap.held_gradient, lambda);
}

/// Field with a fresh coupling gradient; `kind` selects the projected form.
template <typename Scalar>
Vector<Scalar> field_continuous(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x, Scalar lambda,
                                FlowKind kind) {
  require_dimension(x.size(), p.size(), "field_continuous");
  if (is_constrained(kind)) return detail::projected_step(p, x, grad_coupling(p, x), lambda);
  return -lambda * grad_objective(p, x);
}

template <typename Scalar>
Vector<Scalar> field(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x, const SupervisorSnapshot<Scalar>& snap,
                     Scalar lambda, FlowKind kind) {
  switch (kind) {
    case FlowKind::EventUnconstrained: return field_unconstrained_event(p, x, snap, lambda);
    case FlowKind::EventConstrained: return field_constrained_event(p, x, snap, lambda);
    default: return field_continuous(p, x, lambda, kind);
  }
}

/// z = grad f(x) + held grad g(x^k).
template <typename Scalar>
Vector<Scalar> residual_unconstrained(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x,
                                      const SupervisorSnapshot<Scalar>& snap) {
  return local_gradients(p, x) + snap.held_gradient;
}

/// z-bar = Pi_X(x - lambda (grad f(x) + held grad g(x^k))) - x.
template <typename Scalar>
Vector<Scalar> residual_constrained(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x,
                                    const SupervisorSnapshot<Scalar>& snap, Scalar lambda) {
  return field_constrained_event(p, x, snap, lambda);
}

}  // namespace etcoord
