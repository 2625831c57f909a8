#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "etcoord/polynomial.hpp"
#include "etcoord/types.hpp"

namespace etcoord {

/// Twice-differentiable scalar cost given by closures. Used for local costs
/// that are not polynomials; bounds over such costs are always sampled.
template <typename Scalar>
struct SmoothCost {
  std::function<Scalar(Scalar)> value;
  std::function<Scalar(Scalar)> gradient;
  std::function<Scalar(Scalar)> hessian;
};

/// Local cost f_i of one agent. Polynomial by default.
template <typename Scalar>
class LocalCost {
 public:
  LocalCost() : form_(Polynomial<Scalar>{}) {}
  LocalCost(Polynomial<Scalar> poly) : form_(std::move(poly)) {}  // NOLINT(google-explicit-constructor)
  LocalCost(SmoothCost<Scalar> smooth) : form_(std::move(smooth)) {}  // NOLINT(google-explicit-constructor)

  Scalar value(Scalar x) const {
    return std::visit([x](const auto& f) { return eval(f, x); }, form_);
  }
  Scalar gradient(Scalar x) const {
    return std::visit([x](const auto& f) { return grad(f, x); }, form_);
  }
  Scalar hessian(Scalar x) const {
    return std::visit([x](const auto& f) { return hess(f, x); }, form_);
  }

  const Polynomial<Scalar>* polynomial() const { return std::get_if<Polynomial<Scalar>>(&form_); }

  /// True for polynomials of degree <= 2, whose second derivative is constant.
  bool has_constant_hessian() const {
    const auto* p = polynomial();
    return p != nullptr && p->degree() <= 2;
  }

 private:
  static Scalar eval(const Polynomial<Scalar>& p, Scalar x) { return p(x); }
  static Scalar grad(const Polynomial<Scalar>& p, Scalar x) { return p.derivative(x); }
  static Scalar hess(const Polynomial<Scalar>& p, Scalar x) { return p.second_derivative(x); }
  static Scalar eval(const SmoothCost<Scalar>& f, Scalar x) { return f.value(x); }
  static Scalar grad(const SmoothCost<Scalar>& f, Scalar x) { return f.gradient(x); }
  static Scalar hess(const SmoothCost<Scalar>& f, Scalar x) { return f.hessian(x); }

  std::variant<Polynomial<Scalar>, SmoothCost<Scalar>> form_;
};

/// g(x) = 1/2 x^T Q x + q^T x with Q symmetric positive semidefinite.
template <typename Scalar>
struct QuadraticCoupling {
  Matrix<Scalar> Q;
  Vector<Scalar> q;
};

/// g(x) = f0(c - sum_i x_i): a supervisor-side cost of the net injection.
template <typename Scalar>
struct AggregatorCoupling {
  LocalCost<Scalar> f0;
  Scalar c = 0;
};

template <typename Scalar>
class CouplingCost {
 public:
  using Variant = std::variant<QuadraticCoupling<Scalar>, AggregatorCoupling<Scalar>>;

  CouplingCost(QuadraticCoupling<Scalar> quad) : form_(std::move(quad)) {}  // NOLINT
  CouplingCost(AggregatorCoupling<Scalar> agg) : form_(std::move(agg)) {}  // NOLINT

  /// The zero coupling g = 0 on n agents.
  static CouplingCost zero(Index n) {
    return QuadraticCoupling<Scalar>{Matrix<Scalar>::Zero(n, n), Vector<Scalar>::Zero(n)};
  }

  const QuadraticCoupling<Scalar>* quadratic() const { return std::get_if<QuadraticCoupling<Scalar>>(&form_); }
  const AggregatorCoupling<Scalar>* aggregator() const { return std::get_if<AggregatorCoupling<Scalar>>(&form_); }

  Scalar value(const Vector<Scalar>& x) const {
    if (const auto* qc = quadratic()) return Scalar(0.5) * x.dot(qc->Q * x) + qc->q.dot(x);
    const auto& ag = *aggregator();
    return ag.f0.value(ag.c - x.sum());
  }

  Vector<Scalar> gradient(const Vector<Scalar>& x) const {
    if (const auto* qc = quadratic()) return qc->Q * x + qc->q;
    const auto& ag = *aggregator();
    return Vector<Scalar>::Constant(x.size(), -ag.f0.gradient(ag.c - x.sum()));
  }

  /// Copy with the aggregator's net-load constant shifted by dc.
  CouplingCost with_load_shift(Scalar dc) const {
    const auto* ag = aggregator();
    if (ag == nullptr) throw DomainError("load shifts require an aggregator coupling");
    auto shifted = *ag;
    shifted.c += dc;
    return CouplingCost(std::move(shifted));
  }

 private:
  Variant form_;
};

/// Closed interval [lower, upper] for one decision variable.
template <typename Scalar>
struct BoxConstraint {
  Scalar lower = 0;
  Scalar upper = 0;

  bool valid() const { return std::isfinite(lower) && std::isfinite(upper) && lower <= upper; }
  bool contains(Scalar y, Scalar tol = 0) const { return y >= lower - tol && y <= upper + tol; }
  /// Distance from y to the interval (zero inside).
  Scalar violation(Scalar y) const { return std::max({lower - y, y - upper, Scalar(0)}); }
};

template <typename Scalar>
using Boxes = std::vector<BoxConstraint<Scalar>>;

template <typename Scalar>
Scalar project_box(const BoxConstraint<Scalar>& box, Scalar y) {
  return std::clamp(y, box.lower, box.upper);
}

template <typename Scalar>
Vector<Scalar> project_all(const Boxes<Scalar>& boxes, const Vector<Scalar>& y) {
  require_dimension(y.size(), static_cast<Index>(boxes.size()), "project_all");
  Vector<Scalar> out(y.size());
  for (Index i = 0; i < y.size(); ++i) out(i) = project_box(boxes[static_cast<std::size_t>(i)], y(i));
  return out;
}

/// Problem data for sum_i f_i(x_i) + g(x) over an optional product of boxes.
/// Immutable once constructed.
template <typename Scalar>
class NetworkProblem {
 public:
  NetworkProblem(std::vector<LocalCost<Scalar>> costs, CouplingCost<Scalar> coupling,
                 std::optional<Boxes<Scalar>> boxes = std::nullopt)
      : costs_(std::move(costs)), coupling_(std::move(coupling)), boxes_(std::move(boxes)) {
    if (costs_.empty()) throw DimensionError("a network needs at least one agent");
    if (const auto* qc = coupling_.quadratic()) {
      require_dimension(qc->Q.rows(), size(), "coupling Q rows");
      require_dimension(qc->Q.cols(), size(), "coupling Q cols");
      require_dimension(qc->q.size(), size(), "coupling q");
      const Scalar scale = 1 + qc->Q.cwiseAbs().maxCoeff();
      if ((qc->Q - qc->Q.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale) {
        throw DomainError("coupling Q must be symmetric");
      }
      Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(qc->Q, Eigen::EigenvaluesOnly);
      if (eig.eigenvalues().minCoeff() < Scalar(-1e-10) * scale) {
        throw DomainError("coupling Q must be positive semidefinite");
      }
    }
    if (boxes_) {
      require_dimension(static_cast<Index>(boxes_->size()), size(), "boxes");
      for (const auto& b : *boxes_) {
        if (!b.valid()) throw DomainError("box constraints must be finite with lower <= upper");
      }
    }
  }

  Index size() const { return static_cast<Index>(costs_.size()); }
  const std::vector<LocalCost<Scalar>>& costs() const { return costs_; }
  const LocalCost<Scalar>& cost(Index i) const { return costs_.at(static_cast<std::size_t>(i)); }
  const CouplingCost<Scalar>& coupling() const { return coupling_; }
  bool constrained() const { return boxes_.has_value(); }
  const std::optional<Boxes<Scalar>>& boxes() const { return boxes_; }

  const BoxConstraint<Scalar>& box(Index i) const {
    if (!boxes_) throw DomainError("problem has no box constraints");
    return boxes_->at(static_cast<std::size_t>(i));
  }

  /// Same local costs and boxes with a different coupling term.
  NetworkProblem with_coupling(CouplingCost<Scalar> coupling) const {
    return NetworkProblem(costs_, std::move(coupling), boxes_);
  }

  /// Same costs and coupling with the box constraints dropped.
  NetworkProblem without_boxes() const { return NetworkProblem(costs_, coupling_); }

  bool contains(const Vector<Scalar>& x, Scalar tol = 0) const {
    if (!boxes_) return true;
    for (Index i = 0; i < size(); ++i) {
      if (!box(i).contains(x(i), tol)) return false;
    }
    return true;
  }

 private:
  std::vector<LocalCost<Scalar>> costs_;
  CouplingCost<Scalar> coupling_;
  std::optional<Boxes<Scalar>> boxes_;
};

template <typename Scalar>
Scalar eval_objective(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x) {
  require_dimension(x.size(), p.size(), "eval_objective");
  Scalar total = 0;
  for (Index i = 0; i < p.size(); ++i) total += p.cost(i).value(x(i));
  return total + p.coupling().value(x);
}

template <typename Scalar>
Scalar grad_local(const NetworkProblem<Scalar>& p, Index i, Scalar xi) {
  if (i < 0 || i >= p.size()) throw std::out_of_range("agent index " + std::to_string(i) + " out of range");
  return p.cost(i).gradient(xi);
}

template <typename Scalar>
Scalar hess_local(const NetworkProblem<Scalar>& p, Index i, Scalar xi) {
  if (i < 0 || i >= p.size()) throw std::out_of_range("agent index " + std::to_string(i) + " out of range");
  return p.cost(i).hessian(xi);
}

/// Stacked local gradients (grad f_1(x_1), ..., grad f_n(x_n)).
template <typename Scalar>
Vector<Scalar> local_gradients(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x) {
  require_dimension(x.size(), p.size(), "local_gradients");
  Vector<Scalar> out(x.size());
  for (Index i = 0; i < x.size(); ++i) out(i) = p.cost(i).gradient(x(i));
  return out;
}

template <typename Scalar>
Vector<Scalar> grad_coupling(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x) {
  require_dimension(x.size(), p.size(), "grad_coupling");
  return p.coupling().gradient(x);
}

/// Full gradient of f + g.
template <typename Scalar>
Vector<Scalar> grad_objective(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x) {
  return local_gradients(p, x) + grad_coupling(p, x);
}

template <typename Scalar>
struct BoundEstimates {
  Scalar lipschitz_grad_g = 0;
  Scalar hessian_bound = 0;
  Boxes<Scalar> domain;
  bool lipschitz_analytic = false;
  bool hessian_analytic = false;
};

namespace detail {

template <typename Scalar>
std::vector<Scalar> grid(Scalar lo, Scalar hi, std::int64_t samples) {
  std::vector<Scalar> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  for (std::int64_t s = 0; s < samples; ++s) {
    pts.push_back(lo + (hi - lo) * static_cast<Scalar>(s) / static_cast<Scalar>(samples - 1));
  }
  return pts;
}

template <typename Scalar>
Scalar sampled_max(const std::function<Scalar(Scalar)>& fn, Scalar lo, Scalar hi, std::int64_t samples) {
  Scalar best = -std::numeric_limits<Scalar>::infinity();
  for (Scalar y : grid(lo, hi, samples)) {
    const Scalar v = fn(y);
    if (!std::isfinite(v)) throw NumericError("non-finite value while sampling a bound");
    best = std::max(best, v);
  }
  return best;
}

}  // namespace detail

/// Lipschitz bound of grad g and Hessian bound of the local costs over a
/// bounding box. The box is the caller's claim to contain every state the
/// flow visits (the initial sublevel set, or the feasible set). Quadratic
/// forms get exact values; everything else is sampled and inflated.
template <typename Scalar>
BoundEstimates<Scalar> estimate_bounds(const NetworkProblem<Scalar>& p, const Boxes<Scalar>& domain,
                                       std::int64_t samples = 64, Scalar inflation = Scalar(1.1)) {
  if (static_cast<Index>(domain.size()) != p.size()) throw DomainError("bounding box dimension mismatch");
  for (const auto& b : domain) {
    if (!b.valid()) throw DomainError("bounding box must be finite and nonempty");
  }
  if (samples < 2) throw DomainError("estimate_bounds needs at least two samples");
  if (!(inflation >= 1)) throw DomainError("inflation must be >= 1");

  BoundEstimates<Scalar> est;
  est.domain = domain;

  if (const auto* qc = p.coupling().quadratic()) {
    if (qc->Q.isZero(0)) {
      est.lipschitz_grad_g = 0;
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(qc->Q, Eigen::EigenvaluesOnly);
      est.lipschitz_grad_g = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), Scalar(0));
    }
    est.lipschitz_analytic = true;
  } else {
    // Jacobian of grad g is f0''(y) * 1 1^T with spectral norm n |f0''(y)|.
    const auto& ag = *p.coupling().aggregator();
    const auto n = static_cast<Scalar>(p.size());
    if (ag.f0.has_constant_hessian()) {
      est.lipschitz_grad_g = n * std::abs(ag.f0.hessian(Scalar(0)));
      est.lipschitz_analytic = true;
    } else {
      Scalar sum_lo = 0;
      Scalar sum_hi = 0;
      for (const auto& b : domain) {
        sum_lo += b.lower;
        sum_hi += b.upper;
      }
      const auto curvature = [&ag](Scalar y) { return std::abs(ag.f0.hessian(y)); };
      est.lipschitz_grad_g = inflation * n * detail::sampled_max<Scalar>(curvature, ag.c - sum_hi, ag.c - sum_lo, samples);
    }
  }

  est.hessian_analytic = true;
  Scalar h = 0;
  for (Index i = 0; i < p.size(); ++i) {
    const auto& cost = p.cost(i);
    if (cost.has_constant_hessian()) {
      h = std::max(h, cost.hessian(Scalar(0)));
    } else {
      const auto& box = domain[static_cast<std::size_t>(i)];
      const auto curvature = [&cost](Scalar y) { return cost.hessian(y); };
      h = std::max(h, inflation * detail::sampled_max<Scalar>(curvature, box.lower, box.upper, samples));
      est.hessian_analytic = false;
    }
  }
  est.hessian_bound = std::max(h, Scalar(0));
  return est;
}

/// Fixed step of the projected-gradient residual used to certify the oracle.
inline constexpr double kOracleResidualStep = 1.0;

/// ||Pi_X(x - step * grad F(x)) - x||, or ||grad F(x)|| * step when unconstrained.
template <typename Scalar>
Scalar stationarity_residual(const NetworkProblem<Scalar>& p, const Vector<Scalar>& x,
                             Scalar step = Scalar(kOracleResidualStep)) {
  Vector<Scalar> target = x - step * grad_objective(p, x);
  if (p.boxes()) target = project_all(*p.boxes(), target);
  return (target - x).norm();
}

namespace detail {

/// F(x) = 1/2 x^T A x + b^T x + const when every term is at most quadratic.
template <typename Scalar>
std::optional<std::pair<Matrix<Scalar>, Vector<Scalar>>> quadratic_form(const NetworkProblem<Scalar>& p) {
  const Index n = p.size();
  Matrix<Scalar> A = Matrix<Scalar>::Zero(n, n);
  Vector<Scalar> b = Vector<Scalar>::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const auto* poly = p.cost(i).polynomial();
    if (poly == nullptr || poly->degree() > 2) return std::nullopt;
    A(i, i) += 2 * poly->coefficient(2);
    b(i) += poly->coefficient(1);
  }
  if (const auto* qc = p.coupling().quadratic()) {
    A += qc->Q;
    b += qc->q;
  } else {
    const auto& ag = *p.coupling().aggregator();
    const auto* poly = ag.f0.polynomial();
    if (poly == nullptr || poly->degree() > 2) return std::nullopt;
    const Scalar d1 = poly->coefficient(1);
    const Scalar d2 = poly->coefficient(2);
    A.array() += 2 * d2;
    b.array() += -2 * ag.c * d2 - d1;
  }
  return std::make_pair(std::move(A), std::move(b));
}

/// Solves the box QP restricted to a guessed active set; returns nullopt if
/// the guess is not KKT-consistent.
template <typename Scalar>
std::optional<Vector<Scalar>> polish_active_set(const Matrix<Scalar>& A, const Vector<Scalar>& b,
                                                const Boxes<Scalar>& boxes, const Vector<Scalar>& guess) {
  const Index n = A.rows();
  Vector<Scalar> x = project_all(boxes, guess);
  for (int round = 0; round < 2 * static_cast<int>(n) + 2; ++round) {
    const Vector<Scalar> grad = A * x + b;
    // -1 pinned low, +1 pinned high, 0 free
    std::vector<int> state(static_cast<std::size_t>(n), 0);
    std::vector<Index> free;
    for (Index i = 0; i < n; ++i) {
      const auto& box = boxes[static_cast<std::size_t>(i)];
      const Scalar slack = Scalar(1e-9) * (1 + std::abs(box.upper - box.lower));
      if (x(i) <= box.lower + slack && grad(i) >= 0) {
        state[static_cast<std::size_t>(i)] = -1;
      } else if (x(i) >= box.upper - slack && grad(i) <= 0) {
        state[static_cast<std::size_t>(i)] = 1;
      } else {
        free.push_back(i);
      }
    }
    Vector<Scalar> candidate = x;
    for (Index i = 0; i < n; ++i) {
      const int s = state[static_cast<std::size_t>(i)];
      if (s != 0) candidate(i) = s < 0 ? boxes[static_cast<std::size_t>(i)].lower : boxes[static_cast<std::size_t>(i)].upper;
    }
    if (!free.empty()) {
      const auto m = static_cast<Index>(free.size());
      Matrix<Scalar> Aff(m, m);
      Vector<Scalar> rhs(m);
      for (Index r = 0; r < m; ++r) {
        rhs(r) = -b(free[static_cast<std::size_t>(r)]);
        for (Index j = 0; j < n; ++j) {
          if (state[static_cast<std::size_t>(j)] != 0) rhs(r) -= A(free[static_cast<std::size_t>(r)], j) * candidate(j);
        }
        for (Index c = 0; c < m; ++c) Aff(r, c) = A(free[static_cast<std::size_t>(r)], free[static_cast<std::size_t>(c)]);
      }
      Eigen::LDLT<Matrix<Scalar>> ldlt(Aff);
      if (ldlt.info() != Eigen::Success) return std::nullopt;
      const Vector<Scalar> xf = ldlt.solve(rhs);
      for (Index r = 0; r < m; ++r) candidate(free[static_cast<std::size_t>(r)]) = xf(r);
    }
    const Vector<Scalar> projected = project_all(boxes, candidate);
    if ((projected - candidate).norm() <= Scalar(1e-12) * (1 + candidate.norm())) return candidate;
    if ((projected - x).norm() == 0) return std::nullopt;
    x = projected;
  }
  return std::nullopt;
}

}  // namespace detail

/// Independent high-accuracy minimizer of f + g over X. Direct linear solve
/// for quadratic problems (with an active-set polish when boxed); projected
/// gradient with a Lipschitz backtracking step otherwise.
template <typename Scalar>
Vector<Scalar> reference_optimizer(const NetworkProblem<Scalar>& p, Scalar tol = Scalar(1e-10),
                                   std::int64_t max_iterations = 2'000'000) {
  const Index n = p.size();
  const auto form = detail::quadratic_form(p);
  if (form && !p.boxes()) {
    Eigen::LDLT<Matrix<Scalar>> ldlt(form->first);
    if (ldlt.info() == Eigen::Success) {
      Vector<Scalar> x = ldlt.solve(-form->second);
      if (x.allFinite() && stationarity_residual(p, x) <= tol) return x;
    }
  }

  Vector<Scalar> x = Vector<Scalar>::Zero(n);
  if (p.boxes()) x = project_all(*p.boxes(), x);
  Scalar step = 1;
  Vector<Scalar> grad = grad_objective(p, x);
  for (std::int64_t it = 0; it < max_iterations; ++it) {
    if (stationarity_residual(p, x) <= tol) break;
    Vector<Scalar> next;
    Vector<Scalar> next_grad;
    for (;;) {
      next = x - step * grad;
      if (p.boxes()) next = project_all(*p.boxes(), next);
      next_grad = grad_objective(p, next);
      const Scalar moved = (next - x).norm();
      if (!next_grad.allFinite()) {
        step *= Scalar(0.5);
      } else if (step * (next_grad - grad).norm() <= moved || moved == 0) {
        break;
      } else {
        step *= Scalar(0.5);
      }
      if (step < Scalar(1e-30)) throw NumericError("reference_optimizer: step size collapsed");
    }
    x = std::move(next);
    grad = std::move(next_grad);
    step *= 2;
  }

  if (form && p.boxes()) {
    if (auto polished = detail::polish_active_set(form->first, form->second, *p.boxes(), x)) {
      if (stationarity_residual(p, *polished) <= stationarity_residual(p, x)) x = *polished;
    }
  }
  const Scalar res = stationarity_residual(p, x);
  if (!(res <= tol)) {
    throw NumericError("reference_optimizer did not converge: residual " + std::to_string(static_cast<double>(res)));
  }
  return x;
}

}  // namespace etcoord
