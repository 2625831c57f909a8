#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "etcoord/random.hpp"
#include "etcoord/simulator.hpp"

namespace etcoord {

/// Five-generator dispatch against a substation cost f0 of the net injection
/// x0 = c - sum_i x_i. Generator costs a_i x^2 + b_i x.
template <typename Scalar>
struct PowerScenario {
  std::vector<Scalar> capacities{Scalar(0.7), Scalar(1.0), Scalar(0.8), Scalar(0.5), Scalar(0.3)};  // MW
  std::vector<Scalar> quadratic_coeffs{Scalar(1.0), Scalar(0.5), Scalar(0.8), Scalar(1.5), Scalar(2.0)};
  std::vector<Scalar> linear_coeffs{Scalar(0.1), Scalar(0.2), Scalar(0.3), Scalar(0.4), Scalar(0.5)};
  Polynomial<Scalar> substation_cost{Scalar(0), Scalar(1), Scalar(2)};  // 2 y^2 + y
  Scalar base_load = 2;           // MW
  Scalar reactive_demand = 1;     // MVAR, metadata only
  std::vector<Disturbance<Scalar>> load_steps{{Scalar(40), Scalar(1)}};
  bool with_capacities = true;
};

template <typename Scalar>
struct PowerBuild {
  NetworkProblem<Scalar> problem;
  std::vector<Disturbance<Scalar>> disturbances;
  Vector<Scalar> initial_state;
};

template <typename Scalar>
PowerBuild<Scalar> build_power(const PowerScenario<Scalar>& sc) {
  const std::size_t n = sc.capacities.size();
  if (n == 0 || sc.quadratic_coeffs.size() != n || sc.linear_coeffs.size() != n) {
    throw DimensionError("power scenario coefficient lists must match the generator count");
  }
  if (!std::isfinite(sc.base_load)) throw DomainError("base load must be finite");
  std::vector<LocalCost<Scalar>> costs;
  Boxes<Scalar> boxes;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sc.capacities[i] > 0) || !std::isfinite(sc.capacities[i])) {
      throw DomainError("generator capacities must be positive");
    }
    if (sc.quadratic_coeffs[i] < 0) throw DomainError("generator costs must be convex");
    costs.emplace_back(Polynomial<Scalar>{Scalar(0), sc.linear_coeffs[i], sc.quadratic_coeffs[i]});
    boxes.push_back({Scalar(0), sc.capacities[i]});
  }
  AggregatorCoupling<Scalar> coupling{LocalCost<Scalar>(sc.substation_cost), sc.base_load};
  std::optional<Boxes<Scalar>> maybe_boxes;
  if (sc.with_capacities) maybe_boxes = std::move(boxes);
  NetworkProblem<Scalar> problem(std::move(costs), CouplingCost<Scalar>(std::move(coupling)), std::move(maybe_boxes));
  return {std::move(problem), sc.load_steps, Vector<Scalar>::Zero(static_cast<Index>(n))};
}

/// Random convex quadratic instance: f_i = a_i x^2 + b_i x, g = 1/2 x^T Q x + q^T x
/// with Q = M^T M. Exact bounds: L = lambda_max(Q), H = max 2 a_i.
template <typename Scalar>
struct QuadraticInstance {
  NetworkProblem<Scalar> problem;
  Vector<Scalar> initial_state;
  std::uint64_t seed = 0;
};

template <typename Scalar>
QuadraticInstance<Scalar> build_quadratic(Index n, std::uint64_t seed, bool with_boxes) {
  if (n < 1) throw DimensionError("build_quadratic needs n >= 1");
  Rng rng(seed);
  const auto draw = [&rng](double lo, double hi) { return static_cast<Scalar>(uniform(rng, lo, hi)); };

  std::vector<LocalCost<Scalar>> costs;
  for (Index i = 0; i < n; ++i) {
    const Scalar a = draw(0.5, 2.0);
    const Scalar b = draw(-1.0, 1.0);
    costs.emplace_back(Polynomial<Scalar>{Scalar(0), b, a});
  }
  Matrix<Scalar> M(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < n; ++c) M(r, c) = draw(-scale, scale);
  }
  Matrix<Scalar> Q = M.transpose() * M;
  Q = (Q + Q.transpose()) / 2;
  Vector<Scalar> q(n);
  for (Index i = 0; i < n; ++i) q(i) = draw(-0.5, 0.5);

  std::optional<Boxes<Scalar>> boxes;
  Vector<Scalar> x0(n);
  if (with_boxes) {
    boxes.emplace();
    for (Index i = 0; i < n; ++i) {
      const Scalar lo = draw(-1.0, 0.0);
      const Scalar hi = lo + draw(0.3, 1.2);
      boxes->push_back({lo, hi});
      x0(i) = draw(static_cast<double>(lo), static_cast<double>(hi));
    }
  } else {
    for (Index i = 0; i < n; ++i) x0(i) = draw(-2.0, 2.0);
  }
  NetworkProblem<Scalar> problem(std::move(costs), QuadraticCoupling<Scalar>{std::move(Q), std::move(q)},
                                 std::move(boxes));
  return {std::move(problem), std::move(x0), seed};
}

}  // namespace etcoord
