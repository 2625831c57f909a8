#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "etcoord/trigger.hpp"
#include "test_support.hpp"

using namespace etcoord;
using namespace etcoord::testing;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

TriggerParams<double> params(double sigma, double lambda, double lipschitz, double hessian) {
  TriggerParams<double> p;
  p.sigma = sigma;
  p.lambda = lambda;
  p.lipschitz = lipschitz;
  p.hessian_bound = hessian;
  return p;
}

}  // namespace

TEST_CASE("check_unconstrained") {
  const auto prm = params(0.9, 0.2, 1.0, 1.0);
  // held + grad = z
  CHECK_FALSE(check_unconstrained(0.3, 0.3, 0.25, 0.25, prm));
  CHECK_FALSE(check_unconstrained(0.05, 0.0, 0.05, 0.05, prm));  // 0.05 < 0.09
  CHECK(check_unconstrained(0.10, 0.0, 0.05, 0.05, prm));        // 0.10 >= 0.09
  SUBCASE("zero residual never requests") {
    CHECK_FALSE(check_unconstrained(5.0, 0.0, 1.0, -1.0, prm));
    CHECK_FALSE(check_unconstrained(5.0, 0.0, 0.5e-12, 0.0, prm));
  }
}

TEST_CASE("check_constrained") {
  const BoxConstraint<double> wide{-10, 10};
  SUBCASE("anchor point") {
    CHECK_FALSE(check_constrained(0.4, 0.4, 0.3, 0.2, wide, params(0.9, 0.2, 5.0, 1.0)));
  }
  SUBCASE("agent pinned at its bound never triggers") {
    // inner target 1 - 0.2 * (-2) = 1.4, clamped to 1
    const BoxConstraint<double> box{0, 1};
    for (double anchor : {0.0, 0.3, 0.9}) {
      CHECK_FALSE(check_constrained(1.0, anchor, -1.0, -1.0, box, params(0.9, 0.2, 5.0, 1.0)));
    }
  }
  SUBCASE("direct arithmetic") {
    // z-bar = lambda * 0.5 = 0.1; lambda L drift = 0.2 * 5 * 0.1 = 0.1 >= 0.09
    CHECK(check_constrained(0.1, 0.0, -0.25, -0.25, wide, params(0.9, 0.2, 5.0, 1.0)));
    CHECK_FALSE(check_constrained(0.08, 0.0, -0.25, -0.25, wide, params(0.9, 0.2, 5.0, 1.0)));
  }
}

TEST_CASE("miet_unconstrained") {
  SUBCASE("closed form against 50-digit evaluation") {
    const Big lh = Big("0.2") * Big(1);
    const Big oracle = log(Big(1) + Big("0.9") * lh / Big(1)) / lh;
    const double got = miet_unconstrained(params(0.9, 0.2, 1.0, 1.0));
    CHECK(std::abs(got - oracle.convert_to<double>()) / oracle.convert_to<double>() <= 1e-12);
    CHECK(got == doctest::Approx(0.82756).epsilon(1e-5));
  }
  SUBCASE("strictly decreasing in the lipschitz bound") {
    double prev = std::numeric_limits<double>::infinity();
    for (double L = 0.1; L < 50; L *= 1.3) {
      const double tau = miet_unconstrained(params(0.9, 0.2, L, 2.0));
      CHECK(tau < prev);
      prev = tau;
    }
  }
  SUBCASE("vanishes with sigma") {
    CHECK(miet_unconstrained(params(1e-9, 0.2, 1.0, 1.0)) < 1e-8);
    CHECK(miet_unconstrained(params(1e-9, 0.2, 1.0, 1.0)) > 0);
  }
  SUBCASE("affine limit") {
    CHECK(miet_unconstrained_affine(params(0.9, 0.2, 2.0, 0.0)) == doctest::Approx(0.45));
    CHECK(miet_unconstrained(params(0.9, 0.2, 2.0, 1e-9)) == doctest::Approx(0.45).epsilon(1e-8));
  }
  SUBCASE("degenerate inputs") {
    CHECK_THROWS_AS(miet_unconstrained(params(0.9, 0.2, 1.0, 0.0)), PreconditionError);
    CHECK_THROWS_AS(miet_unconstrained(params(0.9, 0.2, 0.0, 1.0)), PreconditionError);
    CHECK_THROWS_AS(miet_unconstrained_affine(params(0.9, 0.2, 0.0, 0.0)), PreconditionError);
  }
}

TEST_CASE("miet_constrained") {
  const auto oracle = [](const char* sigma, const char* lambda, const char* L) {
    return log(Big(sigma) / (Big(lambda) * Big(L)) + Big(1)).convert_to<double>();
  };
  const double a = miet_constrained(params(0.9, 0.2, 1.0, 1.0));
  CHECK(std::abs(a - oracle("0.9", "0.2", "1")) / a <= 1e-12);
  CHECK(a == doctest::Approx(1.70475).epsilon(1e-5));
  const double b = miet_constrained(params(0.9, 0.2, 5.0, 1.0));
  CHECK(std::abs(b - oracle("0.9", "0.2", "5")) / b <= 1e-12);
  CHECK(b == doctest::Approx(0.64185).epsilon(1e-5));
  // lambda == 1 / H is outside the strict precondition
  CHECK_THROWS_AS(miet_constrained(params(0.9, 0.2, 1.0, 5.0)), PreconditionError);
  CHECK_THROWS_AS(miet_constrained(params(0.9, 0.5, 1.0, 4.0)), PreconditionError);
  CHECK_NOTHROW(miet_constrained(params(0.9, 0.2, 1.0, 4.9)));
}

TEST_CASE("params validation") {
  CHECK_NOTHROW(params(0.9, 0.2, 1, 1).validate());
  CHECK_THROWS_AS(params(1.0, 0.2, 1, 1).validate(), DomainError);
  CHECK_THROWS_AS(params(0.0, 0.2, 1, 1).validate(), DomainError);
  CHECK_THROWS_AS(params(0.5, 0.0, 1, 1).validate(), DomainError);
  CHECK_THROWS_AS(params(0.5, 0.2, -1, 1).validate(), DomainError);
}

TEST_CASE("self_triggered_next") {
  const LocalCost<double> half_square = Polynomial<double>{0, 0, 0.5};
  SUBCASE("zero residual at the anchor never schedules") {
    const auto r = self_triggered_next(half_square, 1.0, -1.0, 0.0, nullptr, params(0.9, 0.2, 1.5, 1.0));
    CHECK(r.status == ScheduleStatus::Never);
    CHECK(std::isinf(r.time));
  }
  SUBCASE("scalar linear closed form") {
    // x' = -lambda (x + g): z(t) = z0 e^{-lambda t}, |x - x0| = |z0| (1 - e^{-lambda t}).
    // L (1 - e^{-lambda tau}) = sigma e^{-lambda tau}  =>  tau = ln((L + sigma) / L) / lambda.
    for (double L : {0.5, 1.5, 4.0}) {
      for (double g : {-1.0, 0.7}) {
        const double lambda = 0.2;
        const double sigma = 0.9;
        const double tau = std::log((L + sigma) / L) / lambda;
        const auto r = self_triggered_next(half_square, 0.0, g, 3.0, nullptr, params(sigma, lambda, L, 1.0));
        CHECK(r.status == ScheduleStatus::Crossing);
        CHECK(std::abs(r.time - (3.0 + tau)) <= 1e-6);
      }
    }
  }
  SUBCASE("projected variant agrees with a fine Euler oracle") {
    // x' = Pi_[0,0.5](x - lambda (x - 1)) - x, trigger lambda L |x| >= sigma |z-bar|
    const BoxConstraint<double> box{0, 0.5};
    const auto prm = params(0.9, 0.2, 2.0, 1.0);
    const auto r = self_triggered_next(half_square, 0.0, -1.0, 0.0, &box, prm);
    REQUIRE(r.status == ScheduleStatus::Crossing);
    double x = 0;
    double t = 0;
    const double dt = 1e-6;
    for (;;) {
      const double zbar = std::clamp(x - 0.2 * (x - 1.0), 0.0, 0.5) - x;
      if (0.2 * 2.0 * std::abs(x) >= 0.9 * std::abs(zbar)) break;
      x += dt * zbar;
      t += dt;
    }
    CHECK(std::abs(r.time - t) <= 1e-4);
  }
  SUBCASE("horizon truncation") {
    IntegratorConfig cfg;
    cfg.horizon = 0.5;
    const auto r = self_triggered_next(half_square, 0.0, -1.0, 1.0, nullptr, params(0.9, 0.2, 1.5, 1.0), cfg);
    CHECK(r.status == ScheduleStatus::Truncated);
    CHECK(r.time == doctest::Approx(1.5));
  }
}

TEST_CASE("evaluate_requests") {
  const Problem p = two_agent_quadratic();
  const auto snap = make_snapshot(p, vec({0, 0}), 0.0, 0);
  const auto prm = params(0.9, 0.2, 2.0, 1.0);
  SUBCASE("continuous flows never request") {
    const auto r = evaluate_requests(p, vec({3, 3}), snap, prm, FlowKind::ContinuousUnconstrained);
    CHECK(std::none_of(r.begin(), r.end(), [](bool b) { return b; }));
  }
  SUBCASE("per-agent decisions") {
    // anchor (0, 0): held grad = (0, 0). At x = (0.5, 0): z = (-0.5, -2), drift (0.5, 0)
    const auto r = evaluate_requests(p, vec({0.5, 0}), snap, prm, FlowKind::EventUnconstrained);
    CHECK(r == std::vector<bool>{true, false});
  }
}
