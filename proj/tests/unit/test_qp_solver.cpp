#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cscopf/errors.hpp"
#include "cscopf/qp_solver.hpp"
#include "random_networks.hpp"

using namespace cscopf;

namespace {

LinearConstraint row(std::vector<double> c, Sense sense, double rhs, ConstraintTag tag = ConstraintTag::branch_flow) {
  LinearConstraint r;
  r.tag = tag;
  r.coeffs = Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  r.sense = sense;
  r.rhs = rhs;
  return r;
}

QuadraticProgram box_qp(int n, double lo, double hi) {
  QuadraticProgram qp;
  qp.quad = Eigen::VectorXd::Zero(n);
  qp.linear = Eigen::VectorXd::Zero(n);
  qp.lower = Eigen::VectorXd::Constant(n, lo);
  qp.upper = Eigen::VectorXd::Constant(n, hi);
  return qp;
}

}  // namespace

TEST_CASE("unconstrained separable minimum") {
  auto qp = box_qp(2, -10.0, 10.0);
  qp.quad << 1.0, 2.0;
  qp.linear << -2.0, 4.0;
  const auto sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.x(1) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(-3.0).epsilon(1e-6));
}

TEST_CASE("equality constrained dispatch") {
  // min x^2 + y^2 s.t. x + y = 2 -> (1, 1)
  auto qp = box_qp(2, -5.0, 5.0);
  qp.quad << 1.0, 1.0;
  qp.constraints.push_back(row({1.0, 1.0}, Sense::equal, 2.0, ConstraintTag::balance));
  const auto sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.x(1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.kkt.primal <= 1e-6);
  CHECK(sol.kkt.dual <= 1e-6);
  CHECK(sol.kkt.complementarity <= 1e-6);
}

TEST_CASE("linear program at a vertex") {
  // min -x - y s.t. x + 2y <= 4, bounds [0, 3]
  auto qp = box_qp(2, 0.0, 3.0);
  qp.linear << -1.0, -1.0;
  qp.constraints.push_back(row({1.0, 2.0}, Sense::less_equal, 4.0));
  const auto sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(sol.x(1) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("infeasible problem reports the conflicting rows") {
  auto qp = box_qp(2, 0.0, 1.0);
  qp.quad << 1.0, 1.0;
  qp.constraints.push_back(row({1.0, 1.0}, Sense::greater_equal, 3.0, ConstraintTag::cutset));
  qp.constraints.push_back(row({1.0, -1.0}, Sense::less_equal, 0.5));
  const auto sol = solve_qp(qp);
  CHECK(sol.status == QpStatus::infeasible);
  CHECK(std::find(sol.infeasible_tags.begin(), sol.infeasible_tags.end(), "cutset") != sol.infeasible_tags.end());
}

TEST_CASE("validation rejects malformed problems") {
  auto qp = box_qp(2, 0.0, 1.0);
  qp.quad << -1.0, 1.0;
  CHECK_THROWS_AS(solve_qp(qp), InputError);
  qp.quad << 1.0, 1.0;
  qp.lower(0) = 2.0;
  CHECK_THROWS_AS(solve_qp(qp), InputError);
  qp.lower(0) = -std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve_qp(qp), InputError);
}

TEST_CASE("warm start gives the same optimum and is deterministic") {
  auto qp = box_qp(3, -2.0, 2.0);
  qp.quad << 0.5, 1.0, 2.0;
  qp.linear << 1.0, -1.0, 0.5;
  qp.constraints.push_back(row({1.0, 1.0, 1.0}, Sense::equal, 0.0));
  qp.constraints.push_back(row({1.0, 0.0, -1.0}, Sense::less_equal, -0.5));
  const auto a = solve_qp(qp);
  const auto b = solve_qp(qp);
  CHECK(a.x == b.x);
  const auto c = solve_qp(qp, {}, &a.x);
  CHECK((c.x - a.x).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(c.iterations <= a.iterations);
}

TEST_CASE("kkt residuals of a known optimum") {
  auto qp = box_qp(1, -1.0, 1.0);
  qp.quad << 1.0;
  qp.linear << -4.0;
  // optimum at the upper bound x = 1 with bound multiplier 2
  Eigen::VectorXd x(1), y(1);
  x << 1.0;
  y << 2.0;
  const auto k = kkt_residuals(qp, x, y);
  CHECK(k.primal == doctest::Approx(0.0));
  CHECK(k.dual == doctest::Approx(0.0));
  CHECK(k.complementarity == doctest::Approx(0.0));
}

TEST_CASE("random small problems against grid search") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 2;
    auto qp = box_qp(n, -10.0, 10.0);
    for (int i = 0; i < n; ++i) {
      qp.quad(i) = 0.05 + 0.5 * std::abs(u(rng));
      qp.linear(i) = 5.0 * u(rng);
    }
    for (int r = 0; r < 2; ++r) {
      std::vector<double> c(static_cast<std::size_t>(n));
      for (auto& v : c) v = u(rng);
      qp.constraints.push_back(row(c, Sense::less_equal, 2.0 * u(rng) + 1.0));
    }
    const auto sol = solve_qp(qp);
    const auto oracle = cscopf::testing::grid_search_qp(qp);
    REQUIRE(oracle.size() == n);
    REQUIRE(sol.status == QpStatus::optimal);
    ++solved;
    CHECK((sol.x - oracle).cwiseAbs().maxCoeff() < 0.05);
    CHECK(sol.kkt.primal <= 1e-6);
    CHECK(sol.kkt.dual <= 1e-6);
    CHECK(sol.kkt.complementarity <= 1e-6);
  }
  CHECK(solved == 20);
}
