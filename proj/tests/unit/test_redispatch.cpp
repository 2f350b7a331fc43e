#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cscopf/case_io.hpp"
#include "cscopf/cutset.hpp"
#include "cscopf/dc_sensitivity.hpp"
#include "cscopf/errors.hpp"
#include "cscopf/redispatch.hpp"
#include "random_networks.hpp"

using namespace cscopf;
using cscopf::testing::data_file;

namespace {

Generator gen(GeneratorId id, BusId bus, double p, double pmax, double b, double c = 0.0) {
  Generator g;
  g.id = id;
  g.bus = bus;
  g.p0_mw = p;
  g.p_max_mw = pmax;
  g.cost_b = b;
  g.cost_c = c;
  return g;
}

Network two_bus(double p) {
  std::vector<Bus> buses{{1, false}, {2, true}};
  return Network(buses, {{1, 1, 2, 0.1, 100.0, true}}, {gen(1, 1, p, 200.0, 10.0), gen(2, 2, 0.0, 200.0, 30.0)},
                 {{1, 2, p, 0.0, p, 500.0}});
}

std::size_t count_tag(const QuadraticProgram& qp, ConstraintTag tag) {
  return static_cast<std::size_t>(std::count_if(qp.constraints.begin(), qp.constraints.end(),
                                                [&](const LinearConstraint& c) { return c.tag == tag; }));
}

RealtimeOptions fixture_options() {
  RealtimeOptions opt;
  opt.assessment.dt = 1e-3;
  opt.assessment.t_end = 5.0;
  opt.assessment.sime.tau = 0.786;
  return opt;
}

}  // namespace

TEST_CASE("dispatch cost of a single generator") {
  std::vector<Bus> buses{{1, true}};
  Generator g = gen(1, 1, 4.0, 10.0, 2.0, 3.0);
  g.cost_a = 1.0;
  const Network net(buses, {}, {g}, {{1, 1, 4.0, 0.0, 4.0, 500.0}});
  const auto zero = dispatch_cost(net, std::vector<double>{0.0});
  CHECK(zero.delta == 0.0);
  CHECK(zero.total == doctest::Approx(1.0 + 8.0 + 48.0));
  const auto one = dispatch_cost(net, std::vector<double>{1.0});
  CHECK(one.delta == doctest::Approx(29.0));
  CHECK(one.total - one.base == doctest::Approx(one.delta));
}

TEST_CASE("cost identity on random vectors") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto net = cscopf::testing::random_network(rng, 6, 3);
    Eigen::VectorXd dp(static_cast<Eigen::Index>(net.generators().size()));
    for (auto& v : dp) v = u(rng);
    const auto c = dispatch_cost(net, dp);
    CHECK(std::abs(c.total - c.base - c.delta) < 1e-9 * std::max(1.0, std::abs(c.total)));
  }
}

TEST_CASE("base qp has only bounds, flow and balance rows") {
  const auto net = two_bus(80.0);
  const auto sens = compute_sensitivities(net);
  const auto qp = build_qp(net, sens, {}, std::nullopt, {}, {});
  CHECK(qp.variables() == 3);
  CHECK(count_tag(qp, ConstraintTag::balance) == 1);
  CHECK(count_tag(qp, ConstraintTag::branch_flow) == 2);
  CHECK(qp.constraints.size() == 3);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  for (const auto& c : qp.constraints) CHECK(c.violation(zero) == 0.0);
  CHECK((zero.array() >= qp.lower.array()).all());
  CHECK((zero.array() <= qp.upper.array()).all());
  CHECK(qp.linear(0) == doctest::Approx(10.0));
  CHECK(qp.linear(2) == doctest::Approx(500.0));
}

TEST_CASE("one cut-set row with the transfer margin as rhs") {
  const auto net = two_bus(120.0);
  const auto sens = compute_sensitivities(net);
  const auto f = base_flows_mw(net);
  const auto cuts = find_saturated_cutsets(net, {f.data(), f.data() + f.size()}, {1.0});
  REQUIRE(cuts.size() == 1);
  const auto qp = build_qp(net, sens, cuts, std::nullopt, {}, {});
  REQUIRE(count_tag(qp, ConstraintTag::cutset) == 1);
  const auto it = std::find_if(qp.constraints.begin(), qp.constraints.end(),
                               [](const LinearConstraint& c) { return c.tag == ConstraintTag::cutset; });
  CHECK(it->rhs == doctest::Approx(-20.0));
}

TEST_CASE("stability row needs critical machines") {
  const auto net = two_bus(80.0);
  const auto sens = compute_sensitivities(net);
  CHECK_THROWS_AS(build_qp(net, sens, {}, 10.0, {}, {}), InputError);
  const std::vector<GeneratorId> cm{1};
  const auto qp = build_qp(net, sens, {}, 10.0, cm, {});
  REQUIRE(count_tag(qp, ConstraintTag::stability) == 1);
  const auto& row = qp.constraints.back();
  CHECK(row.coeffs(0) == 1.0);
  CHECK(row.coeffs(1) == 0.0);
  CHECK(row.rhs == doctest::Approx(-10.0));
}

TEST_CASE("bridge outage without island handling is an error") {
  const auto net = two_bus(80.0);
  const auto sens = compute_sensitivities(net);
  const std::vector<BranchId> outages{1};
  CHECK_THROWS(build_qp(net, sens, {}, std::nullopt, {}, outages));
  BuildQpOptions opt;
  opt.allow_bridge_outages = true;
  BuildQpReport report;
  const auto qp = build_qp(net, sens, {}, std::nullopt, {}, outages, opt, {}, &report);
  CHECK(report.skipped_bridge_outages == outages);
  CHECK(count_tag(qp, ConstraintTag::n_minus_1) == 0);
}

TEST_CASE("forced shift between two quadratic generators") {
  QuadraticProgram qp;
  qp.quad = Eigen::Vector2d(1.0, 1.0);
  qp.linear = Eigen::Vector2d::Zero();
  qp.lower = Eigen::Vector2d(-50.0, -50.0);
  qp.upper = Eigen::Vector2d(50.0, 50.0);
  LinearConstraint balance;
  balance.coeffs = Eigen::Vector2d(1.0, 1.0);
  balance.sense = Sense::equal;
  balance.tag = ConstraintTag::balance;
  LinearConstraint cap;
  cap.coeffs = Eigen::Vector2d(1.0, 0.0);
  cap.rhs = -10.0;
  qp.constraints = {balance, cap};
  const auto sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(-10.0).epsilon(1e-6));
  CHECK(sol.x(1) == doctest::Approx(10.0).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(200.0).epsilon(1e-6));

  qp.lower(0) = -5.0;
  const auto bad = solve_qp(qp);
  CHECK(bad.status == QpStatus::infeasible);
  CHECK_FALSE(bad.infeasible_tags.empty());
}

TEST_CASE("optimal redispatch respects every row by independent re-evaluation") {
  std::mt19937_64 rng(77);
  int checked = 0;
  for (int trial = 0; trial < 12; ++trial) {
    auto net = cscopf::testing::random_network(rng, 7, 4);
    auto branches = net.branches();
    const auto f0 = base_flows_mw(net);
    for (std::size_t k = 0; k < branches.size(); ++k) {
      branches[k].flow_limit_mw = std::max(5.0, 0.8 * std::abs(f0(static_cast<Eigen::Index>(k))));
    }
    net = net.with_branches(branches);
    const auto sens = compute_sensitivities(net);
    std::vector<BranchId> outages;
    for (const auto& b : net.branches()) {
      if (!sens.bridge[net.branch_index(b.id)] && outages.size() < 2) outages.push_back(b.id);
    }
    const auto qp = build_qp(net, sens, {}, std::nullopt, {}, outages);
    const auto sol = solve_redispatch(net, qp);
    REQUIRE(sol.status == QpStatus::optimal);
    ++checked;

    const auto after = apply_redispatch(net, sol.delta_p, sol.delta_l);
    CHECK(std::abs(after.total_generation_mw() - after.total_load_mw()) < 1e-6);
    const double tol = 1e-3;
    const auto f = base_flows_mw(after);
    for (std::size_t k = 0; k < branches.size(); ++k) {
      CHECK(std::abs(f(static_cast<Eigen::Index>(k))) <= branches[k].flow_limit_mw + tol);
    }
    for (BranchId a : outages) {
      auto out = after.branches();
      out[after.branch_index(a)].in_service = false;
      const auto post = base_flows_mw(after.with_branches(out));
      for (std::size_t k = 0; k < branches.size(); ++k) {
        if (branches[k].id == a) continue;
        CHECK(std::abs(post(static_cast<Eigen::Index>(k))) <= branches[k].flow_limit_mw + tol);
      }
    }
  }
  CHECK(checked == 12);
}

TEST_CASE("benign contingency needs no redispatch") {
  const auto net = cscopf::testing::smib_network(80.0, 4.0, 0.25, 0.4, 1e3);
  Contingency c;
  c.id = "benign";
  c.faults.events.push_back({0.1, FaultEventKind::apply_fault, 1, 0.5});
  c.faults.events.push_back({0.15, FaultEventKind::clear_fault, 1, 0.5});
  RealtimeOptions opt;
  opt.assessment.t_end = 2.0;
  for (Mode mode : {Mode::rtsced, Mode::tscopf}) {
    CAPTURE(to_string(mode));
    const auto r = run_cscopf(net, c, nullptr, mode, opt);
    CHECK(r.solution.status == QpStatus::optimal);
    CHECK(r.solution.iterations.size() == 1);
    CHECK(r.solution.delta_p.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(r.solution.load_shed_mw() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.final_check.stable);
    CHECK(r.final_check.secure());
  }
}

TEST_CASE("modes parse and print") {
  for (Mode m : {Mode::cscopf, Mode::rtsced, Mode::tscopf}) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_mode("scopf"), InputError);
}

TEST_CASE("wildfire fixture: in-loop SIME stabilizes but leaves the corridor saturated") {
  const auto net = load_case(data_file("wildfire9.json"));
  const auto c = contingency_from_json(nlohmann::json::parse(read_text_file(data_file("wildfire9_contingency.json"))));
  const auto opt = fixture_options();

  const auto rt = run_cscopf(net, c, nullptr, Mode::rtsced, opt);
  CHECK(rt.solution.status == QpStatus::optimal);
  CHECK(rt.final_check.tsi < 0.0);

  const auto ts = run_cscopf(net, c, nullptr, Mode::tscopf, opt);
  REQUIRE(ts.solution.status == QpStatus::optimal);
  CHECK(ts.final_check.tsi > 0.0);
  CHECK_FALSE(ts.final_check.saturated_cutsets.empty());
  CHECK(rt.solution.objective_value <= ts.solution.objective_value + 1e-6);

  std::size_t prev = 0;
  std::set<std::string> seen;
  for (const auto& it : ts.solution.iterations) {
    CHECK(it.phi_size >= prev);
    prev = it.phi_size;
    for (const auto& p : it.added) CHECK(seen.insert(p).second);
  }
  CHECK(ts.solution.iterations.size() <= static_cast<std::size_t>(opt.max_iterations));
  std::set<std::string> phi;
  for (const auto& row : ts.solution.phi) CHECK(phi.insert(row.provenance).second);
}
