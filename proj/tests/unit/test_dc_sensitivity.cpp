#include <doctest.h>

#include <cmath>

#include "cscopf/dc_sensitivity.hpp"
#include "cscopf/errors.hpp"
#include "random_networks.hpp"

using namespace cscopf;

namespace {

Generator gen(GeneratorId id, BusId bus, double p) {
  Generator g;
  g.id = id;
  g.bus = bus;
  g.p0_mw = p;
  g.p_max_mw = 2.0 * p + 1.0;
  return g;
}

Network two_bus(BusId ref) {
  std::vector<Bus> buses{{1, ref == 1}, {2, ref == 2}};
  return Network(buses, {{1, 1, 2, 0.1, 100.0, true}}, {gen(1, 1, 100.0)}, {{1, 2, 100.0, 0.0, 100.0, 100.0}});
}

Network ring3(BusId ref) {
  std::vector<Bus> buses{{1, ref == 1}, {2, ref == 2}, {3, ref == 3}};
  std::vector<Branch> br{{1, 1, 2, 0.1, 100.0, true}, {2, 2, 3, 0.1, 100.0, true}, {3, 1, 3, 0.1, 100.0, true}};
  return Network(buses, br, {gen(1, 1, 90.0)}, {{1, 2, 90.0, 0.0, 90.0, 100.0}});
}

}  // namespace

TEST_CASE("single path power flow") {
  const auto net = two_bus(2);
  const std::vector<double> inj{100.0, -100.0};
  const auto r = solve_dc_power_flow(net, inj);
  CHECK(r.flows_mw(0) == doctest::Approx(100.0));
  CHECK(r.angles_rad(1) == 0.0);
  CHECK(r.angles_rad(0) == doctest::Approx(0.1));
}

TEST_CASE("three bus ring splits two to one") {
  const auto net = ring3(3);
  const auto f = base_flows_mw(net);
  // direct path 1->2 carries 2/3, the path 1->3->2 carries 1/3
  CHECK(f(0) == doctest::Approx(60.0));
  CHECK(f(1) == doctest::Approx(-30.0));
  CHECK(f(2) == doctest::Approx(30.0));
  const std::vector<double> zero(3, 0.0);
  CHECK(solve_dc_power_flow(net, zero).flows_mw.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unbalanced injections are rejected") {
  const auto net = two_bus(2);
  const std::vector<double> inj{100.0, -90.0};
  CHECK_THROWS_AS(solve_dc_power_flow(net, inj), InputError);
}

TEST_CASE("ptdf examples") {
  CHECK(compute_ptdf(two_bus(2), 2)(0, 0) == doctest::Approx(1.0));
  const auto p = compute_ptdf(ring3(3), 3);
  CHECK(p(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(p(2, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(p.col(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ptdf columns reproduce a full solve") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 10; ++t) {
    const auto net = cscopf::testing::random_network(rng, 8, 4);
    const auto p = compute_ptdf(net, net.reference_bus());
    const auto inj = net.bus_injections_mw();
    const Eigen::VectorXd injv = Eigen::Map<const Eigen::VectorXd>(inj.data(), static_cast<Eigen::Index>(inj.size()));
    CHECK((p * injv - base_flows_mw(net)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("parallel identical branches carry each other's flow") {
  std::vector<Bus> buses{{1, true}, {2, false}};
  std::vector<Branch> br{{1, 1, 2, 0.2, 100.0, true}, {2, 1, 2, 0.2, 100.0, true}};
  const Network net(buses, br, {gen(1, 1, 80.0)}, {{1, 2, 80.0, 0.0, 80.0, 100.0}});
  const auto s = compute_sensitivities(net);
  CHECK(s.lodf(0, 1) == doctest::Approx(1.0));
  CHECK(s.lodf(1, 0) == doctest::Approx(1.0));
  CHECK(s.lodf(0, 0) == -1.0);
  CHECK(post_outage_flow(s, 0, 1) == doctest::Approx(80.0));
}

TEST_CASE("bridges are flagged instead of dividing by zero") {
  std::vector<Bus> buses{{1, true}, {2, false}, {3, false}};
  std::vector<Branch> br{{1, 1, 2, 0.1, 100.0, true}, {2, 2, 3, 0.1, 100.0, true}};
  const Network chain(buses, br, {gen(1, 1, 50.0)}, {{1, 3, 50.0, 0.0, 50.0, 100.0}});
  const auto s = compute_sensitivities(chain);
  CHECK(s.bridge[0]);
  CHECK(s.bridge[1]);
  CHECK(std::isnan(s.lodf(0, 1)));
  CHECK_THROWS_AS((void)s.lodf_at(0, 1), TopologyError);
}

TEST_CASE("lodf agrees with a full re-solve on random networks") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 20; ++t) {
    const auto net = cscopf::testing::random_network(rng, 5 + t % 6, 3);
    const auto s = compute_sensitivities(net);
    const auto inj = net.bus_injections_mw();
    for (std::size_t a = 0; a < net.branches().size(); ++a) {
      const auto out = apply_outage(net, {net.branches()[a].id});
      CHECK(s.bridge[a] == out.islanded);
      if (out.islanded) continue;
      const auto post = solve_dc_power_flow(out.network, inj).flows_mw;
      for (std::size_t u = 0; u < net.branches().size(); ++u) {
        if (u == a) continue;
        CHECK(std::abs(post_outage_flow(s, u, a) - post(static_cast<Eigen::Index>(u))) / net.mva_base() < 1e-6);
      }
    }
  }
}

TEST_CASE("factorizations are cached per topology") {
  const auto net = ring3(3);
  const auto a = dc_model_for(net);
  const auto b = dc_model_for(net.with_loads(net.loads()));
  CHECK(a.get() == b.get());
  const auto c = dc_model_for(apply_outage(net, {1}).network);
  CHECK(c.get() != a.get());
}

TEST_CASE("islanded network has no dc model") {
  const auto out = apply_outage(two_bus(1), {1});
  CHECK_THROWS_AS(compute_ptdf(out.network, 1), TopologyError);
}
