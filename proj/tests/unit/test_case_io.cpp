#include <doctest.h>

#include "cscopf/case_io.hpp"
#include "cscopf/errors.hpp"
#include "random_networks.hpp"

using namespace cscopf;

namespace {

const char* kThreeBus = R"(function mpc = case3
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0 0 0 1 1 0 230 1 1.1 0.9;
  2 2 0  0 0 0 1 1 0 230 1 1.1 0.9;
  3 1 90 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 50 0 100 -100 1 100 1 200 0;
  2 40 0 100 -100 1 100 1 150 0;
];
mpc.branch = [
  1 2 0 0.1 0 100 100 100 0 0 1 -360 360;
  2 3 0 0.1 0 0   100 100 0 0 1 -360 360;
  3 1 0 0.1 0 120 100 100 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.01 20 0;
  2 0 0 3 0.02 25 0;
];
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  s.replace(s.find(from), from.size(), to);
  return s;
}

}  // namespace

TEST_CASE("hand written MATPOWER case") {
  const auto net = parse_matpower_case(kThreeBus);
  CHECK(net.buses().size() == 3);
  CHECK(net.generators().size() == 2);
  CHECK(net.loads().size() == 1);
  CHECK(net.reference_bus() == 1);
  CHECK(net.branches()[1].flow_limit_mw == 9900.0);
  CHECK(net.generators()[1].cost_c == doctest::Approx(0.02));
  CHECK(net.generators()[0].cost_b == doctest::Approx(20.0));
}

TEST_CASE("MATPOWER errors") {
  CHECK_THROWS_WITH_AS(parse_matpower_case(replace(kThreeBus, "2 2 0  0", "2 3 0  0")),
                       doctest::Contains("multiple reference buses"), InputError);
  CHECK_THROWS_AS(parse_matpower_case(replace(kThreeBus, "2 0 0 3 0.01", "1 0 0 3 0.01")), UnsupportedFeature);
  CHECK_THROWS_AS(parse_matpower_case(replace(kThreeBus, "1 2 0 0.1", "1 2 0 0.0")), InputError);
  CHECK_THROWS_WITH_AS(parse_matpower_case(replace(kThreeBus, "3 1 0 0.1 0 120", "3 1 0 x 0 120")),
                       doctest::Contains("line"), InputError);
}

TEST_CASE("standard 118-bus case sizes") {
  const auto net = load_case(cscopf::testing::data_file("case118.m"));
  CHECK(net.branches().size() == 186);
  CHECK(net.generators().size() == 54);
  CHECK(net.loads().size() == 99);
  CHECK(net.total_generation_mw() == doctest::Approx(net.total_load_mw()));
}

TEST_CASE("minimal JSON case and schema errors") {
  const std::string text = R"({"buses":[{"id":1,"is_reference":true},{"id":2}],
    "branches":[{"id":1,"from_bus":1,"to_bus":2,"reactance":0.1,"flow_limit_mw":100}],
    "generators":[{"id":1,"bus":1,"p0_mw":50,"p_min_mw":0,"p_max_mw":100}],
    "loads":[{"id":1,"bus":2,"l0_mw":50}]})";
  const auto net = parse_json_case(text);
  CHECK(net.branches().size() == 1);
  CHECK(net.loads()[0].l_max_mw == 50.0);

  CHECK_THROWS_WITH_AS(parse_json_case(replace(text, "\"p0_mw\":50", "\"p0_mw\":150")),
                       doctest::Contains("generator 1"), InputError);
  CHECK_THROWS_WITH_AS(parse_json_case(replace(text, "\"reactance\":0.1", "\"reactance\":\"x\"")),
                       doctest::Contains("/branches/0/reactance"), InputError);
  CHECK_THROWS_AS(parse_json_case("{not json"), InputError);
}

TEST_CASE("JSON round trip is lossless") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    const auto net = cscopf::testing::random_network(rng, 7, 3);
    const auto text = serialize_json_case(net);
    const auto back = parse_json_case(text);
    CHECK(back == net);
    CHECK(serialize_json_case(back) == text);
  }
}

TEST_CASE("dynamics sidecar merge") {
  const auto net = parse_matpower_case(kThreeBus);
  const auto side = parse_dynamics_sidecar(R"({"generator_dynamics":[
      {"id":1,"inertia_h":5,"xd_prime":0.3},{"id":2,"inertia_h":3,"xd_prime":0.25,"damping_d":1}],
      "load_shed_costs":[{"id":3,"shed_cost":500}]})");
  const auto merged = merge_sidecar(net, side);
  CHECK(merged.has_dynamics());
  CHECK(merged.generators()[1].dynamics->damping_d == 1.0);
  CHECK(merged.loads()[0].shed_cost == 500.0);
  CHECK_FALSE(net.has_dynamics());
  CHECK_THROWS_AS(merge_sidecar(net, parse_dynamics_sidecar(R"({"generator_dynamics":[
      {"id":9,"inertia_h":5,"xd_prime":0.3}]})")),
                  InputError);
}

TEST_CASE("missing files") {
  CHECK_THROWS_WITH_AS(read_text_file("/nonexistent/case.m"), doctest::Contains("/nonexistent/case.m"), InputError);
}
