#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cscopf/dynamics.hpp"
#include "cscopf/errors.hpp"
#include "random_networks.hpp"

using namespace cscopf;
using cscopf::testing::smib_network;

namespace {

constexpr double kPi = std::numbers::pi;

FaultSequence bus_fault(BranchId branch, double t_on, double t_off, bool trip = false) {
  FaultSequence s;
  s.events.push_back({t_on, FaultEventKind::apply_fault, branch, 0.0});
  s.events.push_back({t_off, trip ? FaultEventKind::trip_branch : FaultEventKind::clear_fault, branch});
  return s;
}

// Conserved energy of a lossless reduced network with zero damping.
double swing_energy(const SwingSystem& sys, const Eigen::VectorXd& delta, const Eigen::VectorXd& w) {
  double kinetic = 0.0, potential = 0.0;
  const auto n = delta.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    kinetic += sys.h_sys(i) * sys.omega_s * w(i) * w(i);
    potential -= sys.pm_pu(i) * delta(i);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      potential -= sys.emf(i) * sys.emf(j) * sys.y_reduced(i, j).imag() * std::cos(delta(i) - delta(j));
    }
  }
  return kinetic + potential;
}

}  // namespace

TEST_CASE("tsi formula at reference angles") {
  CHECK(tsi_from_delta_max(0.0) == 100.0);
  CHECK(tsi_from_delta_max(360.0) == 0.0);
  CHECK(tsi_from_delta_max(540.0) == -20.0);
  CHECK(tsi_from_delta_max(180.0) > 0.0);
  CHECK(tsi_from_delta_max(400.0) < 0.0);
}

TEST_CASE("ieeac transfer examples and errors") {
  SimeConfig cfg;
  cfg.epsilon = 0.0;
  cfg.tau = 1.0;
  CHECK(ieeac_transfer(-4.0, cfg, 2.0, 1.0, 1.0) == doctest::Approx(1.0));
  cfg.epsilon = 2.0;
  CHECK(ieeac_transfer(-4.0, cfg, 2.0, 1.0, 1.0) == doctest::Approx(1.5));
  cfg.epsilon = 0.0;
  CHECK(ieeac_transfer(-4.0, cfg, 4.0, 1.0, 3.0) == doctest::Approx(4.0 * 3.0 / 16.0));
  cfg.tau = 0.0;
  CHECK_THROWS_AS(ieeac_transfer(-1.0, cfg, 4.0, 2.0, 2.0), InputError);
  cfg.tau = 1.0;
  CHECK_THROWS_AS(ieeac_transfer(-1.0, cfg, 4.0, 0.0, 4.0), InputError);
  CHECK(SimeConfig{}.epsilon_for(-20.0) == doctest::Approx(1.0));
}

TEST_CASE("fault sequence json round trip and validation") {
  const auto seq = bus_fault(3, 0.1, 0.2, true);
  CHECK(fault_sequence_from_json(fault_sequence_to_json(seq)) == seq);
  CHECK(seq.tripped_branches() == std::vector<BranchId>{3});
  FaultSequence open;
  open.events.push_back({0.1, FaultEventKind::apply_fault, 1, 0.5});
  CHECK_THROWS_AS(open.validate(), InputError);
  FaultSequence backwards = bus_fault(1, 0.3, 0.2);
  CHECK_THROWS_AS(backwards.validate(), InputError);
}

TEST_CASE("initialization is an equilibrium") {
  const auto net = smib_network(80.0, 4.0, 0.25, 0.4);
  const auto st = initialize_classical(net);
  CHECK(st.newton_converged);
  const auto pe = st.system.electrical_power(st.delta0);
  CHECK(pe(0) * net.mva_base() == doctest::Approx(80.0).epsilon(1e-9));
  const auto tr = integrate_swing(st.system, st.delta0, Eigen::VectorXd::Zero(2), 1e-3, 1000);
  CHECK((tr.angles.col(999) - st.delta0).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("missing dynamics data is an input error") {
  const auto net = smib_network(80.0, 4.0, 0.25, 0.4);
  auto gens = net.generators();
  gens[1].dynamics.reset();
  CHECK_THROWS_AS(initialize_classical(net.with_generators(gens)), InputError);
}

TEST_CASE("step size limits") {
  const auto net = smib_network(80.0, 4.0, 0.25, 0.4);
  CHECK_THROWS_AS(simulate_swing(net, bus_fault(1, 0.1, 0.2), 0.05, 1.0), InputError);
  CHECK_THROWS_AS(simulate_swing(net, bus_fault(1, 0.1, 0.2), 1e-3, 0.15), InputError);
}

TEST_CASE("smib critical clearing time matches equal area criterion") {
  const double h = 4.0, p = 80.0;
  const auto net = smib_network(p, h, 0.25, 0.4);
  DynamicsOptions dyn;
  dyn.loads_as_admittance = false;

  const auto st = initialize_classical(net, dyn);
  const double pm = p / net.mva_base();
  const double x_total = 0.25 + 0.4 + 1e-4;
  const double p_max = st.system.emf(0) * st.system.emf(1) / x_total;
  const double d0 = st.delta0(0) - st.delta0(1);
  CHECK(p_max * std::sin(d0) == doctest::Approx(pm).epsilon(1e-6));
  const double dc = std::acos(pm / p_max * (kPi - 2.0 * d0) - std::cos(d0));
  const double t_cc = std::sqrt(4.0 * h * (dc - d0) / (dyn.omega_s() * pm));

  AssessmentOptions opt;
  opt.dt = 1e-3;
  opt.t_end = 3.0;
  opt.dynamics = dyn;
  const double t_on = 0.1;
  auto stable_at = [&](int k) {
    return assess_stability(net, bus_fault(1, t_on, t_on + k * opt.dt), opt).stable();
  };
  int lo = 1, hi = static_cast<int>(std::ceil(3.0 * t_cc / opt.dt));
  REQUIRE(stable_at(lo));
  REQUIRE_FALSE(stable_at(hi));
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    (stable_at(mid) ? lo : hi) = mid;
  }
  const double t_sim = lo * opt.dt;
  INFO("simulated ", t_sim, " analytic ", t_cc);
  CHECK(std::abs(t_sim - t_cc) <= 2.0 * opt.dt);
}

TEST_CASE("undamped energy drift") {
  const auto net = smib_network(80.0, 4.0, 0.25, 0.4, 6.0);
  DynamicsOptions dyn;
  dyn.loads_as_admittance = false;
  const auto st = initialize_classical(net, dyn);
  Eigen::VectorXd w0(2);
  w0 << 0.004, -0.004 * 4.0 / 6.0;
  auto drift = [&](double dt) {
    const auto steps = static_cast<std::size_t>(std::lround(5.0 / dt)) + 1;
    const auto tr = integrate_swing(st.system, st.delta0, w0, dt, steps);
    const double e0 = swing_energy(st.system, tr.angles.col(0), tr.speeds.col(0));
    const double e_eq = swing_energy(st.system, st.delta0, Eigen::VectorXd::Zero(2));
    double worst = 0.0;
    for (std::size_t k = 0; k < tr.steps(); ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      worst = std::max(worst, std::abs(swing_energy(st.system, tr.angles.col(ki), tr.speeds.col(ki)) - e0));
    }
    return worst / std::abs(e0 - e_eq);
  };
  const double d1 = drift(1e-3);
  const double d2 = drift(5e-4);
  CHECK(d1 < 1e-3);
  CHECK(d2 <= d1);
}

TEST_CASE("stable smib has no critical machines and unstable one does") {
  const auto net = smib_network(80.0, 4.0, 0.25, 0.4, 1e3);
  AssessmentOptions opt;
  opt.t_end = 3.0;
  const auto ok = assess_stability(net, bus_fault(1, 0.1, 0.12), opt);
  CHECK(ok.stable());
  CHECK(ok.critical_machines.empty());
  CHECK(ok.delta_p_tr_mw == 0.0);
  const auto bad = assess_stability(net, bus_fault(1, 0.1, 0.6), opt);
  CHECK_FALSE(bad.stable());
  CHECK(bad.critical_machines == std::vector<GeneratorId>{1});
  CHECK(bad.noncritical_machines == std::vector<GeneratorId>{2});
  CHECK(bad.eta < 0.0);
  CHECK(bad.delta_p_tr_mw > 0.0);
}

TEST_CASE("trajectory shape and switching steps") {
  const auto net = smib_network(80.0, 4.0, 0.25, 0.4, 1e3);
  const auto tr = simulate_swing(net, bus_fault(1, 0.1, 0.15), 1e-3, 1.0);
  CHECK(tr.steps() == 1001);
  CHECK(tr.angles.rows() == 2);
  CHECK(tr.switching_steps == std::vector<std::size_t>{100, 150});
  CHECK(tr.time_grid.back() == doctest::Approx(1.0));
}

TEST_CASE("shifting the correction factor from CM to NM restores stability") {
  const auto net = smib_network(80.0, 4.0, 0.25, 0.4, 1e3);
  AssessmentOptions opt;
  opt.t_end = 3.0;
  for (double duration : {0.22, 0.28}) {
    CAPTURE(duration);
    const auto faults = bus_fault(1, 0.1, 0.1 + duration);
    opt.sime.tau = estimate_tau(net, faults, opt, 5.0);
    CHECK(opt.sime.tau > 0.0);
    const auto a = assess_stability(net, faults, opt);
    REQUIRE_FALSE(a.stable());
    REQUIRE(a.delta_p_tr_mw > 0.0);
    const std::vector<GeneratorId> cm = a.critical_machines, nm = a.noncritical_machines;
    const auto shifted = shift_generation(net, cm, nm, a.delta_p_tr_mw);
    CHECK(shifted.generators()[0].p0_mw == doctest::Approx(80.0 - a.delta_p_tr_mw));
    CHECK(shifted.total_generation_mw() == doctest::Approx(80.0));
    CHECK(assess_stability(shifted, faults, opt).stable());
  }
}
