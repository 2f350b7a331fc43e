#include "cscopf/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include "cscopf/dc_sensitivity.hpp"
#include "cscopf/errors.hpp"

namespace cscopf {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using cd = std::complex<double>;

namespace {

constexpr double kEndTolerance = 1e-9;

std::string_view kind_name(FaultEventKind k) {
  switch (k) {
    case FaultEventKind::apply_fault: return "apply_fault";
    case FaultEventKind::clear_fault: return "clear_fault";
    case FaultEventKind::trip_branch: return "trip_branch";
  }
  return "?";
}

FaultEventKind parse_kind(const std::string& s) {
  if (s == "apply_fault") return FaultEventKind::apply_fault;
  if (s == "clear_fault") return FaultEventKind::clear_fault;
  if (s == "trip_branch") return FaultEventKind::trip_branch;
  throw InputError("unknown fault event kind '" + s + "'");
}

Index idx(std::size_t i) { return static_cast<Index>(i); }

const GenDynamics& dyn_of(const Generator& g) {
  if (!g.dynamics) {
    throw InputError("missing dynamics data for generator " + std::to_string(g.id) +
                     " (supply a dynamics sidecar)");
  }
  return *g.dynamics;
}

}  // namespace

// ---------------------------------------------------------------------------
// FaultSequence

void FaultSequence::validate() const {
  std::set<BranchId> active;
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::string where = "event " + std::to_string(i) + ": ";
    if (!std::isfinite(e.time) || e.time < 0.0) throw InputError(where + "time must be finite and >= 0");
    if (e.time < prev) throw InputError(where + "event times must be nondecreasing");
    prev = e.time;
    switch (e.kind) {
      case FaultEventKind::apply_fault:
        if (!(e.position >= 0.0 && e.position <= 1.0)) throw InputError(where + "position must lie in [0, 1]");
        if (!active.insert(e.branch).second) {
          throw InputError(where + "branch " + std::to_string(e.branch) + " is already faulted");
        }
        break;
      case FaultEventKind::clear_fault:
        if (active.erase(e.branch) == 0) {
          throw InputError(where + "clear_fault without an active fault on branch " + std::to_string(e.branch));
        }
        break;
      case FaultEventKind::trip_branch:
        active.erase(e.branch);
        break;
    }
  }
  if (!active.empty()) {
    throw InputError("fault on branch " + std::to_string(*active.begin()) + " is never cleared or tripped");
  }
}

double FaultSequence::last_event_time() const { return events.empty() ? 0.0 : events.back().time; }

std::vector<BranchId> FaultSequence::tripped_branches() const {
  std::set<BranchId> out;
  for (const auto& e : events) {
    if (e.kind == FaultEventKind::trip_branch) out.insert(e.branch);
  }
  return {out.begin(), out.end()};
}

FaultSequence fault_sequence_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("events") || !doc["events"].is_array()) {
    throw InputError("fault sequence: expected an object with an 'events' array");
  }
  FaultSequence seq;
  std::size_t i = 0;
  for (const auto& item : doc["events"]) {
    const std::string where = "fault sequence /events/" + std::to_string(i++);
    try {
      FaultEvent e;
      e.time = item.at("t").get<double>();
      e.kind = parse_kind(item.at("kind").get<std::string>());
      e.branch = item.at("branch").get<BranchId>();
      e.position = item.value("pos", 0.5);
      seq.events.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(where + ": " + ex.what());
    } catch (const InputError& ex) {
      throw InputError(where + ": " + ex.what());
    }
  }
  seq.validate();
  return seq;
}

nlohmann::json fault_sequence_to_json(const FaultSequence& seq) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : seq.events) {
    nlohmann::json item{{"t", e.time}, {"kind", kind_name(e.kind)}, {"branch", e.branch}};
    if (e.kind == FaultEventKind::apply_fault) item["pos"] = e.position;
    events.push_back(std::move(item));
  }
  return {{"events", events}};
}

// ---------------------------------------------------------------------------
// Network reduction

double DynamicsOptions::omega_s() const { return 2.0 * std::numbers::pi * frequency_hz; }

MatrixXcd kron_reduce(const Network& net, bool loads_as_admittance, std::span<const ActiveFault> faults,
                      const DynamicsOptions& options) {
  const auto& gens = net.generators();
  const auto& buses = net.buses();
  const auto& branches = net.branches();
  if (gens.empty()) throw InputError("network has no generators");
  const double sbase = net.mva_base();

  // Buses in islands without a machine float and are dropped.
  const auto labels = island_labels(net);
  std::set<int> live_islands;
  for (const auto& g : gens) live_islands.insert(labels[net.bus_index(g.bus)]);
  std::vector<std::ptrdiff_t> bus_node(buses.size(), -1);
  std::size_t n_int = gens.size();
  std::size_t next = n_int;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (live_islands.contains(labels[i])) bus_node[i] = static_cast<std::ptrdiff_t>(next++);
  }
  std::map<BranchId, double> fault_at;
  for (const auto& f : faults) {
    const auto k = net.branch_index(f.branch);
    if (!branches[k].in_service) {
      throw InputError("fault on out-of-service branch " + std::to_string(f.branch));
    }
    fault_at[f.branch] = f.position;
  }
  const std::size_t n_fault_nodes = fault_at.size();
  const std::size_t n = next + n_fault_nodes;
  MatrixXcd y = MatrixXcd::Zero(idx(n), idx(n));

  auto add_series = [&](std::size_t a, std::size_t b, cd adm) {
    y(idx(a), idx(a)) += adm;
    y(idx(b), idx(b)) += adm;
    y(idx(a), idx(b)) -= adm;
    y(idx(b), idx(a)) -= adm;
  };
  const cd y_fault(0.0, -options.fault_admittance_pu);

  for (std::size_t i = 0; i < gens.size(); ++i) {
    const auto& d = dyn_of(gens[i]);
    const double xd_sys = d.xd_prime * sbase / d.mva_base;
    add_series(i, static_cast<std::size_t>(bus_node[net.bus_index(gens[i].bus)]), cd(0.0, -1.0 / xd_sys));
  }
  std::size_t fault_node = next;
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const auto& br = branches[k];
    if (!br.in_service) continue;
    const auto f = bus_node[net.bus_index(br.from_bus)];
    const auto t = bus_node[net.bus_index(br.to_bus)];
    if (f < 0) continue;  // both ends in a dead island
    const auto fn = static_cast<std::size_t>(f);
    const auto tn = static_cast<std::size_t>(t);
    auto it = fault_at.find(br.id);
    if (it == fault_at.end()) {
      add_series(fn, tn, cd(0.0, -1.0 / br.reactance));
      continue;
    }
    const double pos = it->second;
    if (pos <= kEndTolerance) {
      add_series(fn, tn, cd(0.0, -1.0 / br.reactance));
      y(idx(fn), idx(fn)) += y_fault;
    } else if (pos >= 1.0 - kEndTolerance) {
      add_series(fn, tn, cd(0.0, -1.0 / br.reactance));
      y(idx(tn), idx(tn)) += y_fault;
    } else {
      const std::size_t m = fault_node;
      add_series(fn, m, cd(0.0, -1.0 / (br.reactance * pos)));
      add_series(m, tn, cd(0.0, -1.0 / (br.reactance * (1.0 - pos))));
      y(idx(m), idx(m)) += y_fault;
      ++fault_node;
    }
  }
  if (loads_as_admittance) {
    for (const auto& l : net.loads()) {
      const auto node = bus_node[net.bus_index(l.bus)];
      if (node >= 0) y(node, node) += cd(l.l0_mw / sbase, 0.0);
    }
  }

  // Unused fault slots (faults at bus ends) connect to nothing; a unit
  // shunt keeps the eliminated block nonsingular.
  for (std::size_t m = fault_node; m < n; ++m) y(idx(m), idx(m)) = 1.0;

  const auto ng = idx(n_int);
  const auto nx = idx(n - n_int);
  const MatrixXcd ygg = y.topLeftCorner(ng, ng);
  const MatrixXcd ygx = y.topRightCorner(ng, nx);
  const MatrixXcd yxg = y.bottomLeftCorner(nx, ng);
  const MatrixXcd yxx = y.bottomRightCorner(nx, nx);
  Eigen::PartialPivLU<MatrixXcd> lu(yxx);
  if (!(lu.rcond() > 1e-14)) throw NumericalError("network admittance matrix is singular");
  MatrixXcd red = ygg - ygx * lu.solve(yxg);
  // Symmetrize rounding noise.
  return 0.5 * (red + red.transpose());
}

VectorXd SwingSystem::electrical_power(const VectorXd& delta) const {
  const auto n = delta.size();
  Eigen::VectorXcd e(n);
  for (Index i = 0; i < n; ++i) e(i) = std::polar(emf(i), delta(i));
  const Eigen::VectorXcd current = y_reduced * e;
  VectorXd pe(n);
  for (Index i = 0; i < n; ++i) pe(i) = std::real(e(i) * std::conj(current(i)));
  return pe;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

MatrixXd pe_jacobian(const SwingSystem& sys, const VectorXd& delta) {
  const auto n = delta.size();
  MatrixXd jac = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < n; ++k) {
      if (k == i) continue;
      const double g = sys.y_reduced(i, k).real();
      const double b = sys.y_reduced(i, k).imag();
      const double dik = delta(i) - delta(k);
      const double ee = sys.emf(i) * sys.emf(k);
      const double dk = ee * (g * std::sin(dik) - b * std::cos(dik));
      jac(i, k) = dk;
      jac(i, i) -= dk;
    }
  }
  return jac;
}

std::size_t slack_machine(const Network& net) {
  const auto& gens = net.generators();
  const BusId ref = net.reference_bus();
  std::ptrdiff_t best = -1;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    if (gens[i].bus != ref) continue;
    if (best < 0 || gens[i].p_max_mw > gens[static_cast<std::size_t>(best)].p_max_mw) {
      best = static_cast<std::ptrdiff_t>(i);
    }
  }
  if (best >= 0) return static_cast<std::size_t>(best);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < gens.size(); ++i) {
    if (gens[i].p_max_mw > gens[arg].p_max_mw) arg = i;
  }
  return arg;
}

}  // namespace

ClassicalState initialize_classical(const Network& net, const DynamicsOptions& options) {
  const auto& gens = net.generators();
  const double sbase = net.mva_base();
  const auto n = idx(gens.size());

  ClassicalState st;
  st.system.omega_s = options.omega_s();
  st.system.y_reduced = kron_reduce(net, options.loads_as_admittance, {}, options);
  st.system.emf.resize(n);
  st.system.h_sys.resize(n);
  st.system.d_sys.resize(n);
  st.inertia_m.resize(n);
  st.delta0.resize(n);

  auto inj = net.bus_injections_mw();
  const auto theta = solve_dc_power_flow(net, std::span<const double>(inj)).angles_rad;
  VectorXd target(n);
  for (Index i = 0; i < n; ++i) {
    const auto& g = gens[static_cast<std::size_t>(i)];
    const auto& d = dyn_of(g);
    st.machine_ids.push_back(g.id);
    const double p = g.p0_mw / sbase;
    const double xd_sys = d.xd_prime * sbase / d.mva_base;
    st.system.emf(i) = std::hypot(1.0, xd_sys * p);
    st.delta0(i) = theta(idx(net.bus_index(g.bus))) + std::atan(xd_sys * p);
    st.system.h_sys(i) = d.inertia_h * d.mva_base / sbase;
    st.system.d_sys(i) = d.damping_d * d.mva_base / sbase;
    st.inertia_m(i) = 2.0 * d.inertia_h * d.mva_base / st.system.omega_s;
    target(i) = p;
  }

  // Newton on the non-slack angles so that pe = p0 there.
  const auto slack = idx(slack_machine(net));
  std::vector<Index> free;
  for (Index i = 0; i < n; ++i) {
    if (i != slack) free.push_back(i);
  }
  VectorXd delta = st.delta0;
  const auto nf = idx(free.size());
  for (int iter = 0; iter < 50 && nf > 0; ++iter) {
    const VectorXd pe = st.system.electrical_power(delta);
    VectorXd mis(nf);
    for (Index r = 0; r < nf; ++r) mis(r) = target(free[static_cast<std::size_t>(r)]) - pe(free[static_cast<std::size_t>(r)]);
    if (mis.lpNorm<Eigen::Infinity>() < 1e-11) {
      st.newton_converged = true;
      break;
    }
    const MatrixXd jac = pe_jacobian(st.system, delta);
    MatrixXd jr(nf, nf);
    for (Index r = 0; r < nf; ++r) {
      for (Index c = 0; c < nf; ++c) jr(r, c) = jac(free[static_cast<std::size_t>(r)], free[static_cast<std::size_t>(c)]);
    }
    const VectorXd step = jr.fullPivLu().solve(mis);
    if (!step.allFinite()) break;
    for (Index r = 0; r < nf; ++r) delta(free[static_cast<std::size_t>(r)]) += step(r);
  }
  if (nf == 0) st.newton_converged = true;
  if (st.newton_converged && delta.allFinite()) st.delta0 = delta;
  st.system.pm_pu = st.system.electrical_power(st.delta0);
  return st;
}

// ---------------------------------------------------------------------------
// Integration

namespace {

struct Derivative {
  VectorXd d_delta;
  VectorXd d_speed;
};

Derivative rhs(const SwingSystem& sys, const VectorXd& delta, const VectorXd& speed) {
  const VectorXd pe = sys.electrical_power(delta);
  Derivative d;
  d.d_delta = sys.omega_s * speed;
  d.d_speed = ((sys.pm_pu - pe - sys.d_sys.cwiseProduct(speed)).array() / (2.0 * sys.h_sys.array())).matrix();
  return d;
}

void rk4_step(const SwingSystem& sys, VectorXd& delta, VectorXd& speed, double dt) {
  const auto k1 = rhs(sys, delta, speed);
  const auto k2 = rhs(sys, delta + 0.5 * dt * k1.d_delta, speed + 0.5 * dt * k1.d_speed);
  const auto k3 = rhs(sys, delta + 0.5 * dt * k2.d_delta, speed + 0.5 * dt * k2.d_speed);
  const auto k4 = rhs(sys, delta + dt * k3.d_delta, speed + dt * k3.d_speed);
  delta += dt / 6.0 * (k1.d_delta + 2.0 * k2.d_delta + 2.0 * k3.d_delta + k4.d_delta);
  speed += dt / 6.0 * (k1.d_speed + 2.0 * k2.d_speed + 2.0 * k3.d_speed + k4.d_speed);
}

void check_step(double dt) {
  if (!(dt > 0.0)) throw InputError("time step must be positive");
  if (dt > kMaxTimeStep) {
    throw InputError("time step " + std::to_string(dt) + " s exceeds the 0.02 s accuracy limit");
  }
}

RotorTrajectories allocate(std::size_t machines, std::size_t samples) {
  RotorTrajectories tr;
  tr.time_grid.resize(samples);
  tr.angles.resize(idx(machines), idx(samples));
  tr.speeds.resize(idx(machines), idx(samples));
  tr.electrical_power_mw.resize(idx(machines), idx(samples));
  return tr;
}

}  // namespace

RotorTrajectories integrate_swing(const SwingSystem& system, const VectorXd& delta0, const VectorXd& speed0,
                                  double dt, std::size_t steps) {
  check_step(dt);
  const auto n = static_cast<std::size_t>(delta0.size());
  auto tr = allocate(n, steps + 1);
  tr.omega_s = system.omega_s;
  tr.mechanical_power_mw = system.pm_pu;
  tr.inertia_m = 2.0 * system.h_sys / system.omega_s;
  VectorXd delta = delta0;
  VectorXd speed = speed0;
  for (std::size_t k = 0; k <= steps; ++k) {
    tr.time_grid[k] = static_cast<double>(k) * dt;
    tr.angles.col(idx(k)) = delta;
    tr.speeds.col(idx(k)) = speed;
    tr.electrical_power_mw.col(idx(k)) = system.electrical_power(delta);
    if (k < steps) rk4_step(system, delta, speed, dt);
  }
  return tr;
}

RotorTrajectories simulate_swing(const Network& net, const FaultSequence& faults, double dt, double t_end,
                                 const DynamicsOptions& options) {
  check_step(dt);
  faults.validate();
  if (t_end + kEndTolerance < faults.last_event_time()) {
    throw InputError("t_end precedes the last fault event");
  }
  for (const auto& e : faults.events) {
    const auto k = net.branch_index(e.branch);
    if (!net.branches()[k].in_service) {
      throw InputError("fault event references out-of-service branch " + std::to_string(e.branch));
    }
  }

  const auto init = initialize_classical(net, options);
  const double sbase = net.mva_base();
  const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
  auto tr = allocate(init.machine_ids.size(), steps + 1);
  tr.machine_ids = init.machine_ids;
  tr.omega_s = init.system.omega_s;
  tr.mechanical_power_mw = init.system.pm_pu * sbase;
  tr.inertia_m = init.inertia_m;

  // Events grouped by snapped step.
  std::map<std::size_t, std::vector<FaultEvent>> at_step;
  for (const auto& e : faults.events) {
    at_step[static_cast<std::size_t>(std::llround(e.time / dt))].push_back(e);
  }

  SwingSystem sys = init.system;
  std::map<BranchId, double> active;
  std::vector<Branch> branches = net.branches();
  Network current = net;
  auto rebuild = [&]() {
    std::vector<ActiveFault> list;
    for (const auto& [b, pos] : active) list.push_back({b, pos});
    sys.y_reduced = kron_reduce(current, options.loads_as_admittance, list, options);
  };

  VectorXd delta = init.delta0;
  VectorXd speed = VectorXd::Zero(delta.size());
  for (std::size_t k = 0; k <= steps; ++k) {
    if (auto it = at_step.find(k); it != at_step.end()) {
      bool trips = false;
      for (const auto& e : it->second) {
        switch (e.kind) {
          case FaultEventKind::apply_fault: active[e.branch] = e.position; break;
          case FaultEventKind::clear_fault: active.erase(e.branch); break;
          case FaultEventKind::trip_branch:
            active.erase(e.branch);
            branches[net.branch_index(e.branch)].in_service = false;
            trips = true;
            break;
        }
      }
      if (trips) current = net.with_branches(branches);
      rebuild();
      tr.switching_steps.push_back(k);
    }
    tr.time_grid[k] = static_cast<double>(k) * dt;
    tr.angles.col(idx(k)) = delta;
    tr.speeds.col(idx(k)) = speed;
    tr.electrical_power_mw.col(idx(k)) = sys.electrical_power(delta) * sbase;
    if (k < steps) rk4_step(sys, delta, speed, dt);
  }
  return tr;
}

// ---------------------------------------------------------------------------
// TSI and machine split

double tsi_from_delta_max(double delta_max_deg) { return (360.0 - delta_max_deg) / (360.0 + delta_max_deg) * 100.0; }

namespace {

struct Gap {
  double size = 0.0;
  double below = 0.0;  // angle just below the gap (deg)
};

Gap largest_gap(const VectorXd& angles_rad, std::vector<double>& scratch) {
  const auto n = static_cast<std::size_t>(angles_rad.size());
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = angles_rad(idx(i)) * 180.0 / std::numbers::pi;
  std::sort(scratch.begin(), scratch.end());
  Gap g;
  g.size = -1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double gap = scratch[i] - scratch[i - 1];
    if (gap > g.size) {
      g.size = gap;
      g.below = scratch[i - 1];
    }
  }
  return g;
}

}  // namespace

TsiResult compute_tsi(const RotorTrajectories& traj) {
  if (traj.angles.rows() < 2) throw InputError("TSI is undefined for fewer than two machines");
  if (traj.angles.cols() == 0) throw InputError("empty trajectory");
  TsiResult r;
  std::vector<double> scratch;
  r.delta_max_deg = -1.0;
  for (Index k = 0; k < traj.angles.cols(); ++k) {
    const auto g = largest_gap(traj.angles.col(k), scratch);
    if (g.size > r.delta_max_deg) {
      r.delta_max_deg = g.size;
      r.step_of_max = static_cast<std::size_t>(k);
    }
  }
  r.tsi = tsi_from_delta_max(r.delta_max_deg);
  return r;
}

MachineSplit identify_critical_machines(const RotorTrajectories& traj) {
  const auto tsi = compute_tsi(traj);
  MachineSplit split;
  if (tsi.tsi > 0.0) {
    split.noncritical = traj.machine_ids;
    return split;
  }
  std::vector<double> scratch;
  const VectorXd col = traj.angles.col(idx(tsi.step_of_max));
  const auto gap = largest_gap(col, scratch);
  for (Index i = 0; i < col.size(); ++i) {
    const double deg = col(i) * 180.0 / std::numbers::pi;
    (deg > gap.below ? split.critical : split.noncritical).push_back(traj.machine_ids[static_cast<std::size_t>(i)]);
  }
  std::sort(split.critical.begin(), split.critical.end());
  std::sort(split.noncritical.begin(), split.noncritical.end());
  return split;
}

// ---------------------------------------------------------------------------
// SIME / IEEAC

double SimeConfig::epsilon_for(double eta_us) const { return epsilon ? *epsilon : 0.05 * std::abs(eta_us); }

SimeMargin sime_margin(const RotorTrajectories& traj, const MachineSplit& split, const SimeConfig& config) {
  if (split.critical.empty()) throw InputError("SIME requires a nonempty critical machine set");
  if (split.noncritical.empty()) throw InputError("SIME requires a nonempty non-critical machine set");
  const auto n = traj.machine_ids.size();
  std::vector<int> group(n, -1);  // 1 = CM, 0 = NM
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = traj.machine_ids[i];
    if (std::find(split.critical.begin(), split.critical.end(), id) != split.critical.end()) group[i] = 1;
    if (std::find(split.noncritical.begin(), split.noncritical.end(), id) != split.noncritical.end()) {
      if (group[i] == 1) throw InputError("machine " + std::to_string(id) + " is in both CM and NM");
      group[i] = 0;
    }
    if (group[i] < 0) throw InputError("machine " + std::to_string(id) + " is in neither CM nor NM");
  }

  SimeMargin out;
  for (std::size_t i = 0; i < n; ++i) (group[i] ? out.m_cm : out.m_nm) += traj.inertia_m(idx(i));
  out.m_total = out.m_cm + out.m_nm;
  const double m_omib = out.m_cm * out.m_nm / out.m_total;

  const auto steps = traj.steps();
  VectorXd delta(idx(steps)), omega(idx(steps)), pa(idx(steps));
  for (std::size_t k = 0; k < steps; ++k) {
    double d_cm = 0, d_nm = 0, w_cm = 0, w_nm = 0, pm_cm = 0, pm_nm = 0, pe_cm = 0, pe_nm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = traj.inertia_m(idx(i));
      const double d = traj.angles(idx(i), idx(k));
      const double w = traj.speeds(idx(i), idx(k));
      const double pm = traj.mechanical_power_mw(idx(i));
      const double pe = traj.electrical_power_mw(idx(i), idx(k));
      if (group[i]) {
        d_cm += m * d; w_cm += m * w; pm_cm += pm; pe_cm += pe;
      } else {
        d_nm += m * d; w_nm += m * w; pm_nm += pm; pe_nm += pe;
      }
    }
    delta(idx(k)) = d_cm / out.m_cm - d_nm / out.m_nm;
    omega(idx(k)) = traj.omega_s * (w_cm / out.m_cm - w_nm / out.m_nm);
    pa(idx(k)) = m_omib * ((pm_cm - pe_cm) / out.m_cm - (pm_nm - pe_nm) / out.m_nm);
  }

  std::set<std::size_t> switching(traj.switching_steps.begin(), traj.switching_steps.end());
  const double cutoff = config.instability_angle_deg * std::numbers::pi / 180.0;
  std::size_t cutoff_step = steps;
  for (std::size_t k = 0; k < steps; ++k) {
    if (delta(idx(k)) >= cutoff) {
      cutoff_step = k;
      break;
    }
  }

  bool seen_forward = false;
  const double speed_eps = 1e-9 * traj.omega_s;
  for (std::size_t k = 1; k < std::min(cutoff_step + 1, steps); ++k) {
    if (omega(idx(k - 1)) > speed_eps) seen_forward = true;
    if (seen_forward && omega(idx(k - 1)) < -speed_eps) out.multi_swing = true;
    if (switching.contains(k)) continue;
    const double a = pa(idx(k - 1));
    const double b = pa(idx(k));
    if (a < 0.0 && b >= 0.0 && omega(idx(k)) > 0.0) {
      const double s = a / (a - b);
      const double w = omega(idx(k - 1)) + s * (omega(idx(k)) - omega(idx(k - 1)));
      out.eta = -0.5 * m_omib * w * w;
      out.crossing_time = traj.time_grid[k - 1] + s * (traj.time_grid[k] - traj.time_grid[k - 1]);
      return out;
    }
  }

  if (cutoff_step >= steps) {
    throw NumericalError("margin undetermined, extend t_end");
  }
  // No return point before the cutoff: use the point of closest approach
  // of P_a to zero after the last switching.
  std::size_t start = 0;
  for (auto s : traj.switching_steps) {
    if (s <= cutoff_step) start = std::max(start, s);
  }
  std::size_t best = cutoff_step;
  for (std::size_t k = start; k <= cutoff_step; ++k) {
    if (pa(idx(k)) < pa(idx(best))) best = k;
  }
  out.eta = -0.5 * m_omib * omega(idx(best)) * omega(idx(best));
  out.crossing_time = traj.time_grid[best];
  out.extrapolated = true;
  return out;
}

double ieeac_transfer(double eta_us, const SimeConfig& config, double m_total, double m_cm, double m_nm) {
  if (!(config.tau > 0.0)) throw InputError("tau must be positive");
  if (!(m_cm > 0.0) || !(m_nm > 0.0)) throw InputError("M_CM and M_NM must be positive");
  const double eps = config.epsilon_for(eta_us);
  if (eps < 0.0) throw InputError("epsilon must be nonnegative");
  if (eta_us > eps) throw InputError("IEEAC transfer requires eta_us <= epsilon");
  const double factor = 1.0 / (m_total / m_cm + m_total / m_nm);
  return (-eta_us + eps) / config.tau * factor;
}

StabilityAssessment assess_stability(const Network& net, const FaultSequence& faults,
                                     const AssessmentOptions& options, RotorTrajectories* trajectory_out) {
  auto traj = simulate_swing(net, faults, options.dt, options.t_end, options.dynamics);
  StabilityAssessment a;
  const auto tsi = compute_tsi(traj);
  a.tsi = tsi.tsi;
  a.delta_max_deg = tsi.delta_max_deg;
  const auto split = identify_critical_machines(traj);
  a.critical_machines = split.critical;
  a.noncritical_machines = split.noncritical;
  for (Index i = 0; i < traj.inertia_m.size(); ++i) a.m_total += traj.inertia_m(i);
  if (!split.critical.empty()) {
    const auto margin = sime_margin(traj, split, options.sime);
    a.eta = margin.eta;
    a.m_cm = margin.m_cm;
    a.m_nm = margin.m_nm;
    a.m_total = margin.m_total;
    a.margin_extrapolated = margin.extrapolated;
    a.multi_swing = margin.multi_swing;
    a.delta_p_tr_mw = ieeac_transfer(margin.eta, options.sime, margin.m_total, margin.m_cm, margin.m_nm);
  } else {
    a.m_nm = a.m_total;
  }
  if (trajectory_out) *trajectory_out = std::move(traj);
  return a;
}

nlohmann::json assessment_to_json(const StabilityAssessment& a) {
  return {{"tsi", a.tsi},
          {"delta_max_deg", a.delta_max_deg},
          {"stable", a.stable()},
          {"critical_machines", a.critical_machines},
          {"noncritical_machines", a.noncritical_machines},
          {"eta", a.eta},
          {"m_total", a.m_total},
          {"m_cm", a.m_cm},
          {"m_nm", a.m_nm},
          {"delta_p_tr_mw", a.delta_p_tr_mw},
          {"margin_extrapolated", a.margin_extrapolated},
          {"multi_swing", a.multi_swing}};
}

Network shift_generation(const Network& net, std::span<const GeneratorId> from, std::span<const GeneratorId> to,
                         double mw) {
  auto gens = net.generators();
  double down_room = 0.0, up_room = 0.0;
  for (auto id : from) {
    const auto& g = gens[net.generator_index(id)];
    down_room += g.p0_mw - g.p_min_mw;
  }
  for (auto id : to) {
    const auto& g = gens[net.generator_index(id)];
    up_room += g.p_max_mw - g.p0_mw;
  }
  if (mw < 0.0) throw InputError("shift amount must be nonnegative");
  if (mw > down_room + 1e-9 || mw > up_room + 1e-9) {
    throw InputError("requested shift of " + std::to_string(mw) + " MW exceeds available headroom");
  }
  if (mw == 0.0) return net;
  for (auto id : from) {
    auto& g = gens[net.generator_index(id)];
    g.p0_mw = std::max(g.p_min_mw, g.p0_mw - mw * (g.p0_mw - g.p_min_mw) / down_room);
  }
  for (auto id : to) {
    auto& g = gens[net.generator_index(id)];
    g.p0_mw = std::min(g.p_max_mw, g.p0_mw + mw * (g.p_max_mw - g.p0_mw) / up_room);
  }
  return net.with_generators(std::move(gens));
}

double estimate_tau(const Network& net, const FaultSequence& faults, const AssessmentOptions& options,
                    double trial_shift_mw) {
  if (!(trial_shift_mw > 0.0)) throw InputError("trial shift must be positive");
  RotorTrajectories base_traj;
  const auto base = assess_stability(net, faults, options, &base_traj);
  if (base.stable()) throw InputError("tau estimation requires an unstable base case");
  const MachineSplit split{base.critical_machines, base.noncritical_machines};
  const double factor = 1.0 / (base.m_total / base.m_cm + base.m_total / base.m_nm);

  double shift = trial_shift_mw;
  for (int attempt = 0; attempt < 8; ++attempt, shift *= 0.5) {
    const auto shifted = shift_generation(net, split.critical, split.noncritical, shift);
    const auto traj = simulate_swing(shifted, faults, options.dt, options.t_end, options.dynamics);
    if (compute_tsi(traj).tsi > 0.0) continue;
    const auto margin = sime_margin(traj, split, options.sime);
    const double tau = factor * (margin.eta - base.eta) / shift;
    if (!(tau > 0.0)) throw NumericalError("estimated tau is not positive");
    return tau;
  }
  throw NumericalError("could not keep the shifted case unstable while estimating tau");
}

}  // namespace cscopf
