#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cscopf/grid_model.hpp"

namespace cscopf {

// ---------------------------------------------------------------------------
// Fault sequences

enum class FaultEventKind { apply_fault, clear_fault, trip_branch };

struct FaultEvent {
  double time = 0.0;  // s
  FaultEventKind kind = FaultEventKind::apply_fault;
  BranchId branch = 0;
  double position = 0.5;  // fraction along the branch from from_bus

  friend bool operator==(const FaultEvent&, const FaultEvent&) = default;
};

/// Ordered switching events. Times are nondecreasing, every applied fault
/// is later cleared or tripped, and no fault is left active.
struct FaultSequence {
  std::vector<FaultEvent> events;

  void validate() const;
  [[nodiscard]] double last_event_time() const;
  /// Branches permanently tripped by the sequence.
  [[nodiscard]] std::vector<BranchId> tripped_branches() const;

  friend bool operator==(const FaultSequence&, const FaultSequence&) = default;
};

/// `{"events":[{"t":..,"kind":"apply_fault"|"clear_fault"|"trip_branch","branch":id,"pos":0.5}]}`
FaultSequence fault_sequence_from_json(const nlohmann::json& doc);
nlohmann::json fault_sequence_to_json(const FaultSequence& seq);

// ---------------------------------------------------------------------------
// Classical multi-machine model

struct DynamicsOptions {
  double frequency_hz = 60.0;
  /// Shunt admittance magnitude (pu) placed at a faulted point.
  double fault_admittance_pu = 1e6;
  bool loads_as_admittance = true;

  [[nodiscard]] double omega_s() const;
};

struct ActiveFault {
  BranchId branch = 0;
  double position = 0.5;
};

/// Admittance matrix (system pu) reduced to the generator internal nodes,
/// in generator order. Branches are pure reactances; loads become constant
/// conductances at 1 pu voltage. Throws InputError without dynamics data.
Eigen::MatrixXcd kron_reduce(const Network& net, bool loads_as_admittance,
                             std::span<const ActiveFault> faults = {},
                             const DynamicsOptions& options = {});

/// Reduced swing system: 2H_i dw_i/dt = pm_i - pe_i(delta) - D_i w_i and
/// d delta_i/dt = omega_s w_i, everything on the system base.
struct SwingSystem {
  Eigen::MatrixXcd y_reduced;
  Eigen::VectorXd emf;       // |E'_i| pu
  Eigen::VectorXd pm_pu;     // mechanical power
  Eigen::VectorXd h_sys;     // inertia constant on system base (s)
  Eigen::VectorXd d_sys;     // damping on system base (pu power per pu speed)
  double omega_s = 0.0;

  [[nodiscard]] Eigen::VectorXd electrical_power(const Eigen::VectorXd& delta) const;
};

/// Pre-disturbance machine state: internal EMFs behind x'd and rotor
/// angles such that each non-slack machine delivers its p0 exactly; the
/// mechanical power is set to the electrical output at that point.
struct ClassicalState {
  std::vector<GeneratorId> machine_ids;
  SwingSystem system;
  Eigen::VectorXd delta0;   // rad
  Eigen::VectorXd inertia_m;  // M_i = 2 H_i S_i / omega_s  (MW s^2 / rad)
  bool newton_converged = false;
};

ClassicalState initialize_classical(const Network& net, const DynamicsOptions& options = {});

struct RotorTrajectories {
  std::vector<double> time_grid;        // s, strictly increasing
  Eigen::MatrixXd angles;               // machines x steps (rad)
  Eigen::MatrixXd speeds;               // machines x steps (pu deviation)
  Eigen::MatrixXd electrical_power_mw;  // machines x steps, network after any switching at that step
  Eigen::VectorXd mechanical_power_mw;  // per machine
  Eigen::VectorXd inertia_m;            // M_i per machine (MW s^2 / rad)
  std::vector<GeneratorId> machine_ids;
  std::vector<std::size_t> switching_steps;  // steps at which the network changed
  double omega_s = 0.0;

  [[nodiscard]] std::size_t steps() const { return time_grid.size(); }
};

/// Fixed-step RK4 integration from an arbitrary state without switching.
RotorTrajectories integrate_swing(const SwingSystem& system, const Eigen::VectorXd& delta0,
                                  const Eigen::VectorXd& speed0, double dt, std::size_t steps);

/// Maximum accepted step size.
inline constexpr double kMaxTimeStep = 0.02;

/// Time-domain simulation of the fault sequence with events snapped to
/// the nearest step. The admittance matrix is switched at event times.
RotorTrajectories simulate_swing(const Network& net, const FaultSequence& faults, double dt,
                                 double t_end, const DynamicsOptions& options = {});

// ---------------------------------------------------------------------------
// Stability assessment

/// (360 - delta_max) / (360 + delta_max) * 100.
double tsi_from_delta_max(double delta_max_deg);

struct TsiResult {
  double tsi = 0.0;
  double delta_max_deg = 0.0;
  std::size_t step_of_max = 0;
};

/// delta_max is the largest gap between consecutive sorted rotor angles
/// over the whole trajectory. Requires at least two machines.
TsiResult compute_tsi(const RotorTrajectories& traj);

struct MachineSplit {
  std::vector<GeneratorId> critical;
  std::vector<GeneratorId> noncritical;
};

/// At the instant of the largest sorted-angle gap the machines above the
/// gap are critical. Stable trajectories have no critical machines.
MachineSplit identify_critical_machines(const RotorTrajectories& traj);

struct SimeConfig {
  /// Target margin (MW rad). When unset: 5% of |eta_us|.
  std::optional<double> epsilon;
  double tau = 1.0;
  double instability_angle_deg = 360.0;

  [[nodiscard]] double epsilon_for(double eta_us) const;
};

struct SimeMargin {
  double eta = 0.0;       // MW rad, negative when unstable
  double m_total = 0.0;   // M = M_CM + M_NM
  double m_cm = 0.0;
  double m_nm = 0.0;
  double crossing_time = 0.0;
  bool extrapolated = false;  // no return point before the cutoff
  bool multi_swing = false;   // OMIB speed changed sign before the return point
};

/// First-swing SIME: OMIB aggregation of the CM/NM groups and
/// eta_us = -1/2 M_omib omega_u^2 at the unstable return point.
SimeMargin sime_margin(const RotorTrajectories& traj, const MachineSplit& split,
                       const SimeConfig& config = {});

/// ((-eta_us + eps) / tau) * (M/M_CM + M/M_NM)^-1, in MW.
double ieeac_transfer(double eta_us, const SimeConfig& config, double m_total, double m_cm,
                      double m_nm);

struct StabilityAssessment {
  double tsi = 0.0;
  double delta_max_deg = 0.0;
  std::vector<GeneratorId> critical_machines;
  std::vector<GeneratorId> noncritical_machines;
  double eta = 0.0;
  double m_total = 0.0;
  double m_cm = 0.0;
  double m_nm = 0.0;
  double delta_p_tr_mw = 0.0;
  bool margin_extrapolated = false;
  bool multi_swing = false;

  [[nodiscard]] bool stable() const { return tsi > 0.0; }
};

struct AssessmentOptions {
  double dt = 1e-3;
  double t_end = 5.0;
  SimeConfig sime;
  DynamicsOptions dynamics;
};

/// Simulate, compute TSI and, when unstable, CM/NM, SIME margin and the
/// IEEAC correction.
StabilityAssessment assess_stability(const Network& net, const FaultSequence& faults,
                                     const AssessmentOptions& options,
                                     RotorTrajectories* trajectory_out = nullptr);

nlohmann::json assessment_to_json(const StabilityAssessment& a);

/// Moves `mw` from the `from` machines (pro rata to their output above
/// p_min) to the `to` machines (pro rata to headroom).
Network shift_generation(const Network& net, std::span<const GeneratorId> from,
                         std::span<const GeneratorId> to, double mw);

/// Estimates tau from two simulations: tau = F * d(eta)/d(P_shift) with
/// F = (M/M_CM + M/M_NM)^-1. Both runs must be unstable; the trial shift is
/// halved until the shifted case remains unstable.
double estimate_tau(const Network& net, const FaultSequence& faults, const AssessmentOptions& options,
                    double trial_shift_mw);

}  // namespace cscopf
