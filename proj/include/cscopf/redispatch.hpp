#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cscopf/cutset.hpp"
#include "cscopf/dc_sensitivity.hpp"
#include "cscopf/dynamics.hpp"
#include "cscopf/grid_model.hpp"
#include "cscopf/linear_constraint.hpp"
#include "cscopf/qp_solver.hpp"
#include "cscopf/tscp.hpp"

namespace cscopf {

// Decision vector: [dp_1 .. dp_nG, shed_1 .. shed_nL] in MW, generators and
// loads in network order. shed_j >= 0 is load removed at load j.

struct BuildQpOptions {
  /// Branches monitored in the N-1 rows; empty means all.
  std::vector<BranchId> monitored;
  /// Skip N-1 rows for outages that island the system instead of failing.
  bool allow_bridge_outages = false;
};

struct BuildQpReport {
  std::vector<BranchId> skipped_bridge_outages;
};

/// Objective: sum c_i dp_i^2 + (b_i + 2 c_i p0_i) dp_i + sum m_j shed_j.
/// Rows: balance, a min/max pair per in-service branch, N-1 pairs for
/// every monitored u and outage a, one row per cut-set and one stability
/// row sum_{CM} dp_i <= -tscf. `extra` rows are appended verbatim.
QuadraticProgram build_qp(const Network& net, const SensitivitySet& sens, std::span<const CutSet> cutsets,
                          std::optional<double> tscf, std::span<const GeneratorId> cm,
                          std::span<const BranchId> outages, const BuildQpOptions& options = {},
                          std::span<const LinearConstraint> extra = {}, BuildQpReport* report = nullptr);

struct DispatchCost {
  double base = 0.0;   // sum F_i(p0_i), $/hr
  double total = 0.0;  // sum F_i(p0_i + dp_i)
  double delta = 0.0;  // sum c_i dp_i^2 + (b_i + 2 c_i p0_i) dp_i
};

DispatchCost dispatch_cost(const Network& net, std::span<const double> delta_p);
DispatchCost dispatch_cost(const Network& net, const Eigen::VectorXd& delta_p);

/// Network with p0 + dp and l0 - shed, clamped into the element bounds.
Network apply_redispatch(const Network& net, const Eigen::VectorXd& delta_p, const Eigen::VectorXd& shed);

enum class Mode { cscopf, rtsced, tscopf };
std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct Contingency {
  std::string id = "contingency";
  FaultSequence faults;
  /// Outage set used in the N-1 rows; defaults to the tripped branches.
  std::vector<BranchId> outages;
  std::vector<std::vector<BranchId>> corridor_cuts;
};

/// Fault-sequence JSON with optional `id`, `outages` and `corridor_cuts`.
Contingency contingency_from_json(const nlohmann::json& doc);

struct Verification {
  bool stable = false;
  double tsi = 0.0;
  StabilityAssessment assessment;
  std::vector<CutSet> saturated_cutsets;  // on the post-contingency topology
  [[nodiscard]] bool secure() const { return saturated_cutsets.empty(); }
};

struct IterationReport {
  int iteration = 0;
  std::vector<std::string> added;  // provenance of rows added before this solve
  std::size_t phi_size = 0;        // generated rows in force for this solve
  std::string qp_status;
  Verification verification;
  std::vector<std::string> violations;  // violations acted upon
};

struct RedispatchSolution {
  Eigen::VectorXd delta_p;
  Eigen::VectorXd delta_l;  // MW shed per load
  double objective_value = 0.0;
  DispatchCost cost;
  QpStatus status = QpStatus::iteration_limit;
  KktResiduals kkt;
  std::vector<std::string> infeasible_tags;
  std::vector<IterationReport> iterations;
  std::vector<LinearConstraint> phi;  // generated cut-set and stability rows
  std::vector<std::string> remaining_violations;
  double solve_time_s = 0.0;

  [[nodiscard]] double load_shed_mw() const {
    const double s = delta_l.size() ? delta_l.sum() : 0.0;
    return std::abs(s) < 1e-9 ? 0.0 : s;
  }
};

/// Solves a built QP and splits the decision vector.
RedispatchSolution solve_redispatch(const Network& net, const QuadraticProgram& qp, const QpSettings& settings = {},
                                    const Eigen::VectorXd* warm_start = nullptr);

struct RealtimeOptions {
  int max_iterations = 10;
  QpSettings qp;
  AssessmentOptions assessment;
  /// Utilization above which FT reports a cut in the loop and in verification.
  double ft_threshold = 1.0;
  /// Cut-sets whose flow exceeds the limit by less than this are accepted.
  double verification_tolerance_mw = 1e-3;
  BuildQpOptions build;
};

struct ModeComparison {
  Mode mode = Mode::cscopf;
  bool transient_stable = false;
  bool cutset_secure = false;
  double tsi = 0.0;
  double load_shed_mw = 0.0;
  double cm_shift_mw = 0.0;       // generation removed from the initial CM set
  double desaturation_mw = 0.0;   // flow relief on the cuts saturated at p0
  double total_cost = 0.0;
  double delta_cost = 0.0;
  int iterations = 0;
  std::string status;
};

struct RealtimeResult {
  RedispatchSolution solution;
  std::optional<Network> final_network;
  Verification initial;  // at the pre-redispatch operating point
  Verification final_check;
  ModeComparison comparison;
};

/// Real-time loop: generate cut-set (FT on the post-contingency topology)
/// and stability rows per mode, solve, re-run FT and one TDS on the new
/// dispatch, append rows for remaining violations and repeat.
/// Mode cscopf needs `model` for its first stability row.
RealtimeResult run_cscopf(const Network& net, const Contingency& contingency, const TscpModel* model, Mode mode,
                          const RealtimeOptions& options = {});

/// FT and TDS at an operating point, as used by the loop.
Verification verify_operating_point(const Network& net, const Contingency& contingency,
                                    const RealtimeOptions& options);

nlohmann::json solution_to_json(const Network& net, const RealtimeResult& result);
std::string comparison_csv(std::span<const ModeComparison> rows);

}  // namespace cscopf
