#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cscopf/linear_constraint.hpp"

namespace cscopf {

/// minimize  sum_i quad_i x_i^2 + linear^T x
/// subject to constraints and lower <= x <= upper.
struct QuadraticProgram {
  Eigen::VectorXd quad;    // >= 0
  Eigen::VectorXd linear;
  std::vector<LinearConstraint> constraints;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  [[nodiscard]] Eigen::Index variables() const { return linear.size(); }
  [[nodiscard]] double objective(const Eigen::VectorXd& x) const;
  /// Throws InputError on dimension mismatch, negative curvature, non-finite
  /// data or inconsistent bounds.
  void validate() const;
};

enum class QpStatus { optimal, infeasible, iteration_limit };
std::string to_string(QpStatus status);

struct QpSettings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_infeasible = 1e-7;
  int max_iter = 50000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int scaling_iterations = 10;
  bool polish = true;
};

/// Residuals of the KKT conditions of the unscaled problem:
/// primal in constraint units (MW), dual and complementarity relative to
/// max(1, |q|_inf).
struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
};

struct QpSolution {
  QpStatus status = QpStatus::iteration_limit;
  Eigen::VectorXd x;
  /// Multipliers, one per constraint row then one per variable bound;
  /// positive on active upper sides, negative on active lower sides.
  Eigen::VectorXd y;
  double objective = 0.0;
  int iterations = 0;
  bool polished = false;
  KktResiduals kkt;
  /// Tags of the rows carrying the infeasibility certificate.
  std::vector<std::string> infeasible_tags;
};

/// OSQP-style ADMM on the dense problem with Ruiz equilibration, adaptive
/// rho and active-set polishing. Deterministic. `warm_start` (optional)
/// seeds the primal iterate.
QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings = {},
                    const Eigen::VectorXd* warm_start = nullptr);

/// KKT residuals of (x, y) for qp, independent of the solver internals.
KktResiduals kkt_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

}  // namespace cscopf
