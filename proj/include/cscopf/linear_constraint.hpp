#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace cscopf {

enum class Sense { less_equal, greater_equal, equal };

enum class ConstraintTag { variable_limit, branch_flow, balance, n_minus_1, cutset, stability };

std::string_view to_string(Sense sense);
std::string_view to_string(ConstraintTag tag);

/// One row over the redispatch decision vector
/// [dp_1 .. dp_nG, shed_1 .. shed_nL] (MW).
struct LinearConstraint {
  Eigen::VectorXd coeffs;
  Sense sense = Sense::less_equal;
  double rhs = 0.0;
  ConstraintTag tag = ConstraintTag::branch_flow;
  std::string provenance;  // e.g. "cutset:3,7" or "stability:fire-1:iter2"

  [[nodiscard]] double evaluate(const Eigen::VectorXd& x) const { return coeffs.dot(x); }
  /// Amount by which x violates the row (0 when satisfied).
  [[nodiscard]] double violation(const Eigen::VectorXd& x) const;
};

}  // namespace cscopf
