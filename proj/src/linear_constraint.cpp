#include "cscopf/linear_constraint.hpp"

#include <algorithm>
#include <cmath>

namespace cscopf {

std::string_view to_string(Sense sense) {
  switch (sense) {
    case Sense::less_equal: return "<=";
    case Sense::greater_equal: return ">=";
    case Sense::equal: return "=";
  }
  return "?";
}

std::string_view to_string(ConstraintTag tag) {
  switch (tag) {
    case ConstraintTag::variable_limit: return "variable-limit";
    case ConstraintTag::branch_flow: return "branch-flow";
    case ConstraintTag::balance: return "balance";
    case ConstraintTag::n_minus_1: return "n-1";
    case ConstraintTag::cutset: return "cutset";
    case ConstraintTag::stability: return "stability";
  }
  return "?";
}

double LinearConstraint::violation(const Eigen::VectorXd& x) const {
  const double v = evaluate(x);
  switch (sense) {
    case Sense::less_equal: return std::max(0.0, v - rhs);
    case Sense::greater_equal: return std::max(0.0, rhs - v);
    case Sense::equal: return std::abs(v - rhs);
  }
  return 0.0;
}

}  // namespace cscopf
