#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cscopf/dc_sensitivity.hpp"
#include "cscopf/grid_model.hpp"
#include "cscopf/linear_constraint.hpp"

namespace cscopf {

/// A set of in-service branches whose removal splits the network into
/// side_a and side_b. Flow is the signed sum oriented a -> b, so
/// counter-flowing branches relieve the cut.
struct CutSet {
  std::vector<BranchId> branches;  // sorted ascending
  std::vector<BusId> side_a;       // sorted ascending
  std::vector<BusId> side_b;
  double aggregate_flow_mw = 0.0;
  double aggregate_limit_mw = 0.0;
  double transfer_margin_mw = 0.0;

  [[nodiscard]] double utilization() const { return aggregate_flow_mw / aggregate_limit_mw; }
  [[nodiscard]] bool saturated() const { return aggregate_flow_mw > aggregate_limit_mw; }
  /// Same cut seen from side_b.
  [[nodiscard]] CutSet reversed() const;

  friend bool operator==(const CutSet&, const CutSet&) = default;
};

/// max(0, aggregate_flow - aggregate_limit).
double transfer_margin(const CutSet& cut);

/// Builds the CutSet for `branch_ids` with side_a the component holding
/// `source_bus`. Throws InputError if the set does not split the in-service
/// graph into exactly two islands, or names an out-of-service branch.
CutSet evaluate_cut(const Network& net, std::span<const double> flows_mw,
                    std::vector<BranchId> branch_ids, BusId source_bus);

struct FtOptions {
  double utilization_threshold = 0.98;
  /// Extra candidate cuts, e.g. every monitored line crossing a fire region.
  std::vector<std::vector<BranchId>> corridor_cuts;
};

/// Seeded min-cut search. Every branch with |f|/f_max >= threshold seeds a
/// max-flow/min-cut between its endpoints (capacities f_max); the
/// resulting edge cut, the branch alone when it is a bridge, and any
/// corridor cuts are evaluated. Returns deduplicated cuts with utilization
/// above the threshold, sorted by transfer margin (descending).
std::vector<CutSet> find_saturated_cutsets(const Network& net, std::span<const double> flows_mw,
                                           const FtOptions& options = {});

/// Minimum-capacity edge cut between two buses on the in-service graph
/// (capacities = flow limits). Returns the branch ids and the bus ids on
/// the source side.
struct MinCut {
  std::vector<BranchId> branches;
  std::vector<BusId> source_side;
  double capacity = 0.0;
};
MinCut min_cut_between(const Network& net, BusId source, BusId sink);

/// sum_i (sum_{u in K} s_u ptdf[u][bus_i]) dp_i + sum_j (sum_{u in K} s_u ptdf[u][bus_j]) shed_j
///   <= -transfer_margin
/// with s_u = +1 when branch u points from side_a to side_b. The shed
/// variables raise net injection, hence the positive load coefficients.
LinearConstraint cutset_constraint(const CutSet& cut, const SensitivitySet& sens, const Network& net);

/// Row over the decision vector giving the change of the cut's a -> b flow.
Eigen::VectorXd cut_flow_sensitivity(const CutSet& cut, const SensitivitySet& sens, const Network& net);

/// Aggregate a -> b flow of an existing cut for a new flow vector.
double cut_flow(const CutSet& cut, const Network& net, std::span<const double> flows_mw);

}  // namespace cscopf
