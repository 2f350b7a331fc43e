#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cscopf/grid_model.hpp"

namespace cscopf {

/// Reduced susceptance matrix of one topology, factorized once.
/// Rows/columns exclude the reference bus. Throws TopologyError when the
/// in-service graph is islanded.
class DcModel {
 public:
  explicit DcModel(const Network& net);

  /// Bus angles (rad) for bus injections in pu, reference angle zero.
  [[nodiscard]] Eigen::VectorXd angles(const Eigen::VectorXd& injections_pu) const;

  [[nodiscard]] std::uint64_t topology_hash() const { return hash_; }
  [[nodiscard]] std::size_t reference_index() const { return ref_; }

 private:
  std::uint64_t hash_;
  std::size_t ref_;
  std::size_t n_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

/// Returns the factorization for net's topology, reusing a cached one when
/// the topology hash matches. Thread-safe.
std::shared_ptr<const DcModel> dc_model_for(const Network& net);

struct DcFlowResult {
  Eigen::VectorXd angles_rad;  // per bus
  Eigen::VectorXd flows_mw;    // per branch, from -> to positive, 0 if out of service
};

/// Injections in MW per bus (indexed like net.buses()); must sum to zero.
DcFlowResult solve_dc_power_flow(const Network& net, std::span<const double> injections_mw);
DcFlowResult solve_dc_power_flow(const Network& net, const Eigen::VectorXd& injections_mw);

/// Branch flows of the network's own operating point (p0 - l0).
Eigen::VectorXd base_flows_mw(const Network& net);

/// ptdf(u, i): flow change on branch u per MW injected at bus i and
/// withdrawn at `ref`. Rows of out-of-service branches are zero.
Eigen::MatrixXd compute_ptdf(const Network& net, BusId ref);

struct SensitivitySet {
  Eigen::MatrixXd ptdf;           // branches x buses
  Eigen::MatrixXd lodf;           // branches x branches; NaN column for bridges
  Eigen::VectorXd base_flows_mw;  // f0 per branch
  BusId reference_bus = 0;
  std::uint64_t topology_hash = 0;
  std::vector<bool> bridge;  // per branch: outage islands the system

  /// lodf(u, a); throws TopologyError when a is a bridge.
  [[nodiscard]] double lodf_at(std::size_t u, std::size_t a) const;
};

/// Threshold on |1 - ptdf_line(a, a)| below which an outage is radial.
inline constexpr double kBridgeThreshold = 1e-6;

/// lodf(u, a) = ptdf_line(u, a) / (1 - ptdf_line(a, a)) where ptdf_line is
/// the PTDF of an injection pair across branch a's endpoints. The diagonal
/// is -1. Bridges are detected by a connectivity test and get NaN columns.
Eigen::MatrixXd compute_lodf(const Eigen::MatrixXd& ptdf, const Network& net,
                             std::vector<bool>* bridges = nullptr);

SensitivitySet compute_sensitivities(const Network& net);

/// Predicted post-outage flow on u after losing a.
double post_outage_flow(const SensitivitySet& sens, std::size_t u, std::size_t a);

}  // namespace cscopf
