#include "cscopf/dc_sensitivity.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <string>

#include "cscopf/errors.hpp"

namespace cscopf {
namespace {

/// Maps bus index -> position in the reduced system (ref removed).
inline Eigen::Index reduced_pos(std::size_t bus, std::size_t ref) {
  return static_cast<Eigen::Index>(bus < ref ? bus : bus - 1);
}

}  // namespace

DcModel::DcModel(const Network& net)
    : hash_(net.topology_hash()), ref_(net.reference_index()), n_(net.buses().size()) {
  if (!is_connected(net)) throw TopologyError("singular susceptance matrix: network is islanded");
  const auto m = static_cast<Eigen::Index>(n_ - 1);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
  for (const auto& br : net.branches()) {
    if (!br.in_service) continue;
    const double y = 1.0 / br.reactance;
    const auto f = net.bus_index(br.from_bus);
    const auto t = net.bus_index(br.to_bus);
    if (f != ref_) b(reduced_pos(f, ref_), reduced_pos(f, ref_)) += y;
    if (t != ref_) b(reduced_pos(t, ref_), reduced_pos(t, ref_)) += y;
    if (f != ref_ && t != ref_) {
      b(reduced_pos(f, ref_), reduced_pos(t, ref_)) -= y;
      b(reduced_pos(t, ref_), reduced_pos(f, ref_)) -= y;
    }
  }
  if (m > 0) lu_.compute(b);
}

Eigen::VectorXd DcModel::angles(const Eigen::VectorXd& injections_pu) const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
  if (n_ < 2) return theta;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n_ - 1));
  for (std::size_t i = 0; i < n_; ++i) {
    if (i != ref_) rhs(reduced_pos(i, ref_)) = injections_pu(static_cast<Eigen::Index>(i));
  }
  Eigen::VectorXd red = lu_.solve(rhs);
  for (std::size_t i = 0; i < n_; ++i) {
    if (i != ref_) theta(static_cast<Eigen::Index>(i)) = red(reduced_pos(i, ref_));
  }
  return theta;
}

std::shared_ptr<const DcModel> dc_model_for(const Network& net) {
  static std::mutex mutex;
  static std::map<std::uint64_t, std::shared_ptr<const DcModel>> cache;
  constexpr std::size_t kMaxEntries = 64;

  const auto key = net.topology_hash();
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto model = std::make_shared<const DcModel>(net);
  std::lock_guard lock(mutex);
  if (cache.size() >= kMaxEntries) cache.clear();
  cache.emplace(key, model);
  return model;
}

DcFlowResult solve_dc_power_flow(const Network& net, const Eigen::VectorXd& injections_mw) {
  const auto n = static_cast<Eigen::Index>(net.buses().size());
  if (injections_mw.size() != n) throw InputError("injection vector length does not match bus count");
  const double base = net.mva_base();
  if (std::abs(injections_mw.sum()) / base > kBalanceTolerancePu) {
    throw InputError("unbalanced injections: sum = " + std::to_string(injections_mw.sum()) + " MW");
  }
  auto model = dc_model_for(net);
  DcFlowResult out;
  out.angles_rad = model->angles(injections_mw / base);
  out.flows_mw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.branches().size()));
  const auto& branches = net.branches();
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const auto& br = branches[k];
    if (!br.in_service) continue;
    const double dtheta = out.angles_rad(static_cast<Eigen::Index>(net.bus_index(br.from_bus))) -
                          out.angles_rad(static_cast<Eigen::Index>(net.bus_index(br.to_bus)));
    out.flows_mw(static_cast<Eigen::Index>(k)) = dtheta / br.reactance * base;
  }
  return out;
}

DcFlowResult solve_dc_power_flow(const Network& net, std::span<const double> injections_mw) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(injections_mw.size()));
  for (std::size_t i = 0; i < injections_mw.size(); ++i) p(static_cast<Eigen::Index>(i)) = injections_mw[i];
  return solve_dc_power_flow(net, p);
}

Eigen::VectorXd base_flows_mw(const Network& net) {
  auto inj = net.bus_injections_mw();
  return solve_dc_power_flow(net, std::span<const double>(inj)).flows_mw;
}

Eigen::MatrixXd compute_ptdf(const Network& net, BusId ref) {
  const std::size_t nb = net.buses().size();
  const std::size_t nl = net.branches().size();
  const std::size_t ref_idx = net.bus_index(ref);
  auto model = dc_model_for(net);

  // Angles for a unit injection at i withdrawn at the model reference; a
  // different `ref` is handled by subtracting the column of that bus.
  Eigen::MatrixXd theta(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb));
  for (std::size_t i = 0; i < nb; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nb));
    e(static_cast<Eigen::Index>(i)) = 1.0;
    theta.col(static_cast<Eigen::Index>(i)) = model->angles(e);
  }
  Eigen::MatrixXd ptdf = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nl), static_cast<Eigen::Index>(nb));
  const auto& branches = net.branches();
  for (std::size_t k = 0; k < nl; ++k) {
    const auto& br = branches[k];
    if (!br.in_service) continue;
    const auto f = static_cast<Eigen::Index>(net.bus_index(br.from_bus));
    const auto t = static_cast<Eigen::Index>(net.bus_index(br.to_bus));
    ptdf.row(static_cast<Eigen::Index>(k)) = (theta.row(f) - theta.row(t)) / br.reactance;
  }
  if (ref_idx != net.reference_index()) {
    const Eigen::VectorXd shift = ptdf.col(static_cast<Eigen::Index>(ref_idx));
    ptdf.colwise() -= shift;
  }
  return ptdf;
}

Eigen::MatrixXd compute_lodf(const Eigen::MatrixXd& ptdf, const Network& net,
                             std::vector<bool>* bridges) {
  const auto& branches = net.branches();
  const std::size_t nl = branches.size();
  const auto n = static_cast<Eigen::Index>(nl);
  Eigen::MatrixXd lodf = Eigen::MatrixXd::Zero(n, n);
  std::vector<bool> is_bridge(nl, false);

  std::vector<bool> excluded(nl, false);
  for (std::size_t a = 0; a < nl; ++a) {
    const auto& br = branches[a];
    if (!br.in_service) continue;
    const auto f = static_cast<Eigen::Index>(net.bus_index(br.from_bus));
    const auto t = static_cast<Eigen::Index>(net.bus_index(br.to_bus));
    // Flow on every branch for +1 at from, -1 at to.
    const Eigen::VectorXd line = ptdf.col(f) - ptdf.col(t);
    const double denom = 1.0 - line(static_cast<Eigen::Index>(a));

    excluded[a] = true;
    const auto labels = island_labels(net, excluded);
    excluded[a] = false;
    const bool radial = labels[net.bus_index(br.from_bus)] != labels[net.bus_index(br.to_bus)];

    if (radial || std::abs(denom) < kBridgeThreshold) {
      is_bridge[a] = true;
      lodf.col(static_cast<Eigen::Index>(a)).setConstant(std::numeric_limits<double>::quiet_NaN());
      lodf(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = -1.0;
      continue;
    }
    lodf.col(static_cast<Eigen::Index>(a)) = line / denom;
    lodf(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = -1.0;
    for (std::size_t u = 0; u < nl; ++u) {
      if (!branches[u].in_service) lodf(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(a)) = 0.0;
    }
  }
  if (bridges) *bridges = std::move(is_bridge);
  return lodf;
}

SensitivitySet compute_sensitivities(const Network& net) {
  SensitivitySet s;
  s.reference_bus = net.reference_bus();
  s.ptdf = compute_ptdf(net, s.reference_bus);
  s.lodf = compute_lodf(s.ptdf, net, &s.bridge);
  s.base_flows_mw = base_flows_mw(net);
  s.topology_hash = net.topology_hash();
  return s;
}

double SensitivitySet::lodf_at(std::size_t u, std::size_t a) const {
  if (bridge.at(a)) {
    throw TopologyError("radial - outage of branch index " + std::to_string(a) +
                        " islands the system");
  }
  return lodf(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(a));
}

double post_outage_flow(const SensitivitySet& sens, std::size_t u, std::size_t a) {
  if (u == a) return 0.0;
  return sens.base_flows_mw(static_cast<Eigen::Index>(u)) +
         sens.lodf_at(u, a) * sens.base_flows_mw(static_cast<Eigen::Index>(a));
}

}  // namespace cscopf
