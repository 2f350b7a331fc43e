#include "cscopf/cutset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <string>

#include "cscopf/errors.hpp"

namespace cscopf {
namespace {

/// Edmonds-Karp on the undirected in-service graph. Each branch becomes a
/// pair of opposed arcs sharing one capacity budget per direction.
class FlowGraph {
 public:
  explicit FlowGraph(const Network& net) : net_(net), adj_(net.buses().size()) {
    const auto& branches = net.branches();
    for (std::size_t k = 0; k < branches.size(); ++k) {
      const auto& br = branches[k];
      if (!br.in_service) continue;
      const auto a = net.bus_index(br.from_bus);
      const auto b = net.bus_index(br.to_bus);
      add_pair(a, b, br.flow_limit_mw);
      max_cap_ = std::max(max_cap_, br.flow_limit_mw);
    }
  }

  MinCut min_cut(std::size_t s, std::size_t t) {
    const double eps = 1e-12 * std::max(1.0, max_cap_);
    double total = 0.0;
    while (true) {
      std::vector<std::ptrdiff_t> via(adj_.size(), -1);
      std::vector<bool> seen(adj_.size(), false);
      std::queue<std::size_t> q;
      q.push(s);
      seen[s] = true;
      while (!q.empty() && !seen[t]) {
        auto u = q.front();
        q.pop();
        for (auto e : adj_[u]) {
          const auto& arc = arcs_[e];
          if (!seen[arc.to] && arc.cap > eps) {
            seen[arc.to] = true;
            via[arc.to] = static_cast<std::ptrdiff_t>(e);
            q.push(arc.to);
          }
        }
      }
      if (!seen[t]) break;
      double push = std::numeric_limits<double>::infinity();
      for (auto v = t; v != s; v = arcs_[static_cast<std::size_t>(via[v]) ^ 1U].to) {
        push = std::min(push, arcs_[static_cast<std::size_t>(via[v])].cap);
      }
      for (auto v = t; v != s; v = arcs_[static_cast<std::size_t>(via[v]) ^ 1U].to) {
        const auto e = static_cast<std::size_t>(via[v]);
        arcs_[e].cap -= push;
        arcs_[e ^ 1U].cap += push;
      }
      total += push;
    }

    // Source side: residual reachability from s.
    std::vector<bool> side(adj_.size(), false);
    std::queue<std::size_t> q;
    q.push(s);
    side[s] = true;
    while (!q.empty()) {
      auto u = q.front();
      q.pop();
      for (auto e : adj_[u]) {
        if (!side[arcs_[e].to] && arcs_[e].cap > eps) {
          side[arcs_[e].to] = true;
          q.push(arcs_[e].to);
        }
      }
    }
    MinCut cut;
    cut.capacity = total;
    const auto& branches = net_.branches();
    for (std::size_t k = 0; k < branches.size(); ++k) {
      if (!branches[k].in_service) continue;
      const bool a = side[net_.bus_index(branches[k].from_bus)];
      const bool b = side[net_.bus_index(branches[k].to_bus)];
      if (a != b) cut.branches.push_back(branches[k].id);
    }
    for (std::size_t i = 0; i < side.size(); ++i) {
      if (side[i]) cut.source_side.push_back(net_.buses()[i].id);
    }
    std::sort(cut.branches.begin(), cut.branches.end());
    std::sort(cut.source_side.begin(), cut.source_side.end());
    return cut;
  }

 private:
  struct Arc {
    std::size_t to;
    double cap;
  };

  void add_pair(std::size_t a, std::size_t b, double cap) {
    adj_[a].push_back(arcs_.size());
    arcs_.push_back({b, cap});
    adj_[b].push_back(arcs_.size());
    arcs_.push_back({a, cap});
  }

  const Network& net_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<Arc> arcs_;
  double max_cap_ = 0.0;
};

CutSet oriented_by_flow(CutSet cut) { return cut.aggregate_flow_mw < 0.0 ? cut.reversed() : cut; }

}  // namespace

CutSet CutSet::reversed() const {
  CutSet r = *this;
  std::swap(r.side_a, r.side_b);
  r.aggregate_flow_mw = -aggregate_flow_mw;
  r.transfer_margin_mw = std::max(0.0, r.aggregate_flow_mw - r.aggregate_limit_mw);
  return r;
}

double transfer_margin(const CutSet& cut) {
  return std::max(0.0, cut.aggregate_flow_mw - cut.aggregate_limit_mw);
}

CutSet evaluate_cut(const Network& net, std::span<const double> flows_mw,
                    std::vector<BranchId> branch_ids, BusId source_bus) {
  const auto& branches = net.branches();
  if (flows_mw.size() != branches.size()) throw InputError("flow vector length does not match branch count");
  std::sort(branch_ids.begin(), branch_ids.end());
  branch_ids.erase(std::unique(branch_ids.begin(), branch_ids.end()), branch_ids.end());
  if (branch_ids.empty()) throw InputError("empty cut-set");

  std::vector<bool> excluded(branches.size(), false);
  for (BranchId id : branch_ids) {
    const auto k = net.branch_index(id);
    if (!branches[k].in_service) {
      throw InputError("cut-set references out-of-service branch " + std::to_string(id));
    }
    excluded[k] = true;
  }
  const auto labels = island_labels(net, excluded);
  const int label_a = labels[net.bus_index(source_bus)];
  int other = -1;
  for (int l : labels) {
    if (l == label_a) continue;
    if (other >= 0 && l != other) throw InputError("branch set splits the network into more than two islands");
    other = l;
  }
  if (other < 0) throw InputError("branch set does not disconnect the network");

  CutSet cut;
  cut.branches = std::move(branch_ids);
  const auto& buses = net.buses();
  for (std::size_t i = 0; i < buses.size(); ++i) {
    (labels[i] == label_a ? cut.side_a : cut.side_b).push_back(buses[i].id);
  }
  std::sort(cut.side_a.begin(), cut.side_a.end());
  std::sort(cut.side_b.begin(), cut.side_b.end());

  for (BranchId id : cut.branches) {
    const auto k = net.branch_index(id);
    const auto& br = branches[k];
    const bool from_in_a = labels[net.bus_index(br.from_bus)] == label_a;
    const bool to_in_a = labels[net.bus_index(br.to_bus)] == label_a;
    if (from_in_a == to_in_a) {
      throw InputError("branch " + std::to_string(id) + " does not cross the cut");
    }
    cut.aggregate_flow_mw += from_in_a ? flows_mw[k] : -flows_mw[k];
    cut.aggregate_limit_mw += br.flow_limit_mw;
  }
  cut.transfer_margin_mw = transfer_margin(cut);
  return cut;
}

MinCut min_cut_between(const Network& net, BusId source, BusId sink) {
  FlowGraph g(net);
  return g.min_cut(net.bus_index(source), net.bus_index(sink));
}

std::vector<CutSet> find_saturated_cutsets(const Network& net, std::span<const double> flows_mw,
                                           const FtOptions& options) {
  const auto& branches = net.branches();
  if (flows_mw.size() != branches.size()) throw InputError("flow vector length does not match branch count");
  std::map<std::vector<BranchId>, CutSet> found;

  auto consider = [&](std::vector<BranchId> ids, BusId source) {
    CutSet cut;
    try {
      cut = oriented_by_flow(evaluate_cut(net, flows_mw, std::move(ids), source));
    } catch (const InputError&) {
      return;  // not a two-island cut
    }
    if (cut.utilization() > options.utilization_threshold) {
      found.emplace(cut.branches, std::move(cut));
    }
  };

  for (std::size_t k = 0; k < branches.size(); ++k) {
    const auto& br = branches[k];
    if (!br.in_service) continue;
    if (std::abs(flows_mw[k]) / br.flow_limit_mw < options.utilization_threshold) continue;
    const bool forward = flows_mw[k] >= 0.0;
    const BusId src = forward ? br.from_bus : br.to_bus;
    const BusId dst = forward ? br.to_bus : br.from_bus;
    consider({br.id}, src);
    auto mc = min_cut_between(net, src, dst);
    consider(mc.branches, src);
  }
  for (const auto& corridor : options.corridor_cuts) {
    if (corridor.empty()) continue;
    bool usable = true;
    for (BranchId id : corridor) usable = usable && net.has_branch(id) && branches[net.branch_index(id)].in_service;
    if (usable) consider(corridor, branches[net.branch_index(corridor.front())].from_bus);
  }

  std::vector<CutSet> out;
  out.reserve(found.size());
  for (auto& [key, cut] : found) out.push_back(std::move(cut));
  std::stable_sort(out.begin(), out.end(), [](const CutSet& a, const CutSet& b) {
    return a.transfer_margin_mw > b.transfer_margin_mw;
  });
  return out;
}

double cut_flow(const CutSet& cut, const Network& net, std::span<const double> flows_mw) {
  double total = 0.0;
  for (BranchId id : cut.branches) {
    const auto k = net.branch_index(id);
    const auto& br = net.branches()[k];
    const bool from_in_a = std::binary_search(cut.side_a.begin(), cut.side_a.end(), br.from_bus);
    total += from_in_a ? flows_mw[k] : -flows_mw[k];
  }
  return total;
}

Eigen::VectorXd cut_flow_sensitivity(const CutSet& cut, const SensitivitySet& sens, const Network& net) {
  if (sens.topology_hash != net.topology_hash()) {
    throw InputError("sensitivities do not match the network topology");
  }
  const auto n_bus = static_cast<Eigen::Index>(net.buses().size());
  Eigen::VectorXd bus_coeff = Eigen::VectorXd::Zero(n_bus);
  for (BranchId id : cut.branches) {
    const auto k = net.branch_index(id);
    const auto& br = net.branches()[k];
    if (!br.in_service) {
      throw InputError("cut-set references out-of-service branch " + std::to_string(id));
    }
    const bool from_in_a = std::binary_search(cut.side_a.begin(), cut.side_a.end(), br.from_bus);
    const double sign = from_in_a ? 1.0 : -1.0;
    bus_coeff += sign * sens.ptdf.row(static_cast<Eigen::Index>(k)).transpose();
  }
  const auto& gens = net.generators();
  const auto& loads = net.loads();
  Eigen::VectorXd row(static_cast<Eigen::Index>(gens.size() + loads.size()));
  for (std::size_t i = 0; i < gens.size(); ++i) {
    row(static_cast<Eigen::Index>(i)) = bus_coeff(static_cast<Eigen::Index>(net.bus_index(gens[i].bus)));
  }
  for (std::size_t j = 0; j < loads.size(); ++j) {
    row(static_cast<Eigen::Index>(gens.size() + j)) =
        bus_coeff(static_cast<Eigen::Index>(net.bus_index(loads[j].bus)));
  }
  return row;
}

LinearConstraint cutset_constraint(const CutSet& cut, const SensitivitySet& sens, const Network& net) {
  LinearConstraint c;
  c.coeffs = cut_flow_sensitivity(cut, sens, net);
  c.sense = Sense::less_equal;
  c.rhs = -transfer_margin(cut);
  c.tag = ConstraintTag::cutset;
  std::string key = "cutset:";
  for (std::size_t i = 0; i < cut.branches.size(); ++i) {
    if (i) key += ",";
    key += std::to_string(cut.branches[i]);
  }
  c.provenance = std::move(key);
  return c;
}

}  // namespace cscopf
