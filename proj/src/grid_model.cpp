#include "cscopf/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <queue>
#include <string>

#include "cscopf/errors.hpp"

namespace cscopf {
namespace {

template <class Map>
std::size_t lookup(const Map& map, int id, const char* what) {
  auto it = map.find(id);
  if (it == map.end()) {
    throw InputError(std::string("unknown ") + what + " id " + std::to_string(id));
  }
  return it->second;
}

std::string gen_tag(const Generator& g) { return "generator " + std::to_string(g.id); }
std::string load_tag(const Load& l) { return "load " + std::to_string(l.id); }

}  // namespace

Network::Network(std::vector<Bus> buses, std::vector<Branch> branches,
                 std::vector<Generator> generators, std::vector<Load> loads, double mva_base)
    : buses_(std::move(buses)),
      branches_(std::move(branches)),
      generators_(std::move(generators)),
      loads_(std::move(loads)),
      mva_base_(mva_base) {
  index_and_check();
}

void Network::index_and_check() {
  if (!(mva_base_ > 0.0)) throw InputError("mva_base must be positive");
  if (buses_.empty()) throw InputError("network has no buses");

  int references = 0;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!bus_pos_.emplace(buses_[i].id, i).second) {
      throw InputError("duplicate bus id " + std::to_string(buses_[i].id));
    }
    if (buses_[i].is_reference) {
      ++references;
      reference_index_ = i;
    }
  }
  if (references == 0) throw InputError("no reference bus");
  if (references > 1) throw InputError("multiple reference buses");

  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const Branch& br = branches_[i];
    const std::string tag = "branch " + std::to_string(br.id);
    if (!branch_pos_.emplace(br.id, i).second) throw InputError("duplicate " + tag);
    if (!bus_pos_.contains(br.from_bus) || !bus_pos_.contains(br.to_bus)) {
      throw InputError(tag + " references an unknown bus");
    }
    if (br.from_bus == br.to_bus) throw InputError(tag + " connects a bus to itself");
    if (!(br.reactance > 0.0)) throw InputError(tag + " must have positive reactance");
    if (!(br.flow_limit_mw > 0.0)) throw InputError(tag + " must have a positive flow limit");
  }

  for (std::size_t i = 0; i < generators_.size(); ++i) {
    const Generator& g = generators_[i];
    if (!gen_pos_.emplace(g.id, i).second) throw InputError("duplicate " + gen_tag(g));
    if (!bus_pos_.contains(g.bus)) throw InputError(gen_tag(g) + " references an unknown bus");
    if (!(g.p_min_mw <= g.p0_mw && g.p0_mw <= g.p_max_mw)) {
      throw InputError(gen_tag(g) + " violates p_min <= p0 <= p_max");
    }
    if (g.cost_c < 0.0) throw InputError(gen_tag(g) + " has a negative quadratic cost");
    if (g.dynamics) {
      if (!(g.dynamics->inertia_h > 0.0)) throw InputError(gen_tag(g) + " inertia_h must be positive");
      if (!(g.dynamics->xd_prime > 0.0)) throw InputError(gen_tag(g) + " xd_prime must be positive");
      if (!(g.dynamics->mva_base > 0.0)) throw InputError(gen_tag(g) + " mva_base must be positive");
    }
  }

  double max_marginal = 0.0;
  for (const auto& g : generators_) max_marginal = std::max(max_marginal, g.marginal_cost_at_max());

  for (std::size_t i = 0; i < loads_.size(); ++i) {
    const Load& l = loads_[i];
    if (!load_pos_.emplace(l.id, i).second) throw InputError("duplicate " + load_tag(l));
    if (!bus_pos_.contains(l.bus)) throw InputError(load_tag(l) + " references an unknown bus");
    if (!(0.0 <= l.l_min_mw && l.l_min_mw <= l.l0_mw && l.l0_mw <= l.l_max_mw)) {
      throw InputError(load_tag(l) + " violates 0 <= l_min <= l0 <= l_max");
    }
    if (!(l.shed_cost > max_marginal)) {
      throw InputError(load_tag(l) + " shed_cost must exceed the largest generator marginal cost");
    }
  }
}

std::size_t Network::bus_index(BusId id) const { return lookup(bus_pos_, id, "bus"); }
std::size_t Network::branch_index(BranchId id) const { return lookup(branch_pos_, id, "branch"); }
std::size_t Network::generator_index(GeneratorId id) const { return lookup(gen_pos_, id, "generator"); }
std::size_t Network::load_index(LoadId id) const { return lookup(load_pos_, id, "load"); }

bool Network::has_dynamics() const {
  return std::all_of(generators_.begin(), generators_.end(),
                     [](const Generator& g) { return g.dynamics.has_value(); });
}

double Network::total_generation_mw() const {
  return std::accumulate(generators_.begin(), generators_.end(), 0.0,
                         [](double s, const Generator& g) { return s + g.p0_mw; });
}

double Network::total_load_mw() const {
  return std::accumulate(loads_.begin(), loads_.end(), 0.0,
                         [](double s, const Load& l) { return s + l.l0_mw; });
}

std::vector<double> Network::bus_injections_mw() const {
  std::vector<double> p(buses_.size(), 0.0);
  for (const auto& g : generators_) p[bus_index(g.bus)] += g.p0_mw;
  for (const auto& l : loads_) p[bus_index(l.bus)] -= l.l0_mw;
  return p;
}

Network Network::with_operating_point(std::span<const double> p0_mw,
                                      std::span<const double> l0_mw) const {
  if (p0_mw.size() != generators_.size() || l0_mw.size() != loads_.size()) {
    throw InputError("operating point dimension mismatch");
  }
  auto gens = generators_;
  for (std::size_t i = 0; i < gens.size(); ++i) gens[i].p0_mw = p0_mw[i];
  auto loads = loads_;
  for (std::size_t j = 0; j < loads.size(); ++j) loads[j].l0_mw = l0_mw[j];
  return Network(buses_, branches_, std::move(gens), std::move(loads), mva_base_);
}

Network Network::with_generators(std::vector<Generator> generators) const {
  return Network(buses_, branches_, std::move(generators), loads_, mva_base_);
}

Network Network::with_loads(std::vector<Load> loads) const {
  return Network(buses_, branches_, generators_, std::move(loads), mva_base_);
}

Network Network::with_branches(std::vector<Branch> branches) const {
  return Network(buses_, std::move(branches), generators_, loads_, mva_base_);
}

std::uint64_t Network::topology_hash() const {
  // FNV-1a over (bus ids, in-service branch endpoints and reactances).
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& b : buses_) mix(&b.id, sizeof b.id);
  mix(&reference_index_, sizeof reference_index_);
  for (const auto& br : branches_) {
    if (!br.in_service) continue;
    mix(&br.id, sizeof br.id);
    mix(&br.from_bus, sizeof br.from_bus);
    mix(&br.to_bus, sizeof br.to_bus);
    mix(&br.reactance, sizeof br.reactance);
  }
  return h;
}

std::vector<int> island_labels(const Network& net, const std::vector<bool>& excluded) {
  const auto n = net.buses().size();
  std::vector<std::vector<std::size_t>> adj(n);
  const auto& branches = net.branches();
  for (std::size_t k = 0; k < branches.size(); ++k) {
    if (!branches[k].in_service) continue;
    if (!excluded.empty() && excluded[k]) continue;
    auto a = net.bus_index(branches[k].from_bus);
    auto b = net.bus_index(branches[k].to_bus);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      auto u = q.front();
      q.pop();
      for (auto v : adj[u]) {
        if (label[v] < 0) {
          label[v] = next;
          q.push(v);
        }
      }
    }
    ++next;
  }
  return label;
}

bool is_connected(const Network& net) {
  auto labels = island_labels(net);
  return std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; });
}

void validate_network(const Network& net) {
  if (!is_connected(net)) throw InputError("network is not connected");
  const double mismatch = net.total_generation_mw() - net.total_load_mw();
  if (std::abs(mismatch) / net.mva_base() > kBalanceTolerancePu) {
    throw InputError("base case is unbalanced: generation - load = " + std::to_string(mismatch) +
                     " MW");
  }
}

OutageResult apply_outage(const Network& net, const std::set<BranchId>& branch_ids) {
  auto branches = net.branches();
  for (BranchId id : branch_ids) {
    if (!net.has_branch(id)) throw InputError("unknown branch id " + std::to_string(id));
    auto& br = branches[net.branch_index(id)];
    if (!br.in_service) {
      throw InputError("branch " + std::to_string(id) + " is already out of service");
    }
    br.in_service = false;
  }
  Network out = net.with_branches(std::move(branches));
  auto labels = island_labels(out);
  bool islanded = std::any_of(labels.begin(), labels.end(), [](int l) { return l != 0; });
  return OutageResult{std::move(out), islanded, std::move(labels)};
}

}  // namespace cscopf
