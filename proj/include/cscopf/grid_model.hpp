#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

namespace cscopf {

using BusId = int;
using BranchId = int;
using GeneratorId = int;
using LoadId = int;

struct Bus {
  BusId id = 0;
  bool is_reference = false;

  friend bool operator==(const Bus&, const Bus&) = default;
};

/// Series branch of the DC model. Limits are symmetric: f_min = -f_max.
struct Branch {
  BranchId id = 0;
  BusId from_bus = 0;
  BusId to_bus = 0;
  double reactance = 0.0;  // pu on the system base
  double flow_limit_mw = 0.0;
  bool in_service = true;

  friend bool operator==(const Branch&, const Branch&) = default;
};

/// Classical machine parameters. inertia_h and xd_prime are on the
/// machine base mva_base.
struct GenDynamics {
  double inertia_h = 0.0;
  double damping_d = 0.0;
  double xd_prime = 0.0;
  double mva_base = 100.0;

  friend bool operator==(const GenDynamics&, const GenDynamics&) = default;
};

struct Generator {
  GeneratorId id = 0;
  BusId bus = 0;
  double p0_mw = 0.0;
  double p_min_mw = 0.0;
  double p_max_mw = 0.0;
  double cost_a = 0.0;  // $/hr
  double cost_b = 0.0;  // $/MWh
  double cost_c = 0.0;  // $/MW^2h
  std::optional<GenDynamics> dynamics;

  /// dF/dp evaluated at p_max.
  [[nodiscard]] double marginal_cost_at_max() const { return cost_b + 2.0 * cost_c * p_max_mw; }
  /// F(p) = a + b p + c p^2.
  [[nodiscard]] double cost(double p_mw) const { return cost_a + cost_b * p_mw + cost_c * p_mw * p_mw; }

  friend bool operator==(const Generator&, const Generator&) = default;
};

struct Load {
  LoadId id = 0;
  BusId bus = 0;
  double l0_mw = 0.0;
  double l_min_mw = 0.0;
  double l_max_mw = 0.0;
  double shed_cost = 0.0;  // $/MWh

  friend bool operator==(const Load&, const Load&) = default;
};

/// Static grid model. Immutable once constructed; every modification
/// returns a new Network. The constructor enforces the per-element
/// invariants; whole-network properties (connectivity, balance) are
/// checked by validate_network().
class Network {
 public:
  Network(std::vector<Bus> buses, std::vector<Branch> branches, std::vector<Generator> generators,
          std::vector<Load> loads, double mva_base = 100.0);

  [[nodiscard]] const std::vector<Bus>& buses() const { return buses_; }
  [[nodiscard]] const std::vector<Branch>& branches() const { return branches_; }
  [[nodiscard]] const std::vector<Generator>& generators() const { return generators_; }
  [[nodiscard]] const std::vector<Load>& loads() const { return loads_; }
  [[nodiscard]] double mva_base() const { return mva_base_; }

  [[nodiscard]] std::size_t bus_index(BusId id) const;
  [[nodiscard]] std::size_t branch_index(BranchId id) const;
  [[nodiscard]] std::size_t generator_index(GeneratorId id) const;
  [[nodiscard]] std::size_t load_index(LoadId id) const;
  [[nodiscard]] bool has_branch(BranchId id) const { return branch_pos_.contains(id); }

  [[nodiscard]] BusId reference_bus() const { return buses_[reference_index_].id; }
  [[nodiscard]] std::size_t reference_index() const { return reference_index_; }

  [[nodiscard]] bool has_dynamics() const;
  [[nodiscard]] double total_generation_mw() const;
  [[nodiscard]] double total_load_mw() const;

  /// Net injection p0 - l0 aggregated per bus (MW), indexed like buses().
  [[nodiscard]] std::vector<double> bus_injections_mw() const;

  /// Copy with new generator set points and load levels (MW, in element order).
  [[nodiscard]] Network with_operating_point(std::span<const double> p0_mw,
                                             std::span<const double> l0_mw) const;
  [[nodiscard]] Network with_generators(std::vector<Generator> generators) const;
  [[nodiscard]] Network with_loads(std::vector<Load> loads) const;
  [[nodiscard]] Network with_branches(std::vector<Branch> branches) const;

  /// Digest of the in-service branch set and reactances.
  [[nodiscard]] std::uint64_t topology_hash() const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  void index_and_check();

  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::vector<Generator> generators_;
  std::vector<Load> loads_;
  double mva_base_ = 100.0;

  std::unordered_map<BusId, std::size_t> bus_pos_;
  std::unordered_map<BranchId, std::size_t> branch_pos_;
  std::unordered_map<GeneratorId, std::size_t> gen_pos_;
  std::unordered_map<LoadId, std::size_t> load_pos_;
  std::size_t reference_index_ = 0;
};

/// Tolerance on the base-case balance, in pu of the system base.
inline constexpr double kBalanceTolerancePu = 1e-6;

/// Checks connectivity and generation/load balance. Throws InputError.
void validate_network(const Network& net);

/// Island label per bus (indexed like buses()), using in-service branches
/// minus any branch index flagged in `excluded`.
std::vector<int> island_labels(const Network& net, const std::vector<bool>& excluded = {});

[[nodiscard]] bool is_connected(const Network& net);

struct OutageResult {
  Network network;
  bool islanded = false;
  std::vector<int> island_of_bus;  // indexed like buses()
};

/// Returns a copy with the given branches out of service.
/// Throws InputError for unknown or already out-of-service branches.
OutageResult apply_outage(const Network& net, const std::set<BranchId>& branch_ids);

}  // namespace cscopf
