#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cscopf/grid_model.hpp"

namespace cscopf {

/// Native JSON case: top-level keys `buses`, `branches`, `generators`,
/// `loads`, `mva_base`. Schema violations raise InputError carrying the
/// JSON pointer of the offending field.
Network parse_json_case(std::string_view text);

/// Canonical serialization: elements sorted by id, object keys sorted,
/// shortest round-trip number formatting.
nlohmann::json case_to_json(const Network& net);
std::string serialize_json_case(const Network& net);

struct MatpowerOptions {
  /// MATPOWER uses rateA = 0 for "unlimited"; such branches get this limit.
  double default_flow_limit_mw = 9900.0;
  /// Lossless DC has no losses to cover: the reference-bus generator
  /// absorbs the mismatch between total Pg and total Pd.
  bool rebalance_on_reference = true;
};

/// Subset of the MATPOWER v2 case format: mpc.baseMVA, mpc.bus,
/// mpc.branch, mpc.gen and polynomial (model 2) mpc.gencost.
Network parse_matpower_case(std::string_view text, const MatpowerOptions& options = {});

struct GeneratorDynamicsEntry {
  GeneratorId id = 0;
  GenDynamics dynamics;
};

struct ShedCostEntry {
  LoadId id = 0;
  double shed_cost = 0.0;
};

/// `{ "generator_dynamics": [...], "load_shed_costs": [...] }`
struct DynamicsSidecar {
  std::vector<GeneratorDynamicsEntry> generator_dynamics;
  std::vector<ShedCostEntry> load_shed_costs;
};

DynamicsSidecar parse_dynamics_sidecar(std::string_view text);
Network merge_sidecar(const Network& net, const DynamicsSidecar& sidecar);

/// 10x the largest generator marginal cost at p_max.
double default_shed_cost(const std::vector<Generator>& generators);

std::string read_text_file(const std::filesystem::path& path);

/// Loads a case by extension (.m -> MATPOWER, otherwise JSON), merges the
/// optional sidecar and runs validate_network().
Network load_case(const std::filesystem::path& case_path,
                  const std::optional<std::filesystem::path>& sidecar_path = std::nullopt,
                  const MatpowerOptions& options = {});

}  // namespace cscopf
