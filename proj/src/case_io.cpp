#include "cscopf/case_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cscopf/errors.hpp"

namespace cscopf {
namespace {

using nlohmann::json;

/// Typed accessors that report the JSON pointer of a bad field.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

  [[nodiscard]] const json& node() const { return node_; }
  [[nodiscard]] const std::string& path() const { return path_; }

  [[nodiscard]] bool has(const char* key) const { return node_.contains(key) && !node_[key].is_null(); }

  [[nodiscard]] double number(const char* key) const {
    const json& v = require(key);
    if (!v.is_number()) fail(key, "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "expected a finite number");
    return d;
  }

  [[nodiscard]] double number_or(const char* key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  [[nodiscard]] int integer(const char* key) const {
    const json& v = require(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    return v.get<int>();
  }

  [[nodiscard]] bool boolean_or(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_[key];
    if (!v.is_boolean()) fail(key, "expected a boolean");
    return v.get<bool>();
  }

  [[nodiscard]] std::vector<Reader> array(const char* key) const {
    const json& v = require(key);
    if (!v.is_array()) fail(key, "expected an array");
    std::vector<Reader> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = path_ + "/" + key + "/" + std::to_string(i);
      if (!v[i].is_object()) throw InputError("schema violation at " + p + ": expected an object");
      out.emplace_back(v[i], p);
    }
    return out;
  }

  [[nodiscard]] Reader object(const char* key) const {
    const json& v = require(key);
    if (!v.is_object()) fail(key, "expected an object");
    return Reader(v, path_ + "/" + key);
  }

  [[noreturn]] void fail(const char* key, const std::string& why) const {
    throw InputError("schema violation at " + path_ + "/" + key + ": " + why);
  }

 private:
  const json& require(const char* key) const {
    if (!node_.contains(key)) fail(key, "missing required field");
    return node_[key];
  }

  const json& node_;
  std::string path_;
};

json parse_json_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
}

/// Rethrows element invariant errors with the pointer of the element.
template <class Fn>
Network construct_with_context(Fn&& fn) {
  try {
    return fn();
  } catch (const InputError& e) {
    throw InputError(std::string("invariant violation: ") + e.what());
  }
}

GenDynamics read_dynamics(const Reader& r) {
  GenDynamics d;
  d.inertia_h = r.number("inertia_h");
  d.damping_d = r.number_or("damping_d", 0.0);
  d.xd_prime = r.number("xd_prime");
  d.mva_base = r.number_or("mva_base", 100.0);
  return d;
}

json dynamics_to_json(const GenDynamics& d) {
  return json{{"inertia_h", d.inertia_h},
              {"damping_d", d.damping_d},
              {"xd_prime", d.xd_prime},
              {"mva_base", d.mva_base}};
}

}  // namespace

double default_shed_cost(const std::vector<Generator>& generators) {
  double max_marginal = 0.0;
  for (const auto& g : generators) max_marginal = std::max(max_marginal, g.marginal_cost_at_max());
  return 10.0 * std::max(max_marginal, 1.0);
}

Network parse_json_case(std::string_view text) {
  const json doc = parse_json_text(text);
  if (!doc.is_object()) throw InputError("schema violation at : expected a top-level object");
  const Reader root(doc, "");

  std::vector<Bus> buses;
  for (const auto& r : root.array("buses")) {
    buses.push_back(Bus{r.integer("id"), r.boolean_or("is_reference", false)});
  }

  std::vector<Branch> branches;
  for (const auto& r : root.array("branches")) {
    Branch br;
    br.id = r.integer("id");
    br.from_bus = r.integer("from_bus");
    br.to_bus = r.integer("to_bus");
    br.reactance = r.number("reactance");
    br.flow_limit_mw = r.number("flow_limit_mw");
    br.in_service = r.boolean_or("in_service", true);
    if (!(br.reactance > 0.0)) r.fail("reactance", "must be positive");
    if (!(br.flow_limit_mw > 0.0)) r.fail("flow_limit_mw", "must be positive");
    branches.push_back(br);
  }

  std::vector<Generator> gens;
  for (const auto& r : root.array("generators")) {
    Generator g;
    g.id = r.integer("id");
    g.bus = r.integer("bus");
    g.p0_mw = r.number("p0_mw");
    g.p_min_mw = r.number("p_min_mw");
    g.p_max_mw = r.number("p_max_mw");
    g.cost_a = r.number_or("cost_a", 0.0);
    g.cost_b = r.number_or("cost_b", 0.0);
    g.cost_c = r.number_or("cost_c", 0.0);
    if (r.has("dynamics")) g.dynamics = read_dynamics(r.object("dynamics"));
    if (!(g.p_min_mw <= g.p0_mw && g.p0_mw <= g.p_max_mw)) {
      r.fail("p0_mw", "generator " + std::to_string(g.id) + " violates p_min <= p0 <= p_max");
    }
    gens.push_back(g);
  }

  const double shed_default = default_shed_cost(gens);
  std::vector<Load> loads;
  for (const auto& r : root.array("loads")) {
    Load l;
    l.id = r.integer("id");
    l.bus = r.integer("bus");
    l.l0_mw = r.number("l0_mw");
    l.l_min_mw = r.number_or("l_min_mw", 0.0);
    l.l_max_mw = r.number_or("l_max_mw", l.l0_mw);
    l.shed_cost = r.number_or("shed_cost", shed_default);
    loads.push_back(l);
  }

  const double mva = root.number_or("mva_base", 100.0);
  return construct_with_context([&] {
    return Network(std::move(buses), std::move(branches), std::move(gens), std::move(loads), mva);
  });
}

json case_to_json(const Network& net) {
  auto sorted_by_id = [](auto items) {
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return items;
  };
  json buses = json::array();
  for (const auto& b : sorted_by_id(net.buses())) {
    buses.push_back({{"id", b.id}, {"is_reference", b.is_reference}});
  }
  json branches = json::array();
  for (const auto& br : sorted_by_id(net.branches())) {
    branches.push_back({{"id", br.id},
                        {"from_bus", br.from_bus},
                        {"to_bus", br.to_bus},
                        {"reactance", br.reactance},
                        {"flow_limit_mw", br.flow_limit_mw},
                        {"in_service", br.in_service}});
  }
  json gens = json::array();
  for (const auto& g : sorted_by_id(net.generators())) {
    json j{{"id", g.id},         {"bus", g.bus},       {"p0_mw", g.p0_mw},
           {"p_min_mw", g.p_min_mw}, {"p_max_mw", g.p_max_mw}, {"cost_a", g.cost_a},
           {"cost_b", g.cost_b}, {"cost_c", g.cost_c}};
    if (g.dynamics) j["dynamics"] = dynamics_to_json(*g.dynamics);
    gens.push_back(std::move(j));
  }
  json loads = json::array();
  for (const auto& l : sorted_by_id(net.loads())) {
    loads.push_back({{"id", l.id},
                     {"bus", l.bus},
                     {"l0_mw", l.l0_mw},
                     {"l_min_mw", l.l_min_mw},
                     {"l_max_mw", l.l_max_mw},
                     {"shed_cost", l.shed_cost}});
  }
  return json{{"buses", buses},
              {"branches", branches},
              {"generators", gens},
              {"loads", loads},
              {"mva_base", net.mva_base()}};
}

std::string serialize_json_case(const Network& net) { return case_to_json(net).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// MATPOWER

namespace {

struct MatRow {
  std::vector<double> values;
  int line = 0;
};

std::string strip_comment(const std::string& line) {
  auto pos = line.find('%');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

/// Extracts the numeric rows of `mpc.<name> = [ ... ];`.
std::optional<std::vector<MatRow>> read_matrix(std::string_view text, const std::string& name) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  const std::string key = "mpc." + name;
  bool inside = false;
  std::vector<MatRow> rows;
  std::string pending;
  int pending_line = 0;

  auto flush = [&](const std::string& chunk, int at_line) {
    std::string cleaned;
    for (char c : chunk) cleaned.push_back(c == ',' || c == '\t' ? ' ' : c);
    std::istringstream cells(cleaned);
    std::string tok;
    MatRow row;
    row.line = at_line;
    while (cells >> tok) {
      try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        row.values.push_back(v);
      } catch (const std::exception&) {
        throw InputError("malformed mpc." + name + " row at line " + std::to_string(at_line) +
                         ": bad token '" + tok + "'");
      }
    }
    if (!row.values.empty()) rows.push_back(std::move(row));
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::string code = strip_comment(line);
    if (!inside) {
      auto pos = code.find(key);
      if (pos == std::string::npos) continue;
      auto after = code.substr(pos + key.size());
      auto first = after.find_first_not_of(" \t");
      if (first == std::string::npos || after[first] != '=') continue;
      auto br = after.find('[');
      if (br == std::string::npos) continue;
      inside = true;
      code = after.substr(br + 1);
    }
    // Rows end at ';' or at end of line; the matrix ends at ']'.
    auto close = code.find(']');
    std::string body = close == std::string::npos ? code : code.substr(0, close);
    std::size_t start = 0;
    while (true) {
      auto semi = body.find(';', start);
      std::string piece = body.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
      if (pending.empty()) pending_line = line_no;
      pending += " " + piece;
      if (semi == std::string::npos) break;
      flush(pending, pending_line);
      pending.clear();
      start = semi + 1;
    }
    // A newline also terminates a row in MATLAB matrix syntax.
    if (!pending.empty()) {
      flush(pending, pending_line);
      pending.clear();
    }
    if (close != std::string::npos) return rows;
  }
  if (inside) throw InputError("mpc." + name + " matrix is not terminated by ']'");
  return std::nullopt;
}

std::optional<double> read_scalar(std::string_view text, const std::string& name) {
  std::istringstream in{std::string(text)};
  std::string line;
  const std::string key = "mpc." + name;
  while (std::getline(in, line)) {
    std::string code = strip_comment(line);
    auto pos = code.find(key);
    if (pos == std::string::npos) continue;
    auto eq = code.find('=', pos);
    if (eq == std::string::npos) continue;
    try {
      return std::stod(code.substr(eq + 1));
    } catch (const std::exception&) {
      throw InputError("malformed mpc." + name);
    }
  }
  return std::nullopt;
}

void require_columns(const MatRow& row, std::size_t n, const std::string& name) {
  if (row.values.size() < n) {
    throw InputError("malformed mpc." + name + " row at line " + std::to_string(row.line) +
                     ": expected at least " + std::to_string(n) + " columns, got " +
                     std::to_string(row.values.size()));
  }
}

int as_id(double v, const MatRow& row, const std::string& name) {
  if (v != std::floor(v)) {
    throw InputError("malformed mpc." + name + " row at line " + std::to_string(row.line) +
                     ": non-integer id");
  }
  return static_cast<int>(v);
}

}  // namespace

Network parse_matpower_case(std::string_view text, const MatpowerOptions& options) {
  const double base = read_scalar(text, "baseMVA").value_or(100.0);
  auto bus_rows = read_matrix(text, "bus");
  auto gen_rows = read_matrix(text, "gen");
  auto branch_rows = read_matrix(text, "branch");
  auto cost_rows = read_matrix(text, "gencost");
  if (!bus_rows || !gen_rows || !branch_rows) {
    throw InputError("MATPOWER case must define mpc.bus, mpc.gen and mpc.branch");
  }
  if (!cost_rows) throw InputError("MATPOWER case must define mpc.gencost");

  std::vector<Bus> buses;
  std::vector<Load> loads;
  for (const auto& row : *bus_rows) {
    require_columns(row, 3, "bus");
    Bus b{as_id(row.values[0], row, "bus"), static_cast<int>(row.values[1]) == 3};
    buses.push_back(b);
    const double pd = row.values[2];
    if (pd != 0.0) {
      if (pd < 0.0) {
        throw UnsupportedFeature("negative load at bus " + std::to_string(b.id) + " (line " +
                                 std::to_string(row.line) + ")");
      }
      loads.push_back(Load{b.id, b.id, pd, 0.0, pd, 0.0});
    }
  }
  if (std::count_if(buses.begin(), buses.end(), [](const Bus& b) { return b.is_reference; }) > 1) {
    throw InputError("multiple reference buses");
  }

  std::vector<Branch> branches;
  int branch_id = 0;
  for (const auto& row : *branch_rows) {
    require_columns(row, 11, "branch");
    Branch br;
    br.id = ++branch_id;
    br.from_bus = as_id(row.values[0], row, "branch");
    br.to_bus = as_id(row.values[1], row, "branch");
    br.reactance = row.values[3];
    if (!(br.reactance > 0.0)) {
      throw InputError("branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                       " at line " + std::to_string(row.line) + " has non-positive reactance");
    }
    const double rate_a = row.values[5];
    br.flow_limit_mw = rate_a > 0.0 ? rate_a : options.default_flow_limit_mw;
    br.in_service = row.values[10] != 0.0;
    branches.push_back(br);
  }

  if (cost_rows->size() < gen_rows->size()) {
    throw InputError("mpc.gencost has fewer rows than mpc.gen");
  }
  std::vector<Generator> gens;
  for (std::size_t k = 0; k < gen_rows->size(); ++k) {
    const auto& row = (*gen_rows)[k];
    const auto& cost = (*cost_rows)[k];
    require_columns(row, 10, "gen");
    require_columns(cost, 4, "gencost");
    if (static_cast<int>(cost.values[0]) != 2) {
      throw UnsupportedFeature("gencost model " + std::to_string(static_cast<int>(cost.values[0])) +
                               " at line " + std::to_string(cost.line) +
                               " (only polynomial model 2 is supported)");
    }
    const int ncoef = static_cast<int>(cost.values[3]);
    if (ncoef < 1 || ncoef > 3) {
      throw UnsupportedFeature("gencost polynomial of degree " + std::to_string(ncoef - 1) +
                               " at line " + std::to_string(cost.line));
    }
    require_columns(cost, static_cast<std::size_t>(4 + ncoef), "gencost");
    double coef[3] = {0.0, 0.0, 0.0};  // c, b, a
    for (int i = 0; i < ncoef; ++i) coef[3 - ncoef + i] = cost.values[4 + i];

    if (row.values[7] <= 0.0) continue;  // out-of-service unit
    Generator g;
    g.id = static_cast<int>(k) + 1;
    g.bus = as_id(row.values[0], row, "gen");
    g.p0_mw = row.values[1];
    g.p_max_mw = row.values[8];
    g.p_min_mw = row.values[9];
    g.cost_c = coef[0];
    g.cost_b = coef[1];
    g.cost_a = coef[2];
    gens.push_back(g);
  }

  if (options.rebalance_on_reference) {
    double mismatch = 0.0;
    for (const auto& g : gens) mismatch += g.p0_mw;
    for (const auto& l : loads) mismatch -= l.l0_mw;
    auto ref = std::find_if(buses.begin(), buses.end(), [](const Bus& b) { return b.is_reference; });
    if (ref != buses.end() && std::abs(mismatch) > 0.0) {
      std::vector<Generator*> slack;
      for (auto& g : gens) {
        if (g.bus == ref->id) slack.push_back(&g);
      }
      if (slack.empty()) throw InputError("reference bus has no generator to absorb the DC mismatch");
      const double share = mismatch / static_cast<double>(slack.size());
      for (auto* g : slack) {
        g->p0_mw -= share;
        if (g->p0_mw < g->p_min_mw || g->p0_mw > g->p_max_mw) {
          throw InputError("rebalancing pushes reference generator " + std::to_string(g->id) +
                           " outside its limits");
        }
      }
    }
  }

  const double shed = default_shed_cost(gens);
  for (auto& l : loads) l.shed_cost = shed;

  return construct_with_context([&] {
    return Network(std::move(buses), std::move(branches), std::move(gens), std::move(loads), base);
  });
}

DynamicsSidecar parse_dynamics_sidecar(std::string_view text) {
  const json doc = parse_json_text(text);
  if (!doc.is_object()) throw InputError("schema violation at : expected a top-level object");
  const Reader root(doc, "");
  DynamicsSidecar out;
  if (root.has("generator_dynamics")) {
    for (const auto& r : root.array("generator_dynamics")) {
      out.generator_dynamics.push_back({r.integer("id"), read_dynamics(r)});
    }
  }
  if (root.has("load_shed_costs")) {
    for (const auto& r : root.array("load_shed_costs")) {
      out.load_shed_costs.push_back({r.integer("id"), r.number("shed_cost")});
    }
  }
  return out;
}

Network merge_sidecar(const Network& net, const DynamicsSidecar& sidecar) {
  auto gens = net.generators();
  for (const auto& entry : sidecar.generator_dynamics) {
    gens[net.generator_index(entry.id)].dynamics = entry.dynamics;
  }
  auto loads = net.loads();
  for (const auto& entry : sidecar.load_shed_costs) {
    loads[net.load_index(entry.id)].shed_cost = entry.shed_cost;
  }
  return Network(net.buses(), net.branches(), std::move(gens), std::move(loads), net.mva_base());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Network load_case(const std::filesystem::path& case_path,
                  const std::optional<std::filesystem::path>& sidecar_path,
                  const MatpowerOptions& options) {
  const std::string text = read_text_file(case_path);
  Network net = case_path.extension() == ".m" ? parse_matpower_case(text, options)
                                              : parse_json_case(text);
  if (sidecar_path) net = merge_sidecar(net, parse_dynamics_sidecar(read_text_file(*sidecar_path)));
  validate_network(net);
  return net;
}

}  // namespace cscopf
