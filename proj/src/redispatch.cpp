#include "cscopf/redispatch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "cscopf/csv.hpp"
#include "cscopf/errors.hpp"

namespace cscopf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Index idx(std::size_t i) { return static_cast<Index>(i); }

/// ptdf mapped onto the decision vector: column i is the bus column of
/// generator i, column nG + j the bus column of load j.
MatrixXd decision_ptdf(const Network& net, const SensitivitySet& sens) {
  const auto& gens = net.generators();
  const auto& loads = net.loads();
  MatrixXd out(sens.ptdf.rows(), idx(gens.size() + loads.size()));
  for (std::size_t i = 0; i < gens.size(); ++i) out.col(idx(i)) = sens.ptdf.col(idx(net.bus_index(gens[i].bus)));
  for (std::size_t j = 0; j < loads.size(); ++j) {
    out.col(idx(gens.size() + j)) = sens.ptdf.col(idx(net.bus_index(loads[j].bus)));
  }
  return out;
}

LinearConstraint make_row(VectorXd coeffs, Sense sense, double rhs, ConstraintTag tag, std::string provenance) {
  LinearConstraint c;
  c.coeffs = std::move(coeffs);
  c.sense = sense;
  c.rhs = rhs;
  c.tag = tag;
  c.provenance = std::move(provenance);
  return c;
}

std::string join_ids(const std::vector<BranchId>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s;
}

}  // namespace

QuadraticProgram build_qp(const Network& net, const SensitivitySet& sens, std::span<const CutSet> cutsets,
                          std::optional<double> tscf, std::span<const GeneratorId> cm,
                          std::span<const BranchId> outages, const BuildQpOptions& options,
                          std::span<const LinearConstraint> extra, BuildQpReport* report) {
  if (sens.topology_hash != net.topology_hash()) {
    throw InputError("sensitivities do not match the network topology");
  }
  if (tscf && cm.empty()) throw InputError("stability correction given with an empty critical machine set");
  if (!tscf && !cm.empty()) throw InputError("critical machines given without a stability correction");

  const auto& gens = net.generators();
  const auto& loads = net.loads();
  const auto& branches = net.branches();
  const std::size_t ng = gens.size();
  const Index n = idx(ng + loads.size());

  QuadraticProgram qp;
  qp.quad = VectorXd::Zero(n);
  qp.linear = VectorXd::Zero(n);
  qp.lower.resize(n);
  qp.upper.resize(n);
  for (std::size_t i = 0; i < ng; ++i) {
    const auto& g = gens[i];
    qp.quad(idx(i)) = g.cost_c;
    qp.linear(idx(i)) = g.cost_b + 2.0 * g.cost_c * g.p0_mw;
    qp.lower(idx(i)) = g.p_min_mw - g.p0_mw;
    qp.upper(idx(i)) = g.p_max_mw - g.p0_mw;
  }
  for (std::size_t j = 0; j < loads.size(); ++j) {
    const auto& l = loads[j];
    qp.linear(idx(ng + j)) = l.shed_cost;
    qp.lower(idx(ng + j)) = l.l0_mw - l.l_max_mw;
    qp.upper(idx(ng + j)) = l.l0_mw - l.l_min_mw;
  }

  qp.constraints.push_back(
      make_row(VectorXd::Ones(n), Sense::equal, 0.0, ConstraintTag::balance, "balance"));

  const MatrixXd h = decision_ptdf(net, sens);
  const VectorXd& f0 = sens.base_flows_mw;
  for (std::size_t u = 0; u < branches.size(); ++u) {
    const auto& br = branches[u];
    if (!br.in_service) continue;
    const VectorXd row = h.row(idx(u)).transpose();
    const std::string tag = "flow:" + std::to_string(br.id);
    qp.constraints.push_back(make_row(row, Sense::less_equal, br.flow_limit_mw - f0(idx(u)),
                                      ConstraintTag::branch_flow, tag + ":max"));
    qp.constraints.push_back(make_row(row, Sense::greater_equal, -br.flow_limit_mw - f0(idx(u)),
                                      ConstraintTag::branch_flow, tag + ":min"));
  }

  std::vector<std::size_t> monitored;
  if (options.monitored.empty()) {
    for (std::size_t u = 0; u < branches.size(); ++u) monitored.push_back(u);
  } else {
    for (auto id : options.monitored) monitored.push_back(net.branch_index(id));
  }
  std::set<BranchId> seen_outage;
  for (BranchId a_id : outages) {
    if (!seen_outage.insert(a_id).second) continue;
    const auto a = net.branch_index(a_id);
    if (!branches[a].in_service) throw InputError("outage branch " + std::to_string(a_id) + " is out of service");
    if (sens.bridge[a]) {
      if (!options.allow_bridge_outages) {
        throw TopologyError("radial - outage of branch " + std::to_string(a_id) + " islands the system");
      }
      if (report) report->skipped_bridge_outages.push_back(a_id);
      continue;
    }
    for (std::size_t u : monitored) {
      if (u == a || !branches[u].in_service) continue;
      const double lodf = sens.lodf(idx(u), idx(a));
      const VectorXd row = (h.row(idx(u)) + lodf * h.row(idx(a))).transpose();
      const double post = f0(idx(u)) + lodf * f0(idx(a));
      const std::string tag = "n-1:" + std::to_string(branches[u].id) + ":" + std::to_string(a_id);
      qp.constraints.push_back(make_row(row, Sense::less_equal, branches[u].flow_limit_mw - post,
                                        ConstraintTag::n_minus_1, tag + ":max"));
      qp.constraints.push_back(make_row(row, Sense::greater_equal, -branches[u].flow_limit_mw - post,
                                        ConstraintTag::n_minus_1, tag + ":min"));
    }
  }

  for (const auto& cut : cutsets) qp.constraints.push_back(cutset_constraint(cut, sens, net));

  if (tscf) {
    VectorXd row = VectorXd::Zero(n);
    for (auto id : cm) row(idx(net.generator_index(id))) = 1.0;
    qp.constraints.push_back(make_row(row, Sense::less_equal, -*tscf, ConstraintTag::stability, "stability"));
  }
  for (const auto& c : extra) {
    if (c.coeffs.size() != n) throw InputError("constraint '" + c.provenance + "' has the wrong length");
    qp.constraints.push_back(c);
  }
  qp.validate();
  return qp;
}

DispatchCost dispatch_cost(const Network& net, std::span<const double> delta_p) {
  const auto& gens = net.generators();
  if (delta_p.size() != gens.size()) throw InputError("redispatch vector length does not match generator count");
  DispatchCost c;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const auto& g = gens[i];
    const double dp = delta_p[i];
    c.base += g.cost(g.p0_mw);
    c.total += g.cost(g.p0_mw + dp);
    c.delta += g.cost_c * dp * dp + (g.cost_b + 2.0 * g.cost_c * g.p0_mw) * dp;
  }
  return c;
}

DispatchCost dispatch_cost(const Network& net, const VectorXd& delta_p) {
  return dispatch_cost(net, std::span<const double>(delta_p.data(), static_cast<std::size_t>(delta_p.size())));
}

Network apply_redispatch(const Network& net, const VectorXd& delta_p, const VectorXd& shed) {
  const auto& gens = net.generators();
  const auto& loads = net.loads();
  if (delta_p.size() != idx(gens.size()) || shed.size() != idx(loads.size())) {
    throw InputError("redispatch vector lengths do not match the network");
  }
  std::vector<double> p(gens.size()), l(loads.size());
  for (std::size_t i = 0; i < gens.size(); ++i) {
    p[i] = std::clamp(gens[i].p0_mw + delta_p(idx(i)), gens[i].p_min_mw, gens[i].p_max_mw);
  }
  for (std::size_t j = 0; j < loads.size(); ++j) {
    l[j] = std::clamp(loads[j].l0_mw - shed(idx(j)), loads[j].l_min_mw, loads[j].l_max_mw);
  }
  return net.with_operating_point(p, l);
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::cscopf: return "cscopf";
    case Mode::rtsced: return "rtsced";
    case Mode::tscopf: return "tscopf";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  if (text == "cscopf") return Mode::cscopf;
  if (text == "rtsced") return Mode::rtsced;
  if (text == "tscopf") return Mode::tscopf;
  throw InputError("unknown mode '" + text + "'");
}

Contingency contingency_from_json(const nlohmann::json& doc) {
  Contingency c;
  c.faults = fault_sequence_from_json(doc);
  try {
    c.id = doc.value("id", std::string("contingency"));
    c.outages = doc.value("outages", std::vector<BranchId>{});
    c.corridor_cuts = doc.value("corridor_cuts", std::vector<std::vector<BranchId>>{});
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("contingency: ") + ex.what());
  }
  if (c.outages.empty()) c.outages = c.faults.tripped_branches();
  return c;
}

RedispatchSolution solve_redispatch(const Network& net, const QuadraticProgram& qp, const QpSettings& settings,
                                    const VectorXd* warm_start) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = solve_qp(qp, settings, warm_start);
  RedispatchSolution s;
  s.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto ng = idx(net.generators().size());
  s.delta_p = r.x.head(ng);
  s.delta_l = r.x.tail(r.x.size() - ng);
  s.objective_value = r.objective;
  s.cost = dispatch_cost(net, s.delta_p);
  s.status = r.status;
  s.kkt = r.kkt;
  s.infeasible_tags = r.infeasible_tags;
  return s;
}

namespace {

std::vector<BranchId> post_contingency_trips(const Contingency& c) {
  auto trips = c.faults.tripped_branches();
  return trips.empty() ? c.outages : trips;
}

Network post_contingency_network(const Network& net, const Contingency& c) {
  const auto trips = post_contingency_trips(c);
  auto out = apply_outage(net, std::set<BranchId>(trips.begin(), trips.end()));
  if (out.islanded) throw TopologyError("the contingency islands the network");
  return std::move(out.network);
}

std::vector<CutSet> saturated_beyond(std::vector<CutSet> cuts, double tol) {
  std::erase_if(cuts, [&](const CutSet& k) { return k.aggregate_flow_mw <= k.aggregate_limit_mw + tol; });
  return cuts;
}

}  // namespace

Verification verify_operating_point(const Network& net, const Contingency& contingency,
                                    const RealtimeOptions& options) {
  Verification v;
  const auto post = post_contingency_network(net, contingency);
  const VectorXd flows = base_flows_mw(post);
  FtOptions ft;
  ft.utilization_threshold = options.ft_threshold;
  ft.corridor_cuts = contingency.corridor_cuts;
  std::erase_if(ft.corridor_cuts, [&](const std::vector<BranchId>& cut) {
    return std::any_of(cut.begin(), cut.end(), [&](BranchId id) {
      return !post.has_branch(id) || !post.branches()[post.branch_index(id)].in_service;
    });
  });
  v.saturated_cutsets = saturated_beyond(
      find_saturated_cutsets(post, std::span<const double>(flows.data(), static_cast<std::size_t>(flows.size())), ft),
      options.verification_tolerance_mw);
  v.assessment = assess_stability(net, contingency.faults, options.assessment);
  v.stable = v.assessment.stable();
  v.tsi = v.assessment.tsi;
  return v;
}

RealtimeResult run_cscopf(const Network& net, const Contingency& contingency, const TscpModel* model, Mode mode,
                          const RealtimeOptions& options) {
  if (mode == Mode::cscopf && model == nullptr) throw InputError("mode cscopf requires a trained TSCP model");
  if (options.max_iterations < 1) throw InputError("iteration cap must be at least 1");
  contingency.faults.validate();

  const auto& gens = net.generators();
  const auto& loads = net.loads();
  const std::size_t ng = gens.size();
  const Index n = idx(ng + loads.size());

  const auto sens = compute_sensitivities(net);
  const auto post = post_contingency_network(net, contingency);
  const auto post_sens = compute_sensitivities(post);
  const VectorXd post_f0 = post_sens.base_flows_mw;

  RealtimeResult result;
  result.initial = verify_operating_point(net, contingency, options);
  Verification current = result.initial;

  std::vector<LinearConstraint> phi;
  std::set<std::string> provenance;
  VectorXd x = VectorXd::Zero(n);
  RedispatchSolution sol;
  sol.delta_p = VectorXd::Zero(idx(ng));
  sol.delta_l = VectorXd::Zero(idx(loads.size()));
  sol.cost = dispatch_cost(net, sol.delta_p);
  double qp_time = 0.0;
  std::vector<IterationReport> reports;

  auto add = [&](LinearConstraint c, std::vector<std::string>& added) {
    if (!provenance.insert(c.provenance).second) return;
    added.push_back(c.provenance);
    phi.push_back(std::move(c));
  };
  auto cut_row = [&](const CutSet& cut) {
    auto c = cutset_constraint(cut, post_sens, post);
    // Relative to the original dispatch: S dx <= limit - f_K(p0).
    c.rhs = cut.aggregate_limit_mw -
            cut_flow(cut, post, std::span<const double>(post_f0.data(), static_cast<std::size_t>(post_f0.size())));
    return c;
  };
  auto stability_row = [&](const StabilityAssessment& a, int k) {
    VectorXd row = VectorXd::Zero(n);
    double current_shift = 0.0;
    for (auto id : a.critical_machines) {
      const auto i = idx(net.generator_index(id));
      row(i) = 1.0;
      current_shift += x(i);
    }
    return make_row(std::move(row), Sense::less_equal, current_shift - a.delta_p_tr_mw, ConstraintTag::stability,
                    "stability:" + contingency.id + ":iter" + std::to_string(k));
  };

  for (int k = 1; k <= options.max_iterations; ++k) {
    IterationReport rep;
    rep.iteration = k;
    if (mode == Mode::cscopf) {
      for (const auto& cut : current.saturated_cutsets) add(cut_row(cut), rep.added);
    }
    if (mode == Mode::cscopf && k == 1) {
      std::vector<double> l0(loads.size());
      for (std::size_t j = 0; j < loads.size(); ++j) l0[j] = loads[j].l0_mw;
      const double upsilon = predict(*model, l0);
      if (upsilon > 0.0) {
        if (model->critical_machines.empty()) {
          throw InputError("TSCP model predicts a correction but names no critical machines");
        }
        VectorXd row = VectorXd::Zero(n);
        for (auto id : model->critical_machines) row(idx(net.generator_index(id))) = 1.0;
        add(make_row(std::move(row), Sense::less_equal, -upsilon, ConstraintTag::stability,
                     "stability:" + contingency.id + ":tscp"),
            rep.added);
      }
    } else if (mode != Mode::rtsced && !current.stable) {
      add(stability_row(current.assessment, k), rep.added);
    }

    const auto qp = build_qp(net, sens, {}, std::nullopt, {}, contingency.outages, options.build, phi);
    rep.phi_size = phi.size();
    auto step = solve_redispatch(net, qp, options.qp, &x);
    qp_time += step.solve_time_s;
    rep.qp_status = to_string(step.status);
    if (step.status == QpStatus::infeasible) {
      sol.status = QpStatus::infeasible;
      sol.infeasible_tags = step.infeasible_tags;
      sol.kkt = step.kkt;
      sol.remaining_violations.push_back("redispatch QP infeasible");
      reports.push_back(rep);
      break;
    }
    x.head(idx(ng)) = step.delta_p;
    x.tail(idx(loads.size())) = step.delta_l;
    sol = std::move(step);

    const auto point = apply_redispatch(net, sol.delta_p, sol.delta_l);
    current = verify_operating_point(point, contingency, options);
    rep.verification = current;
    if (mode == Mode::cscopf) {
      for (const auto& cut : current.saturated_cutsets) {
        rep.violations.push_back("saturated cut-set " + join_ids(cut.branches));
      }
    }
    if (mode != Mode::rtsced && !current.stable) {
      rep.violations.push_back("transient instability (TSI " + format_number(current.tsi) + ")");
    }
    reports.push_back(rep);
    if (rep.violations.empty()) {
      sol.status = QpStatus::optimal;
      break;
    }
    if (k == options.max_iterations) {
      sol.status = QpStatus::iteration_limit;
      sol.remaining_violations = rep.violations;
    }
  }
  sol.iterations = std::move(reports);
  sol.phi = phi;
  sol.solve_time_s = qp_time;
  result.solution = std::move(sol);
  result.final_network = apply_redispatch(net, result.solution.delta_p, result.solution.delta_l);
  result.final_check = current;

  auto& cmp = result.comparison;
  cmp.mode = mode;
  cmp.transient_stable = current.stable;
  cmp.cutset_secure = current.secure();
  cmp.tsi = current.tsi;
  cmp.load_shed_mw = result.solution.load_shed_mw();
  for (auto id : result.initial.assessment.critical_machines) {
    cmp.cm_shift_mw -= result.solution.delta_p(idx(net.generator_index(id)));
  }
  const VectorXd post_final = base_flows_mw(post_contingency_network(*result.final_network, contingency));
  for (const auto& cut : result.initial.saturated_cutsets) {
    cmp.desaturation_mw +=
        cut.aggregate_flow_mw -
        cut_flow(cut, post, std::span<const double>(post_final.data(), static_cast<std::size_t>(post_final.size())));
  }
  cmp.total_cost = result.solution.cost.total;
  cmp.delta_cost = result.solution.cost.delta;
  cmp.iterations = static_cast<int>(result.solution.iterations.size());
  cmp.status = to_string(result.solution.status);
  return result;
}

namespace {

nlohmann::json verification_json(const Verification& v) {
  nlohmann::json cuts = nlohmann::json::array();
  for (const auto& c : v.saturated_cutsets) {
    cuts.push_back({{"branches", c.branches},
                    {"aggregate_flow_mw", c.aggregate_flow_mw},
                    {"aggregate_limit_mw", c.aggregate_limit_mw},
                    {"transfer_margin_mw", c.transfer_margin_mw}});
  }
  return {{"stable", v.stable}, {"tsi", v.tsi}, {"secure", v.secure()},
          {"stability", assessment_to_json(v.assessment)}, {"saturated_cutsets", cuts}};
}

}  // namespace

nlohmann::json solution_to_json(const Network& net, const RealtimeResult& result) {
  const auto& s = result.solution;
  nlohmann::json dp = nlohmann::json::array();
  for (std::size_t i = 0; i < net.generators().size(); ++i) {
    dp.push_back({{"id", net.generators()[i].id}, {"delta_p_mw", s.delta_p(idx(i))}});
  }
  nlohmann::json dl = nlohmann::json::array();
  for (std::size_t j = 0; j < net.loads().size(); ++j) {
    dl.push_back({{"id", net.loads()[j].id}, {"shed_mw", s.delta_l(idx(j))}});
  }
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& it : s.iterations) {
    iters.push_back({{"iteration", it.iteration},
                     {"added", it.added},
                     {"phi_size", it.phi_size},
                     {"qp_status", it.qp_status},
                     {"violations", it.violations},
                     {"verification", verification_json(it.verification)}});
  }
  nlohmann::json phi = nlohmann::json::array();
  for (const auto& c : s.phi) {
    phi.push_back({{"provenance", c.provenance}, {"tag", to_string(c.tag)}, {"rhs", c.rhs}});
  }
  const auto& c = result.comparison;
  return {{"schema_version", 1},
          {"mode", to_string(c.mode)},
          {"status", to_string(s.status)},
          {"delta_p", dp},
          {"delta_l", dl},
          {"objective", s.objective_value},
          {"cost", {{"base", s.cost.base}, {"total", s.cost.total}, {"delta", s.cost.delta}}},
          {"load_shed_mw", s.load_shed_mw()},
          {"kkt", {{"primal", s.kkt.primal}, {"dual", s.kkt.dual}, {"complementarity", s.kkt.complementarity}}},
          {"infeasible_tags", s.infeasible_tags},
          {"remaining_violations", s.remaining_violations},
          {"iterations", iters},
          {"phi", phi},
          {"initial", verification_json(result.initial)},
          {"final", verification_json(result.final_check)},
          {"comparison",
           {{"transient_stable", c.transient_stable},
            {"cutset_secure", c.cutset_secure},
            {"tsi", c.tsi},
            {"load_shed_mw", c.load_shed_mw},
            {"cm_shift_mw", c.cm_shift_mw},
            {"desaturation_mw", c.desaturation_mw},
            {"total_cost", c.total_cost},
            {"delta_cost", c.delta_cost},
            {"iterations", c.iterations}}}};
}

std::string comparison_csv(std::span<const ModeComparison> rows) {
  std::string out =
      "mode,transient_stable,cutset_secure,tsi,load_shed_mw,cm_shift_mw,desaturation_mw,total_cost,delta_cost,"
      "iterations,status\n";
  for (const auto& r : rows) {
    out += to_string(r.mode) + "," + (r.transient_stable ? "true" : "false") + "," +
           (r.cutset_secure ? "true" : "false") + "," + format_number(r.tsi) + "," + format_number(r.load_shed_mw) +
           "," + format_number(r.cm_shift_mw) + "," + format_number(r.desaturation_mw) + "," +
           format_number(r.total_cost) + "," + format_number(r.delta_cost) + "," + std::to_string(r.iterations) +
           "," + r.status + "\n";
  }
  return out;
}

}  // namespace cscopf
