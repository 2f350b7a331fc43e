#include "cscopf/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <set>

#include <CLI11.hpp>

#include "cscopf/case_io.hpp"
#include "cscopf/csv.hpp"
#include "cscopf/cutset.hpp"
#include "cscopf/dc_sensitivity.hpp"
#include "cscopf/errors.hpp"
#include "cscopf/tscp.hpp"

namespace cscopf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write file: " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw InputError(what + " not found: " + p.string());
}

Network load_network(const RunConfig& c) {
  require_file(c.case_path, "case file");
  if (c.dynamics_path) require_file(*c.dynamics_path, "dynamics sidecar");
  return load_case(c.case_path, c.dynamics_path);
}

Contingency load_contingency(const RunConfig& c) {
  if (!c.contingency_path) throw InputError("no contingency file given");
  require_file(*c.contingency_path, "contingency file");
  json doc;
  try {
    doc = json::parse(read_text_file(*c.contingency_path));
  } catch (const json::parse_error& ex) {
    throw InputError("contingency file " + c.contingency_path->string() + ": " + ex.what());
  }
  return contingency_from_json(doc);
}

std::string trajectory_csv(const RotorTrajectories& tr, std::size_t stride = 1) {
  std::string out = "time_s";
  for (auto id : tr.machine_ids) out += ",delta_" + std::to_string(id) + "_deg";
  out += "\n";
  for (std::size_t k = 0; k < tr.steps(); k += std::max<std::size_t>(stride, 1)) {
    out += format_number(tr.time_grid[k]);
    for (Eigen::Index i = 0; i < tr.angles.rows(); ++i) {
      out += "," + format_number(tr.angles(i, static_cast<Eigen::Index>(k)) * 180.0 / std::numbers::pi);
    }
    out += "\n";
  }
  return out;
}

template <typename T>
void read_opt(const json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  if (case_path.empty()) throw InputError("no case file given");
  require_file(case_path, "case file");
  if (dynamics_path) require_file(*dynamics_path, "dynamics sidecar");
  if (contingency_path) require_file(*contingency_path, "contingency file");
  if (samples_path) require_file(*samples_path, "sample file");
  if (tscp_model_path) require_file(*tscp_model_path, "TSCP model");
  if (n < 1) throw InputError("sample count n must be at least 1");
  if (!(tol > 0.0)) throw InputError("solver tolerance must be positive");
  if (!(dt > 0.0) || !(t_end > 0.0)) throw InputError("dt and t_end must be positive");
  if (!(sime.tau > 0.0)) throw InputError("sime.tau must be positive");
  if (sime.epsilon && *sime.epsilon < 0.0) throw InputError("sime.epsilon must be nonnegative");
  if (max_iter < 1) throw InputError("max_iter must be at least 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InputError("test_fraction must lie in [0, 1)");
  if (!(sigma >= 0.0)) throw InputError("sigma must be nonnegative");
}

AssessmentOptions RunConfig::assessment_options() const {
  AssessmentOptions a;
  a.dt = dt;
  a.t_end = t_end;
  a.sime = sime;
  a.dynamics.frequency_hz = frequency_hz;
  return a;
}

RealtimeOptions RunConfig::realtime_options() const {
  RealtimeOptions r;
  r.max_iterations = max_iter;
  r.qp.eps_abs = tol;
  r.qp.eps_rel = tol;
  r.assessment = assessment_options();
  r.ft_threshold = ft_threshold;
  r.build.allow_bridge_outages = allow_bridge_outages;
  return r;
}

RunConfig config_from_json(const json& doc, const fs::path& base_dir) {
  RunConfig c;
  try {
    if (doc.contains("case")) c.case_path = resolve(base_dir, doc["case"].get<std::string>());
    if (doc.contains("dynamics")) c.dynamics_path = resolve(base_dir, doc["dynamics"].get<std::string>());
    if (doc.contains("contingency")) c.contingency_path = resolve(base_dir, doc["contingency"].get<std::string>());
    if (doc.contains("output_dir")) c.output_dir = resolve(base_dir, doc["output_dir"].get<std::string>());
    if (doc.contains("sampling")) {
      const auto& s = doc["sampling"];
      read_opt(s, "n", c.n);
      read_opt(s, "seed", c.seed);
      read_opt(s, "sigma", c.sigma);
      read_opt(s, "truncation_sigmas", c.truncation_sigmas);
      if (s.contains("samples_file")) c.samples_path = resolve(base_dir, s["samples_file"].get<std::string>());
    }
    if (doc.contains("sime")) {
      const auto& s = doc["sime"];
      if (s.contains("epsilon") && !s["epsilon"].is_null()) c.sime.epsilon = s["epsilon"].get<double>();
      read_opt(s, "tau", c.sime.tau);
      read_opt(s, "instability_angle_deg", c.sime.instability_angle_deg);
    }
    if (doc.contains("simulation")) {
      const auto& s = doc["simulation"];
      read_opt(s, "dt", c.dt);
      read_opt(s, "t_end", c.t_end);
      read_opt(s, "frequency_hz", c.frequency_hz);
    }
    if (doc.contains("tscp")) {
      const auto& s = doc["tscp"];
      if (s.contains("model")) c.tscp_model_path = resolve(base_dir, s["model"].get<std::string>());
      read_opt(s, "test_fraction", c.test_fraction);
      read_opt(s, "noise_level", c.noise_level);
      read_opt(s, "include_stable", c.include_stable);
      read_opt(s, "threads", c.threads);
    }
    if (doc.contains("solver")) {
      const auto& s = doc["solver"];
      read_opt(s, "tol", c.tol);
      read_opt(s, "max_iter", c.max_iter);
      read_opt(s, "ft_threshold", c.ft_threshold);
      read_opt(s, "allow_bridge_outages", c.allow_bridge_outages);
    }
    if (doc.contains("modes")) {
      c.modes.clear();
      for (const auto& m : doc["modes"]) c.modes.push_back(parse_mode(m.get<std::string>()));
    }
  } catch (const json::exception& ex) {
    throw InputError(std::string("config: ") + ex.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Day-ahead

int cmd_dayahead(const RunConfig& config, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  const auto net = load_network(config);
  if (!net.has_dynamics()) {
    throw InputError("missing dynamics data: supply a dynamics sidecar for " + config.case_path.string());
  }
  const auto contingency = load_contingency(config);

  LoadSampleSet samples;
  if (config.samples_path) {
    samples = read_samples_csv(read_text_file(*config.samples_path), net);
  } else {
    PerturbationSpec spec;
    spec.sigma = config.sigma;
    spec.truncation_sigmas = config.truncation_sigmas;
    samples = sample_loads(net, spec, config.n, config.seed);
  }
  DatasetOptions dopt;
  dopt.threads = config.threads;
  const auto data = build_dataset(net, samples, contingency.faults, config.assessment_options(), dopt);

  const auto usable = training_rows(data, config.include_stable);
  if (usable.empty()) throw InputError("no usable dataset rows (all rows failed or were excluded)");
  const auto n_test = static_cast<std::size_t>(static_cast<double>(usable.size()) * config.test_fraction);
  const std::size_t n_train = usable.size() - n_test;
  auto gather = [&](std::size_t from, std::size_t to, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
    x.resize(static_cast<Eigen::Index>(to - from), data.x.cols());
    y.resize(static_cast<Eigen::Index>(to - from));
    for (std::size_t r = from; r < to; ++r) {
      x.row(static_cast<Eigen::Index>(r - from)) = data.x.row(static_cast<Eigen::Index>(usable[r]));
      y(static_cast<Eigen::Index>(r - from)) = data.y(static_cast<Eigen::Index>(usable[r]));
    }
  };
  Eigen::MatrixXd x_train, x_test;
  Eigen::VectorXd y_train, y_test;
  gather(0, n_train, x_train, y_train);
  gather(n_train, usable.size(), x_test, y_test);
  if (n_test == 0) {
    x_test = x_train;
    y_test = y_train;
  }

  auto model = fit_linear(x_train, y_train);
  model.contingency_id = contingency.id;
  model.load_ids = data.load_ids;
  model.seed = config.seed;
  std::map<std::vector<GeneratorId>, std::size_t> cm_votes;
  std::size_t stable = 0, unstable = 0, failed = 0;
  for (std::size_t r = 0; r < data.stable.size(); ++r) {
    if (data.failed[r]) {
      ++failed;
    } else if (data.stable[r]) {
      ++stable;
    } else {
      ++unstable;
      ++cm_votes[data.critical_machines[r]];
    }
  }
  std::size_t best = 0;
  for (const auto& [cm, votes] : cm_votes) {
    if (votes > best) {
      best = votes;
      model.critical_machines = cm;
    }
  }
  const auto metrics = evaluate(model, x_test, y_test, config.noise_level, config.seed);

  write_json(config.output_dir / "tscp_model.json", model_to_json(model));
  write_text(config.output_dir / "dataset.csv", dataset_to_csv(data));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json report = {{"schema_version", kSchemaVersion},
                 {"contingency_id", contingency.id},
                 {"samples", data.stable.size()},
                 {"stable", stable},
                 {"unstable", unstable},
                 {"failed", failed},
                 {"train_rows", n_train},
                 {"test_rows", n_test},
                 {"ridge_penalty", model.ridge_penalty},
                 {"metrics", metrics_to_json(metrics)},
                 {"metadata", {{"wall_time_s", wall}}}};
  write_json(config.output_dir / "metrics.json", report);
  out << "trained TSCP model on " << n_train << " rows (" << unstable << " unstable, " << stable << " stable, "
      << failed << " failed); R2 = " << format_number(metrics.r2) << "\n";
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// Real-time

int cmd_realtime(const RunConfig& config, std::ostream& out) {
  config.validate();
  const auto net = load_network(config);
  const auto contingency = load_contingency(config);
  std::optional<TscpModel> model;
  if (config.tscp_model_path) {
    try {
      model = model_from_json(json::parse(read_text_file(*config.tscp_model_path)));
    } catch (const json::parse_error& ex) {
      throw InputError("TSCP model " + config.tscp_model_path->string() + ": " + ex.what());
    }
    if (!model->load_ids.empty()) {
      for (std::size_t j = 0; j < model->load_ids.size(); ++j) {
        if (j >= net.loads().size() || net.loads()[j].id != model->load_ids[j]) {
          throw InputError("TSCP model loads do not match the case");
        }
      }
    }
  }
  const auto options = config.realtime_options();

  std::vector<ModeComparison> rows;
  int code = exit_code::ok;
  bool wrote_pre = false;
  for (Mode mode : config.modes) {
    if (mode == Mode::cscopf && !model) throw InputError("mode cscopf requires --tscp-model");
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = run_cscopf(net, contingency, model ? &*model : nullptr, mode, options);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto doc = solution_to_json(net, result);
    doc["contingency_id"] = contingency.id;
    doc["metadata"] = {{"solve_time_s", result.solution.solve_time_s}, {"wall_time_s", wall}};
    const auto name = to_string(mode);
    write_json(config.output_dir / ("solution_" + name + ".json"), doc);

    std::string bars = "generator_id,delta_p_mw\n";
    for (std::size_t i = 0; i < net.generators().size(); ++i) {
      bars += std::to_string(net.generators()[i].id) + "," +
              format_number(result.solution.delta_p(static_cast<Eigen::Index>(i))) + "\n";
    }
    write_text(config.output_dir / ("redispatch_" + name + ".csv"), bars);

    const auto aopt = config.assessment_options();
    if (!wrote_pre) {
      const auto pre = simulate_swing(net, contingency.faults, aopt.dt, aopt.t_end, aopt.dynamics);
      write_text(config.output_dir / "trajectory_pre.csv", trajectory_csv(pre));
      wrote_pre = true;
    }
    const auto post = simulate_swing(*result.final_network, contingency.faults, aopt.dt, aopt.t_end, aopt.dynamics);
    write_text(config.output_dir / ("trajectory_" + name + ".csv"), trajectory_csv(post));

    rows.push_back(result.comparison);
    out << name << ": status " << to_string(result.solution.status) << ", TSI " << format_number(result.comparison.tsi)
        << ", saturated cut-sets " << result.final_check.saturated_cutsets.size() << ", load shed "
        << format_number(result.comparison.load_shed_mw) << " MW, iterations " << result.comparison.iterations
        << "\n";
    if (result.solution.status != QpStatus::optimal) code = exit_code::violations;
  }
  if (rows.size() > 1) write_text(config.output_dir / "comparison.csv", comparison_csv(rows));
  return code;
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct Common {
  std::string config;
  std::string case_path;
  std::string dynamics;
  std::string out_dir;
};

RunConfig base_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    const fs::path p(c.config);
    require_file(p, "config file");
    json doc;
    try {
      doc = json::parse(read_text_file(p));
    } catch (const json::parse_error& ex) {
      throw InputError("config file " + p.string() + ": " + ex.what());
    }
    cfg = config_from_json(doc, p.parent_path());
  }
  if (!c.case_path.empty()) cfg.case_path = c.case_path;
  if (!c.dynamics.empty()) cfg.dynamics_path = fs::path(c.dynamics);
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool with_out_dir) {
  app->add_option("--config", c.config, "Run configuration JSON");
  app->add_option("--case", c.case_path, "Case file (.m MATPOWER or native JSON)");
  app->add_option("--dynamics", c.dynamics, "Dynamics sidecar JSON");
  if (with_out_dir) app->add_option("--out-dir", c.out_dir, "Output directory");
}

json error_json(const std::string& kind, const std::string& message) {
  return {{"schema_version", kSchemaVersion}, {"error", {{"kind", kind}, {"message", message}}}};
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cut-set and transient-stability constrained redispatch"};
  app.require_subcommand(1);

  Common c_validate, c_ptdf, c_ft, c_tds, c_train, c_eval, c_rt;

  auto* validate = app.add_subcommand("validate", "Parse and validate a case");
  add_common(validate, c_validate, false);

  auto* ptdf = app.add_subcommand("ptdf", "Write the PTDF (and optionally LODF) matrix as CSV");
  add_common(ptdf, c_ptdf, false);
  int ptdf_ref = 0;
  std::string ptdf_out, lodf_out;
  ptdf->add_option("--ref", ptdf_ref, "Reference bus id (default: case reference)");
  ptdf->add_option("--out", ptdf_out, "PTDF CSV path (default: stdout)");
  ptdf->add_option("--lodf-out", lodf_out, "LODF CSV path");

  auto* ft = app.add_subcommand("ft", "Find saturated cut-sets");
  add_common(ft, c_ft, false);
  std::vector<int> ft_outages;
  double ft_threshold = 0.98;
  std::string ft_out;
  ft->add_option("--outage", ft_outages, "Branch ids taken out of service first")->delimiter(',');
  ft->add_option("--threshold", ft_threshold, "Utilization threshold");
  ft->add_option("--out", ft_out, "Output JSON path (default: stdout)");

  auto* tds = app.add_subcommand("tds", "Time-domain simulation and stability assessment");
  add_common(tds, c_tds, true);
  std::string tds_faults;
  double tds_dt = 1e-3, tds_t_end = 5.0;
  tds->add_option("--faults", tds_faults, "Fault-sequence JSON")->required();
  tds->add_option("--dt", tds_dt, "Time step (s)");
  tds->add_option("--t-end", tds_t_end, "Horizon (s)");

  auto* train = app.add_subcommand("train-tscp", "Day-ahead stage: sample, simulate, fit the TSCP model");
  add_common(train, c_train, true);
  std::string train_cont;
  std::size_t train_n = 0;
  std::uint64_t train_seed = 0;
  train->add_option("--contingency", train_cont, "Contingency JSON");
  auto* n_opt = train->add_option("--n", train_n, "Number of load samples");
  auto* seed_opt = train->add_option("--seed", train_seed, "Sampling seed");

  auto* eval = app.add_subcommand("eval-tscp", "Evaluate a TSCP model on a dataset CSV");
  std::string eval_model, eval_data, eval_out;
  double eval_noise = 0.05;
  std::uint64_t eval_seed = 7;
  eval->add_option("--model", eval_model, "Model JSON")->required();
  eval->add_option("--dataset", eval_data, "Dataset CSV")->required();
  eval->add_option("--noise", eval_noise, "Relative input noise for the robustness score (<= 0.05)");
  eval->add_option("--seed", eval_seed, "Noise seed");
  eval->add_option("--out", eval_out, "Metrics JSON path (default: stdout)");

  auto* rt = app.add_subcommand("cscopf", "Real-time stage: redispatch with verification loop");
  add_common(rt, c_rt, true);
  std::string rt_cont, rt_model;
  std::vector<std::string> rt_modes;
  int rt_max_iter = 0;
  double rt_tol = 0.0;
  rt->add_option("--contingency", rt_cont, "Contingency JSON (fault sequence + outages)");
  rt->add_option("--tscp-model", rt_model, "Trained TSCP model JSON");
  rt->add_option("--mode", rt_modes, "cscopf, rtsced or tscopf (repeatable or comma separated)")
      ->delimiter(',')
      ->check(CLI::IsMember({"cscopf", "rtsced", "tscopf"}));
  auto* iter_opt = rt->add_option("--max-iter", rt_max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  auto* tol_opt = rt->add_option("--tol", rt_tol, "Solver tolerance")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << "run with --help for usage\n";
    return exit_code::usage;
  }

  try {
    if (*validate) {
      auto cfg = base_config(c_validate);
      if (cfg.case_path.empty()) throw InputError("no case file given");
      const auto net = load_network(cfg);
      out << json{{"schema_version", kSchemaVersion},
                  {"valid", true},
                  {"buses", net.buses().size()},
                  {"branches", net.branches().size()},
                  {"generators", net.generators().size()},
                  {"loads", net.loads().size()},
                  {"reference_bus", net.reference_bus()},
                  {"total_generation_mw", net.total_generation_mw()},
                  {"total_load_mw", net.total_load_mw()},
                  {"has_dynamics", net.has_dynamics()}}
                 .dump(2)
          << "\n";
      return exit_code::ok;
    }
    if (*ptdf) {
      auto cfg = base_config(c_ptdf);
      if (cfg.case_path.empty()) throw InputError("no case file given");
      const auto net = load_network(cfg);
      const BusId ref = ptdf->count("--ref") ? ptdf_ref : net.reference_bus();
      const auto m = compute_ptdf(net, ref);
      std::string csv = "branch";
      for (const auto& b : net.buses()) csv += ",bus_" + std::to_string(b.id);
      csv += "\n";
      for (std::size_t k = 0; k < net.branches().size(); ++k) {
        csv += std::to_string(net.branches()[k].id);
        for (Eigen::Index i = 0; i < m.cols(); ++i) csv += "," + format_number(m(static_cast<Eigen::Index>(k), i));
        csv += "\n";
      }
      if (ptdf_out.empty()) out << csv;
      else write_text(ptdf_out, csv);
      if (!lodf_out.empty()) {
        const auto sens = compute_sensitivities(net);
        std::string l = "branch";
        for (const auto& br : net.branches()) l += ",out_" + std::to_string(br.id);
        l += "\n";
        for (std::size_t u = 0; u < net.branches().size(); ++u) {
          l += std::to_string(net.branches()[u].id);
          for (Eigen::Index a = 0; a < sens.lodf.cols(); ++a) {
            l += "," + format_number(sens.lodf(static_cast<Eigen::Index>(u), a));
          }
          l += "\n";
        }
        write_text(lodf_out, l);
      }
      return exit_code::ok;
    }
    if (*ft) {
      auto cfg = base_config(c_ft);
      if (cfg.case_path.empty()) throw InputError("no case file given");
      auto net = load_network(cfg);
      if (!ft_outages.empty()) {
        auto o = apply_outage(net, std::set<BranchId>(ft_outages.begin(), ft_outages.end()));
        if (o.islanded) throw TopologyError("the outage set islands the network");
        net = std::move(o.network);
      }
      const auto flows = base_flows_mw(net);
      FtOptions opt;
      opt.utilization_threshold = ft_threshold;
      const auto cuts =
          find_saturated_cutsets(net, std::span<const double>(flows.data(), static_cast<std::size_t>(flows.size())), opt);
      json list = json::array();
      for (const auto& k : cuts) {
        list.push_back({{"branches", k.branches},
                        {"side_a", k.side_a},
                        {"side_b", k.side_b},
                        {"aggregate_flow_mw", k.aggregate_flow_mw},
                        {"aggregate_limit_mw", k.aggregate_limit_mw},
                        {"utilization", k.utilization()},
                        {"saturated", k.saturated()},
                        {"transfer_margin_mw", k.transfer_margin_mw}});
      }
      const json doc = {{"schema_version", kSchemaVersion}, {"threshold", ft_threshold}, {"cutsets", list}};
      if (ft_out.empty()) out << doc.dump(2) << "\n";
      else write_json(ft_out, doc);
      return exit_code::ok;
    }
    if (*tds) {
      auto cfg = base_config(c_tds);
      if (cfg.case_path.empty()) throw InputError("no case file given");
      if (tds->count("--dt")) cfg.dt = tds_dt;
      if (tds->count("--t-end")) cfg.t_end = tds_t_end;
      const auto net = load_network(cfg);
      require_file(tds_faults, "fault-sequence file");
      json fdoc;
      try {
        fdoc = json::parse(read_text_file(tds_faults));
      } catch (const json::parse_error& ex) {
        throw InputError("fault-sequence file " + tds_faults + ": " + ex.what());
      }
      const auto seq = fault_sequence_from_json(fdoc);
      RotorTrajectories tr;
      const auto a = assess_stability(net, seq, cfg.assessment_options(), &tr);
      write_text(cfg.output_dir / "trajectory.csv", trajectory_csv(tr));
      json doc = assessment_to_json(a);
      doc["schema_version"] = kSchemaVersion;
      write_json(cfg.output_dir / "assessment.json", doc);
      out << doc.dump(2) << "\n";
      return exit_code::ok;
    }
    if (*train) {
      auto cfg = base_config(c_train);
      if (!train_cont.empty()) cfg.contingency_path = fs::path(train_cont);
      if (n_opt->count()) cfg.n = train_n;
      if (seed_opt->count()) cfg.seed = train_seed;
      return cmd_dayahead(cfg, out);
    }
    if (*eval) {
      require_file(eval_model, "TSCP model");
      require_file(eval_data, "dataset");
      TscpModel model;
      try {
        model = model_from_json(json::parse(read_text_file(eval_model)));
      } catch (const json::parse_error& ex) {
        throw InputError("TSCP model " + eval_model + ": " + ex.what());
      }
      const auto data = dataset_from_csv(read_text_file(eval_data));
      const auto rows = training_rows(data, true);
      if (rows.empty()) throw InputError("dataset has no usable rows");
      Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), data.x.cols());
      Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = data.x.row(static_cast<Eigen::Index>(rows[r]));
        y(static_cast<Eigen::Index>(r)) = data.y(static_cast<Eigen::Index>(rows[r]));
      }
      json doc = metrics_to_json(evaluate(model, x, y, eval_noise, eval_seed));
      doc["schema_version"] = kSchemaVersion;
      doc["rows"] = rows.size();
      if (eval_out.empty()) out << doc.dump(2) << "\n";
      else write_json(eval_out, doc);
      return exit_code::ok;
    }
    if (*rt) {
      auto cfg = base_config(c_rt);
      if (!rt_cont.empty()) cfg.contingency_path = fs::path(rt_cont);
      if (!rt_model.empty()) cfg.tscp_model_path = fs::path(rt_model);
      if (!rt_modes.empty()) {
        cfg.modes.clear();
        for (const auto& m : rt_modes) cfg.modes.push_back(parse_mode(m));
      }
      if (iter_opt->count()) cfg.max_iter = rt_max_iter;
      if (tol_opt->count()) cfg.tol = rt_tol;
      return cmd_realtime(cfg, out);
    }
  } catch (const InputError& e) {
    err << error_json("input", e.what()).dump(2) << "\n";
    return exit_code::input_error;
  } catch (const TopologyError& e) {
    err << error_json("topology", e.what()).dump(2) << "\n";
    return exit_code::input_error;
  } catch (const NumericalError& e) {
    err << error_json("numerical", e.what()).dump(2) << "\n";
    return exit_code::violations;
  } catch (const fs::filesystem_error& e) {
    err << error_json("io", e.what()).dump(2) << "\n";
    return exit_code::input_error;
  }
  return exit_code::usage;
}

}  // namespace cscopf
