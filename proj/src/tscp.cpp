#include "cscopf/tscp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "cscopf/csv.hpp"
#include "cscopf/errors.hpp"

namespace cscopf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Index idx(std::size_t i) { return static_cast<Index>(i); }

constexpr int kMaxRejections = 10000;

}  // namespace

LoadSampleSet sample_loads(const Network& net, const PerturbationSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InputError("sample count must be at least 1");
  if (!(spec.sigma >= 0.0) || !(spec.truncation_sigmas >= 0.0)) {
    throw InputError("perturbation sigma and truncation must be nonnegative");
  }
  const auto& loads = net.loads();
  LoadSampleSet out;
  out.spec = spec;
  out.seed = seed;
  out.base.resize(idx(loads.size()));
  for (std::size_t j = 0; j < loads.size(); ++j) {
    out.base(idx(j)) = loads[j].l0_mw;
    out.load_ids.push_back(loads[j].id);
    if (loads[j].l0_mw < loads[j].l_min_mw || loads[j].l0_mw > loads[j].l_max_mw) {
      throw InputError("load " + std::to_string(loads[j].id) + " base lies outside its bounds");
    }
  }
  out.samples.resize(idx(n), idx(loads.size()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < loads.size(); ++j) {
      const auto& l = loads[j];
      double value = l.l0_mw;
      if (spec.sigma > 0.0 && l.l0_mw > 0.0) {
        int tries = 0;
        while (true) {
          const double z = normal(rng);
          const double cand = l.l0_mw * (1.0 + spec.sigma * z);
          if (std::abs(z) <= spec.truncation_sigmas && cand >= l.l_min_mw && cand <= l.l_max_mw) {
            value = cand;
            break;
          }
          if (++tries > kMaxRejections) {
            throw InputError("perturbation spec leaves no feasible range for load " + std::to_string(l.id));
          }
        }
      }
      out.samples(idx(s), idx(j)) = value;
    }
  }
  return out;
}

LoadSampleSet read_samples_csv(std::string_view text, const Network& net) {
  const auto table = parse_csv(text);
  const auto& loads = net.loads();
  std::vector<std::size_t> col_of(loads.size(), table.header.size());
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (h.rfind("l_", 0) != 0) throw InputError("sample column '" + h + "' must be named l_<load id>");
    const auto id = static_cast<LoadId>(parse_number(h.substr(2)));
    col_of[net.load_index(id)] = c;
  }
  LoadSampleSet out;
  out.samples.resize(idx(table.rows.size()), idx(loads.size()));
  out.base.resize(idx(loads.size()));
  out.spec.sigma = 0.0;
  for (std::size_t j = 0; j < loads.size(); ++j) {
    if (col_of[j] == table.header.size()) {
      throw InputError("sample file lacks a column for load " + std::to_string(loads[j].id));
    }
    out.base(idx(j)) = loads[j].l0_mw;
    out.load_ids.push_back(loads[j].id);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const double v = parse_number(table.rows[r][col_of[j]]);
      if (v < loads[j].l_min_mw || v > loads[j].l_max_mw) {
        throw InputError("sample row " + std::to_string(r + 1) + " violates the bounds of load " +
                         std::to_string(loads[j].id));
      }
      out.samples(idx(r), idx(j)) = v;
    }
  }
  if (table.rows.empty()) throw InputError("sample file has no rows");
  return out;
}

Network rescale_dispatch(const Network& net, std::span<const double> loads_mw) {
  const auto& loads = net.loads();
  const auto& gens = net.generators();
  if (loads_mw.size() != loads.size()) throw InputError("load vector length does not match load count");
  double total_load = 0.0;
  for (double l : loads_mw) total_load += l;
  double pmin = 0.0, pmax = 0.0;
  for (const auto& g : gens) {
    pmin += g.p_min_mw;
    pmax += g.p_max_mw;
  }
  if (total_load < pmin - 1e-9 || total_load > pmax + 1e-9) {
    throw InputError("total load " + std::to_string(total_load) + " MW is outside the generation range");
  }

  std::vector<double> p(gens.size());
  std::vector<bool> fixed(gens.size(), false);
  // Proportional scaling, then repeatedly pin violators at their limit and
  // spread the residual over the free units.
  for (std::size_t i = 0; i < gens.size(); ++i) p[i] = gens[i].p0_mw;
  for (std::size_t round = 0; round <= gens.size(); ++round) {
    double pinned = 0.0, free_base = 0.0;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      if (fixed[i]) pinned += p[i];
      else free_base += gens[i].p0_mw;
    }
    const double target = total_load - pinned;
    std::size_t n_free = 0;
    for (std::size_t i = 0; i < gens.size(); ++i) n_free += fixed[i] ? 0 : 1;
    if (n_free == 0) break;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      if (fixed[i]) continue;
      p[i] = free_base > 1e-12 ? gens[i].p0_mw * target / free_base : target / static_cast<double>(n_free);
    }
    bool changed = false;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      if (fixed[i]) continue;
      if (p[i] > gens[i].p_max_mw) {
        p[i] = gens[i].p_max_mw;
        fixed[i] = changed = true;
      } else if (p[i] < gens[i].p_min_mw) {
        p[i] = gens[i].p_min_mw;
        fixed[i] = changed = true;
      }
    }
    if (!changed) break;
  }
  return net.with_operating_point(p, loads_mw);
}

Dataset build_dataset(const Network& net, const LoadSampleSet& samples, const FaultSequence& contingency,
                      const AssessmentOptions& assessment, const DatasetOptions& options) {
  if (!net.has_dynamics()) throw InputError("dataset generation requires dynamics data for every generator");
  const auto rows = static_cast<std::size_t>(samples.samples.rows());
  Dataset d;
  d.x = samples.samples;
  d.y = VectorXd::Zero(idx(rows));
  d.load_ids = samples.load_ids;
  d.stable.assign(rows, false);
  d.failed.assign(rows, false);
  d.errors.assign(rows, {});
  d.critical_machines.assign(rows, {});

  // vector<bool> is not safe for concurrent writes; rows fill their own slot.
  struct RowResult {
    bool stable = false;
    bool failed = false;
    double y = 0.0;
    std::string error;
    std::vector<GeneratorId> cm;
  };
  std::vector<RowResult> results(rows);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t r = next.fetch_add(1);
      if (r >= rows) return;
      auto& out = results[r];
      try {
        std::vector<double> l(static_cast<std::size_t>(d.x.cols()));
        for (std::size_t j = 0; j < l.size(); ++j) l[j] = d.x(idx(r), idx(j));
        const auto case_r = rescale_dispatch(net, l);
        const auto a = assess_stability(case_r, contingency, assessment);
        out.stable = a.stable();
        out.y = a.stable() ? 0.0 : a.delta_p_tr_mw;
        out.cm = a.critical_machines;
      } catch (const std::exception& ex) {
        out.failed = true;
        out.error = ex.what();
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(rows, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t r = 0; r < rows; ++r) {
    d.stable[r] = results[r].stable;
    d.failed[r] = results[r].failed;
    d.y(idx(r)) = results[r].y;
    d.errors[r] = std::move(results[r].error);
    d.critical_machines[r] = std::move(results[r].cm);
  }
  return d;
}

std::vector<std::size_t> training_rows(const Dataset& data, bool include_stable) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < data.failed.size(); ++r) {
    if (data.failed[r]) continue;
    if (data.stable[r] && !include_stable) continue;
    out.push_back(r);
  }
  return out;
}

std::string dataset_to_csv(const Dataset& data) {
  std::string out;
  for (auto id : data.load_ids) out += "l_" + std::to_string(id) + ",";
  out += "delta_p_tr,stable_flag\n";
  for (Index r = 0; r < data.x.rows(); ++r) {
    for (Index j = 0; j < data.x.cols(); ++j) out += format_number(data.x(r, j)) + ",";
    const auto row = static_cast<std::size_t>(r);
    out += format_number(data.y(r)) + "," + (data.failed[row] ? "-1" : data.stable[row] ? "1" : "0") + "\n";
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text) {
  const auto t = parse_csv(text);
  if (t.header.size() < 3 || t.header[t.header.size() - 2] != "delta_p_tr" || t.header.back() != "stable_flag") {
    throw InputError("dataset CSV must end with delta_p_tr,stable_flag columns");
  }
  const std::size_t nl = t.header.size() - 2;
  Dataset d;
  for (std::size_t j = 0; j < nl; ++j) {
    if (t.header[j].rfind("l_", 0) != 0) throw InputError("dataset column '" + t.header[j] + "' is not a load");
    d.load_ids.push_back(static_cast<LoadId>(parse_number(t.header[j].substr(2))));
  }
  const std::size_t rows = t.rows.size();
  d.x.resize(idx(rows), idx(nl));
  d.y.resize(idx(rows));
  d.stable.assign(rows, false);
  d.failed.assign(rows, false);
  d.errors.assign(rows, {});
  d.critical_machines.assign(rows, {});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < nl; ++j) d.x(idx(r), idx(j)) = parse_number(t.rows[r][j]);
    d.y(idx(r)) = parse_number(t.rows[r][nl]);
    const auto flag = t.rows[r][nl + 1];
    if (flag == "1") d.stable[r] = true;
    else if (flag == "-1") d.failed[r] = true;
    else if (flag != "0") throw InputError("invalid stable_flag '" + flag + "'");
  }
  return d;
}

double TscpModel::affine_value(std::span<const double> loads_mw) const {
  if (static_cast<Index>(loads_mw.size()) != theta.size()) {
    throw InputError("load vector has " + std::to_string(loads_mw.size()) + " entries, model expects " +
                     std::to_string(theta.size()));
  }
  double v = theta0;
  for (std::size_t j = 0; j < loads_mw.size(); ++j) v += theta(idx(j)) * loads_mw[j];
  return v;
}

TscpModel fit_linear(const MatrixXd& x, const VectorXd& y, const FitOptions& options) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (n == 0) throw InputError("cannot fit a model on an empty dataset");
  if (y.size() != n) throw InputError("target length does not match the number of rows");
  if (!x.allFinite() || !y.allFinite()) throw InputError("training data contains non-finite values");

  const VectorXd mean = x.colwise().mean().transpose();
  const double ymean = y.mean();
  const MatrixXd xc = x.rowwise() - mean.transpose();
  const VectorXd yc = y.array() - ymean;

  TscpModel m;
  m.n = static_cast<std::size_t>(n);
  MatrixXd gram = xc.transpose() * xc;
  const VectorXd rhs = xc.transpose() * yc;

  Eigen::ColPivHouseholderQR<MatrixXd> qr(xc);
  qr.setThreshold(1e-10);
  const bool deficient = n < p + 1 || qr.rank() < p;
  if (deficient) {
    if (!options.allow_ridge) throw NumericalError("rank-deficient design matrix and ridge fallback disabled");
    const double trace = (x.transpose() * x).trace();
    m.ridge_penalty = std::max(1e-8 * trace / static_cast<double>(n), 1e-300);
    gram.diagonal().array() += m.ridge_penalty;
  }
  m.theta = p > 0 ? VectorXd(gram.ldlt().solve(rhs)) : VectorXd();
  if (!m.theta.allFinite()) throw NumericalError("normal equations produced non-finite coefficients");
  m.theta0 = ymean - (p > 0 ? m.theta.dot(mean) : 0.0);

  const double j0 = yc.squaredNorm() / static_cast<double>(n);
  const VectorXd resid = y - ((x * m.theta).array() + m.theta0).matrix();
  m.loss_history = {j0, resid.squaredNorm() / static_cast<double>(n)};
  return m;
}

double predict(const TscpModel& model, std::span<const double> loads_mw) {
  return std::max(0.0, model.affine_value(loads_mw));
}

double predict(const TscpModel& model, const VectorXd& loads_mw) {
  return predict(model, std::span<const double>(loads_mw.data(), static_cast<std::size_t>(loads_mw.size())));
}

double r_squared(const VectorXd& y, const VectorXd& y_hat) {
  const double ss_res = (y - y_hat).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  if (ss_tot <= 0.0) {
    return ss_res <= 1e-12 * std::max(1.0, y.squaredNorm()) ? 1.0 : 0.0;
  }
  return 1.0 - ss_res / ss_tot;
}

namespace {

VectorXd predict_all(const TscpModel& model, const MatrixXd& x) {
  VectorXd out(x.rows());
  for (Index r = 0; r < x.rows(); ++r) out(r) = predict(model, VectorXd(x.row(r).transpose()));
  return out;
}

}  // namespace

TscpMetrics evaluate(const TscpModel& model, const MatrixXd& x, const VectorXd& y, double noise_level,
                     std::uint64_t seed) {
  if (x.rows() == 0) throw InputError("empty test set");
  if (y.size() != x.rows()) throw InputError("target length does not match the number of rows");
  if (!(noise_level >= 0.0) || noise_level > 0.05) throw InputError("noise level must lie in [0, 0.05]");
  const VectorXd y_hat = predict_all(model, x);
  TscpMetrics m;
  const auto n = static_cast<double>(y.size());
  m.rmse = std::sqrt((y - y_hat).squaredNorm() / n);
  m.r2 = r_squared(y, y_hat);
  m.mbd = (y - y_hat).sum() / n;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-noise_level, noise_level);
  MatrixXd noisy = x;
  for (Index r = 0; r < noisy.rows(); ++r) {
    for (Index c = 0; c < noisy.cols(); ++c) noisy(r, c) *= 1.0 + u(rng);
  }
  m.r2_robustness = m.r2 - r_squared(y, predict_all(model, noisy));
  return m;
}

nlohmann::json model_to_json(const TscpModel& model) {
  std::vector<double> theta(model.theta.data(), model.theta.data() + model.theta.size());
  return {{"schema_version", 1},
          {"theta", theta},
          {"theta0", model.theta0},
          {"contingency_id", model.contingency_id},
          {"load_ids", model.load_ids},
          {"critical_machines", model.critical_machines},
          {"n", model.n},
          {"seed", model.seed},
          {"ridge_penalty", model.ridge_penalty},
          {"loss_history", model.loss_history}};
}

TscpModel model_from_json(const nlohmann::json& doc) {
  try {
    TscpModel m;
    const auto theta = doc.at("theta").get<std::vector<double>>();
    m.theta = Eigen::Map<const VectorXd>(theta.data(), idx(theta.size()));
    m.theta0 = doc.at("theta0").get<double>();
    m.contingency_id = doc.value("contingency_id", std::string{});
    m.load_ids = doc.value("load_ids", std::vector<LoadId>{});
    m.critical_machines = doc.value("critical_machines", std::vector<GeneratorId>{});
    m.n = doc.value("n", std::size_t{0});
    m.seed = doc.value("seed", std::uint64_t{0});
    m.ridge_penalty = doc.value("ridge_penalty", 0.0);
    m.loss_history = doc.value("loss_history", std::vector<double>{});
    if (!m.load_ids.empty() && m.load_ids.size() != theta.size()) {
      throw InputError("model load_ids and theta differ in length");
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("invalid TSCP model: ") + ex.what());
  }
}

nlohmann::json metrics_to_json(const TscpMetrics& m) {
  return {{"rmse", m.rmse}, {"r2", m.r2}, {"r2_robustness", m.r2_robustness}, {"mbd", m.mbd}};
}

}  // namespace cscopf
