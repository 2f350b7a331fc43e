#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cscopf/dynamics.hpp"
#include "cscopf/grid_model.hpp"

namespace cscopf {

/// Per-load multiplicative perturbation l_j = l0_j (1 + sigma z), z a
/// standard normal truncated at +-truncation_sigmas and at the load bounds.
struct PerturbationSpec {
  double sigma = 0.05;
  double truncation_sigmas = 3.0;
};

struct LoadSampleSet {
  Eigen::MatrixXd samples;  // n x loads (MW)
  Eigen::VectorXd base;     // l0 per load
  std::vector<LoadId> load_ids;
  PerturbationSpec spec;
  std::uint64_t seed = 0;
};

LoadSampleSet sample_loads(const Network& net, const PerturbationSpec& spec, std::size_t n, std::uint64_t seed);

/// Empirical samples: CSV with one column per load id (header `l_<id>`).
LoadSampleSet read_samples_csv(std::string_view text, const Network& net);

/// Copy of net with the given loads and generation scaled proportionally
/// (respecting p_min/p_max) so total generation equals total load.
Network rescale_dispatch(const Network& net, std::span<const double> loads_mw);

struct Dataset {
  Eigen::MatrixXd x;  // samples x loads (MW)
  Eigen::VectorXd y;  // delta_p_tr (MW); 0 for stable or failed rows
  std::vector<LoadId> load_ids;
  std::vector<bool> stable;
  std::vector<bool> failed;
  std::vector<std::string> errors;  // per row, empty when ok
  std::vector<std::vector<GeneratorId>> critical_machines;  // per row
};

struct DatasetOptions {
  unsigned threads = 0;  // 0: hardware concurrency
};

/// One simulation per sample, evaluated in parallel; row order follows the
/// samples. Per-row failures are flagged, not raised.
Dataset build_dataset(const Network& net, const LoadSampleSet& samples, const FaultSequence& contingency,
                      const AssessmentOptions& assessment, const DatasetOptions& options = {});

/// Rows usable for training: not failed, and unstable unless include_stable.
std::vector<std::size_t> training_rows(const Dataset& data, bool include_stable);

std::string dataset_to_csv(const Dataset& data);
Dataset dataset_from_csv(std::string_view text);

struct TscpModel {
  Eigen::VectorXd theta;  // MW per MW, one per load
  double theta0 = 0.0;    // MW
  std::string contingency_id;
  std::vector<LoadId> load_ids;
  std::vector<GeneratorId> critical_machines;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double ridge_penalty = 0.0;  // 0 when the plain normal equations were used
  std::vector<double> loss_history;

  /// theta . l + theta0 without clamping.
  [[nodiscard]] double affine_value(std::span<const double> loads_mw) const;
};

struct FitOptions {
  bool allow_ridge = true;
};

/// Least squares via the normal equations on centred data. Rank-deficient
/// designs use ridge with penalty 1e-8 trace(X^T X) / rows when allowed.
TscpModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FitOptions& options = {});

/// Predicted correction (MW), clamped below at zero.
double predict(const TscpModel& model, std::span<const double> loads_mw);
double predict(const TscpModel& model, const Eigen::VectorXd& loads_mw);

struct TscpMetrics {
  double rmse = 0.0;
  double r2 = 0.0;
  double r2_robustness = 0.0;
  double mbd = 0.0;  // mean(y - y_hat); negative means over-estimation
};

/// Metrics on a test set. Robustness is R2(clean) - R2(inputs scaled by
/// 1 + U(-noise_level, noise_level)), using a fixed seed.
TscpMetrics evaluate(const TscpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     double noise_level, std::uint64_t seed = 7);

/// R2 with the convention R2 = 1 for a constant target reproduced exactly
/// (0 otherwise).
double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat);

nlohmann::json model_to_json(const TscpModel& model);
TscpModel model_from_json(const nlohmann::json& doc);
nlohmann::json metrics_to_json(const TscpMetrics& m);

}  // namespace cscopf
