#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cscopf/dynamics.hpp"
#include "cscopf/redispatch.hpp"

namespace cscopf {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int violations = 1;
inline constexpr int input_error = 2;
inline constexpr int usage = 64;
}  // namespace exit_code

struct RunConfig {
  std::filesystem::path case_path;
  std::optional<std::filesystem::path> dynamics_path;
  std::optional<std::filesystem::path> contingency_path;
  std::optional<std::filesystem::path> samples_path;
  std::optional<std::filesystem::path> tscp_model_path;
  std::filesystem::path output_dir = "out";

  // sampling
  std::size_t n = 100;
  std::uint64_t seed = 1;
  double sigma = 0.05;
  double truncation_sigmas = 3.0;

  // dynamics
  SimeConfig sime;
  double dt = 1e-3;
  double t_end = 5.0;
  double frequency_hz = 60.0;

  // training / evaluation
  double test_fraction = 0.2;
  double noise_level = 0.05;
  bool include_stable = true;
  unsigned threads = 0;

  // real time
  std::vector<Mode> modes{Mode::cscopf};
  double tol = 1e-6;
  int max_iter = 10;
  double ft_threshold = 1.0;
  bool allow_bridge_outages = false;

  /// Checks referenced paths and numeric ranges. Throws InputError.
  void validate() const;
  [[nodiscard]] AssessmentOptions assessment_options() const;
  [[nodiscard]] RealtimeOptions realtime_options() const;
};

/// Reads a config JSON; relative paths resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Day-ahead stage: sample, simulate, fit, evaluate. Writes tscp_model.json,
/// dataset.csv and metrics.json into the output directory.
int cmd_dayahead(const RunConfig& config, std::ostream& out);

/// Real-time stage for every configured mode. Writes solution_<mode>.json,
/// redispatch_<mode>.csv, trajectory CSVs and, for several modes,
/// comparison.csv.
int cmd_realtime(const RunConfig& config, std::ostream& out);

/// Entry point used by the executable. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cscopf
