#pragma once

// Config-driven experiment runner behind the `qmeas` command line tool.
//
// Config files are JSON documents tagged with a schema string:
//
//   { "schema": "qmeas-config/1", "experiment": "ch-sweep", "seed": 1,
//     "ch_sweep": { "n_values": {"start": 20, "stop": 200, "step": 20},
//                   "angles": [0, 1], "up_probability": 0.9 } }
//
// Every kind has its own section (simulate, ch_sweep, reliability,
// approximant); unknown keys are rejected. See README.md for the full schema.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "qmeas/linalg.hpp"

namespace qmeas {

inline constexpr const char* kConfigSchema = "qmeas-config/1";

/// Invalid or unreadable configuration. `where` names the offending field or
/// the line:column of a syntax error.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

enum class ExperimentKind { Simulate, ChSweep, Reliability, Approximant };

std::string to_string(ExperimentKind kind);

struct SimulateParams {
  /// "random", "spin-chain" (dense 2^N apparatus) or "ideal" (synthetic ideal F).
  std::string model = "random";
  Index n = 2;
  Index dim_k = 4;
  Index nu = 2;
  Index n_spins = 4;
  std::vector<double> angles;
  std::vector<double> energies;
  std::vector<Complex> amplitudes;
  std::vector<double> times;
  /// "sigma_x" (couples levels 1 and 2) or "random".
  std::string observable = "sigma_x";
};

struct ChSweepParams {
  std::vector<Index> n_values;
  std::vector<double> angles{0.0, 1.0};
  std::optional<double> up_probability;
  std::optional<double> t_star;
  std::optional<Index> bands;
};

struct ReliabilityParams {
  std::vector<std::pair<Index, Index>> grid;  // (N, n)
  std::optional<Index> target_band;
};

struct ApproximantParams {
  double lower = 0.0;
  double upper = 1.0;
  double epsilon = 0.1;
  std::string rule = "midpoint";
  std::vector<double> representatives;
  /// "position" (diagonal grid) or "random" (random hermitian rescaled into range).
  std::string proxy = "position";
  Index grid_dim = 64;
  std::int64_t max_denominator = 64;
  double apparatus_size = 1e6;
};

struct VerifyParams {
  /// "none", "sum-rule" or "conjugate-symmetry": corrupts every F tensor
  /// before the checks run.
  std::string fault = "none";
};

struct ExperimentConfig {
  std::string schema = kConfigSchema;
  ExperimentKind kind = ExperimentKind::Simulate;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::variant<SimulateParams, ChSweepParams, ReliabilityParams, ApproximantParams> params;
  VerifyParams verify;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical form with every default filled in; parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);
/// FNV-1a of the canonical JSON dump without the output section, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

using Cell = std::variant<double, std::int64_t, std::string>;

class SweepResult {
 public:
  SweepResult() = default;
  explicit SweepResult(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }
  /// Throws std::logic_error if the row width differs from the header.
  void add_row(std::vector<Cell> row);
  std::string to_csv() const;

  nlohmann::json summary;  // kind-specific results
  std::vector<std::string> errors;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

/// Shortest round-trip decimal; "nan"/"inf"/"-inf" for non-finite values.
std::string format_double(double x);

SweepResult run(const ExperimentConfig& config, unsigned threads = 1);

struct CheckResult {
  std::string name;
  bool passed;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
};

VerifyReport verify(const ExperimentConfig& config, unsigned threads = 1);

/// Writes results.csv and summary.json (with metadata) into `dir`.
void write_outputs(const SweepResult& result, const ExperimentConfig& config,
                   const std::filesystem::path& dir, double wall_seconds);

}  // namespace qmeas
