#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "arks/data.hpp"
#include "arks/models.hpp"
#include "arks/robusteval.hpp"
#include "arks/trainers.hpp"

namespace arks {

enum class ExperimentKind { train, attack_sweep, shift_sweep, certify, rls, selftest };

std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& s);

struct CsvSource {
  std::string train;
  std::string test;  // optional
  bool standardize = false;
};

// Picks the arks bandwidth on a held-out tail of the training data.
struct SigmaTuning {
  std::vector<double> sigmas;
  double validation_fraction = 0.2;
  // Candidates whose validation clean error exceeds erm's by more than this
  // are dropped.
  double max_clean_gap = 0.05;
  // Validation attack budget used to rank the remaining candidates.
  double delta = 0.3;
};

struct CertifyOptions {
  // Every coordinate of every training point moves by this amount.
  double displacement = 0.1;
  CertificateCheckConfig check;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::train;
  std::vector<std::uint64_t> seeds{0};

  std::optional<CsvSource> csv;
  std::optional<SyntheticSpec> synthetic;

  ModelSpec model;
  LossKind loss;
  TrainConfig train;
  // Methods to run; empty means train.method alone.
  std::vector<Method> methods;
  // arks runs once per listed bandwidth (empty: train.kernel.sigma).
  std::vector<double> sigmas;

  AttackConfig attack;
  std::vector<double> deltas;
  std::optional<SigmaTuning> tuning;

  ShiftKind shift = ShiftKind::scale;
  std::vector<double> shifts;

  CertifyOptions certify;

  // rls only: default xi range for inner.box and ro_domain when unset.
  double xi_lo = -1.0;
  double xi_hi = 1.0;

  void validate() const;
};

// JSON in, JSON out. Unknown keys, wrong types and invalid values raise
// ConfigError naming the offending key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every field, defaults included; parse_config(config_to_json(c)) == c.
std::string config_to_json(const ExperimentConfig& cfg);

// Runs the experiment and writes config-echo.json, train.csv, params.csv,
// sweep.csv and certificate.json (as applicable) into `out_dir`. Files
// already produced stay on disk when a later step fails. Progress goes to
// `log`.
void run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

// Maps an exception to the documented exit codes: 1 config, 2 numerical, 3 I/O.
int exit_code_for(const std::exception& e);

struct SelftestReport {
  int passed = 0;
  int failed = 0;
  std::vector<std::string> lines;
};

SelftestReport run_selftest();

}  // namespace arks
