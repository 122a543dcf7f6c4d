#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arks/kernels.hpp"
#include "arks/models.hpp"
#include "arks/surrogates.hpp"
#include "arks/tensor.hpp"

namespace arks {

enum class AttackKind { pgd, fgsm };
enum class AttackMode { white_box, black_box };

std::string to_string(AttackKind k);
std::string to_string(AttackMode m);
AttackKind parse_attack_kind(const std::string& s);
AttackMode parse_attack_mode(const std::string& s);

struct ClipRange {
  double lo = 0.0;
  double hi = 1.0;
};

// L-infinity attack settings. FGSM ignores `steps` and `step_size`.
struct AttackConfig {
  AttackKind kind = AttackKind::pgd;
  double delta = 0.0;
  int steps = 15;
  double step_size = 0.03;
  std::optional<ClipRange> clip;
  AttackMode mode = AttackMode::white_box;
  bool random_start = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Perturbs sample.x to increase the loss within ||x' - x||_inf <= delta (and
// the clip range when set). The label is left untouched.
Sample attack(ModelLoss& model, std::span<const double> params, const Sample& sample, const AttackConfig& cfg,
              std::uint64_t sample_index = 0);

// Attacks every sample against `model`. Output order matches input order.
std::vector<Sample> perturb_dataset(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& data,
                                    const AttackConfig& cfg);

struct EvalStats {
  // 0/1 error for classifiers, mean squared prediction error for regression.
  double error = 0.0;
  double mean_loss = 0.0;
};

EvalStats evaluate(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& data);

struct SweepRow {
  std::string method;
  std::uint64_t seed = 0;
  std::string protocol;  // pgd, fgsm, scale, uniform
  std::string mode;      // white-box, black-box, shift
  double param = 0.0;    // Delta for attacks, delta/d for shifts
  double error = 0.0;
  double mean_loss = 0.0;
  std::size_t n = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  void append(const SweepResult& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }
};

// A fixed model whose gradients craft black-box perturbations.
struct AttackSource {
  ModelLoss* model = nullptr;
  Vector params;
};

// Error of `victim` on attacked test data for each Delta. Black-box mode
// requires `source`; the perturbations then depend only on the source and
// the seed.
SweepResult sweep(ModelLoss& victim, std::span<const double> params, const std::vector<Sample>& test,
                  const std::vector<double>& deltas, const AttackConfig& cfg, const AttackSource* source,
                  const std::string& method, std::uint64_t seed);

// X' = (1 + delta) X
Tensor shift_scale(const Tensor& x, double delta);
// X' = X + d * Uniform(-1, 1), entrywise
Tensor shift_uniform(const Tensor& x, double d, std::uint64_t seed);

std::vector<Sample> shift_scale(const std::vector<Sample>& data, double delta);
std::vector<Sample> shift_uniform(const std::vector<Sample>& data, double d, std::uint64_t seed);

enum class ShiftKind { scale, uniform };
std::string to_string(ShiftKind k);
ShiftKind parse_shift_kind(const std::string& s);

SweepResult shift_sweep(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& test,
                        const std::vector<double>& amounts, ShiftKind kind, const std::string& method,
                        std::uint64_t seed);

// ln(objective) + rho / sigma
struct CertificateReport {
  double objective = 0.0;
  double rho = 0.0;
  double sigma = 1.0;
  double eps_pos = 0.0;
  double bound = 0.0;
};

CertificateReport certificate(double objective, double rho, double sigma, double eps_pos = 0.0);

enum class SupremumMode { grid_oracle, ascent };

struct CertificateCheckConfig {
  SupremumMode mode = SupremumMode::grid_oracle;
  // Grid oracle over [lo, hi]^d (d <= 2) with this step. The anchor and the
  // shifted point of each sample are evaluated as extra candidates.
  double grid_lo = -5.0;
  double grid_hi = 5.0;
  double grid_step = 1e-3;
  InnerSolverConfig inner;
};

struct CertificateCheck {
  double lhs = 0.0;        // mean over shifted points of ln l
  double rhs = 0.0;        // ln(mean l^k) + rho / sigma
  double objective = 0.0;  // mean l^k over the original points
  double rho = 0.0;        // mean transport cost of the identity coupling
  bool pass = false;
  SupremumMode mode = SupremumMode::grid_oracle;
};

// l(i, u): loss of sample i evaluated at features u.
using PointLoss = std::function<double(std::size_t i, std::span<const double> u, std::span<double> grad)>;

CertificateCheck certificate_check(const PointLoss& loss, const std::vector<Vector>& points, const KernelSpec& kspec,
                                   const std::vector<Vector>& shifts, const CertificateCheckConfig& cfg);

CertificateCheck certificate_check(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& data,
                                   const KernelSpec& kspec, const std::vector<Vector>& shifts,
                                   const CertificateCheckConfig& cfg);

}  // namespace arks
