#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arks/errors.hpp"
#include "arks/kernels.hpp"
#include "arks/models.hpp"
#include "arks/robusteval.hpp"
#include "arks/surrogates.hpp"
#include "arks/tensor.hpp"

namespace arks {

enum class Method { erm, arks, wrm, pgd_at, ro };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 32;
  double lr = 0.1;
  // lr is multiplied by lr_decay_factor at the start of each listed epoch.
  std::vector<int> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  Method method = Method::erm;

  // arks
  KernelSpec kernel;
  bool scale_grad_by_kernel = false;
  // wrm
  double wrm_y = 1.0;
  CostSpec wrm_cost{CostFamily::sq_l2};
  // pgd-at
  AttackConfig pgd;
  // ro
  std::optional<Box> ro_domain;

  InnerSolverConfig inner;

  bool swa = false;
  int swa_start = 0;

  void validate() const;
  double lr_at(int epoch) const;
};

struct TrainReport {
  Vector params;
  Vector objective;      // one entry per epoch
  Vector epoch_seconds;  // wall time per epoch; never feeds back into training
  std::optional<Vector> swa_params;
  std::uint64_t seed = 0;
  TrainConfig config;
};

// Raised when an update produces non-finite parameters. Carries the last
// parameters that were finite.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, Vector last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const Vector& last_good() const { return last_good_; }

 private:
  Vector last_good_;
};

// Per-sample robust objective and the outer gradient at the inner maximizer.
struct SampleStep {
  double objective = 0.0;
  Vector maximizer;
  Vector grad;  // gradient in theta used for the outer update
};

SampleStep sample_step(ModelLoss& model, std::span<const double> params, const Sample& sample,
                       const TrainConfig& cfg, std::uint64_t stream);

// Mean per-sample robust objective of `params` over `data` (no update).
double evaluate_objective(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& data,
                          const TrainConfig& cfg);

TrainReport train(const ModelSpec& spec, const LossKind& kind, const std::vector<Sample>& data,
                  const TrainConfig& cfg, std::optional<Vector> init = std::nullopt);

Vector swa_average(const std::vector<Vector>& snapshots);

// Robust least squares with xi as the perturbed variable. erm uses the
// sampled xi_i, arks a k-transform in xi (inner.box bounds the search), ro
// the max over grid_1d(ro_domain) with inner.grid_points points, and wrm a
// c-transform in xi. Parameters start at 0.1 * N(0, I) drawn from the seed.
// The loss is offset by kind.eps_pos.
TrainReport train_rls(const RlsProblem& problem, const std::vector<double>& xi, const TrainConfig& cfg,
                      const LossKind& kind = {});

struct RlsStep {
  double objective = 0.0;
  double maximizer = 0.0;
  Vector grad;
};

RlsStep rls_sample_step(const RlsProblem& problem, std::span<const double> theta, double xi, const TrainConfig& cfg,
                        const LossKind& kind, std::uint64_t stream);

double rls_objective(const RlsProblem& problem, std::span<const double> theta, const std::vector<double>& xi,
                     const TrainConfig& cfg, const LossKind& kind = {});

// max over the grid of the (offset) rls loss at theta.
double rls_worst_grid_loss(const RlsProblem& problem, std::span<const double> theta, std::span<const double> grid,
                           const LossKind& kind = {});

}  // namespace arks
