#pragma once

#include "fwspde/parallel.hpp"
#include "fwspde/skeleton.hpp"

#include <functional>
#include <optional>

namespace fwspde {

struct SimConfig {
  double eps = 0.0;
  TimeGrid grid{1.0, 100};
  std::uint64_t seed = 0;
  int noise_truncation = 0;      ///< Brownian modes retained; 0 means all noise modes
  double blowup_factor = 1e3;    ///< BlowUp when |X|_{L^2} > factor (|x0|_{L^2} + 1)
  bool record_noise = false;     ///< keep per-step noise increments for mild_residual

  void validate(const ModelSpec& model) const;
  int truncation(const ModelSpec& model) const {
    return noise_truncation > 0 ? noise_truncation : model.n_noise();
  }
};

struct PathSample {
  Trajectory trajectory;
  std::optional<double> sup_deviation_from;
  std::int64_t rng_draws_consumed = 0;
  NoiseRecord noise;  ///< n_modes x n_steps, only with SimConfig::record_noise
};

/// One frozen-coefficient exponential-Euler step:
///   X+ = S(dt)[X + dt (B(X) + G(X) u)] + sqrt(eps) N,
///   N_k = sqrt((1 - exp(-2 gamma_k dt)) / (2 gamma_k)) [G(X) xi]_k,  xi ~ N(0, I).
class Stepper {
public:
  Stepper(const ModelSpec& model, double eps, double dt, int truncation);

  /// Advances x in place. `u` may be null. `noise_out` receives N (unscaled by sqrt(eps)).
  void step(Eigen::VectorXd& x, const Eigen::VectorXd* u, NormalRng& rng,
            Eigen::VectorXd* noise_out = nullptr) const;

  double dt() const { return dt_; }
  double sqrt_eps() const { return sqrt_eps_; }

private:
  const ModelSpec& model_;
  double dt_;
  double sqrt_eps_;
  int truncation_;
  Eigen::VectorXd decay_;
  Eigen::VectorXd conv_sd_;
  Eigen::VectorXd additive_gain_;  ///< c lambda_j sd_j when g is constant
  bool drift_free_;
};

PathSample simulate(const ModelSpec& model, const SpectralField& x0, const SimConfig& cfg);
PathSample simulate_controlled(const ModelSpec& model, const SpectralField& x0, const ControlPath* u,
                               const SimConfig& cfg);

/// Scalar functional of a sampled path.
using PathFunctional = std::function<double(const Trajectory&)>;

PathFunctional endpoint_norm_functional();
PathFunctional sup_deviation_functional(Trajectory reference);
/// 1 if sup_n |X_n - ref_n|_E < delta, else 0.
PathFunctional tube_indicator_functional(Trajectory reference, double delta);

struct BatchStatistics {
  std::int64_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  ///< unbiased; 0 for n = 1
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool ci_defined = false;  ///< false for n = 1
  std::vector<double> values;
};

/// Moments of `functional` over n_paths paths; path i uses seed derive_seed(cfg.seed, i).
/// Results do not depend on `threads`.
BatchStatistics batch_simulate(const ModelSpec& model, const SpectralField& x0, const SimConfig& cfg,
                               std::int64_t n_paths, const PathFunctional& functional,
                               const ControlPath* u = nullptr, int threads = 1);

/// Sample statistics of a fixed value list (index order).
BatchStatistics summarize(std::vector<double> values);

/// sum_{j > trunc} lambda_j^2 / Tr(Q^2)
double truncation_error(const NoiseSpec& noise, int truncation);

}  // namespace fwspde
