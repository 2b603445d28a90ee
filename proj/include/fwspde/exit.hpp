#pragma once

#include "fwspde/action.hpp"
#include "fwspde/simulator.hpp"

#include <string>
#include <vector>

namespace fwspde {

enum class BallNorm { L2, Sup };

/// D = {x : |x - center| < radius} in the chosen norm (sup means the E-norm).
struct ExitDomain {
  SpectralField center;
  double radius = 1.0;
  BallNorm norm = BallNorm::L2;

  double distance(const Eigen::VectorXd& x) const;
  bool contains(const Eigen::VectorXd& x) const { return distance(x) < radius; }
};

struct ExitProblem {
  ModelSpec model;              ///< model.grid is one horizon block
  ExitDomain domain;
  SpectralField equilibrium;    ///< O
  SpectralField x0;             ///< start, defaults to O when empty
  std::vector<double> eps_list;
  std::int64_t n_paths = 100;
  std::int64_t max_steps = 10'000'000;
  double v_ref = 0.0;           ///< V(dD), e.g. from quasipotential()
  double eta = 0.1;             ///< window half-width on the log scale
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  SpectralField start() const { return x0.basis ? x0 : equilibrium; }
};

struct ExitSample {
  double tau = 0.0;             ///< first node outside D (censoring time when censored)
  SpectralField exit_point;
  bool censored = false;
  double overshoot = 0.0;       ///< |exit_point - O| - r
  std::int64_t steps = 0;
};

// ---------------------------------------------------------------------------

struct AttractionProbe {
  SpectralField x0;
  bool stayed_in_domain = true;
  double final_distance = 0.0;  ///< |X^0_x(T0) - O| in the domain norm
  bool ok = false;
};

struct AttractionReport {
  double equilibrium_residual = 0.0;  ///< |A O + B(O)|_{L^2}
  std::vector<AttractionProbe> probes;
  int violations = 0;
};

/// Noiseless flow from each probe over [0, horizon] (model time step): the path must stay in D
/// and end within rho of O.
AttractionReport verify_attraction(const ModelSpec& model, const ExitDomain& domain, const SpectralField& equilibrium,
                                   const std::vector<SpectralField>& probes, double horizon, double rho);

/// One exit-time sample; the horizon is extended block by block until exit or max_steps.
ExitSample sample_exit(const ExitProblem& problem, double eps, std::uint64_t seed);

struct ExitScalingRow {
  double eps = 0.0;
  std::int64_t n = 0;
  std::int64_t n_censored = 0;
  double mean_tau = 0.0;             ///< censored samples counted at their censoring time (a lower bound)
  double mean_tau_uncensored = 0.0;  ///< NaN when every sample is censored
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double median_tau = 0.0;
  double eps_log_mean = 0.0;
  double window_prob = 0.0;          ///< P(e^{(V-eta)/eps} <= tau <= e^{(V+eta)/eps})
  double window_ci_lo = 0.0;
  double window_ci_hi = 0.0;
  double mean_overshoot = 0.0;
  bool all_censored = false;
};

struct ExitScalingReport {
  std::vector<ExitScalingRow> rows;
  double v_ref = 0.0;
  double eta = 0.0;
  double extrapolated_limit = 0.0;   ///< intercept of a linear fit of eps log mean tau in eps
  double fit_slope = 0.0;
  bool strictly_increasing = false;  ///< eps log mean tau increases as eps decreases
  std::vector<double> excluded_eps;  ///< AllCensored
  std::vector<ExitSample> samples;   ///< row-major by eps then path
};

/// Paths of one eps share seeds derive_seed(seed, i) with every other eps (common random numbers).
/// Throws BudgetError when the predicted step count sum_eps n e^{V/eps} / dt exceeds 1e9.
ExitScalingReport exit_scaling(const ExitProblem& problem);

/// Voronoi cells on the boundary: an exit point belongs to the cell whose direction
/// has the largest inner product with exit_point - O.
struct ExitPlaceCell {
  std::string name;
  Eigen::VectorXd direction;
};

struct ExitPlaceRow {
  double eps = 0.0;
  std::string cell;
  std::int64_t count = 0;
  std::int64_t n_exited = 0;
  double frequency = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

std::vector<ExitPlaceRow> exit_place_histogram(const ExitProblem& problem, const std::vector<ExitPlaceCell>& cells);

/// +e_k and -e_k cells for the first n modes.
std::vector<ExitPlaceCell> axis_cells(int n_modes, int n_axes);

}  // namespace fwspde
