#pragma once

#include "fwspde/simulator.hpp"

#include <limits>
#include <string>
#include <vector>

namespace fwspde {

/// Wilson score interval at 95 %.
std::pair<double, double> wilson_interval(std::int64_t hits, std::int64_t n, double z = 1.959963984540054);

/// Tube event around a controlled reference path phi = X^{0,u}_{x0}.
struct TubeExperiment {
  ModelSpec model;                ///< model.grid is the simulation grid
  SpectralField x0;
  ControlPath control;            ///< generating control of phi
  Trajectory reference;           ///< phi
  double reference_action = 0.0;  ///< I_x(phi) = action_of_control(control)
  bool reference_converged = true;
  double delta = 0.1;             ///< tube radius in the sup-over-nodes E-norm
  std::vector<double> eps_list;   ///< strictly decreasing
  std::int64_t n_paths = 1000;
  double tolerance_margin = 0.35;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

/// Builds phi and I_x(phi) from a generating control.
TubeExperiment make_tube_experiment(const ModelSpec& model, const SpectralField& x0, const ControlPath& control,
                                    double delta, std::vector<double> eps_list, std::int64_t n_paths);

struct ProbabilityEstimate {
  double eps = 0.0;
  std::int64_t n = 0;
  std::int64_t hits = 0;
  double p_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double eps_log_p = 0.0;  ///< -inf on zero hits
  double margin = 0.0;     ///< eps log p + I (lower) or eps log p + s0 (upper)
  bool zero_hits = false;
};

struct SlopeFit {
  double slope = 0.0;      ///< d log p / d (1/eps)
  double intercept = 0.0;
  double slope_ci_lo = -std::numeric_limits<double>::infinity();
  double slope_ci_hi = std::numeric_limits<double>::infinity();
  int n_points = 0;
};

struct LdpReport {
  std::string kind;                     ///< "lower" or "upper"
  std::vector<ProbabilityEstimate> rows;
  SlopeFit slope_fit;
  double rate = 0.0;                    ///< I_x(phi) or s0
  double lower_bound_margin = std::numeric_limits<double>::quiet_NaN();  ///< min over eps with hits
  double upper_bound_margin = std::numeric_limits<double>::quiet_NaN();  ///< max over eps with hits
  double decision_margin = std::numeric_limits<double>::quiet_NaN();     ///< value the PASS rule reads
  double tolerance_margin = 0.0;
  bool pass = false;
  bool vacuous = false;                 ///< no hits at any eps (upper check only)
  bool surrogate = false;               ///< level-set distance replaced by a tube surrogate
  std::string note;
};

/// Fraction of paths with sup_n |X_n - phi_n|_E < delta, with a Wilson interval.
ProbabilityEstimate estimate_tube_probability(const TubeExperiment& exp, double eps);

/// eps log p_hat + I per eps; PASS if the margin at the smallest eps with hits is >= -tolerance_margin.
/// Throws InsufficientSamples if no eps produced a hit, BudgetError when expected hits are below 20.
LdpReport ldp_lower_bound_check(const TubeExperiment& exp);

struct UpperBoundExperiment {
  ModelSpec model;
  SpectralField x0;
  double s0 = 0.0;
  double delta = 0.1;
  std::vector<double> eps_list;
  std::int64_t n_paths = 1000;
  double tolerance_margin = 0.15;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

/// Upper bound on dist(path, Phi_x(s)) in the sup-over-nodes E-norm.
/// Linear diagonal models: minimum over a Tikhonov family of controls with energy <= s.
/// Otherwise: distance to the uncontrolled flow (surrogate).
class LevelSetDistance {
public:
  LevelSetDistance(const ModelSpec& model, const SpectralField& x0, double s);
  double operator()(const Trajectory& path) const;
  bool exact_family() const { return exact_; }

private:
  const ModelSpec* model_;
  double s_;
  bool exact_;
  Eigen::MatrixXd flow_;                            ///< n_modes x n_nodes
  std::vector<double> mus_;
  std::vector<std::vector<Eigen::MatrixXd>> gain_;  ///< [mu][mode]: node residual -> control
  std::vector<Eigen::MatrixXd> response_;           ///< [mode]: control -> node response
  Eigen::VectorXd weights_;
};

/// Estimates P(dist(X^eps, Phi_x(s0)) >= delta); PASS if max_eps [eps log p + s0] <= tolerance_margin.
LdpReport ldp_upper_bound_check(const UpperBoundExperiment& exp);

struct SweepReport {
  std::vector<SpectralField> x0s;   ///< center first, then +/- R e_k
  std::vector<LdpReport> reports;
  int worst_index = 0;
  double worst_margin = 0.0;
  double centered_margin = 0.0;
  bool within_factor_two = false;   ///< worst margin within 2x of the centered margin
  bool pass = false;
  int failing_index = -1;
  std::string note;
};

/// Lower-bound check at the center of `tmpl` and at center +/- R e_k (L^2 unit modes)
/// for k < n_directions; phi and I are recomputed per x0 from the template control.
SweepReport uniform_sweep(const TubeExperiment& tmpl, double radius, int n_directions);

}  // namespace fwspde
