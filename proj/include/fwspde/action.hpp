#pragma once

#include "fwspde/skeleton.hpp"

#include <optional>
#include <vector>

namespace fwspde {

enum class GradientMethod { Auto, Adjoint, FiniteDifference };

struct OptimizerOptions {
  int max_iterations = 400;       ///< L-BFGS iterations per penalty stage
  double grad_tol = 1e-7;         ///< on the L^2-scaled gradient, relative to 1 + |u|
  int memory = 12;
  int max_stages = 40;            ///< penalty doublings
  double action_ceiling = 1e6;    ///< above this with a stagnant gap: unreachable
  GradientMethod gradient = GradientMethod::Auto;
};

/// Terminal target: a single point y with tolerance ball, or a finite set of candidate
/// points (the minimum over candidates is reported).
struct Target {
  std::vector<SpectralField> points;
  double tol = 1e-3;  ///< delta_y

  static Target point(SpectralField y, double tol);
  /// Points center +/- radius e_k for every basis mode k < n_directions (0 = all).
  /// Each point is scaled so its distance to the center in `norm_is_sup ? E : L^2` is `radius`.
  static Target ball_boundary(const SpectralField& center, double radius, int n_directions = 0,
                              bool norm_is_sup = false);
};

struct ActionProblem {
  ModelSpec model;               ///< model.grid is the control/state grid
  SpectralField x0;
  Target target;
  double penalty_weight = 10.0;  ///< initial mu; doubled per stage
  OptimizerOptions optimizer;
  SolverOptions solver;
  /// Optional path tracking: adds (rho/2) sum_n dt |X_n - phi_n|^2, rho = track_weight * mu / penalty_weight.
  std::optional<Trajectory> track;
  double track_weight = 0.0;
  double track_tol = 0.0;        ///< required sup_n |X_n - phi_n|_{L^2} when tracking
  std::optional<ControlPath> warm_start;
};

struct ActionResult {
  double action = 0.0;
  ControlPath control;
  SpectralField terminal_state;
  double terminal_gap = 0.0;
  double path_gap = 0.0;         ///< tracking runs only
  bool converged = false;
  bool unreachable = false;      ///< degenerate-noise heuristic: I_x = infinity
  int iterations = 0;
  int stages = 0;
  double final_penalty = 0.0;
  double gradient_norm = 0.0;
  int target_index = 0;          ///< which candidate point attained the minimum
  Trajectory trajectory;
};

/// Penalized objective for a fixed penalty mu on target point `target_index`.
struct ObjectiveValue {
  double value = 0.0;
  Eigen::MatrixXd gradient;  ///< d value / d u, same shape as control values
  Trajectory trajectory;
};
ObjectiveValue penalized_objective(const ActionProblem& problem, const ControlPath& u, double mu,
                                   int target_index = 0, bool with_gradient = true,
                                   GradientMethod method = GradientMethod::Auto);

ActionResult minimize_action(const ActionProblem& problem);

struct QuasipotentialResult {
  double value = 0.0;
  double best_horizon = 0.0;
  std::vector<std::pair<double, double>> per_horizon;  ///< (T, minimal action)
  std::vector<ActionResult> results;                   ///< optimum per horizon
  bool monotone_flag = false;
  bool all_converged = true;
};

/// V(origin, target) ~ min over horizons T of the discrete minimal action; the
/// time step of `model.grid` is kept and each horizon warm-starts from the
/// previous optimum rescaled in time.
QuasipotentialResult quasipotential(const ModelSpec& model, const SpectralField& origin, const Target& target,
                                    const std::vector<double>& horizons, const OptimizerOptions& opt = {},
                                    double penalty_weight = 10.0);

enum class Membership { Member, NonMember, Unknown };

struct LevelSetDecision {
  Membership membership = Membership::Unknown;
  double action_upper_bound = 0.0;  ///< action of a control whose path lies within the slack
  double path_gap = 0.0;
  double slack = 0.0;
};

/// Decides phi in Phi_x(s) for each candidate by path-tracking action minimization.
std::vector<LevelSetDecision> level_set_probe(const ModelSpec& model, const SpectralField& x0, double s,
                                              const std::vector<Trajectory>& candidates,
                                              double slack = 0.02, double path_tol = 1e-2,
                                              const OptimizerOptions& opt = {});

}  // namespace fwspde
