#pragma once

#include "fwspde/models.hpp"

namespace fwspde {

/// Time-gridded control u(t) in noise-mode coefficients, one column per node.
struct ControlPath {
  TimeGrid grid;
  Eigen::MatrixXd values;  ///< n_noise x n_nodes
  double energy = 0.0;     ///< 1/2 int |u|^2 dt, trapezoid rule

  ControlPath() = default;
  ControlPath(TimeGrid g, Eigen::MatrixXd v);
  static ControlPath zero(const TimeGrid& g, int n_noise);
  static ControlPath constant(const TimeGrid& g, const Eigen::VectorXd& value);

  int n_noise() const { return static_cast<int>(values.rows()); }
  /// Linear interpolation onto another grid over the same horizon.
  ControlPath resampled(const TimeGrid& target) const;
  /// Time-rescaled copy on `target` (u(s T_old / T_new)), used for warm starts.
  ControlPath rescaled(const TimeGrid& target) const;
};

/// Trapezoid weights of a grid (dt/2 at the ends).
Eigen::VectorXd trapezoid_weights(const TimeGrid& g);

/// 1/2 int |u|^2 by the trapezoid rule.
double action_of_control(const ControlPath& u);

struct Trajectory {
  BasisPtr basis;
  TimeGrid grid;
  Eigen::MatrixXd states;  ///< n_modes x n_nodes

  Trajectory() = default;
  Trajectory(BasisPtr b, TimeGrid g, Eigen::MatrixXd s);

  SpectralField state(int node) const { return SpectralField(basis, states.col(node)); }
  SpectralField terminal() const { return state(grid.n_steps); }
  double sup_l2() const;
  double sup_state_norm() const;
  /// sup over nodes of |this - other|_E.
  double sup_distance(const Trajectory& other) const;
};

struct SolverOptions {
  double cutoff_radius = 0.0;    ///< R; 0 selects 4 (|x0| + linear response + 1)
  double picard_tol = 1e-10;
  int max_picard_iters = 200;
  double subinterval_len = 0.0;  ///< 0 selects a length with contraction factor <= 1/2
};

/// T_R: radial retraction onto the E-ball of radius R.
SpectralField cutoff(const SpectralField& x, double R);
Eigen::VectorXd cutoff(const SpectralBasis& basis, const Eigen::VectorXd& x, double R);

/// M(psi) = psi + v with v = int S(t-s) B(v + psi) ds, by subinterval Picard iteration.
Trajectory apply_M(const Trajectory& psi, const ModelSpec& model, const SolverOptions& opts = {});

/// Controlled skeleton X^{0,u}_x = M(S(.)x + Y), Y = L(X) u, solved jointly by Picard
/// iteration with the cutoff T_R on Y. Controls on another grid are interpolated.
Trajectory solve_skeleton(const ModelSpec& model, const SpectralField& x0, const ControlPath& u,
                          const SolverOptions& opts = {});

/// Noise increments recorded by the simulator: column n is the already-weighted
/// stochastic convolution contribution added at step n -> n+1.
using NoiseRecord = Eigen::MatrixXd;

/// sup over nodes of the L^2 defect of the discrete mild identity, evaluated by
/// direct summation (independent of the stepping recursion).
double mild_residual(const Trajectory& traj, const ModelSpec& model, const ControlPath* u = nullptr,
                     const NoiseRecord* noise = nullptr, double sqrt_eps = 0.0);

}  // namespace fwspde
