#pragma once

#include "fwspde/spectral.hpp"

#include <string>
#include <vector>

namespace fwspde {

enum class DriftKind { None, ReactionPolynomial, NavierStokes };

/// Drift B. Reaction case: Nemytskii operator of b(s) = sum_i a_i s^i.
struct DriftSpec {
  DriftKind kind = DriftKind::None;
  std::vector<double> poly_coeffs;  ///< a_0, a_1, ..., a_d

  static DriftSpec none() { return {}; }
  static DriftSpec reaction(std::vector<double> coeffs) {
    return {DriftKind::ReactionPolynomial, std::move(coeffs)};
  }
  static DriftSpec navier_stokes() { return {DriftKind::NavierStokes, {}}; }

  /// Leading coefficient negative, odd degree <= 5 (reaction); torus basis (NS).
  void validate(const SpectralBasis& basis) const;

  double b(double s) const;
  double db(double s) const;
  /// Constants (c1, c2) with s b(s) <= c1 s^2 + c2 pointwise.
  std::pair<double, double> dissipativity_constants() const;
  /// Lipschitz constant of b on [-r, r].
  double local_lipschitz(double r) const;
};

enum class GKind { Constant, BoundedRational };

/// Noise covariance Q (diagonal in the state basis, f_j = e_j) and the
/// multiplier g: constant c, or c / (1 + |s|^2).
struct NoiseSpec {
  std::vector<double> q_eigenvalues;  ///< lambda_j, one per retained noise mode
  double decay = 0.0;                 ///< recorded exponent: lambda_j <= lambda_1 j^-decay
  GKind g_kind = GKind::Constant;
  std::vector<double> g_params{1.0};

  int n_noise_modes() const { return static_cast<int>(q_eigenvalues.size()); }
  void validate(const SpectralBasis& basis) const;

  /// g evaluated at squared magnitude s2 = |s|^2.
  double g_of_sq(double s2) const;
  double g_sup() const;
  double g_lipschitz() const;
  bool is_constant() const { return g_kind == GKind::Constant; }
  double trace_q2() const;

  /// lambda_j = lambda_1 j^-decay for j = 1..n.
  static NoiseSpec power_law(int n, double lambda1, double decay, GKind kind = GKind::Constant,
                             std::vector<double> params = {1.0});
};

/// Uniform grid 0 = t_0 < ... < t_n = t_end.
struct TimeGrid {
  double t_end = 1.0;
  int n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double t_end, int n_steps);
  double dt() const { return t_end / n_steps; }
  double node(int i) const { return i == n_steps ? t_end : i * dt(); }
  int n_nodes() const { return n_steps + 1; }
};

/// Complete problem description.
struct ModelSpec {
  BasisPtr basis;
  DriftSpec drift;
  NoiseSpec noise;
  TimeGrid grid{1.0, 100};

  void validate() const;
  int n_modes() const { return basis->n_modes(); }
  int n_noise() const { return noise.n_noise_modes(); }
};

/// Per-wavevector unconstrained 2-vector coefficients of a torus vector field
/// (cos and sin parts on the half-plane wavevector list of the basis).
struct RawVectorField {
  BasisPtr basis;
  std::vector<Eigen::Vector2d> cos_part;
  std::vector<Eigen::Vector2d> sin_part;

  static RawVectorField zero(BasisPtr b);
};

/// Analysis of arbitrary grid vector-field values onto the full Fourier basis.
RawVectorField raw_project(const BasisPtr& basis, const Eigen::VectorXd& grid_values);
/// Embeds a divergence-free field into raw form.
RawVectorField to_raw(const SpectralField& field);
/// (I - k k^T / |k|^2) per wavevector, expressed in the divergence-free basis.
SpectralField leray_project(const RawVectorField& raw);
/// Same projection kept in raw form.
RawVectorField leray_project_raw(const RawVectorField& raw);

/// b(u, v, w) = sum_ij int u_i d_i v_j w_j by dealiased quadrature.
double ns_trilinear(const SpectralField& u, const SpectralField& v, const SpectralField& w);

/// Drift B(x): reaction Nemytskii operator, or -P (u.grad) u for Navier-Stokes.
SpectralField drift_apply(const ModelSpec& model, const SpectralField& x);
Eigen::VectorXd drift_coeffs(const ModelSpec& model, const Eigen::VectorXd& x);
/// DB(x) v (reaction/none only).
Eigen::VectorXd drift_jacobian_apply(const ModelSpec& model, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& v);

/// G(x) h = P[g(x) Q h] with h given in noise-mode coefficients.
SpectralField diffusion_apply(const ModelSpec& model, const SpectralField& x, const Eigen::VectorXd& h);
Eigen::VectorXd diffusion_coeffs(const ModelSpec& model, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& h);
/// G(x)^T p in noise-mode coefficients.
Eigen::VectorXd diffusion_transpose_apply(const ModelSpec& model, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& p);
/// d/dx [G(x) h] applied to v (interval basis only).
Eigen::VectorXd diffusion_state_jacobian_apply(const ModelSpec& model, const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& h, const Eigen::VectorXd& v);

/// True when the adjoint gradient path is available (drift none/reaction on the interval).
bool supports_adjoint(const ModelSpec& model);

}  // namespace fwspde
