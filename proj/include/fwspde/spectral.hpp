#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace fwspde {

enum class BasisKind { DirichletInterval, FourierTorus2dDivFree };

/// Integer wavevector of a torus mode.
struct Wavevector {
  int kx = 0;
  int ky = 0;
  double norm2() const { return double(kx) * kx + double(ky) * ky; }
};

/// Equispaced collocation grid together with the synthesis/analysis tables
/// of one basis. Interval: N points jL/N. Torus: M x M points (2 pi a/M, 2 pi b/M),
/// flattened row-major; vector fields are stored as two stacked components.
struct Collocation {
  int n_points = 0;          ///< total scalar points (N, or M*M)
  int side = 0;              ///< M for the torus, N for the interval
  double weight = 0.0;       ///< quadrature weight per point
  Eigen::MatrixXd values;    ///< interval: N x n; torus: 2MM x n (component blocks)
  Eigen::MatrixXd grad[2][2];  ///< torus only: grad[i][j] is d_i u_j, MM x n
  Eigen::MatrixXd cos_table;   ///< torus only: MM x n_wave, normalized cos(k.x)
  Eigen::MatrixXd sin_table;   ///< torus only: MM x n_wave, normalized sin(k.x)
};

/// Fixed analytic eigenbasis of the linear operator A (A e_k = -gamma_k e_k).
///
/// dirichlet_interval: e_k = sqrt(2/L) sin(k pi x / L), gamma_k = (k pi / L)^2.
/// fourier_torus_2d_divfree on [0, 2pi)^2: each wavevector pair {k, -k} with
/// 0 < |k|_inf <= K contributes a cos and a sin mode along k_perp / |k|;
/// real coefficients of the pair are equivalent to one conjugate-symmetric
/// complex amplitude. gamma = |k|^2, mean mode excluded.
class SpectralBasis {
public:
  static std::shared_ptr<const SpectralBasis> dirichlet_interval(int n_modes, double length,
                                                                 int n_points = 0);
  /// K = max wavenumber; n_modes = ((2K+1)^2 - 1).
  static std::shared_ptr<const SpectralBasis> fourier_torus(int max_wavenumber, int grid_side = 0);

  BasisKind kind() const { return kind_; }
  int n_modes() const { return static_cast<int>(eigenvalues_.size()); }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  double domain_length() const { return length_; }
  int max_wavenumber() const { return max_k_; }

  /// Torus: wavevector of each real mode, whether it is the sin partner,
  /// and the unit direction k_perp/|k|.
  const std::vector<Wavevector>& mode_wavevectors() const { return mode_k_; }
  const std::vector<bool>& mode_is_sin() const { return mode_sin_; }
  /// Distinct half-plane wavevectors (index into cos/sin tables).
  const std::vector<Wavevector>& wavevectors() const { return waves_; }
  const std::vector<int>& mode_wave_index() const { return mode_wave_; }
  Eigen::Vector2d mode_direction(int m) const;

  /// Default dealiased grid (>= 4 n interval, >= (4K)^2 torus).
  const Collocation& grid() const { return *grid_; }
  /// Grid of a requested size (cached). Throws RangeError if under-resolved.
  const Collocation& grid(int n_points) const;
  int min_grid_points() const;

  /// sup_k |e_k|_inf
  double max_basis_sup() const;

  bool same_as(const SpectralBasis& other) const;

private:
  SpectralBasis() = default;
  std::unique_ptr<Collocation> build_grid(int n_points) const;

  BasisKind kind_ = BasisKind::DirichletInterval;
  Eigen::VectorXd eigenvalues_;
  double length_ = 1.0;
  int max_k_ = 0;
  std::vector<Wavevector> mode_k_;
  std::vector<bool> mode_sin_;
  std::vector<Wavevector> waves_;
  std::vector<int> mode_wave_;
  std::unique_ptr<Collocation> grid_;
  mutable std::mutex grid_mutex_;
  mutable std::map<int, std::unique_ptr<Collocation>> extra_grids_;
};

using BasisPtr = std::shared_ptr<const SpectralBasis>;

/// Coefficients of a function in a fixed eigenbasis.
struct SpectralField {
  BasisPtr basis;
  Eigen::VectorXd coeffs;

  SpectralField() = default;
  SpectralField(BasisPtr b, Eigen::VectorXd c);
  static SpectralField zero(BasisPtr b);
  static SpectralField unit(BasisPtr b, int mode, double value = 1.0);

  int size() const { return static_cast<int>(coeffs.size()); }
};

struct NormReport {
  double l2 = 0.0;
  double sup = 0.0;
  double l4 = 0.0;
  std::map<double, double> h_delta;
};

/// Multiplies coefficient k by exp(-gamma_k t). Throws RangeError for t < 0.
SpectralField semigroup_apply(const SpectralField& field, double t);
Eigen::VectorXd semigroup_factors(const SpectralBasis& basis, double t);

/// Pointwise values on an equispaced grid. Interval: N values.
/// Torus: 2*M*M values, first M*M are the x-component.
Eigen::VectorXd eval_on_grid(const SpectralField& field, int n_points);
Eigen::VectorXd eval_on_grid(const SpectralField& field);
/// Galerkin projection of grid values back onto the basis (inverse of eval_on_grid
/// for fields in the span; for torus data this is the Leray-projected analysis).
Eigen::VectorXd project_from_grid(const SpectralBasis& basis, const Collocation& grid,
                                  const Eigen::VectorXd& values);

NormReport norms(const SpectralField& field, int n_points, const std::vector<double>& deltas = {});
NormReport norms(const SpectralField& field, const std::vector<double>& deltas = {});

double l2_norm(const Eigen::VectorXd& coeffs);
/// |x|_{H^delta} by weighted Parseval; delta restricted to [-2, 2].
double h_delta_norm(const SpectralField& field, double delta);
/// Norm of the state space E: sup-norm on the default grid (interval),
/// L^2 (torus, where E = H).
double state_norm(const SpectralField& field);
double state_norm(const SpectralBasis& basis, const Eigen::VectorXd& coeffs);

void require_same_basis(const SpectralField& a, const SpectralField& b);

}  // namespace fwspde
