#include "fwspde/spectral.hpp"

#include "fwspde/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace fwspde {

namespace {

constexpr double kPi = std::numbers::pi;

// Normalization of cos(k.x), sin(k.x) on [0, 2pi)^2 so that the squared L^2 norm is one.
const double kTorusNorm = 1.0 / (kPi * std::numbers::sqrt2);

}  // namespace

std::shared_ptr<const SpectralBasis> SpectralBasis::dirichlet_interval(int n_modes, double length,
                                                                       int n_points) {
  if (n_modes <= 0) throw range_error("basis.n_modes", "must be positive");
  if (!(length > 0.0)) throw range_error("basis.domain_length", "must be positive");
  std::shared_ptr<SpectralBasis> b(new SpectralBasis());
  b->kind_ = BasisKind::DirichletInterval;
  b->length_ = length;
  b->eigenvalues_.resize(n_modes);
  for (int k = 1; k <= n_modes; ++k) {
    const double w = k * kPi / length;
    b->eigenvalues_[k - 1] = w * w;
  }
  const int n = n_points > 0 ? n_points : b->min_grid_points();
  if (n < b->min_grid_points())
    throw range_error("basis.n_points", "grid must have at least 4 x n_modes points");
  b->grid_ = b->build_grid(n);
  return b;
}

std::shared_ptr<const SpectralBasis> SpectralBasis::fourier_torus(int max_wavenumber,
                                                                  int grid_side) {
  if (max_wavenumber <= 0) throw range_error("basis.max_wavenumber", "must be positive");
  std::shared_ptr<SpectralBasis> b(new SpectralBasis());
  b->kind_ = BasisKind::FourierTorus2dDivFree;
  b->length_ = 2.0 * kPi;
  b->max_k_ = max_wavenumber;

  const int K = max_wavenumber;
  for (int kx = 0; kx <= K; ++kx)
    for (int ky = -K; ky <= K; ++ky)
      if (kx > 0 || ky > 0) b->waves_.push_back({kx, ky});
  std::stable_sort(b->waves_.begin(), b->waves_.end(), [](const Wavevector& a, const Wavevector& c) {
    if (a.norm2() != c.norm2()) return a.norm2() < c.norm2();
    if (a.kx != c.kx) return a.kx < c.kx;
    return a.ky < c.ky;
  });

  const int n = 2 * static_cast<int>(b->waves_.size());
  b->eigenvalues_.resize(n);
  for (int w = 0; w < static_cast<int>(b->waves_.size()); ++w) {
    for (int s = 0; s < 2; ++s) {
      const int m = 2 * w + s;
      b->mode_k_.push_back(b->waves_[w]);
      b->mode_sin_.push_back(s == 1);
      b->mode_wave_.push_back(w);
      b->eigenvalues_[m] = b->waves_[w].norm2();
    }
  }
  const int side = grid_side > 0 ? grid_side : 4 * K;
  if (side < 4 * K) throw range_error("basis.grid_side", "torus grid side must be at least 4K");
  b->grid_ = b->build_grid(side * side);
  return b;
}

int SpectralBasis::min_grid_points() const {
  if (kind_ == BasisKind::DirichletInterval) return 4 * n_modes();
  return 16 * max_k_ * max_k_;
}

double SpectralBasis::max_basis_sup() const {
  if (kind_ == BasisKind::DirichletInterval) return std::sqrt(2.0 / length_);
  return kTorusNorm;
}

Eigen::Vector2d SpectralBasis::mode_direction(int m) const {
  const Wavevector& k = mode_k_.at(m);
  const double nk = std::sqrt(k.norm2());
  return {-k.ky / nk, k.kx / nk};
}

bool SpectralBasis::same_as(const SpectralBasis& other) const {
  if (this == &other) return true;
  return kind_ == other.kind_ && n_modes() == other.n_modes() && length_ == other.length_ &&
         max_k_ == other.max_k_;
}

std::unique_ptr<Collocation> SpectralBasis::build_grid(int n_points) const {
  auto g = std::make_unique<Collocation>();
  const int n = n_modes();
  g->n_points = n_points;
  if (kind_ == BasisKind::DirichletInterval) {
    const int N = n_points;
    g->side = N;
    g->weight = length_ / N;
    g->values.resize(N, n);
    const double amp = std::sqrt(2.0 / length_);
    for (int j = 0; j < N; ++j) {
      const double x = j * length_ / N;
      for (int k = 0; k < n; ++k) g->values(j, k) = amp * std::sin((k + 1) * kPi * x / length_);
    }
    return g;
  }

  const int M = static_cast<int>(std::lround(std::sqrt(double(n_points))));
  if (M * M != n_points) throw range_error("n_points", "torus grid size must be a perfect square");
  const int MM = M * M;
  g->side = M;
  g->weight = (2.0 * kPi / M) * (2.0 * kPi / M);
  const int nw = static_cast<int>(waves_.size());
  g->cos_table.resize(MM, nw);
  g->sin_table.resize(MM, nw);
  for (int a = 0; a < M; ++a) {
    for (int c = 0; c < M; ++c) {
      const int p = a * M + c;
      const double x = 2.0 * kPi * a / M;
      const double y = 2.0 * kPi * c / M;
      for (int w = 0; w < nw; ++w) {
        const double phase = waves_[w].kx * x + waves_[w].ky * y;
        g->cos_table(p, w) = kTorusNorm * std::cos(phase);
        g->sin_table(p, w) = kTorusNorm * std::sin(phase);
      }
    }
  }
  g->values.resize(2 * MM, n);
  for (auto& row : g->grad)
    for (auto& mat : row) mat.resize(MM, n);
  for (int m = 0; m < n; ++m) {
    const int w = mode_wave_[m];
    const Eigen::Vector2d d = mode_direction(m);
    const double kv[2] = {double(mode_k_[m].kx), double(mode_k_[m].ky)};
    // phi = cos or sin; psi is the companion with d_i phi = k_i psi.
    const Eigen::VectorXd phi = mode_sin_[m] ? g->sin_table.col(w) : g->cos_table.col(w);
    const Eigen::VectorXd psi =
        mode_sin_[m] ? Eigen::VectorXd(g->cos_table.col(w)) : Eigen::VectorXd(-g->sin_table.col(w));
    g->values.col(m).head(MM) = d[0] * phi;
    g->values.col(m).tail(MM) = d[1] * phi;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) g->grad[i][j].col(m) = (kv[i] * d[j]) * psi;
  }
  return g;
}

const Collocation& SpectralBasis::grid(int n_points) const {
  if (n_points == grid_->n_points) return *grid_;
  if (n_points < min_grid_points())
    throw range_error("n_points", "grid under-resolved: need at least " +
                                      std::to_string(min_grid_points()) + " points");
  std::lock_guard<std::mutex> lock(grid_mutex_);
  auto it = extra_grids_.find(n_points);
  if (it == extra_grids_.end()) it = extra_grids_.emplace(n_points, build_grid(n_points)).first;
  return *it->second;
}

SpectralField::SpectralField(BasisPtr b, Eigen::VectorXd c) : basis(std::move(b)), coeffs(std::move(c)) {
  if (!basis) throw std::invalid_argument("SpectralField: null basis");
  if (coeffs.size() != basis->n_modes())
    throw range_error("coeffs", "coefficient count must equal n_modes");
}

SpectralField SpectralField::zero(BasisPtr b) {
  const int n = b->n_modes();
  return SpectralField(std::move(b), Eigen::VectorXd::Zero(n));
}

SpectralField SpectralField::unit(BasisPtr b, int mode, double value) {
  SpectralField f = zero(std::move(b));
  f.coeffs[mode] = value;
  return f;
}

void require_same_basis(const SpectralField& a, const SpectralField& b) {
  if (!a.basis || !b.basis || !a.basis->same_as(*b.basis))
    throw schema_error("basis", "fields live on different bases");
}

Eigen::VectorXd semigroup_factors(const SpectralBasis& basis, double t) {
  if (t < 0.0) throw range_error("t", "semigroup time must be nonnegative");
  return (-t * basis.eigenvalues().array()).exp().matrix();
}

SpectralField semigroup_apply(const SpectralField& field, double t) {
  return SpectralField(field.basis, field.coeffs.cwiseProduct(semigroup_factors(*field.basis, t)));
}

Eigen::VectorXd eval_on_grid(const SpectralField& field, int n_points) {
  return field.basis->grid(n_points).values * field.coeffs;
}

Eigen::VectorXd eval_on_grid(const SpectralField& field) {
  return field.basis->grid().values * field.coeffs;
}

Eigen::VectorXd project_from_grid(const SpectralBasis& basis, const Collocation& grid,
                                  const Eigen::VectorXd& values) {
  (void)basis;
  return grid.weight * (grid.values.transpose() * values);
}

double l2_norm(const Eigen::VectorXd& coeffs) { return coeffs.norm(); }

double h_delta_norm(const SpectralField& field, double delta) {
  if (delta < -2.0 || delta > 2.0) throw range_error("delta", "H^delta norms supported for delta in [-2, 2]");
  const Eigen::ArrayXd w = field.basis->eigenvalues().array().pow(delta);
  return std::sqrt((w * field.coeffs.array().square()).sum());
}

namespace {

// Pointwise magnitude of grid values: |u| for scalars, Euclidean for the torus vector field.
Eigen::ArrayXd pointwise_magnitude(const SpectralBasis& basis, const Collocation& grid,
                                   const Eigen::VectorXd& values) {
  if (basis.kind() == BasisKind::DirichletInterval) return values.array().abs();
  const int MM = grid.side * grid.side;
  return (values.head(MM).array().square() + values.tail(MM).array().square()).sqrt();
}

}  // namespace

NormReport norms(const SpectralField& field, int n_points, const std::vector<double>& deltas) {
  const Collocation& g = field.basis->grid(n_points);
  NormReport r;
  r.l2 = l2_norm(field.coeffs);
  const Eigen::ArrayXd mag = pointwise_magnitude(*field.basis, g, g.values * field.coeffs);
  r.sup = mag.size() ? mag.maxCoeff() : 0.0;
  r.l4 = std::pow(g.weight * mag.pow(4).sum(), 0.25);
  for (double d : deltas) r.h_delta[d] = h_delta_norm(field, d);
  return r;
}

NormReport norms(const SpectralField& field, const std::vector<double>& deltas) {
  return norms(field, field.basis->grid().n_points, deltas);
}

double state_norm(const SpectralBasis& basis, const Eigen::VectorXd& coeffs) {
  if (basis.kind() == BasisKind::FourierTorus2dDivFree) return coeffs.norm();
  return (basis.grid().values * coeffs).cwiseAbs().maxCoeff();
}

double state_norm(const SpectralField& field) { return state_norm(*field.basis, field.coeffs); }

}  // namespace fwspde
