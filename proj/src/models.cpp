#include "fwspde/models.hpp"

#include "fwspde/error.hpp"

#include <algorithm>
#include <cmath>

namespace fwspde {

// ---------------------------------------------------------------------------
// specs

void DriftSpec::validate(const SpectralBasis& basis) const {
  switch (kind) {
  case DriftKind::None: return;
  case DriftKind::ReactionPolynomial: {
    if (basis.kind() != BasisKind::DirichletInterval)
      throw schema_error("model.drift.kind", "reaction_polynomial requires the dirichlet_interval basis");
    if (poly_coeffs.size() < 2 || poly_coeffs.size() > 6)
      throw range_error("model.drift.poly_coeffs", "degree must be between 1 and 5");
    const int degree = static_cast<int>(poly_coeffs.size()) - 1;
    if (degree % 2 == 0) throw range_error("model.drift.poly_coeffs", "leading degree must be odd");
    if (!(poly_coeffs.back() < 0.0))
      throw range_error("model.drift.poly_coeffs", "leading coefficient must be negative");
    for (double a : poly_coeffs)
      if (!std::isfinite(a)) throw range_error("model.drift.poly_coeffs", "coefficients must be finite");
    return;
  }
  case DriftKind::NavierStokes:
    if (basis.kind() != BasisKind::FourierTorus2dDivFree)
      throw schema_error("model.drift.kind", "navier_stokes requires the fourier_torus_2d_divfree basis");
    return;
  }
}

double DriftSpec::b(double s) const {
  double acc = 0.0;
  for (auto it = poly_coeffs.rbegin(); it != poly_coeffs.rend(); ++it) acc = acc * s + *it;
  return acc;
}

double DriftSpec::db(double s) const {
  double acc = 0.0;
  for (int i = static_cast<int>(poly_coeffs.size()) - 1; i >= 1; --i) acc = acc * s + i * poly_coeffs[i];
  return acc;
}

std::pair<double, double> DriftSpec::dissipativity_constants() const {
  if (kind != DriftKind::ReactionPolynomial) return {0.0, 0.0};
  const double a1 = poly_coeffs.size() > 1 ? poly_coeffs[1] : 0.0;
  const double c1 = std::max(a1, 0.0) + 1.0;
  // s b(s) - c1 s^2 -> -inf; its max lies within the Cauchy bound of the leading term.
  double span = 1.0;
  for (double a : poly_coeffs) span += std::abs(a) / std::abs(poly_coeffs.back());
  double best = 0.0;
  const int samples = 200000;
  for (int i = 0; i <= samples; ++i) {
    const double s = -span + 2.0 * span * i / samples;
    best = std::max(best, s * b(s) - c1 * s * s);
  }
  return {c1, best * (1.0 + 1e-6) + 1e-9};
}

double DriftSpec::local_lipschitz(double r) const {
  double acc = 0.0;
  for (int i = 1; i < static_cast<int>(poly_coeffs.size()); ++i)
    acc += i * std::abs(poly_coeffs[i]) * std::pow(r, i - 1);
  return acc;
}

double NoiseSpec::g_of_sq(double s2) const {
  const double c = g_params.empty() ? 1.0 : g_params[0];
  if (g_kind == GKind::Constant) return c;
  return c / (1.0 + s2);
}

double NoiseSpec::g_sup() const { return std::abs(g_params.empty() ? 1.0 : g_params[0]); }

double NoiseSpec::g_lipschitz() const {
  if (g_kind == GKind::Constant) return 0.0;
  // max |d/ds c/(1+s^2)| is attained at s = 1/sqrt(3)
  return g_sup() * 3.0 * std::sqrt(3.0) / 8.0;
}

double NoiseSpec::trace_q2() const {
  double acc = 0.0;
  for (double l : q_eigenvalues) acc += l * l;
  return acc;
}

NoiseSpec NoiseSpec::power_law(int n, double lambda1, double decay, GKind kind,
                               std::vector<double> params) {
  NoiseSpec s;
  s.decay = decay;
  s.g_kind = kind;
  s.g_params = std::move(params);
  for (int j = 1; j <= n; ++j) s.q_eigenvalues.push_back(lambda1 * std::pow(double(j), -decay));
  return s;
}

void NoiseSpec::validate(const SpectralBasis& basis) const {
  if (q_eigenvalues.empty()) throw range_error("model.noise.q_eigenvalues", "need at least one noise mode");
  if (n_noise_modes() > basis.n_modes())
    throw range_error("model.noise.q_eigenvalues", "more noise modes than state modes");
  const double l1 = q_eigenvalues.front();
  for (int j = 0; j < n_noise_modes(); ++j) {
    const double l = q_eigenvalues[j];
    if (!(l >= 0.0) || !std::isfinite(l))
      throw range_error("model.noise.q_eigenvalues", "eigenvalues must be finite and nonnegative");
    if (j > 0 && l > q_eigenvalues[j - 1])
      throw range_error("model.noise.q_eigenvalues", "eigenvalues must be nonincreasing");
    if (l > l1 * std::pow(double(j + 1), -decay) * (1.0 + 1e-12) + 1e-300)
      throw range_error("model.noise.q_eigenvalues", "eigenvalues exceed lambda_1 j^-decay");
  }
  if (g_params.empty() || !std::isfinite(g_params[0]))
    throw range_error("model.noise.g_params", "g needs one finite parameter c");
  if (g_kind == GKind::BoundedRational && !(g_params[0] > 0.0))
    throw range_error("model.noise.g_params", "bounded_rational needs c > 0");
}

TimeGrid::TimeGrid(double t_end_, int n_steps_) : t_end(t_end_), n_steps(n_steps_) {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw range_error("grid.t_end", "must be positive");
  if (n_steps <= 0) throw range_error("grid.n_steps", "must be positive");
}

void ModelSpec::validate() const {
  if (!basis) throw schema_error("model.basis", "missing basis");
  drift.validate(*basis);
  noise.validate(*basis);
  if (!(grid.t_end > 0.0) || grid.n_steps <= 0) throw range_error("model.grid", "invalid time grid");
}

// ---------------------------------------------------------------------------
// Navier-Stokes pieces

RawVectorField RawVectorField::zero(BasisPtr b) {
  RawVectorField r;
  const std::size_t nw = b->wavevectors().size();
  r.basis = std::move(b);
  r.cos_part.assign(nw, Eigen::Vector2d::Zero());
  r.sin_part.assign(nw, Eigen::Vector2d::Zero());
  return r;
}

RawVectorField raw_project(const BasisPtr& basis, const Eigen::VectorXd& grid_values) {
  const Collocation& g = basis->grid();
  const int MM = g.side * g.side;
  if (grid_values.size() != 2 * MM) throw range_error("grid_values", "expected 2 M^2 values");
  const Eigen::VectorXd cx = g.weight * (g.cos_table.transpose() * grid_values.head(MM));
  const Eigen::VectorXd cy = g.weight * (g.cos_table.transpose() * grid_values.tail(MM));
  const Eigen::VectorXd sx = g.weight * (g.sin_table.transpose() * grid_values.head(MM));
  const Eigen::VectorXd sy = g.weight * (g.sin_table.transpose() * grid_values.tail(MM));
  RawVectorField r = RawVectorField::zero(basis);
  for (std::size_t w = 0; w < r.cos_part.size(); ++w) {
    r.cos_part[w] = {cx[w], cy[w]};
    r.sin_part[w] = {sx[w], sy[w]};
  }
  return r;
}

RawVectorField to_raw(const SpectralField& field) {
  if (field.basis->kind() != BasisKind::FourierTorus2dDivFree)
    throw schema_error("basis", "raw vector fields exist only on the torus basis");
  RawVectorField r = RawVectorField::zero(field.basis);
  const auto& wi = field.basis->mode_wave_index();
  for (int m = 0; m < field.size(); ++m) {
    const Eigen::Vector2d v = field.coeffs[m] * field.basis->mode_direction(m);
    if (field.basis->mode_is_sin()[m]) r.sin_part[wi[m]] += v;
    else r.cos_part[wi[m]] += v;
  }
  return r;
}

namespace {

Eigen::Vector2d project_off(const Wavevector& k, const Eigen::Vector2d& v) {
  const Eigen::Vector2d kv(k.kx, k.ky);
  return v - kv * (kv.dot(v) / k.norm2());
}

}  // namespace

RawVectorField leray_project_raw(const RawVectorField& raw) {
  RawVectorField r = raw;
  const auto& waves = raw.basis->wavevectors();
  for (std::size_t w = 0; w < waves.size(); ++w) {
    r.cos_part[w] = project_off(waves[w], raw.cos_part[w]);
    r.sin_part[w] = project_off(waves[w], raw.sin_part[w]);
  }
  return r;
}

SpectralField leray_project(const RawVectorField& raw) {
  const BasisPtr& b = raw.basis;
  if (b->kind() != BasisKind::FourierTorus2dDivFree)
    throw schema_error("basis", "Leray projection requires the torus basis");
  Eigen::VectorXd c(b->n_modes());
  const auto& wi = b->mode_wave_index();
  const auto& waves = b->wavevectors();
  for (int m = 0; m < b->n_modes(); ++m) {
    const Eigen::Vector2d& v = b->mode_is_sin()[m] ? raw.sin_part[wi[m]] : raw.cos_part[wi[m]];
    c[m] = b->mode_direction(m).dot(project_off(waves[wi[m]], v));
  }
  return SpectralField(b, std::move(c));
}

namespace {

void require_torus(const SpectralField& f) {
  if (f.basis->kind() != BasisKind::FourierTorus2dDivFree)
    throw schema_error("basis", "operation requires the fourier_torus_2d_divfree basis");
}

// (u.grad) v on the grid, stacked components.
Eigen::VectorXd advection_on_grid(const Collocation& g, const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& v) {
  const int MM = g.side * g.side;
  const Eigen::VectorXd U = g.values * u;
  Eigen::VectorXd out(2 * MM);
  for (int j = 0; j < 2; ++j) {
    const Eigen::VectorXd d0 = g.grad[0][j] * v;
    const Eigen::VectorXd d1 = g.grad[1][j] * v;
    out.segment(j * MM, MM) = U.head(MM).cwiseProduct(d0) + U.tail(MM).cwiseProduct(d1);
  }
  return out;
}

}  // namespace

double ns_trilinear(const SpectralField& u, const SpectralField& v, const SpectralField& w) {
  require_torus(u);
  require_same_basis(u, v);
  require_same_basis(u, w);
  const Collocation& g = u.basis->grid();
  const Eigen::VectorXd adv = advection_on_grid(g, u.coeffs, v.coeffs);
  const Eigen::VectorXd W = g.values * w.coeffs;
  return g.weight * adv.dot(W);
}

// ---------------------------------------------------------------------------
// drift and diffusion

Eigen::VectorXd drift_coeffs(const ModelSpec& model, const Eigen::VectorXd& x) {
  const SpectralBasis& basis = *model.basis;
  switch (model.drift.kind) {
  case DriftKind::None: return Eigen::VectorXd::Zero(x.size());
  case DriftKind::ReactionPolynomial: {
    const Collocation& g = basis.grid();
    Eigen::VectorXd vals = g.values * x;
    for (Eigen::Index i = 0; i < vals.size(); ++i) vals[i] = model.drift.b(vals[i]);
    return project_from_grid(basis, g, vals);
  }
  case DriftKind::NavierStokes: {
    const Collocation& g = basis.grid();
    const RawVectorField raw = raw_project(model.basis, advection_on_grid(g, x, x));
    return -leray_project(raw).coeffs;
  }
  }
  return Eigen::VectorXd::Zero(x.size());
}

SpectralField drift_apply(const ModelSpec& model, const SpectralField& x) {
  if (!x.basis->same_as(*model.basis)) throw schema_error("basis", "drift/field basis mismatch");
  model.drift.validate(*x.basis);
  return SpectralField(x.basis, drift_coeffs(model, x.coeffs));
}

Eigen::VectorXd drift_jacobian_apply(const ModelSpec& model, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& v) {
  if (model.drift.kind == DriftKind::None) return Eigen::VectorXd::Zero(x.size());
  if (model.drift.kind != DriftKind::ReactionPolynomial)
    throw schema_error("model.drift.kind", "Jacobian available for reaction drift only");
  const Collocation& g = model.basis->grid();
  const Eigen::VectorXd X = g.values * x;
  Eigen::VectorXd V = g.values * v;
  for (Eigen::Index i = 0; i < V.size(); ++i) V[i] *= model.drift.db(X[i]);
  return project_from_grid(*model.basis, g, V);
}

namespace {

Eigen::VectorXd q_scaled(const ModelSpec& model, const Eigen::VectorXd& h) {
  if (h.size() != model.n_noise()) throw range_error("h", "noise coefficient count mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(model.n_modes());
  for (int j = 0; j < model.n_noise(); ++j) out[j] = model.noise.q_eigenvalues[j] * h[j];
  return out;
}

// g(x(xi)) at each grid point.
Eigen::VectorXd g_on_grid(const ModelSpec& model, const Collocation& g, const Eigen::VectorXd& x) {
  const Eigen::VectorXd X = g.values * x;
  if (model.basis->kind() == BasisKind::DirichletInterval) {
    Eigen::VectorXd out(X.size());
    for (Eigen::Index i = 0; i < X.size(); ++i) out[i] = model.noise.g_of_sq(X[i] * X[i]);
    return out;
  }
  const int MM = g.side * g.side;
  Eigen::VectorXd out(MM);
  for (int p = 0; p < MM; ++p) out[p] = model.noise.g_of_sq(X[p] * X[p] + X[MM + p] * X[MM + p]);
  return out;
}

Eigen::VectorXd multiply_pointwise(const SpectralBasis& basis, const Collocation& g,
                                   const Eigen::VectorXd& scalar, const Eigen::VectorXd& values) {
  if (basis.kind() == BasisKind::DirichletInterval) return scalar.cwiseProduct(values);
  const int MM = g.side * g.side;
  Eigen::VectorXd out(2 * MM);
  out.head(MM) = scalar.cwiseProduct(values.head(MM));
  out.tail(MM) = scalar.cwiseProduct(values.tail(MM));
  return out;
}

}  // namespace

Eigen::VectorXd diffusion_coeffs(const ModelSpec& model, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& h) {
  const Eigen::VectorXd qh = q_scaled(model, h);
  if (model.noise.is_constant()) return model.noise.g_of_sq(0.0) * qh;
  const Collocation& g = model.basis->grid();
  const Eigen::VectorXd vals =
      multiply_pointwise(*model.basis, g, g_on_grid(model, g, x), g.values * qh);
  if (model.basis->kind() == BasisKind::FourierTorus2dDivFree)
    return leray_project(raw_project(model.basis, vals)).coeffs;
  return project_from_grid(*model.basis, g, vals);
}

SpectralField diffusion_apply(const ModelSpec& model, const SpectralField& x, const Eigen::VectorXd& h) {
  if (!x.basis->same_as(*model.basis)) throw schema_error("basis", "noise/field basis mismatch");
  return SpectralField(x.basis, diffusion_coeffs(model, x.coeffs, h));
}

Eigen::VectorXd diffusion_transpose_apply(const ModelSpec& model, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& p) {
  Eigen::VectorXd y;
  if (model.noise.is_constant()) {
    y = model.noise.g_of_sq(0.0) * p;
  } else {
    // G = w E^T diag(g) E Lambda, so G^T p = Lambda E^T diag(g) w E p (Leray is
    // the identity on divergence-free basis functions).
    const Collocation& g = model.basis->grid();
    const Eigen::VectorXd vals =
        multiply_pointwise(*model.basis, g, g_on_grid(model, g, x), g.values * p);
    y = g.weight * (g.values.transpose() * vals);
  }
  Eigen::VectorXd out(model.n_noise());
  for (int j = 0; j < model.n_noise(); ++j) out[j] = model.noise.q_eigenvalues[j] * y[j];
  return out;
}

Eigen::VectorXd diffusion_state_jacobian_apply(const ModelSpec& model, const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& h, const Eigen::VectorXd& v) {
  if (model.noise.is_constant()) return Eigen::VectorXd::Zero(x.size());
  if (model.basis->kind() != BasisKind::DirichletInterval)
    throw schema_error("basis", "diffusion Jacobian implemented for the interval basis");
  const Collocation& g = model.basis->grid();
  const Eigen::VectorXd X = g.values * x;
  const Eigen::VectorXd Q = g.values * q_scaled(model, h);
  Eigen::VectorXd V = g.values * v;
  const double c = model.noise.g_params[0];
  for (Eigen::Index i = 0; i < V.size(); ++i) {
    const double s = X[i];
    const double dg = -2.0 * c * s / ((1.0 + s * s) * (1.0 + s * s));
    V[i] *= dg * Q[i];
  }
  return project_from_grid(*model.basis, g, V);
}

bool supports_adjoint(const ModelSpec& model) {
  return model.basis->kind() == BasisKind::DirichletInterval &&
         model.drift.kind != DriftKind::NavierStokes;
}

}  // namespace fwspde
