#include "qmeas/sewell.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qmeas {

namespace {

constexpr double kNullMacrostate = 1e-12;
constexpr double kTie = 1e-12;
constexpr double kReachable = 1e-8;

// Tr(a^dagger b) without forming the product.
Complex trace_adjoint_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a.conjugate().cwiseProduct(b).sum();
}

void require_system_dim(const CoupledModel& model, const HermitianOperator& a, const char* what) {
  if (a.dim() != model.n())
    throw LinalgError(std::string(what) + ": observable has dim " + std::to_string(a.dim()) +
                      ", system has " + std::to_string(model.n()));
}

void require_shape(const CoupledModel& model, const FTensor& f, const char* what) {
  if (f.n() != model.n() || f.nu() != model.apparatus().macrostate_count())
    throw LinalgError(std::string(what) + ": F tensor shape does not match the model");
}

}  // namespace

SystemModel::SystemModel(RealVector energies, ComplexVector amplitudes)
    : energies_(std::move(energies)), amplitudes_(std::move(amplitudes)) {
  if (energies_.size() < 2)
    throw LinalgError("SystemModel: need at least two levels");
  if (amplitudes_.size() != energies_.size())
    throw LinalgError("SystemModel: " + std::to_string(amplitudes_.size()) + " amplitudes for " +
                      std::to_string(energies_.size()) + " levels");
  if (!energies_.allFinite()) throw LinalgError("SystemModel: energies must be finite");
  const double norm2 = amplitudes_.squaredNorm();
  if (std::abs(norm2 - 1.0) > 1e-12)
    throw LinalgError("SystemModel: sum |c_r|^2 = " + std::to_string(norm2) + ", expected 1");
}

ApparatusModel::ApparatusModel(HermitianOperator free_hamiltonian, DensityMatrix initial_state,
                               std::vector<Projector> macrostates)
    : free_hamiltonian_(std::move(free_hamiltonian)),
      initial_state_(std::move(initial_state)),
      macrostates_(std::move(macrostates)) {
  const Index d = free_hamiltonian_.dim();
  if (initial_state_.dim() != d)
    throw LinalgError("ApparatusModel: initial state dim differs from K");
  if (macrostates_.empty()) throw LinalgError("ApparatusModel: no macrostates");
  ComplexMatrix total = ComplexMatrix::Zero(d, d);
  for (const Projector& p : macrostates_) {
    if (p.dim() != d) throw LinalgError("ApparatusModel: macrostate projector has wrong dim");
    if (p.rank() < 1) throw LinalgError("ApparatusModel: macrostate projector has rank 0");
    total += p.matrix();
  }
  // Projectors summing to the identity are automatically pairwise orthogonal.
  const double defect = (total - ComplexMatrix::Identity(d, d)).cwiseAbs().maxCoeff();
  if (defect > tol::kAlgebraic)
    throw LinalgError("ApparatusModel: macrostates do not resolve the identity (defect " +
                      std::to_string(defect) + ")");
}

CoupledModel build_coupled(SystemModel system, ApparatusModel apparatus,
                           std::vector<HermitianOperator> couplings) {
  const Index n = system.n();
  const Index d = apparatus.dim();
  if (static_cast<Index>(couplings.size()) != n)
    throw LinalgError("build_coupled: " + std::to_string(couplings.size()) + " couplings for " +
                      std::to_string(n) + " levels");
  std::vector<HermitianOperator> sectors;
  sectors.reserve(couplings.size());
  for (Index r = 0; r < n; ++r) {
    if (couplings[r].dim() != d)
      throw LinalgError("build_coupled: coupling " + std::to_string(r) + " has dim " +
                        std::to_string(couplings[r].dim()) + ", apparatus has " +
                        std::to_string(d));
    ComplexMatrix k = apparatus.free_hamiltonian().matrix() + couplings[r].matrix();
    k.diagonal().array() += system.energies()(r);
    sectors.emplace_back(std::move(k));
  }
  return CoupledModel(std::move(system), std::move(apparatus), std::move(couplings),
                      std::move(sectors));
}

ComplexMatrix coupled_hamiltonian(const CoupledModel& model) {
  const Index n = model.n();
  const Index d = model.apparatus().dim();
  ComplexMatrix h = ComplexMatrix::Zero(n * d, n * d);
  for (Index r = 0; r < n; ++r) h.block(r * d, r * d, d, d) = model.sector_hamiltonians()[r].matrix();
  return h;
}

ComplexMatrix coupled_hamiltonian_sum_form(const CoupledModel& model) {
  const Index n = model.n();
  const Index d = model.apparatus().dim();
  const ComplexMatrix eye_h = ComplexMatrix::Identity(n, n);
  const ComplexMatrix eye_k = ComplexMatrix::Identity(d, d);
  ComplexMatrix h = tensor_product(model.system().hamiltonian().matrix(), eye_k) +
                    tensor_product(eye_h, model.apparatus().free_hamiltonian().matrix());
  for (Index r = 0; r < n; ++r) {
    ComplexMatrix pr = ComplexMatrix::Zero(n, n);
    pr(r, r) = 1.0;
    h += tensor_product(pr, model.couplings()[r].matrix());
  }
  return h;
}

std::vector<UnitaryMatrix> sector_propagators(const CoupledModel& model, double t) {
  std::vector<UnitaryMatrix> out;
  out.reserve(model.sector_hamiltonians().size());
  for (const HermitianOperator& k : model.sector_hamiltonians()) out.push_back(evolve_unitary(k, t));
  return out;
}

FTensor::FTensor(double time, Index n, Index nu)
    : time_(time), n_(n), nu_(nu), values_(static_cast<std::size_t>(n * n * nu), Complex{0, 0}) {
  if (n < 1 || nu < 1) throw LinalgError("FTensor: n and nu must be positive");
}

ComplexMatrix FTensor::slice(Index alpha) const {
  ComplexMatrix m(n_, n_);
  for (Index r = 0; r < n_; ++r)
    for (Index s = 0; s < n_; ++s) m(r, s) = (*this)(r, s, alpha);
  return m;
}

FTensor f_coefficients(const CoupledModel& model, double t) {
  if (!std::isfinite(t)) throw LinalgError("f_coefficients: time must be finite");
  const Index n = model.n();
  const ApparatusModel& app = model.apparatus();
  const Index nu = app.macrostate_count();
  const ComplexMatrix& w = app.initial_state().factor();

  // F_rs;alpha = Tr(X_s^dagger Pi_alpha X_r) with X_r = U_r^dagger W, Omega = W W^dagger.
  std::vector<ComplexMatrix> x(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) {
    if (t == 0.0) {
      x[r] = w;
      continue;
    }
    const Eigensystem es = eigensystem(model.sector_hamiltonians()[r]);
    const ComplexVector back =
        es.values.unaryExpr([t](double lambda) { return std::polar(1.0, -lambda * t); });
    x[r] = es.vectors * (back.asDiagonal() * (es.vectors.adjoint() * w));
  }

  FTensor f(t, n, nu);
  for (Index alpha = 0; alpha < nu; ++alpha) {
    const ComplexMatrix& pi = app.macrostates()[alpha].matrix();
    for (Index r = 0; r < n; ++r) {
      const ComplexMatrix pix = pi * x[r];
      for (Index s = 0; s < n; ++s) f(r, s, alpha) = trace_adjoint_product(x[s], pix);
    }
  }
  return f;
}

bool FConditionReport::holds(double tolerance) const {
  return conjugate_symmetry <= tolerance && diagonal_range <= tolerance &&
         sum_rule <= tolerance && positivity <= tolerance && cauchy_schwarz <= tolerance;
}

FConditionReport check_f_conditions(const FTensor& f) {
  FConditionReport rep;
  const Index n = f.n();
  for (Index alpha = 0; alpha < f.nu(); ++alpha) {
    for (Index r = 0; r < n; ++r) {
      const Complex frr = f(r, r, alpha);
      const double outside = std::max({0.0, -frr.real(), frr.real() - 1.0});
      rep.diagonal_range = std::max({rep.diagonal_range, outside, std::abs(frr.imag())});
      for (Index s = 0; s < n; ++s) {
        const Complex frs = f(r, s, alpha);
        rep.conjugate_symmetry =
            std::max(rep.conjugate_symmetry, std::abs(frs - std::conj(f(s, r, alpha))));
        const double excess = std::norm(frs) - frr.real() * f(s, s, alpha).real();
        rep.cauchy_schwarz = std::max(rep.cauchy_schwarz, excess);
      }
    }
    const ComplexMatrix m = f.slice(alpha);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (m + m.adjoint()),
                                                    Eigen::EigenvaluesOnly);
    rep.positivity = std::max(rep.positivity, -es.eigenvalues()(0));
  }
  for (Index r = 0; r < n; ++r) {
    Complex total{0, 0};
    for (Index alpha = 0; alpha < f.nu(); ++alpha) total += f(r, r, alpha);
    rep.sum_rule = std::max(rep.sum_rule, std::abs(total - 1.0));
  }
  return rep;
}

RealVector pointer_probabilities(const CoupledModel& model, const FTensor& f) {
  require_shape(model, f, "pointer_probabilities");
  const RealVector weights = model.system().weights();
  RealVector w = RealVector::Zero(f.nu());
  for (Index alpha = 0; alpha < f.nu(); ++alpha)
    for (Index r = 0; r < f.n(); ++r) w(alpha) += weights(r) * f(r, r, alpha).real();
  return w;
}

// Phi(t) has (r,s) block c_r conj(c_s) Omega_rs(t), so the weight that
// multiplies conj(c_r) c_s (u_r, A u_s) is F_sr;alpha = conj(F_rs;alpha).
double expectation(const CoupledModel& model, const FTensor& f, const HermitianOperator& a) {
  require_system_dim(model, a, "expectation");
  require_shape(model, f, "expectation");
  const ComplexVector& c = model.system().amplitudes();
  const ComplexMatrix& am = a.matrix();
  double diagonal = 0.0;
  for (Index r = 0; r < f.n(); ++r) diagonal += std::norm(c(r)) * am(r, r).real();
  Complex interference{0, 0};
  for (Index r = 0; r < f.n(); ++r)
    for (Index s = 0; s < f.n(); ++s) {
      if (r == s) continue;
      Complex fsum{0, 0};
      for (Index alpha = 0; alpha < f.nu(); ++alpha) fsum += f(s, r, alpha);
      interference += fsum * std::conj(c(r)) * c(s) * am(r, s);
    }
  return diagonal + interference.real();
}

double conditional_expectation(const CoupledModel& model, const FTensor& f,
                               const HermitianOperator& a, Index alpha) {
  require_system_dim(model, a, "conditional_expectation");
  require_shape(model, f, "conditional_expectation");
  if (alpha < 0 || alpha >= f.nu())
    throw LinalgError("conditional_expectation: macrostate index out of range");
  const double w = pointer_probabilities(model, f)(alpha);
  if (!(w > kNullMacrostate))
    throw MeasurementError("conditioning on null macrostate " + std::to_string(alpha) +
                           " (w = " + std::to_string(w) + ")");
  const ComplexVector& c = model.system().amplitudes();
  const ComplexMatrix& am = a.matrix();
  Complex total{0, 0};
  for (Index r = 0; r < f.n(); ++r)
    for (Index s = 0; s < f.n(); ++s) total += f(s, r, alpha) * std::conj(c(r)) * c(s) * am(r, s);
  return total.real() / w;
}

PointerMap infer_pointer_map(const FTensor& f) {
  PointerMap gamma;
  gamma.mapping.resize(static_cast<std::size_t>(f.n()));
  double min_hit = 1.0;
  for (Index r = 0; r < f.n(); ++r) {
    Index best = 0;
    for (Index alpha = 1; alpha < f.nu(); ++alpha)
      if (f(r, r, alpha).real() > f(r, r, best).real()) best = alpha;
    for (Index alpha = 0; alpha < f.nu(); ++alpha)
      if (alpha != best && f(r, r, best).real() - f(r, r, alpha).real() <= kTie)
        throw MeasurementError("ambiguous pointer: level " + std::to_string(r) +
                               " ties between macrostates " + std::to_string(best) + " and " +
                               std::to_string(alpha));
    gamma.mapping[r] = best;
    min_hit = std::min(min_hit, f(r, r, best).real());
  }
  std::vector<Index> sorted = gamma.mapping;
  std::sort(sorted.begin(), sorted.end());
  const bool permutation =
      f.nu() == f.n() && std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
  gamma.bijective = permutation && min_hit > 0.5;
  return gamma;
}

IdealityReport ideality_report(const FTensor& f, const PointerMap& gamma) {
  if (static_cast<Index>(gamma.mapping.size()) != f.n())
    throw LinalgError("ideality_report: pointer map does not cover every level");
  IdealityReport rep;
  for (Index r = 0; r < f.n(); ++r) {
    double outside = 0.0;
    for (Index alpha = 0; alpha < f.nu(); ++alpha) {
      if (alpha != gamma.mapping[r]) outside += f(r, r, alpha).real();
      for (Index s = 0; s < f.n(); ++s)
        if (s != r) rep.offdiag_max = std::max(rep.offdiag_max, std::abs(f(r, s, alpha)));
    }
    rep.diag_deficit = std::max(rep.diag_deficit, outside);
  }
  return rep;
}

CollapseReport collapse_check(const CoupledModel& model, const FTensor& f,
                              const HermitianOperator& a, const PointerMap& gamma) {
  if (!gamma.bijective)
    throw MeasurementError("collapse_check: pointer map is not bijective");
  require_system_dim(model, a, "collapse_check");
  const RealVector weights = model.system().weights();
  const RealVector w = pointer_probabilities(model, f);
  const ComplexMatrix& am = a.matrix();

  double collapsed = 0.0;
  for (Index r = 0; r < f.n(); ++r) collapsed += weights(r) * am(r, r).real();

  CollapseReport rep;
  rep.collapse_residual = std::abs(expectation(model, f, a) - collapsed);
  for (Index r = 0; r < f.n(); ++r) {
    const Index alpha = gamma.mapping[r];
    rep.born_residual = std::max(rep.born_residual, std::abs(w(alpha) - weights(r)));
    if (weights(r) > kReachable) {
      const double cond = conditional_expectation(model, f, a, alpha);
      rep.projection_residual = std::max(rep.projection_residual, std::abs(cond - am(r, r).real()));
    }
  }
  return rep;
}

ComplexMatrix evolved_state(const CoupledModel& model, double t) {
  const ComplexVector& c = model.system().amplitudes();
  const ComplexMatrix phi0 =
      tensor_product(ComplexMatrix(c * c.adjoint()), model.apparatus().initial_state().matrix());
  const HermitianOperator hc(coupled_hamiltonian_sum_form(model));
  const UnitaryMatrix u = evolve_unitary(hc, t);
  return u.matrix().adjoint() * phi0 * u.matrix();
}

double dense_expectation(const CoupledModel& model, const ComplexMatrix& state,
                         const HermitianOperator& a) {
  require_system_dim(model, a, "dense_expectation");
  const ComplexMatrix reduced =
      partial_trace(state, model.n(), model.apparatus().dim(), Subsystem::Second);
  return (reduced * a.matrix()).trace().real();
}

RealVector dense_pointer_probabilities(const CoupledModel& model, const ComplexMatrix& state) {
  const ComplexMatrix reduced =
      partial_trace(state, model.n(), model.apparatus().dim(), Subsystem::First);
  const auto& pis = model.apparatus().macrostates();
  RealVector w(static_cast<Index>(pis.size()));
  for (std::size_t alpha = 0; alpha < pis.size(); ++alpha)
    w(static_cast<Index>(alpha)) = (reduced * pis[alpha].matrix()).trace().real();
  return w;
}

double dense_conditional_expectation(const CoupledModel& model, const ComplexMatrix& state,
                                     const HermitianOperator& a, Index alpha) {
  require_system_dim(model, a, "dense_conditional_expectation");
  const ComplexMatrix& pi = model.apparatus().macrostates().at(static_cast<std::size_t>(alpha)).matrix();
  const ComplexMatrix ipi = tensor_product(ComplexMatrix::Identity(model.n(), model.n()), pi);
  const double w = (state * ipi).trace().real();
  if (!(w > kNullMacrostate))
    throw MeasurementError("conditioning on null macrostate " + std::to_string(alpha));
  return (state * tensor_product(a.matrix(), pi)).trace().real() / w;
}

FTensor f_from_state(const CoupledModel& model, const ComplexMatrix& state, double t) {
  const Index n = model.n();
  const Index d = model.apparatus().dim();
  const ComplexVector& c = model.system().amplitudes();
  if (c.cwiseAbs().minCoeff() < 1e-8)
    throw LinalgError("f_from_state: every amplitude must be nonzero");
  const auto& pis = model.apparatus().macrostates();
  FTensor f(t, n, static_cast<Index>(pis.size()));
  for (Index r = 0; r < n; ++r)
    for (Index s = 0; s < n; ++s) {
      const ComplexMatrix block = state.block(r * d, s * d, d, d);
      const Complex weight = c(r) * std::conj(c(s));
      for (std::size_t alpha = 0; alpha < pis.size(); ++alpha)
        f(r, s, static_cast<Index>(alpha)) = (block * pis[alpha].matrix()).trace() / weight;
    }
  return f;
}

}  // namespace qmeas
