#include "qmeas/linalg.hpp"

#include <cmath>

namespace qmeas {

namespace {

double scale_of(const ComplexMatrix& m) {
  return m.size() == 0 ? 1.0 : std::max(1.0, m.cwiseAbs().maxCoeff());
}

void require_square(const ComplexMatrix& m, const char* what) {
  if (m.rows() < 1 || m.rows() != m.cols())
    throw LinalgError(std::string(what) + ": matrix must be square with dim >= 1, got " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

void require_hermitian(const ComplexMatrix& m, const char* what) {
  require_square(m, what);
  const double defect = hermiticity_defect(m);
  if (!(defect <= tol::kHermitian * scale_of(m)))
    throw LinalgError(std::string(what) + ": not hermitian (defect " +
                      std::to_string(defect) + ")");
}

}  // namespace

HermitianOperator::HermitianOperator(ComplexMatrix m) : m_(std::move(m)) {
  require_hermitian(m_, "HermitianOperator");
}

HermitianOperator HermitianOperator::diagonal(const RealVector& d) {
  return HermitianOperator(d.cast<Complex>().asDiagonal().toDenseMatrix());
}

HermitianOperator HermitianOperator::zero(Index dim) {
  return HermitianOperator(ComplexMatrix::Zero(dim, dim));
}

HermitianOperator HermitianOperator::identity(Index dim) {
  return HermitianOperator(ComplexMatrix::Identity(dim, dim));
}

DensityMatrix::DensityMatrix(ComplexMatrix m) : m_(std::move(m)) {
  require_hermitian(m_, "DensityMatrix");
  const Complex tr = m_.trace();
  if (std::abs(tr - 1.0) > tol::kAlgebraic)
    throw LinalgError("DensityMatrix: trace is " + std::to_string(tr.real()) + ", expected 1");
  const ComplexMatrix sym = 0.5 * (m_ + m_.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sym);
  const RealVector& ev = es.eigenvalues();
  if (ev(0) < -tol::kAlgebraic)
    throw LinalgError("DensityMatrix: not positive semidefinite (min eigenvalue " +
                      std::to_string(ev(0)) + ")");
  Index first = 0;
  while (first < ev.size() && ev(first) <= 1e-15) ++first;
  const Index rank = ev.size() - first;
  factor_ = es.eigenvectors().rightCols(rank) *
            ev.tail(rank).cwiseSqrt().cast<Complex>().asDiagonal();
}

DensityMatrix DensityMatrix::pure(const ComplexVector& v) {
  if (v.size() < 1 || std::abs(v.squaredNorm() - 1.0) > tol::kAlgebraic)
    throw LinalgError("DensityMatrix::pure: vector must be normalised");
  DensityMatrix out;
  out.m_ = v * v.adjoint();
  out.factor_ = v;
  return out;
}

Projector::Projector(ComplexMatrix m) : m_(std::move(m)) {
  require_hermitian(m_, "Projector");
  const double idem = (m_ * m_ - m_).cwiseAbs().maxCoeff();
  if (idem > tol::kAlgebraic)
    throw LinalgError("Projector: not idempotent (defect " + std::to_string(idem) + ")");
  const double tr = m_.trace().real();
  rank_ = static_cast<Index>(std::llround(tr));
  if (std::abs(tr - static_cast<double>(rank_)) > tol::kTrace)
    throw LinalgError("Projector: trace " + std::to_string(tr) + " is not an integer rank");
}

Projector Projector::onto_columns(const ComplexMatrix& basis) {
  const double gram_defect =
      (basis.adjoint() * basis - ComplexMatrix::Identity(basis.cols(), basis.cols()))
          .cwiseAbs()
          .maxCoeff();
  if (basis.cols() < 1 || gram_defect > tol::kAlgebraic)
    throw LinalgError("Projector::onto_columns: columns are not orthonormal");
  return Projector(basis * basis.adjoint(), basis.cols(), Unchecked{});
}

Projector Projector::coordinate(Index dim, const std::vector<Index>& indices) {
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  for (Index i : indices) {
    if (i < 0 || i >= dim) throw LinalgError("Projector::coordinate: index out of range");
    m(i, i) = 1.0;
  }
  const auto rank = static_cast<Index>(std::llround(m.trace().real()));
  return Projector(std::move(m), rank, Unchecked{});
}

UnitaryMatrix::UnitaryMatrix(ComplexMatrix m) : m_(std::move(m)) {
  require_square(m_, "UnitaryMatrix");
  const ComplexMatrix eye = ComplexMatrix::Identity(m_.rows(), m_.rows());
  const double defect = (m_.adjoint() * m_ - eye).cwiseAbs().maxCoeff();
  if (defect > tol::kAlgebraic)
    throw LinalgError("UnitaryMatrix: U^dagger U deviates from identity by " +
                      std::to_string(defect));
}

Eigensystem eigensystem(const HermitianOperator& a) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a.matrix());
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigensystem: self-adjoint eigensolver did not converge (dim " +
                             std::to_string(a.dim()) + ")");
  return {es.eigenvalues(), es.eigenvectors()};
}

std::vector<SpectralComponent> spectral_decompose(const HermitianOperator& a) {
  const Eigensystem es = eigensystem(a);
  std::vector<SpectralComponent> out;
  const Index d = es.values.size();
  Index begin = 0;
  while (begin < d) {
    Index end = begin + 1;
    while (end < d && es.values(end) - es.values(end - 1) < tol::kDegeneracy) ++end;
    const Index width = end - begin;
    const double mean = es.values.segment(begin, width).mean();
    out.push_back({mean, Projector::onto_columns(es.vectors.middleCols(begin, width))});
    begin = end;
  }
  return out;
}

UnitaryMatrix evolve_unitary(const HermitianOperator& k, double t) {
  if (!std::isfinite(t)) throw LinalgError("evolve_unitary: time must be finite");
  if (t == 0.0)
    return UnitaryMatrix(ComplexMatrix::Identity(k.dim(), k.dim()), UnitaryMatrix::Unchecked{});
  const Eigensystem es = eigensystem(k);
  const ComplexVector phases =
      es.values.unaryExpr([t](double lambda) { return std::polar(1.0, lambda * t); });
  // Unitary by construction: the eigenvector basis is orthonormal.
  return UnitaryMatrix(es.vectors * phases.asDiagonal() * es.vectors.adjoint(),
                       UnitaryMatrix::Unchecked{});
}

double commutator_norm(const HermitianOperator& a, const HermitianOperator& b) {
  if (a.dim() != b.dim())
    throw LinalgError("commutator_norm: dimension mismatch " + std::to_string(a.dim()) +
                      " vs " + std::to_string(b.dim()));
  const ComplexMatrix c = a.matrix() * b.matrix() - b.matrix() * a.matrix();
  return operator_norm(c);
}

}  // namespace qmeas
