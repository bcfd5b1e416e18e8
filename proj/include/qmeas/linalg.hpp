#pragma once

#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qmeas {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thrown when an operator argument violates its structural contract
/// (shape, hermiticity, trace, idempotence ...).
class LinalgError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace tol {
inline constexpr double kHermitian = 1e-12;
inline constexpr double kAlgebraic = 1e-10;
inline constexpr double kTrace = 1e-8;
inline constexpr double kDegeneracy = 1e-9;
}  // namespace tol

// ---------------------------------------------------------------------------
// Generic dense helpers. These accept any Eigen expression.
// ---------------------------------------------------------------------------

template <typename Derived>
double hermiticity_defect(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  if (m.size() == 0) return 0.0;
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

/// Kronecker product with the first factor slow: row (i1*d2 + i2).
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic>
tensor_product(const Eigen::MatrixBase<DerivedA>& a,
               const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols())
    throw LinalgError("tensor_product: both factors must be square");
  const Index d1 = a.rows();
  const Index d2 = b.rows();
  Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(
      d1 * d2, d1 * d2);
  for (Index i = 0; i < d1; ++i)
    for (Index j = 0; j < d1; ++j)
      out.block(i * d2, j * d2, d2, d2) = a(i, j) * b;
  return out;
}

/// Largest singular value.
template <typename Derived>
double operator_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  using Plain = typename Derived::PlainObject;
  Eigen::JacobiSVD<Plain> svd(m.eval());
  return svd.singularValues()(0);
}

enum class Subsystem { First, Second };

/// Traces out `which` factor of a matrix on C^d1 (x) C^d2.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
partial_trace(const Eigen::MatrixBase<Derived>& m, Index d1, Index d2,
              Subsystem which) {
  if (d1 < 1 || d2 < 1 || m.rows() != d1 * d2 || m.cols() != d1 * d2)
    throw LinalgError("partial_trace: dimension " + std::to_string(m.rows()) +
                      " does not factor as " + std::to_string(d1) + "*" +
                      std::to_string(d2));
  using Out = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (which == Subsystem::Second) {
    Out out(d1, d1);
    for (Index i = 0; i < d1; ++i)
      for (Index j = 0; j < d1; ++j)
        out(i, j) = m.block(i * d2, j * d2, d2, d2).trace();
    return out;
  }
  Out out = Out::Zero(d2, d2);
  for (Index i = 0; i < d1; ++i) out += m.block(i * d2, i * d2, d2, d2);
  return out;
}

// ---------------------------------------------------------------------------
// Validated operator types. Each owns a dense matrix and checks its invariant
// on construction; afterwards the value is immutable.
// ---------------------------------------------------------------------------

class HermitianOperator {
 public:
  explicit HermitianOperator(ComplexMatrix m);
  static HermitianOperator diagonal(const RealVector& d);
  static HermitianOperator zero(Index dim);
  static HermitianOperator identity(Index dim);

  Index dim() const { return m_.rows(); }
  const ComplexMatrix& matrix() const { return m_; }

 private:
  ComplexMatrix m_;
};

class DensityMatrix {
 public:
  explicit DensityMatrix(ComplexMatrix m);
  /// Pure state |v><v| of a normalised vector.
  static DensityMatrix pure(const ComplexVector& v);

  Index dim() const { return m_.rows(); }
  const ComplexMatrix& matrix() const { return m_; }
  /// W with matrix() == W W^dagger; one column per nonzero eigenvalue.
  const ComplexMatrix& factor() const { return factor_; }

 private:
  DensityMatrix() = default;

  ComplexMatrix m_;
  ComplexMatrix factor_;
};

class Projector {
 public:
  explicit Projector(ComplexMatrix m);
  /// Projector onto the span of the orthonormal columns of `basis`.
  static Projector onto_columns(const ComplexMatrix& basis);
  /// Coordinate projector onto basis vectors whose index is in `indices`.
  static Projector coordinate(Index dim, const std::vector<Index>& indices);

  Index dim() const { return m_.rows(); }
  Index rank() const { return rank_; }
  const ComplexMatrix& matrix() const { return m_; }

 private:
  struct Unchecked {};
  Projector(ComplexMatrix m, Index rank, Unchecked) : m_(std::move(m)), rank_(rank) {}

  ComplexMatrix m_;
  Index rank_ = 0;
};

class UnitaryMatrix {
 public:
  explicit UnitaryMatrix(ComplexMatrix m);

  Index dim() const { return m_.rows(); }
  const ComplexMatrix& matrix() const { return m_; }

 private:
  friend UnitaryMatrix evolve_unitary(const HermitianOperator&, double);
  struct Unchecked {};
  UnitaryMatrix(ComplexMatrix m, Unchecked) : m_(std::move(m)) {}

  ComplexMatrix m_;
};

/// Eigenvalues (ascending) and orthonormal eigenvectors as columns.
struct Eigensystem {
  RealVector values;
  ComplexMatrix vectors;
};

Eigensystem eigensystem(const HermitianOperator& a);

struct SpectralComponent {
  double eigenvalue;
  Projector projector;
};

/// Eigenvalues ascending; eigenvalues closer than tol::kDegeneracy share one
/// projector and are reported by their mean.
std::vector<SpectralComponent> spectral_decompose(const HermitianOperator& a);

/// exp(i k t), computed from the eigendecomposition of k.
UnitaryMatrix evolve_unitary(const HermitianOperator& k, double t);

/// Operator norm of ab - ba.
double commutator_norm(const HermitianOperator& a, const HermitianOperator& b);

}  // namespace qmeas
