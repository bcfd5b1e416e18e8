#include "qmeas/random.hpp"

#include <cmath>
#include <numbers>

namespace qmeas {

std::int64_t Rng::integer(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(uniform() * static_cast<double>(span)) % span);
}

double Rng::normal() {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u = 1.0 - uniform();
  const double v = uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

ComplexMatrix random_complex_matrix(Index rows, Index cols, Rng& rng) {
  ComplexMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.complex_normal();
  return m;
}

HermitianOperator random_hermitian(Index dim, Rng& rng) {
  const ComplexMatrix g = random_complex_matrix(dim, dim, rng);
  return HermitianOperator(0.5 * (g + g.adjoint()));
}

ComplexMatrix random_unitary(Index dim, Rng& rng) {
  const ComplexMatrix g = random_complex_matrix(dim, dim, rng);
  Eigen::HouseholderQR<ComplexMatrix> qr(g);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR();
  for (Index j = 0; j < dim; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0) q.col(j) *= r(j, j) / mag;
  }
  return q;
}

DensityMatrix random_density_matrix(Index dim, Rng& rng) {
  const ComplexMatrix g = random_complex_matrix(dim, dim, rng);
  ComplexMatrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  rho = 0.5 * (rho + rho.adjoint());
  return DensityMatrix(std::move(rho));
}

ComplexVector random_state(Index dim, Rng& rng) {
  ComplexVector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = rng.complex_normal();
  return v / v.norm();
}

std::vector<Projector> random_macrostates(Index dim, Index count, Rng& rng) {
  if (count < 1 || count > dim)
    throw LinalgError("random_macrostates: need 1 <= count <= dim");
  const ComplexMatrix basis = random_unitary(dim, rng);
  // Group sizes, each at least one.
  std::vector<Index> sizes(static_cast<std::size_t>(count), 1);
  for (Index extra = dim - count; extra > 0; --extra)
    ++sizes[static_cast<std::size_t>(rng.integer(0, count - 1))];
  std::vector<Projector> out;
  Index begin = 0;
  for (Index size : sizes) {
    out.push_back(Projector::onto_columns(basis.middleCols(begin, size)));
    begin += size;
  }
  return out;
}

CoupledModel random_model(const RandomModelShape& shape, Rng& rng) {
  RealVector energies(shape.n);
  for (Index r = 0; r < shape.n; ++r) energies(r) = rng.uniform(-1.0, 1.0);
  SystemModel system(std::move(energies), random_state(shape.n, rng));
  HermitianOperator k = random_hermitian(shape.dim_k, rng);
  DensityMatrix omega = random_density_matrix(shape.dim_k, rng);
  ApparatusModel apparatus(std::move(k), std::move(omega),
                           random_macrostates(shape.dim_k, shape.nu, rng));
  std::vector<HermitianOperator> couplings;
  for (Index r = 0; r < shape.n; ++r) couplings.push_back(random_hermitian(shape.dim_k, rng));
  return build_coupled(std::move(system), std::move(apparatus), std::move(couplings));
}

}  // namespace qmeas
