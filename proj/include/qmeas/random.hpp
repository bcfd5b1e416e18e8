#pragma once

#include <cstdint>
#include <random>

#include "qmeas/sewell.hpp"

namespace qmeas {

/// Seeded generator whose draws are identical on every platform.
/// std::uniform_real_distribution and friends are implementation-defined, so
/// the conversions from raw 64-bit words are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi);
  double normal();
  Complex complex_normal() { return {normal(), normal()}; }

 private:
  std::mt19937_64 engine_;
};

ComplexMatrix random_complex_matrix(Index rows, Index cols, Rng& rng);
HermitianOperator random_hermitian(Index dim, Rng& rng);
/// Haar-distributed unitary (QR of a complex Ginibre matrix, phases fixed).
ComplexMatrix random_unitary(Index dim, Rng& rng);
DensityMatrix random_density_matrix(Index dim, Rng& rng);
ComplexVector random_state(Index dim, Rng& rng);
/// `count` nonempty projectors onto contiguous groups of a random orthonormal basis.
std::vector<Projector> random_macrostates(Index dim, Index count, Rng& rng);

struct RandomModelShape {
  Index n = 2;
  Index dim_k = 4;
  Index nu = 2;
};

/// Random energies, amplitudes, K, Omega, macrostates and couplings.
CoupledModel random_model(const RandomModelShape& shape, Rng& rng);

}  // namespace qmeas
