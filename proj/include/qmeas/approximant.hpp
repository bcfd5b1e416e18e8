#pragma once

// Discrete-spectrum approximants of operators with (effectively) continuous
// spectrum, and the finite instrument with rational readouts built from them.
//
// A continuum is modelled by a fine-grid hermitian matrix whose spectrum lies
// in [lower, upper]. A partition cuts that range into bins
// [lambda_k, lambda_k + eps) and picks one representative per bin; the
// approximant replaces every eigenvalue by the representative of its bin.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "qmeas/linalg.hpp"

namespace qmeas {

using Rational = boost::rational<std::int64_t>;

/// "p/q" (always with a denominator, e.g. "2/1").
std::string to_string(const Rational& q);
/// Accepts "p/q" or an integer "p". Throws std::invalid_argument.
Rational parse_rational(const std::string& text);

struct ContinuumProxy {
  HermitianOperator op;
  double lower;
  double upper;

  /// Throws LinalgError if the spectrum leaves [lower, upper].
  static ContinuumProxy make(HermitianOperator op, double lower, double upper);
  /// diag(lower + j (upper - lower) / D), j = 0..D-1: a position grid.
  static ContinuumProxy position_grid(Index grid_dim, double lower, double upper);

  Index grid_dim() const { return op.dim(); }
};

enum class RepresentativeRule { Midpoint, Left, Custom };

class Partition {
 public:
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double epsilon() const { return epsilon_; }
  Index bin_count() const { return static_cast<Index>(representatives_.size()); }
  /// lambda_k = lower + k * eps, k = 0..J. The last cut may lie beyond upper.
  const std::vector<double>& cuts() const { return cuts_; }
  const std::vector<double>& representatives() const { return representatives_; }
  double bin_lower(Index k) const { return cuts_[static_cast<std::size_t>(k)]; }
  /// min(lambda_{k+1}, upper)
  double bin_upper(Index k) const;
  /// Bin containing x. A value on (or within rounding of) a cut belongs to the
  /// bin on its right; `upper` itself belongs to the last bin.
  Index bin_of(double x) const;

 private:
  friend Partition make_partition(double, double, double, RepresentativeRule,
                                  const std::vector<double>&);
  double lower_ = 0, upper_ = 0, epsilon_ = 0;
  std::vector<double> cuts_;
  std::vector<double> representatives_;
};

/// J = ceil((b - a) / eps) bins. Custom representatives must satisfy
/// bin_lower(k) <= rep < bin_upper(k).
Partition make_partition(double lower, double upper, double epsilon, RepresentativeRule rule,
                         const std::vector<double>& custom = {});

/// F(A): every eigenvalue of A replaced by its bin's representative.
HermitianOperator approximant(const ContinuumProxy& proxy, const Partition& partition);

struct QInstrument {
  std::vector<Rational> readouts;  // one per instrument state

  Index state_count() const { return static_cast<Index>(readouts.size()); }
};

/// Replaces each representative by the nearest fraction with denominator at
/// most `max_denominator` that still lies in its bin. Ties go to the fraction
/// nearer the bin midpoint, then to the smaller denominator.
QInstrument rationalize(const Partition& partition, std::int64_t max_denominator);

struct TradeoffReport {
  Index levels = 0;
  bool reliable = false;
  double risk_exponent = 0;
};

/// levels = ceil((b-a)/eps), risk_exponent = N / levels^2 and
/// reliable = levels <= sqrt(N) / 3 (the factor 3 is a local convention).
TradeoffReport tradeoff_report(double lower, double upper, double epsilon, double apparatus_size);

struct LMeasurableOperator {
  RealVector values;
  std::vector<Projector> projectors;
  HermitianOperator op;
};

/// sum_j values[j] E_j over pairwise orthogonal rank-1 projectors.
LMeasurableOperator l_measurable(const RealVector& values, std::vector<Projector> projectors);

/// Rank-1 projectors onto the columns of a unitary.
std::vector<Projector> basis_projectors(const ComplexMatrix& unitary);
/// Discrete Fourier basis, columns exp(2 pi i j k / d) / sqrt(d).
ComplexMatrix fourier_basis(Index dim);

}  // namespace qmeas
