#pragma once

// Finite Coleman-Hepp pointer: N independent apparatus spins, all initially
// down, each rotated about the y axis at a rate set by the system level.
//
//   K = 0,   V_r = (theta_r / 2) * sum_k sigma_y^(k)
//
// so U_r(t) = exp(i t energies[r]) * R(theta_r t / 2)^{(x) N} with
// R(phi) = exp(i phi sigma_y). The macrostates are bands of the up-spin count
// m, which makes every F_rs;alpha a sum of coefficients of the counting
// polynomial prod_k (p_rs + q_rs x). This costs O(N^2) instead of 2^N.
//
// Per-site basis order is (down, up); site k is bit k of the composite index.

#include <optional>
#include <string>
#include <vector>

#include "qmeas/sewell.hpp"

namespace qmeas {

struct SpinChainApparatus {
  Index n_spins = 1;
  /// theta_r for each system level, radians per unit time per site.
  RealVector rotation_angles;
  /// System energies epsilon_r; they only contribute phases to F_rs. Empty means zero.
  RealVector level_energies;

  Index levels() const { return rotation_angles.size(); }
  RealVector energies() const;
  /// Throws LinalgError on N < 1, fewer than two levels or non-finite angles.
  void validate() const;
};

/// Contiguous bands of the up-spin count m in {0..N}. Band alpha is
/// [edges[alpha], edges[alpha+1]).
class MagnetizationBands {
 public:
  explicit MagnetizationBands(std::vector<Index> edges);
  /// `count` bands of equal width in m/N; a count landing exactly on a cut goes
  /// to the upper band (for two bands: m >= N/2 reads "up").
  static MagnetizationBands equal_width(Index n_spins, Index count);

  Index count() const { return static_cast<Index>(edges_.size()) - 1; }
  Index n_spins() const { return edges_.back() - 1; }
  Index lower(Index alpha) const { return edges_[alpha]; }
  /// One past the last m in the band.
  Index upper(Index alpha) const { return edges_[alpha + 1]; }
  Index band_of(Index m) const;
  const std::vector<Index>& edges() const { return edges_; }

 private:
  std::vector<Index> edges_;
};

/// Per-site factor of Omega_rs(t): weight of a site ending down (p) or up (q)
/// in the overlap <U_s^dagger down | . | U_r^dagger down>.
struct SiteTransfer {
  Complex down;  // p_rs
  Complex up;    // q_rs
};

SiteTransfer site_transfer(double theta_r, double theta_s, double t);

/// Coefficients of (p + q x)^N, index m = power of x. Above 1000 factors the
/// running product is renormalised each step and the scale carried as a log.
std::vector<Complex> counting_polynomial(Complex p, Complex q, Index n_factors);

FTensor f_coefficients_structured(const SpinChainApparatus& app, const MagnetizationBands& bands,
                                  double t);

/// The same model on the full 2^N apparatus space, for cross-checking. N <= 12.
CoupledModel dense_spin_chain_model(const SpinChainApparatus& app, const MagnetizationBands& bands,
                                    const ComplexVector& amplitudes);

/// Time at which a site rotating at `theta` is found up with probability p.
double readout_time(double theta, double up_probability);

struct EtaPoint {
  Index n_spins;
  double eta;
};

/// eta(N) = diag_deficit of the structured F at t_star, one point per N, with
/// `band_count` equal-width bands (defaults to the number of levels).
/// Throws MeasurementError if the pointer map at t_star is not bijective.
std::vector<EtaPoint> eta_sweep(const std::vector<Index>& n_values, const RealVector& angles,
                                double t_star, std::optional<Index> band_count = std::nullopt,
                                unsigned threads = 1);

struct ScalingFit {
  double c_hat = 0;
  double intercept = 0;
  double r_squared = 0;
  std::size_t used_points = 0;
  std::vector<std::string> warnings;
};

/// Least squares for log eta = intercept - (c_hat / levels) * N.
/// Points with eta <= 0 are dropped with a warning; fewer than three usable
/// points is an error.
ScalingFit fit_exponential(const std::vector<EtaPoint>& points, Index levels);

/// Probability that Binomial(N, p) leaves its band when p sits at the centre of
/// band `target_band` of `n_bands` equal-width bands (default n_bands / 2).
/// Both tails are summed directly from log-space binomial terms.
double reliability_probe(Index n_spins, Index n_bands, std::optional<Index> target_band = std::nullopt);

}  // namespace qmeas
