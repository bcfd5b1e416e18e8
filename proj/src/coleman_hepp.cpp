#include "qmeas/coleman_hepp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "qmeas/parallel.hpp"

namespace qmeas {

namespace {

constexpr Index kLogDomainThreshold = 1000;
constexpr Index kDenseSpinLimit = 12;

double log_binomial_pmf(Index n, Index m, double log_p, double log_q) {
  return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(m) + 1) -
         std::lgamma(static_cast<double>(n - m) + 1) + static_cast<double>(m) * log_p +
         static_cast<double>(n - m) * log_q;
}

}  // namespace

RealVector SpinChainApparatus::energies() const {
  return level_energies.size() == 0 ? RealVector::Zero(levels()) : level_energies;
}

void SpinChainApparatus::validate() const {
  if (n_spins < 1) throw LinalgError("SpinChainApparatus: need at least one spin");
  if (levels() < 2) throw LinalgError("SpinChainApparatus: need at least two system levels");
  if (!rotation_angles.allFinite())
    throw LinalgError("SpinChainApparatus: rotation angles must be finite");
  if (level_energies.size() != 0 &&
      (level_energies.size() != levels() || !level_energies.allFinite()))
    throw LinalgError("SpinChainApparatus: level energies must be finite, one per level");
}

MagnetizationBands::MagnetizationBands(std::vector<Index> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 2 || edges_.front() != 0)
    throw LinalgError("MagnetizationBands: edges must start at 0 and define at least one band");
  for (std::size_t i = 1; i < edges_.size(); ++i)
    if (edges_[i] <= edges_[i - 1])
      throw LinalgError("MagnetizationBands: bands must be nonempty (edges strictly increasing)");
  if (edges_.back() < 2)
    throw LinalgError("MagnetizationBands: must cover m = 0..N with N >= 1");
}

MagnetizationBands MagnetizationBands::equal_width(Index n_spins, Index count) {
  if (n_spins < 1 || count < 1)
    throw LinalgError("MagnetizationBands::equal_width: need N >= 1 and count >= 1");
  if (count > n_spins + 1)
    throw LinalgError("MagnetizationBands::equal_width: " + std::to_string(count) +
                      " bands cannot be nonempty over " + std::to_string(n_spins + 1) +
                      " magnetisation values");
  std::vector<Index> edges;
  edges.reserve(static_cast<std::size_t>(count + 1));
  // Band alpha holds m with m/N in [alpha/count, (alpha+1)/count): lower edge ceil(alpha N / count).
  for (Index alpha = 0; alpha < count; ++alpha) edges.push_back((alpha * n_spins + count - 1) / count);
  edges.push_back(n_spins + 1);
  return MagnetizationBands(std::move(edges));
}

Index MagnetizationBands::band_of(Index m) const {
  if (m < 0 || m > n_spins()) throw LinalgError("MagnetizationBands::band_of: m out of range");
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), m);
  return static_cast<Index>(it - edges_.begin()) - 1;
}

SiteTransfer site_transfer(double theta_r, double theta_s, double t) {
  // U_r^dagger |down> on one site is (cos phi_r, sin phi_r), phi_r = theta_r t / 2.
  const double phi_r = 0.5 * theta_r * t;
  const double phi_s = 0.5 * theta_s * t;
  const Complex down_r{std::cos(phi_r), 0.0};
  const Complex up_r{std::sin(phi_r), 0.0};
  const Complex down_s{std::cos(phi_s), 0.0};
  const Complex up_s{std::sin(phi_s), 0.0};
  return {std::conj(down_s) * down_r, std::conj(up_s) * up_r};
}

std::vector<Complex> counting_polynomial(Complex p, Complex q, Index n_factors) {
  if (n_factors < 0) throw LinalgError("counting_polynomial: negative factor count");
  std::vector<Complex> coeff(static_cast<std::size_t>(n_factors + 1), Complex{0, 0});
  coeff[0] = 1.0;
  const bool rescale = n_factors > kLogDomainThreshold;
  double log_scale = 0.0;
  for (Index k = 1; k <= n_factors; ++k) {
    for (Index m = k; m >= 1; --m) coeff[m] = p * coeff[m] + q * coeff[m - 1];
    coeff[0] *= p;
    if (rescale) {
      double peak = 0.0;
      for (Index m = 0; m <= k; ++m) peak = std::max(peak, std::abs(coeff[m]));
      if (peak == 0.0) break;
      log_scale += std::log(peak);
      for (Index m = 0; m <= k; ++m) coeff[m] /= peak;
    }
  }
  if (rescale) {
    const double scale = std::exp(log_scale);
    for (Complex& c : coeff) c *= scale;
  }
  return coeff;
}

FTensor f_coefficients_structured(const SpinChainApparatus& app, const MagnetizationBands& bands,
                                  double t) {
  app.validate();
  if (bands.n_spins() != app.n_spins)
    throw LinalgError("f_coefficients_structured: bands built for N = " +
                      std::to_string(bands.n_spins()) + ", apparatus has N = " +
                      std::to_string(app.n_spins));
  const Index n = app.levels();
  const Index nu = bands.count();
  const RealVector eps = app.energies();
  FTensor f(t, n, nu);
  for (Index r = 0; r < n; ++r)
    for (Index s = r; s < n; ++s) {
      const SiteTransfer site = site_transfer(app.rotation_angles(r), app.rotation_angles(s), t);
      const std::vector<Complex> poly = counting_polynomial(site.down, site.up, app.n_spins);
      std::vector<Complex> band_sum(static_cast<std::size_t>(nu), Complex{0, 0});
      for (Index alpha = 0; alpha < nu; ++alpha)
        for (Index m = bands.lower(alpha); m < bands.upper(alpha); ++m) band_sum[alpha] += poly[m];
      if (r == s) {
        // The diagonal coefficients form a probability distribution. The
        // heaviest band is taken as the complement of the others: the sum
        // rule is then exact and the light bands keep their relative precision.
        Index heavy = 0;
        for (Index alpha = 1; alpha < nu; ++alpha)
          if (band_sum[alpha].real() > band_sum[heavy].real()) heavy = alpha;
        double rest = 0.0;
        for (Index alpha = 0; alpha < nu; ++alpha)
          if (alpha != heavy) rest += band_sum[alpha].real();
        band_sum[heavy] = 1.0 - rest;
        for (Index alpha = 0; alpha < nu; ++alpha) f(r, r, alpha) = band_sum[alpha].real();
        continue;
      }
      const Complex phase = std::polar(1.0, (eps(s) - eps(r)) * t);
      for (Index alpha = 0; alpha < nu; ++alpha) {
        f(r, s, alpha) = phase * band_sum[alpha];
        f(s, r, alpha) = std::conj(f(r, s, alpha));
      }
    }
  return f;
}

CoupledModel dense_spin_chain_model(const SpinChainApparatus& app, const MagnetizationBands& bands,
                                    const ComplexVector& amplitudes) {
  app.validate();
  if (app.n_spins > kDenseSpinLimit)
    throw LinalgError("dense_spin_chain_model: N = " + std::to_string(app.n_spins) +
                      " exceeds the dense limit of " + std::to_string(kDenseSpinLimit));
  if (bands.n_spins() != app.n_spins)
    throw LinalgError("dense_spin_chain_model: bands do not match N");
  const Index spins = app.n_spins;
  const Index dim = Index{1} << spins;

  // sum_k sigma_y^(k): sigma_y |down> = i |up>, sigma_y |up> = -i |down>.
  ComplexMatrix sy_total = ComplexMatrix::Zero(dim, dim);
  for (Index x = 0; x < dim; ++x)
    for (Index k = 0; k < spins; ++k) {
      const Index bit = Index{1} << k;
      sy_total(x ^ bit, x) += (x & bit) ? Complex{0, -1} : Complex{0, 1};
    }

  std::vector<std::vector<Index>> members(static_cast<std::size_t>(bands.count()));
  for (Index x = 0; x < dim; ++x) {
    const Index up = std::popcount(static_cast<std::uint64_t>(x));
    members[static_cast<std::size_t>(bands.band_of(up))].push_back(x);
  }
  std::vector<Projector> macrostates;
  for (const auto& idx : members) macrostates.push_back(Projector::coordinate(dim, idx));

  ComplexVector all_down = ComplexVector::Zero(dim);
  all_down(0) = 1.0;
  ApparatusModel apparatus(HermitianOperator::zero(dim), DensityMatrix::pure(all_down),
                           std::move(macrostates));
  std::vector<HermitianOperator> couplings;
  for (Index r = 0; r < app.levels(); ++r)
    couplings.emplace_back(ComplexMatrix(0.5 * app.rotation_angles(r) * sy_total));
  return build_coupled(SystemModel(app.energies(), amplitudes), std::move(apparatus),
                       std::move(couplings));
}

double readout_time(double theta, double up_probability) {
  if (theta == 0.0 || !std::isfinite(theta) || !(up_probability >= 0.0 && up_probability <= 1.0))
    throw LinalgError("readout_time: need theta != 0 and 0 <= p <= 1");
  return 2.0 * std::asin(std::sqrt(up_probability)) / theta;
}

std::vector<EtaPoint> eta_sweep(const std::vector<Index>& n_values, const RealVector& angles,
                                double t_star, std::optional<Index> band_count, unsigned threads) {
  const Index nu = band_count.value_or(angles.size());
  std::vector<EtaPoint> out(n_values.size());
  parallel_for(n_values.size(), threads, [&](std::size_t i) {
    SpinChainApparatus app{n_values[i], angles, {}};
    const auto bands = MagnetizationBands::equal_width(app.n_spins, nu);
    const FTensor f = f_coefficients_structured(app, bands, t_star);
    const PointerMap gamma = infer_pointer_map(f);
    if (!gamma.bijective)
      throw MeasurementError("eta_sweep: pointer map is not bijective at t* for N = " +
                             std::to_string(app.n_spins));
    out[i] = {app.n_spins, ideality_report(f, gamma).diag_deficit};
  });
  return out;
}

ScalingFit fit_exponential(const std::vector<EtaPoint>& points, Index levels) {
  if (levels < 1) throw LinalgError("fit_exponential: levels must be positive");
  ScalingFit fit;
  std::vector<double> xs;
  std::vector<double> ys;
  for (const EtaPoint& p : points) {
    if (!(p.eta > 0.0) || !std::isfinite(p.eta)) {
      fit.warnings.push_back("dropped N = " + std::to_string(p.n_spins) + " with eta = " +
                             std::to_string(p.eta));
      continue;
    }
    xs.push_back(static_cast<double>(p.n_spins));
    ys.push_back(std::log(p.eta));
  }
  fit.used_points = xs.size();
  if (xs.size() < 3)
    throw MeasurementError("fit_exponential: need at least 3 points with eta > 0, have " +
                           std::to_string(xs.size()));
  const auto count = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / count;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / count;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw MeasurementError("fit_exponential: all points share one N");
  const double slope = sxy / sxx;
  fit.intercept = my - slope * mx;
  fit.c_hat = -slope * static_cast<double>(levels);
  double ss_res = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.intercept + slope * xs[i]);
    ss_res += e * e;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return fit;
}

double reliability_probe(Index n_spins, Index n_bands, std::optional<Index> target_band) {
  const auto bands = MagnetizationBands::equal_width(n_spins, n_bands);
  const Index target = target_band.value_or(n_bands / 2);
  if (target < 0 || target >= n_bands)
    throw LinalgError("reliability_probe: target band out of range");
  if (n_bands == 1) return 0.0;
  const double p = (static_cast<double>(target) + 0.5) / static_cast<double>(n_bands);
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  double misread = 0.0;
  for (Index m = 0; m < bands.lower(target); ++m)
    misread += std::exp(log_binomial_pmf(n_spins, m, log_p, log_q));
  for (Index m = bands.upper(target); m <= n_spins; ++m)
    misread += std::exp(log_binomial_pmf(n_spins, m, log_p, log_q));
  return misread;
}

}  // namespace qmeas
