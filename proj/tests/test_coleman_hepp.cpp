#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "qmeas/coleman_hepp.hpp"
#include "qmeas/random.hpp"

using namespace qmeas;

namespace {

SpinChainApparatus chain(Index n_spins, std::vector<double> angles, std::vector<double> energies = {}) {
  SpinChainApparatus app;
  app.n_spins = n_spins;
  app.rotation_angles = Eigen::Map<RealVector>(angles.data(), static_cast<Index>(angles.size()));
  if (!energies.empty())
    app.level_energies = Eigen::Map<RealVector>(energies.data(), static_cast<Index>(energies.size()));
  return app;
}

ComplexMatrix sigma_y() {
  ComplexMatrix m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}

ComplexVector uniform(Index n) {
  return ComplexVector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
}

double max_diff(const FTensor& a, const FTensor& b) {
  double d = 0;
  for (Index r = 0; r < a.n(); ++r)
    for (Index s = 0; s < a.n(); ++s)
      for (Index x = 0; x < a.nu(); ++x) d = std::max(d, std::abs(a(r, s, x) - b(r, s, x)));
  return d;
}

}  // namespace

TEST_CASE("MagnetizationBands") {
  const auto two = MagnetizationBands::equal_width(4, 2);
  CHECK(two.edges() == std::vector<Index>{0, 2, 5});
  CHECK(two.band_of(1) == 0);
  CHECK(two.band_of(2) == 1);  // tie goes up
  const auto odd = MagnetizationBands::equal_width(5, 2);
  CHECK(odd.edges() == std::vector<Index>{0, 3, 6});
  const auto full = MagnetizationBands::equal_width(3, 4);
  CHECK(full.edges() == std::vector<Index>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(MagnetizationBands::equal_width(3, 5), LinalgError);
  CHECK_THROWS_AS(MagnetizationBands(std::vector<Index>{0, 2, 2, 5}), LinalgError);
  CHECK_THROWS_AS(MagnetizationBands(std::vector<Index>{1, 5}), LinalgError);
  CHECK_THROWS_AS(two.band_of(5), LinalgError);
}

TEST_CASE("site_transfer examples") {
  const SiteTransfer still = site_transfer(0.7, 1.3, 0.0);
  CHECK(still.down == Complex(1, 0));
  CHECK(still.up == Complex(0, 0));

  const SiteTransfer flip = site_transfer(std::numbers::pi, std::numbers::pi, 1.0);
  CHECK(std::abs(flip.down) < 1e-15);
  CHECK(std::abs(flip.up - Complex(1, 0)) < 1e-15);

  // 2x2 oracle: per-site weights <down|U_s|x><x|U_r^dagger|down>.
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const double tr = rng.uniform(-3, 3), ts = rng.uniform(-3, 3), t = rng.uniform(0, 2);
    const ComplexMatrix ur = oracle::exp_i(sigma_y(), 0.5 * tr * t);
    const ComplexMatrix us = oracle::exp_i(sigma_y(), 0.5 * ts * t);
    const ComplexVector vr = ur.adjoint().col(0);
    const ComplexVector vs = us.adjoint().col(0);
    const SiteTransfer st = site_transfer(tr, ts, t);
    CHECK(std::abs(st.down - std::conj(vs(0)) * vr(0)) < 1e-13);
    CHECK(std::abs(st.up - std::conj(vs(1)) * vr(1)) < 1e-13);
  }

  // theta_1 = 0, theta_2 t = pi: the two pointer paths are orthogonal on every site.
  const SiteTransfer orth = site_transfer(0.0, std::numbers::pi, 1.0);
  const auto app = chain(6, {0.0, std::numbers::pi});
  const FTensor f = f_coefficients_structured(app, MagnetizationBands::equal_width(6, 2), 1.0);
  CHECK(std::abs(orth.down) < 1e-15);
  CHECK(std::abs(orth.up) < 1e-15);
  for (Index a = 0; a < 2; ++a) CHECK(std::abs(f(0, 1, a)) < 1e-15);
  CHECK(f(1, 1, 1).real() == doctest::Approx(1.0));
}

TEST_CASE("counting_polynomial") {
  const auto c = counting_polynomial(0.25, 0.75, 6);
  double total = 0;
  for (Index m = 0; m <= 6; ++m) {
    const double expect = boost::math::binomial_coefficient<double>(6, static_cast<unsigned>(m)) *
                          std::pow(0.75, m) * std::pow(0.25, 6 - m);
    CHECK(std::abs(c[static_cast<std::size_t>(m)] - Complex(expect, 0)) < 1e-15);
    total += c[static_cast<std::size_t>(m)].real();
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

  // Log-domain path above the threshold agrees with the binomial pmf.
  const auto big = counting_polynomial(0.4, 0.6, 2000);
  boost::math::binomial_distribution<double> dist(2000, 0.6);
  for (Index m : {0, 500, 1100, 1200, 1300, 1900, 2000}) {
    const double expect = boost::math::pdf(dist, static_cast<double>(m));
    CHECK(big[static_cast<std::size_t>(m)].real() == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("f_coefficients_structured examples") {
  for (double theta : {0.3, 1.0, 2.2}) {
    const double t = 0.9;
    const FTensor f = f_coefficients_structured(chain(1, {theta, 2 * theta}),
                                                MagnetizationBands::equal_width(1, 2), t);
    for (Index r = 0; r < 2; ++r) {
      const double th = r == 0 ? theta : 2 * theta;
      CHECK(f(r, r, 0).real() == doctest::Approx(std::pow(std::cos(th * t / 2), 2)).epsilon(1e-14));
      CHECK(f(r, r, 1).real() == doctest::Approx(std::pow(std::sin(th * t / 2), 2)).epsilon(1e-14));
    }
  }

  const FTensor same = f_coefficients_structured(chain(9, {0.8, 0.8}, {0.1, 0.9}),
                                                 MagnetizationBands::equal_width(9, 3), 1.4);
  for (Index a = 0; a < 3; ++a) {
    CHECK(same(0, 0, a).real() == doctest::Approx(same(1, 1, a).real()).epsilon(1e-14));
    CHECK(std::abs(same(0, 1, a)) == doctest::Approx(same(0, 0, a).real()).epsilon(1e-14));
  }
}

TEST_CASE("structured F equals the dense 2^N model") {
  Rng rng(2);
  for (Index spins = 1; spins <= 8; ++spins) {
    const Index levels = rng.integer(2, 3);
    std::vector<double> angles, energies;
    for (Index r = 0; r < levels; ++r) {
      angles.push_back(rng.uniform(-2, 2));
      energies.push_back(rng.uniform(-1, 1));
    }
    const auto app = chain(spins, angles, energies);
    const auto bands = MagnetizationBands::equal_width(spins, std::min<Index>(levels, spins + 1));
    const double t = rng.uniform(0.1, 3.0);
    const CoupledModel dense = dense_spin_chain_model(app, bands, uniform(levels));
    const FTensor structured = f_coefficients_structured(app, bands, t);
    CAPTURE(spins);
    CHECK(max_diff(structured, f_coefficients(dense, t)) <= 1e-10);
    if (spins <= 4) {
      // And against the series-exponential oracle on the same dense model.
      const auto ref = oracle::f_tensor(dense, t);
      double d = 0;
      for (Index r = 0; r < levels; ++r)
        for (Index s = 0; s < levels; ++s)
          for (Index a = 0; a < bands.count(); ++a)
            d = std::max(d, std::abs(structured(r, s, a) -
                                     ref[static_cast<std::size_t>((r * levels + s) * bands.count() + a)]));
      CHECK(d <= 1e-10);
    }
  }
  CHECK_THROWS_AS(dense_spin_chain_model(chain(13, {0, 1}), MagnetizationBands::equal_width(13, 2), uniform(2)),
                  LinalgError);
}

TEST_CASE("structured F is a valid F tensor (property)") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Index spins = rng.integer(1, 300);
    const auto app = chain(spins, {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const Index count = rng.integer(1, std::min<Index>(4, spins + 1));
    const FTensor f =
        f_coefficients_structured(app, MagnetizationBands::equal_width(spins, count), rng.uniform(0, 4));
    const FConditionReport rep = check_f_conditions(f);
    CAPTURE(trial);
    CHECK(rep.holds(1e-10));
    for (Index a = 0; a < count; ++a)
      CHECK(std::abs(f(0, 1, a)) <= std::sqrt(f(0, 0, a).real() * f(1, 1, a).real()) + 1e-12);
    // The r = s counting polynomial is a probability distribution.
    const SiteTransfer st = site_transfer(app.rotation_angles(1), app.rotation_angles(1), f.time());
    double total = 0;
    for (const Complex& c : counting_polynomial(st.down, st.up, spins)) {
      CHECK(c.real() >= 0.0);
      CHECK(std::abs(c.imag()) == 0.0);
      total += c.real();
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("eta_sweep examples") {
  RealVector flip(2);
  flip << 0.0, std::numbers::pi;
  // pi is not representable, so a site stays down with probability
  // cos^2(pi/2) ~ 4e-33 rather than 0; eta is exactly that residue to the N-th power.
  const double stay = std::pow(std::cos(std::numbers::pi / 2), 2);
  for (const EtaPoint& p : eta_sweep({1, 2, 7, 40}, flip, 1.0)) {
    CHECK(p.eta <= 4e-33);
    CHECK(p.eta == doctest::Approx(oracle::binomial_below(p.n_spins, 1.0, stay, (p.n_spins + 1) / 2))
                       .epsilon(1e-12));
  }

  RealVector angles(2);
  angles << 0.0, 1.0;
  const double t_star = readout_time(1.0, 0.9);
  CHECK(std::pow(std::sin(t_star / 2), 2) == doctest::Approx(0.9).epsilon(1e-15));
  std::vector<Index> ns;
  for (Index n = 20; n <= 200; n += 20) ns.push_back(n);
  ns.push_back(21);
  const auto pts = eta_sweep(ns, angles, t_star, std::nullopt, 2);
  for (const EtaPoint& p : pts) {
    const Index edge = (p.n_spins + 1) / 2;  // ceil(N/2): a tie reads "up"
    const double expect = oracle::binomial_below(p.n_spins, 0.9, edge);
    CAPTURE(p.n_spins);
    CHECK(std::abs(p.eta - expect) <= 1e-12);
    CHECK(p.eta == doctest::Approx(expect).epsilon(1e-10));
    CHECK(p.eta == doctest::Approx(oracle::boost_binomial_below(p.n_spins, 0.9, edge)).epsilon(1e-8));
  }
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) CHECK(pts[i].eta <= pts[i - 1].eta);

  RealVector same(2);
  same << 1.0, 1.0;
  CHECK_THROWS_AS(eta_sweep({10}, same, 1.0), MeasurementError);
}

TEST_CASE("eta decreases with N at fixed angles and band fractions (property)") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    RealVector angles(2);
    angles << 0.0, rng.uniform(0.5, 2.0);
    const double t_star = readout_time(angles(1), rng.uniform(0.6, 0.99));
    std::vector<Index> ns;
    for (Index n = 10; n <= 200; n += 10) ns.push_back(n);
    const auto pts = eta_sweep(ns, angles, t_star);
    for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].eta <= pts[i - 1].eta);
  }
}

TEST_CASE("fit_exponential") {
  std::vector<EtaPoint> exact;
  for (Index n = 20; n <= 200; n += 20) exact.push_back({n, std::exp(-0.5 * static_cast<double>(n) / 2.0)});
  const ScalingFit fit = fit_exponential(exact, 2);
  CHECK(std::abs(fit.c_hat - 0.5) <= 1e-9);
  CHECK(std::abs(fit.intercept) <= 1e-9);
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.used_points == 10);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<EtaPoint> noisy = exact;
    for (EtaPoint& p : noisy) p.eta *= 1.0 + 0.01 * rng.normal();
    const ScalingFit nf = fit_exponential(noisy, 2);
    CHECK(std::abs(nf.c_hat - 0.5) <= 0.05 * 0.5);
  }

  std::vector<EtaPoint> with_zero = exact;
  with_zero.push_back({220, 0.0});
  const ScalingFit zf = fit_exponential(with_zero, 2);
  CHECK(zf.used_points == 10);
  CHECK(zf.warnings.size() == 1);
  CHECK_THROWS_AS(fit_exponential({{10, 0.1}, {20, 0.0}, {30, 0.01}}, 2), MeasurementError);

  RealVector angles(2);
  angles << 0.0, 1.0;
  std::vector<Index> ns;
  for (Index n = 20; n <= 200; n += 20) ns.push_back(n);
  const ScalingFit ch = fit_exponential(eta_sweep(ns, angles, readout_time(1.0, 0.9)), 2);
  CHECK(ch.c_hat > 0.0);
  CHECK(ch.r_squared >= 0.99);
}

TEST_CASE("reliability_probe") {
  CHECK(reliability_probe(100, 1) == 0.0);
  // n = 2 puts p at the centre of the upper band, 0.75.
  CHECK(reliability_probe(100, 2) == doctest::Approx(oracle::binomial_below(100, 0.75, 50)).epsilon(1e-10));
  // Interior band: both tails count.
  const double both = oracle::binomial_below(90, 0.5, 30) + oracle::binomial_at_least(90, 0.5, 60);
  CHECK(reliability_probe(90, 3, 1) == doctest::Approx(both).epsilon(1e-10));

  double lo = 1, hi = 0;
  for (Index n : {5, 10, 20, 35, 50}) {
    const double p = reliability_probe(4 * n * n, n);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  CHECK(hi / lo < 3.0);
  for (Index big_n : {100, 400, 2500, 10000}) {
    const auto n = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(big_n))));
    CHECK(reliability_probe(big_n, n) > 0.05);
  }
  CHECK_THROWS(reliability_probe(10, 3, 3));
}

TEST_CASE("pointer quality: N = 50 vs N = 100 and collapse envelope") {
  RealVector angles(2);
  angles << 0.0, 1.0;
  const double t_star = readout_time(1.0, 0.9);
  std::vector<Index> ns;
  for (Index n = 20; n <= 200; n += 20) ns.push_back(n);
  const ScalingFit fit = fit_exponential(eta_sweep(ns, angles, t_star), 2);

  const auto deficit = [&](Index spins) {
    const FTensor f =
        f_coefficients_structured(chain(spins, {0.0, 1.0}), MagnetizationBands::equal_width(spins, 2), t_star);
    const PointerMap g = infer_pointer_map(f);
    REQUIRE(g.bijective);
    CHECK(g.mapping == std::vector<Index>{0, 1});
    return ideality_report(f, g).diag_deficit;
  };
  const double ratio = deficit(100) / deficit(50);
  const double predicted = std::exp(-fit.c_hat * 50.0 / 2.0);
  CHECK(std::abs(std::log(ratio) - std::log(predicted)) <= 0.1 * std::abs(std::log(predicted)));

  // Collapse at N = 100 with A = sigma_x and equal amplitudes.
  const auto app = chain(100, {0.0, 1.0});
  const FTensor f = f_coefficients_structured(app, MagnetizationBands::equal_width(100, 2), t_star);
  ComplexVector c = uniform(2);
  ApparatusModel stub(HermitianOperator::zero(2), DensityMatrix::pure(ComplexVector::Unit(2, 0)),
                      {Projector::coordinate(2, {0}), Projector::coordinate(2, {1})});
  const CoupledModel carrier = build_coupled(SystemModel(RealVector::Zero(2), c), stub,
                                             {HermitianOperator::zero(2), HermitianOperator::zero(2)});
  ComplexMatrix sx(2, 2);
  sx << 0, 1, 1, 0;
  const CollapseReport rep = collapse_check(carrier, f, HermitianOperator(sx), infer_pointer_map(f));
  const double envelope = std::exp(fit.intercept - fit.c_hat * 100.0 / 2.0);
  CHECK(rep.collapse_residual <= 10 * envelope);
  CHECK(rep.projection_residual <= 10 * envelope);
  CHECK(rep.born_residual <= 10 * envelope);
}

TEST_CASE("readout_time") {
  CHECK(readout_time(2.0, 1.0) == doctest::Approx(std::numbers::pi / 2));
  CHECK(readout_time(1.0, 0.0) == 0.0);
  CHECK_THROWS_AS(readout_time(0.0, 0.5), LinalgError);
  CHECK_THROWS_AS(readout_time(1.0, 1.5), LinalgError);
}
