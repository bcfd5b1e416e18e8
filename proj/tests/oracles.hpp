#pragma once

// Independent reference computations shared by the test binaries. None of
// these call into the library's eigen-solver paths.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "qmeas/approximant.hpp"
#include "qmeas/sewell.hpp"

namespace oracle {

using qmeas::Complex;
using qmeas::ComplexMatrix;
using qmeas::Index;

/// exp(i t K) by scaling and squaring of a Taylor series.
inline ComplexMatrix exp_i(const ComplexMatrix& k, double t) {
  const Index d = k.rows();
  ComplexMatrix x = Complex{0, t} * k;
  const double norm = x.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (norm / std::ldexp(1.0, squarings) > 0.25) ++squarings;
  x /= std::ldexp(1.0, squarings);
  ComplexMatrix sum = ComplexMatrix::Identity(d, d);
  ComplexMatrix term = ComplexMatrix::Identity(d, d);
  for (int j = 1; j < 40; ++j) {
    term = term * x / static_cast<double>(j);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

/// K_r = K + V_r + eps_r I, assembled without the library.
inline ComplexMatrix sector(const qmeas::CoupledModel& m, Index r) {
  const Index d = m.apparatus().dim();
  return m.apparatus().free_hamiltonian().matrix() + m.couplings()[static_cast<std::size_t>(r)].matrix() +
         m.system().energies()(r) * ComplexMatrix::Identity(d, d);
}

/// F_rs;alpha = Tr(U_r^dagger Omega U_s Pi_alpha) with U_r = exp(i K_r t).
inline std::vector<Complex> f_tensor(const qmeas::CoupledModel& m, double t) {
  const Index n = m.n();
  const auto& pis = m.apparatus().macrostates();
  const Index nu = static_cast<Index>(pis.size());
  std::vector<ComplexMatrix> u;
  for (Index r = 0; r < n; ++r) u.push_back(exp_i(sector(m, r), t));
  const ComplexMatrix& omega = m.apparatus().initial_state().matrix();
  std::vector<Complex> f(static_cast<std::size_t>(n * n * nu));
  for (Index r = 0; r < n; ++r)
    for (Index s = 0; s < n; ++s) {
      const ComplexMatrix w = u[static_cast<std::size_t>(r)].adjoint() * omega * u[static_cast<std::size_t>(s)];
      for (Index a = 0; a < nu; ++a)
        f[static_cast<std::size_t>((r * n + s) * nu + a)] = (w * pis[static_cast<std::size_t>(a)].matrix()).trace();
    }
  return f;
}

/// Phi(t) = U^dagger (|c><c| (x) Omega) U with U = exp(i t sum_r |r><r| (x) K_r),
/// built entry by entry on the composite space (system index slow).
inline ComplexMatrix full_state(const qmeas::CoupledModel& m, double t) {
  const Index n = m.n(), d = m.apparatus().dim();
  ComplexMatrix h = ComplexMatrix::Zero(n * d, n * d);
  for (Index r = 0; r < n; ++r) h.block(r * d, r * d, d, d) = sector(m, r);
  const ComplexMatrix u = exp_i(h, t);
  const qmeas::ComplexVector& c = m.system().amplitudes();
  const ComplexMatrix& omega = m.apparatus().initial_state().matrix();
  ComplexMatrix phi0(n * d, n * d);
  for (Index r = 0; r < n; ++r)
    for (Index s = 0; s < n; ++s)
      for (Index k = 0; k < d; ++k)
        for (Index l = 0; l < d; ++l) phi0(r * d + k, s * d + l) = c(r) * std::conj(c(s)) * omega(k, l);
  return u.adjoint() * phi0 * u;
}

/// Tr(Phi (A (x) B)) by explicit index sums.
inline Complex trace_product(const ComplexMatrix& phi, const ComplexMatrix& a, const ComplexMatrix& b) {
  const Index n = a.rows(), d = b.rows();
  Complex total = 0;
  for (Index r = 0; r < n; ++r)
    for (Index s = 0; s < n; ++s)
      for (Index k = 0; k < d; ++k)
        for (Index l = 0; l < d; ++l) total += phi(r * d + k, s * d + l) * a(s, r) * b(l, k);
  return total;
}

/// P[Binomial(n, p) < k] with failure probability q given separately (so a
/// q below double resolution next to 1 survives), in 50-digit arithmetic.
inline double binomial_below(Index n, double p, double q, Index k) {
  using Big = boost::multiprecision::cpp_bin_float_50;
  Big total = 0;
  Big coeff = 1;  // C(n, m)
  const Big bp = p, bq = q;
  for (Index m = 0; m < k && m <= n; ++m) {
    total += coeff * pow(bp, m) * pow(bq, n - m);
    coeff = coeff * (n - m) / (m + 1);
  }
  return static_cast<double>(total);
}

/// P[Binomial(n, p) < k].
inline double binomial_below(Index n, double p, Index k) {
  return binomial_below(n, p, static_cast<double>(1 - boost::multiprecision::cpp_bin_float_50(p)), k);
}

/// P[Binomial(n, p) >= k].
inline double binomial_at_least(Index n, double p, Index k) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  // complement via the other tail to keep full relative precision
  return binomial_below(n, 1.0 - p, n - k + 1);
}

/// Same tail through Boost.Math's distribution, for a second opinion in double.
inline double boost_binomial_below(Index n, double p, Index k) {
  if (k <= 0) return 0.0;
  boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
  return boost::math::cdf(dist, static_cast<double>(k - 1));
}

using Exact = boost::multiprecision::cpp_rational;

// Farey sequence of order qmax on [0, 1] by the next-term recurrence.
inline std::vector<std::pair<qmeas::Rational, Exact>> farey(std::int64_t qmax) {
  std::vector<std::pair<qmeas::Rational, Exact>> out;
  std::int64_t a = 0, b = 1, c = 1, d = qmax;
  out.emplace_back(qmeas::Rational(a, b), Exact(a, b));
  while (!(a == 1 && b == 1)) {
    out.emplace_back(qmeas::Rational(c, d), Exact(c, d));
    const std::int64_t k = (qmax + b) / d;
    const std::int64_t nc = k * c - a, nd = k * d - b;
    a = c;
    b = d;
    c = nc;
    d = nd;
  }
  return out;
}

// Best fraction in [lo, hi) nearest to rep; ties to the midpoint, then smaller q.
inline std::optional<qmeas::Rational> farey_best(const std::vector<std::pair<qmeas::Rational, Exact>>& seq, double lo,
                                   double hi, double rep) {
  const Exact elo(lo), ehi(hi), erep(rep), emid = (elo + ehi) / 2;
  const auto first = std::lower_bound(seq.begin(), seq.end(), elo,
                                      [](const auto& e, const Exact& x) { return e.second < x; });
  std::optional<qmeas::Rational> best;
  Exact best_d, best_m;
  for (auto it = first; it != seq.end() && it->second < ehi; ++it) {
    const Exact dist = abs(it->second - erep), md = abs(it->second - emid);
    if (!best || dist < best_d ||
        (dist == best_d && (md < best_m || (md == best_m && it->first.denominator() < best->denominator())))) {
      best = it->first;
      best_d = dist;
      best_m = md;
    }
  }
  return best;
}

}  // namespace oracle
