#include "qmeas/approximant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/multiprecision/cpp_int.hpp>

namespace qmeas {

namespace {

using Exact = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// Relative slack for "lies on a cut" and ceil((b-a)/eps).
constexpr double kSnap = 1e-12;
constexpr double kCeilSlack = 1e-9;
// Below this relative margin double arithmetic defers to exact rationals.
constexpr double kNearInteger = 1e-9;

Index bin_total(double lower, double upper, double epsilon) {
  const double ratio = (upper - lower) / epsilon;
  return std::max<Index>(1, static_cast<Index>(std::ceil(ratio - kCeilSlack * ratio)));
}

bool is_diagonal(const ComplexMatrix& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != Complex{0, 0}) return false;
  return true;
}

// Smallest integer >= x, for exact x.
std::int64_t ceil_exact(const Exact& x) {
  const BigInt num = boost::multiprecision::numerator(x);
  const BigInt den = boost::multiprecision::denominator(x);  // > 0
  BigInt q = num / den;
  if (q * den < num) ++q;
  return q.convert_to<std::int64_t>();
}

}  // namespace

std::string to_string(const Rational& q) {
  return std::to_string(q.numerator()) + "/" + std::to_string(q.denominator());
}

Rational parse_rational(const std::string& text) {
  const auto slash = text.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const std::int64_t p = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return Rational(p);
    }
    const std::string num = text.substr(0, slash);
    const std::string den = text.substr(slash + 1);
    const std::int64_t p = std::stoll(num, &used);
    if (used != num.size()) throw std::invalid_argument("trailing characters");
    const std::int64_t q = std::stoll(den, &used);
    if (used != den.size() || q == 0) throw std::invalid_argument("bad denominator");
    return Rational(p, q);
  } catch (const std::exception&) {
    throw std::invalid_argument("not a rational \"p/q\": '" + text + "'");
  }
}

ContinuumProxy ContinuumProxy::make(HermitianOperator op, double lower, double upper) {
  if (!(upper > lower)) throw LinalgError("ContinuumProxy: need upper > lower");
  const Eigensystem es = eigensystem(op);
  const double slack = kSnap * std::max({1.0, std::abs(lower), std::abs(upper)});
  if (es.values(0) < lower - slack || es.values(es.values.size() - 1) > upper + slack)
    throw LinalgError("ContinuumProxy: spectrum [" + std::to_string(es.values(0)) + ", " +
                      std::to_string(es.values(es.values.size() - 1)) + "] leaves [" +
                      std::to_string(lower) + ", " + std::to_string(upper) + "]");
  return {std::move(op), lower, upper};
}

ContinuumProxy ContinuumProxy::position_grid(Index grid_dim, double lower, double upper) {
  if (grid_dim < 1 || !(upper > lower))
    throw LinalgError("ContinuumProxy::position_grid: need D >= 1 and upper > lower");
  RealVector x(grid_dim);
  for (Index j = 0; j < grid_dim; ++j)
    x(j) = lower + static_cast<double>(j) * (upper - lower) / static_cast<double>(grid_dim);
  return {HermitianOperator::diagonal(x), lower, upper};
}

double Partition::bin_upper(Index k) const {
  return std::min(cuts_[static_cast<std::size_t>(k + 1)], upper_);
}

Index Partition::bin_of(double x) const {
  const double slack = kSnap * std::max({1.0, std::abs(lower_), std::abs(upper_)});
  const auto it = std::upper_bound(cuts_.begin(), cuts_.end(), x + slack);
  const Index k = static_cast<Index>(it - cuts_.begin()) - 1;
  return std::clamp<Index>(k, 0, bin_count() - 1);
}

Partition make_partition(double lower, double upper, double epsilon, RepresentativeRule rule,
                         const std::vector<double>& custom) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw LinalgError("make_partition: epsilon must be positive, got " + std::to_string(epsilon));
  if (!(upper > lower) || !std::isfinite(lower) || !std::isfinite(upper))
    throw LinalgError("make_partition: need finite lower < upper");
  Partition p;
  p.lower_ = lower;
  p.upper_ = upper;
  p.epsilon_ = epsilon;
  const Index bins = bin_total(lower, upper, epsilon);
  for (Index k = 0; k <= bins; ++k) p.cuts_.push_back(lower + static_cast<double>(k) * epsilon);

  if (rule == RepresentativeRule::Custom && static_cast<Index>(custom.size()) != bins)
    throw LinalgError("make_partition: " + std::to_string(custom.size()) +
                      " custom representatives for " + std::to_string(bins) + " bins");
  for (Index k = 0; k < bins; ++k) {
    const double lo = p.bin_lower(k);
    const double hi = p.bin_upper(k);
    double rep = 0.0;
    switch (rule) {
      case RepresentativeRule::Midpoint: rep = 0.5 * (lo + hi); break;
      case RepresentativeRule::Left: rep = lo; break;
      case RepresentativeRule::Custom: rep = custom[static_cast<std::size_t>(k)]; break;
    }
    if (!(rep >= lo && rep < hi))
      throw LinalgError("make_partition: representative " + std::to_string(rep) +
                        " outside bin " + std::to_string(k) + " [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + ")");
    p.representatives_.push_back(rep);
  }
  return p;
}

HermitianOperator approximant(const ContinuumProxy& proxy, const Partition& partition) {
  const ComplexMatrix& a = proxy.op.matrix();
  const auto map = [&](double lambda) {
    return partition.representatives()[static_cast<std::size_t>(partition.bin_of(lambda))];
  };
  if (is_diagonal(a)) {
    RealVector f(a.rows());
    for (Index i = 0; i < a.rows(); ++i) f(i) = map(a(i, i).real());
    return HermitianOperator::diagonal(f);
  }
  const Eigensystem es = eigensystem(proxy.op);
  const Index d = es.values.size();
  RealVector f(d);
  // Near-degenerate eigenvalues share a bin, as they share a spectral projector.
  Index begin = 0;
  while (begin < d) {
    Index end = begin + 1;
    while (end < d && es.values(end) - es.values(end - 1) < tol::kDegeneracy) ++end;
    f.segment(begin, end - begin).setConstant(map(es.values.segment(begin, end - begin).mean()));
    begin = end;
  }
  const ComplexMatrix fa = es.vectors * f.cast<Complex>().asDiagonal() * es.vectors.adjoint();
  return HermitianOperator(0.5 * (fa + fa.adjoint()));
}

QInstrument rationalize(const Partition& partition, std::int64_t max_denominator) {
  if (max_denominator < 1) throw LinalgError("rationalize: max_denominator must be >= 1");
  QInstrument inst;
  for (Index k = 0; k < partition.bin_count(); ++k) {
    const double dlo = partition.bin_lower(k);
    const double dhi = partition.bin_upper(k);
    const double drep = partition.representatives()[static_cast<std::size_t>(k)];
    const Exact lo(dlo);
    const Exact hi(dhi);
    const Exact rep(drep);
    const Exact mid = (lo + hi) / 2;

    // ceil(x * q), exactly; doubles decide unless x * q is within rounding of an integer.
    const auto ceil_times = [](double x, const Exact& ex, std::int64_t q) {
      const double y = x * static_cast<double>(q);
      const double c = std::ceil(y);
      if (c - y > kNearInteger * std::max(1.0, std::abs(y)) &&
          y - (c - 1.0) > kNearInteger * std::max(1.0, std::abs(y)))
        return static_cast<std::int64_t>(c);
      return ceil_exact(ex * q);
    };
    // -1, 0, +1 for a <=> b on |p/q - rep| then |p/q - mid|.
    const auto compare = [&](std::int64_t p1, std::int64_t q1, std::int64_t p2, std::int64_t q2) {
      const double x1 = static_cast<double>(p1) / static_cast<double>(q1);
      const double x2 = static_cast<double>(p2) / static_cast<double>(q2);
      const double d1 = std::abs(x1 - drep), d2 = std::abs(x2 - drep);
      const double slack = kNearInteger * std::max({1.0, std::abs(x1), std::abs(x2), std::abs(drep)});
      if (d1 + slack < d2) return -1;
      if (d2 + slack < d1) return 1;
      const Exact e1(p1, q1), e2(p2, q2);
      const Exact a1 = abs(e1 - rep), a2 = abs(e2 - rep);
      if (a1 != a2) return a1 < a2 ? -1 : 1;
      const Exact m1 = abs(e1 - mid), m2 = abs(e2 - mid);
      if (m1 != m2) return m1 < m2 ? -1 : 1;
      return 0;
    };

    std::optional<Rational> best;
    for (std::int64_t q = 1; q <= max_denominator; ++q) {
      // Numerators with lo <= p/q < hi.
      const std::int64_t p_min = ceil_times(dlo, lo, q);
      const std::int64_t p_max = ceil_times(dhi, hi, q) - 1;
      if (p_min > p_max) continue;
      const std::int64_t near = ceil_times(drep, rep, q);
      for (std::int64_t p : {near - 1, near}) {
        p = std::clamp(p, p_min, p_max);
        // Strictly better only: on a full tie the smaller denominator (seen first) stays.
        if (!best || compare(p, q, best->numerator(), best->denominator()) < 0) best = Rational(p, q);
      }
    }
    if (!best)
      throw LinalgError("rationalize: no fraction with denominator <= " +
                        std::to_string(max_denominator) + " lies in bin " + std::to_string(k) +
                        " [" + std::to_string(dlo) + ", " + std::to_string(dhi) +
                        "); increase max_denominator to at least " +
                        std::to_string(static_cast<std::int64_t>(std::ceil(1.0 / (dhi - dlo)))));
    inst.readouts.push_back(*best);
  }
  return inst;
}

TradeoffReport tradeoff_report(double lower, double upper, double epsilon, double apparatus_size) {
  if (!(epsilon > 0.0)) throw LinalgError("tradeoff_report: epsilon must be positive");
  if (!(apparatus_size >= 1.0)) throw LinalgError("tradeoff_report: N must be >= 1");
  if (!(upper > lower)) throw LinalgError("tradeoff_report: need upper > lower");
  TradeoffReport rep;
  rep.levels = bin_total(lower, upper, epsilon);
  const auto n = static_cast<double>(rep.levels);
  rep.risk_exponent = apparatus_size / (n * n);
  rep.reliable = n <= std::sqrt(apparatus_size) / 3.0;
  return rep;
}

LMeasurableOperator l_measurable(const RealVector& values, std::vector<Projector> projectors) {
  if (values.size() != static_cast<Index>(projectors.size()) || projectors.empty())
    throw LinalgError("l_measurable: need one value per projector");
  const Index d = projectors.front().dim();
  ComplexMatrix op = ComplexMatrix::Zero(d, d);
  for (std::size_t i = 0; i < projectors.size(); ++i) {
    const Projector& e = projectors[i];
    if (e.dim() != d) throw LinalgError("l_measurable: projector dimensions differ");
    if (e.rank() != 1) throw LinalgError("l_measurable: projectors must have rank 1");
    for (std::size_t j = 0; j < i; ++j)
      if ((e.matrix() * projectors[j].matrix()).cwiseAbs().maxCoeff() > tol::kAlgebraic)
        throw LinalgError("l_measurable: projectors " + std::to_string(j) + " and " +
                          std::to_string(i) + " are not orthogonal");
    op += values(static_cast<Index>(i)) * e.matrix();
  }
  return {values, std::move(projectors), HermitianOperator(0.5 * (op + op.adjoint()))};
}

std::vector<Projector> basis_projectors(const ComplexMatrix& unitary) {
  std::vector<Projector> out;
  for (Index j = 0; j < unitary.cols(); ++j) out.push_back(Projector::onto_columns(unitary.col(j)));
  return out;
}

ComplexMatrix fourier_basis(Index dim) {
  ComplexMatrix f(dim, dim);
  const double norm = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Index j = 0; j < dim; ++j)
    for (Index k = 0; k < dim; ++k)
      f(j, k) = std::polar(norm, 2.0 * std::numbers::pi * static_cast<double>(j * k) /
                                     static_cast<double>(dim));
  return f;
}

}  // namespace qmeas
