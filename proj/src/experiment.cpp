#include "qmeas/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include "qmeas/approximant.hpp"
#include "qmeas/coleman_hepp.hpp"
#include "qmeas/parallel.hpp"
#include "qmeas/random.hpp"
#include "qmeas/sewell.hpp"

namespace qmeas {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config reading
// ---------------------------------------------------------------------------

/// Reads one JSON object, remembering which keys were consumed so that
/// leftovers (typos) can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T, typename Reader>
  std::optional<T> opt(const std::string& key, Reader read) {
    const json* v = get(key);
    if (v == nullptr || v->is_null()) return std::nullopt;
    return read(*v, path(key));
  }

  template <typename T, typename Reader>
  T req(const std::string& key, Reader read) {
    auto v = opt<T>(key, read);
    if (!v) throw ConfigError(path(key), "required field is missing");
    return *v;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw ConfigError(path(key), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double read_double(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where, "must be finite");
  return x;
}

Index read_index(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
  return v.get<Index>();
}

std::int64_t read_int64(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
  return v.get<std::int64_t>();
}

std::uint64_t read_uint64(const json& v, const std::string& where) {
  if (!v.is_number_unsigned()) throw ConfigError(where, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string read_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where, "expected a string");
  return v.get<std::string>();
}

std::vector<double> read_double_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(read_double(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

/// Either [a, b, ...] or {"start": a, "stop": b, "step": c} (stop inclusive).
std::vector<Index> read_index_list(const json& v, const std::string& where) {
  std::vector<Index> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(read_index(v[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }
  Section range(v, where);
  const Index start = range.req<Index>("start", read_index);
  const Index stop = range.req<Index>("stop", read_index);
  const Index step = range.opt<Index>("step", read_index).value_or(1);
  range.finish();
  if (step < 1) throw ConfigError(where + ".step", "must be >= 1");
  for (Index x = start; x <= stop; x += step) out.push_back(x);
  return out;
}

std::vector<Complex> read_complex_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where, "expected an array");
  std::vector<Complex> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (v[i].is_number()) {
      out.emplace_back(read_double(v[i], at), 0.0);
    } else if (v[i].is_array() && v[i].size() == 2) {
      out.emplace_back(read_double(v[i][0], at + "[0]"), read_double(v[i][1], at + "[1]"));
    } else {
      throw ConfigError(at, "expected a number or a [re, im] pair");
    }
  }
  return out;
}

void require(bool ok, const std::string& where, const std::string& what) {
  if (!ok) throw ConfigError(where, what);
}

template <typename T>
void require_one_of(const std::string& value, std::initializer_list<T> allowed,
                    const std::string& where) {
  for (const auto& a : allowed)
    if (value == a) return;
  std::string list;
  for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  throw ConfigError(where, "'" + value + "' is not one of: " + list);
}

SimulateParams parse_simulate(const json& j) {
  Section s(j, "simulate");
  SimulateParams p;
  p.model = s.opt<std::string>("model", read_string).value_or(p.model);
  require_one_of(p.model, {"random", "spin-chain", "ideal"}, s.path("model"));
  p.n = s.opt<Index>("n", read_index).value_or(p.n);
  p.dim_k = s.opt<Index>("dim_k", read_index).value_or(p.dim_k);
  p.n_spins = s.opt<Index>("n_spins", read_index).value_or(p.n_spins);
  p.angles = s.opt<std::vector<double>>("angles", read_double_list).value_or(p.angles);
  p.energies = s.opt<std::vector<double>>("energies", read_double_list).value_or(p.energies);
  p.amplitudes = s.opt<std::vector<Complex>>("amplitudes", read_complex_list).value_or(p.amplitudes);
  p.times = s.req<std::vector<double>>("times", read_double_list);
  p.observable = s.opt<std::string>("observable", read_string).value_or(p.observable);
  require_one_of(p.observable, {"sigma_x", "random"}, s.path("observable"));

  if (p.model == "spin-chain") {
    if (p.angles.empty()) p.angles = {0.0, 1.0};
    p.n = static_cast<Index>(p.angles.size());
    require(p.n_spins >= 1 && p.n_spins <= 12, s.path("n_spins"), "must be in 1..12");
  }
  require(p.n >= 2, s.path("n"), "need at least two system levels");
  const Index default_nu = p.n;
  p.nu = s.opt<Index>("nu", read_index).value_or(default_nu);
  s.finish();

  require(!p.times.empty(), s.path("times"), "must list at least one time");
  require(p.nu >= 1, s.path("nu"), "must be >= 1");
  if (p.model == "random") {
    require(p.dim_k >= 1 && p.dim_k <= 4096, s.path("dim_k"), "must be in 1..4096");
    require(p.nu <= p.dim_k, s.path("nu"), "cannot exceed dim_k");
  }
  if (p.model == "ideal") require(p.nu == p.n, s.path("nu"), "an ideal instrument needs nu = n");
  if (p.model == "spin-chain") {
    require(p.nu <= p.n_spins + 1, s.path("nu"), "more bands than magnetisation values");
    require(p.energies.empty() || static_cast<Index>(p.energies.size()) == p.n,
            s.path("energies"), "need one energy per level");
  }
  require(p.amplitudes.empty() || static_cast<Index>(p.amplitudes.size()) == p.n,
          s.path("amplitudes"), "need one amplitude per level");
  if (!p.amplitudes.empty()) {
    double norm = 0;
    for (const Complex& c : p.amplitudes) norm += std::norm(c);
    require(std::abs(norm - 1.0) <= 1e-12, s.path("amplitudes"), "must be normalised");
  }
  return p;
}

ChSweepParams parse_ch_sweep(const json& j) {
  Section s(j, "ch_sweep");
  ChSweepParams p;
  p.n_values = s.req<std::vector<Index>>("n_values", read_index_list);
  p.angles = s.opt<std::vector<double>>("angles", read_double_list).value_or(p.angles);
  p.up_probability = s.opt<double>("up_probability", read_double);
  p.t_star = s.opt<double>("t_star", read_double);
  p.bands = s.opt<Index>("bands", read_index);
  s.finish();
  require(!p.n_values.empty(), s.path("n_values"), "must list at least one N");
  for (Index n : p.n_values) require(n >= 1, s.path("n_values"), "every N must be >= 1");
  require(p.angles.size() >= 2, s.path("angles"), "need at least two levels");
  require(!(p.up_probability && p.t_star), s.path("t_star"),
          "give either t_star or up_probability, not both");
  if (p.up_probability)
    require(*p.up_probability > 0.0 && *p.up_probability < 1.0, s.path("up_probability"),
            "must lie in (0, 1)");
  if (!p.t_star && !p.up_probability) p.up_probability = 0.9;
  if (p.bands) require(*p.bands >= 1, s.path("bands"), "must be >= 1");
  return p;
}

ReliabilityParams parse_reliability(const json& j) {
  Section s(j, "reliability");
  ReliabilityParams p;
  const json* grid = s.get("grid");
  require(grid != nullptr && grid->is_array() && !grid->empty(), s.path("grid"),
          "expected a nonempty array of [N, n] pairs");
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const std::string at = s.path("grid") + "[" + std::to_string(i) + "]";
    const json& e = (*grid)[i];
    require(e.is_array() && e.size() == 2, at, "expected an [N, n] pair");
    const Index big_n = read_index(e[0], at + "[0]");
    const Index levels = read_index(e[1], at + "[1]");
    require(big_n >= 1, at + "[0]", "N must be >= 1");
    require(levels >= 1 && levels <= big_n + 1, at + "[1]", "n must be in 1..N+1");
    p.grid.emplace_back(big_n, levels);
  }
  p.target_band = s.opt<Index>("target_band", read_index);
  s.finish();
  if (p.target_band)
    for (const auto& [big_n, levels] : p.grid)
      require(*p.target_band >= 0 && *p.target_band < levels, s.path("target_band"),
              "must be a valid band for every grid point");
  return p;
}

ApproximantParams parse_approximant(const json& j) {
  Section s(j, "approximant");
  ApproximantParams p;
  if (const json* range = s.get("range")) {
    const auto r = read_double_list(*range, s.path("range"));
    require(r.size() == 2, s.path("range"), "expected [lower, upper]");
    p.lower = r[0];
    p.upper = r[1];
  }
  p.epsilon = s.req<double>("epsilon", read_double);
  p.rule = s.opt<std::string>("rule", read_string).value_or(p.rule);
  require_one_of(p.rule, {"midpoint", "left", "custom"}, s.path("rule"));
  p.representatives =
      s.opt<std::vector<double>>("representatives", read_double_list).value_or(p.representatives);
  p.proxy = s.opt<std::string>("proxy", read_string).value_or(p.proxy);
  require_one_of(p.proxy, {"position", "random"}, s.path("proxy"));
  p.grid_dim = s.opt<Index>("grid_dim", read_index).value_or(p.grid_dim);
  p.max_denominator = s.opt<std::int64_t>("max_denominator", read_int64).value_or(p.max_denominator);
  p.apparatus_size = s.opt<double>("apparatus_size", read_double).value_or(p.apparatus_size);
  s.finish();
  require(p.upper > p.lower, s.path("range"), "need lower < upper");
  require(p.epsilon > 0.0, s.path("epsilon"), "must be positive");
  require(p.grid_dim >= 1 && p.grid_dim <= 4096, s.path("grid_dim"), "must be in 1..4096");
  require(p.max_denominator >= 1, s.path("max_denominator"), "must be >= 1");
  require(p.apparatus_size >= 1.0, s.path("apparatus_size"), "must be >= 1");
  require((p.rule == "custom") == !p.representatives.empty(), s.path("representatives"),
          "required exactly when rule is 'custom'");
  return p;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

RepresentativeRule rule_of(const std::string& name) {
  if (name == "left") return RepresentativeRule::Left;
  if (name == "custom") return RepresentativeRule::Custom;
  return RepresentativeRule::Midpoint;
}

// Largest |eigenvalue| of a hermitian matrix.
double hermitian_norm(const ComplexMatrix& m) {
  if (m.isDiagonal(0.0)) return m.diagonal().cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

json complex_json(Complex c) { return json::array({c.real(), c.imag()}); }

std::string label(Index i) { return std::to_string(i + 1); }

/// Everything needed to evaluate one simulate configuration.
struct SimulateSetup {
  std::optional<CoupledModel> model;
  std::optional<SpinChainApparatus> chain;
  std::optional<MagnetizationBands> bands;
  std::optional<HermitianOperator> observable;
};

ComplexVector amplitudes_or_uniform(const SimulateParams& p) {
  ComplexVector c(p.n);
  if (p.amplitudes.empty()) {
    c.setConstant(1.0 / std::sqrt(static_cast<double>(p.n)));
  } else {
    for (Index r = 0; r < p.n; ++r) c(r) = p.amplitudes[static_cast<std::size_t>(r)];
  }
  return c;
}

SimulateSetup build_simulation(const SimulateParams& p, std::uint64_t seed) {
  SimulateSetup setup;
  Rng rng(seed);
  if (p.model == "random") {
    setup.model = random_model({p.n, p.dim_k, p.nu}, rng);
    if (!p.amplitudes.empty() || !p.energies.empty()) {
      // Overrides keep the random apparatus but replace the system data.
      RealVector eps = setup.model->system().energies();
      if (!p.energies.empty()) eps = Eigen::Map<const RealVector>(p.energies.data(), p.n);
      ComplexVector c = p.amplitudes.empty() ? setup.model->system().amplitudes()
                                             : amplitudes_or_uniform(p);
      setup.model = build_coupled(SystemModel(eps, c), setup.model->apparatus(),
                                  setup.model->couplings());
    }
  } else if (p.model == "spin-chain") {
    SpinChainApparatus app;
    app.n_spins = p.n_spins;
    app.rotation_angles = Eigen::Map<const RealVector>(p.angles.data(), p.n);
    if (!p.energies.empty()) app.level_energies = Eigen::Map<const RealVector>(p.energies.data(), p.n);
    setup.bands = MagnetizationBands::equal_width(p.n_spins, p.nu);
    setup.model = dense_spin_chain_model(app, *setup.bands, amplitudes_or_uniform(p));
    setup.chain = app;
  } else {
    // Ideal instrument: the apparatus only carries the amplitudes; F is synthetic.
    RealVector eps = p.energies.empty() ? RealVector::Zero(p.n)
                                        : RealVector(Eigen::Map<const RealVector>(p.energies.data(), p.n));
    std::vector<Projector> pis;
    for (Index a = 0; a < p.n; ++a) pis.push_back(Projector::coordinate(p.n, {a}));
    ComplexVector ground = ComplexVector::Zero(p.n);
    ground(0) = 1.0;
    ApparatusModel app(HermitianOperator::zero(p.n), DensityMatrix::pure(ground), std::move(pis));
    std::vector<HermitianOperator> v(static_cast<std::size_t>(p.n), HermitianOperator::zero(p.n));
    setup.model = build_coupled(SystemModel(eps, amplitudes_or_uniform(p)), std::move(app), std::move(v));
  }
  if (p.observable == "random") {
    setup.observable = random_hermitian(p.n, rng);
  } else {
    ComplexMatrix sx = ComplexMatrix::Zero(p.n, p.n);
    sx(0, 1) = sx(1, 0) = 1.0;
    setup.observable = HermitianOperator(sx);
  }
  return setup;
}

FTensor ideal_f(Index n, double t) {
  FTensor f(t, n, n);
  for (Index r = 0; r < n; ++r) f(r, r, r) = 1.0;
  return f;
}

void inject_fault(FTensor& f, const std::string& fault) {
  if (fault == "sum-rule") {
    for (Index alpha = 0; alpha < f.nu(); ++alpha) f(0, 0, alpha) *= 0.9;
  } else if (fault == "conjugate-symmetry" && f.n() >= 2) {
    f(0, 1, 0) += Complex{0.0, 0.05};
  }
}

FTensor simulate_f(const SimulateParams& p, const SimulateSetup& setup, double t) {
  if (p.model == "ideal") return ideal_f(p.n, t);
  return f_coefficients(*setup.model, t);
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

SweepResult run_simulate(const ExperimentConfig& cfg, const SimulateParams& p, unsigned threads) {
  const SimulateSetup setup = build_simulation(p, cfg.seed);
  const CoupledModel& model = *setup.model;
  const Index nu = model.apparatus().macrostate_count();

  std::vector<std::string> cols{"t"};
  for (Index a = 0; a < nu; ++a) cols.push_back("w_" + label(a));
  for (const char* c : {"expectation", "offdiag_max", "diag_deficit", "bijective",
                        "collapse_residual", "projection_residual", "born_residual"})
    cols.emplace_back(c);
  for (Index r = 0; r < p.n; ++r)
    for (Index s = 0; s < p.n; ++s)
      for (Index a = 0; a < nu; ++a) {
        const std::string base = "F_" + label(r) + "_" + label(s) + "_" + label(a);
        cols.push_back(base + "_re");
        cols.push_back(base + "_im");
      }
  SweepResult result(cols);

  std::vector<std::optional<std::vector<Cell>>> rows(p.times.size());
  std::vector<std::string> errors(p.times.size());
  parallel_for(p.times.size(), threads, [&](std::size_t i) {
    const double t = p.times[i];
    try {
      const FTensor f = simulate_f(p, setup, t);
      std::vector<Cell> row{t};
      const RealVector w = pointer_probabilities(model, f);
      for (Index a = 0; a < nu; ++a) row.emplace_back(w(a));
      row.emplace_back(expectation(model, f, *setup.observable));
      const double nan = std::numeric_limits<double>::quiet_NaN();
      std::optional<PointerMap> gamma;
      try {
        gamma = infer_pointer_map(f);
      } catch (const MeasurementError&) {
      }
      double offdiag = 0;
      for (Index a = 0; a < nu; ++a)
        for (Index r = 0; r < p.n; ++r)
          for (Index s = 0; s < p.n; ++s)
            if (r != s) offdiag = std::max(offdiag, std::abs(f(r, s, a)));
      row.emplace_back(offdiag);
      row.emplace_back(gamma ? ideality_report(f, *gamma).diag_deficit : nan);
      row.emplace_back(static_cast<std::int64_t>(gamma && gamma->bijective));
      double collapsed = 0;
      for (Index r = 0; r < p.n; ++r)
        collapsed += model.system().weights()(r) * setup.observable->matrix()(r, r).real();
      if (gamma && gamma->bijective) {
        const CollapseReport c = collapse_check(model, f, *setup.observable, *gamma);
        row.insert(row.end(), {c.collapse_residual, c.projection_residual, c.born_residual});
      } else {
        row.insert(row.end(),
                   {std::abs(expectation(model, f, *setup.observable) - collapsed), nan, nan});
      }
      for (Index r = 0; r < p.n; ++r)
        for (Index s = 0; s < p.n; ++s)
          for (Index a = 0; a < nu; ++a) {
            row.emplace_back(f(r, s, a).real());
            row.emplace_back(f(r, s, a).imag());
          }
      rows[i] = std::move(row);
    } catch (const std::exception& e) {
      errors[i] = "t = " + format_double(t) + ": " + e.what();
    }
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]) result.add_row(std::move(*rows[i]));
    if (!errors[i].empty()) result.errors.push_back(errors[i]);
  }
  result.summary = {{"model", p.model},
                    {"n", p.n},
                    {"dim_k", model.apparatus().dim()},
                    {"nu", nu},
                    {"times", p.times.size()}};
  return result;
}

double ch_t_star(const ChSweepParams& p) {
  if (p.t_star) return *p.t_star;
  double theta = 0;
  for (double a : p.angles)
    if (std::abs(a) > std::abs(theta)) theta = a;
  return readout_time(theta, *p.up_probability);
}

SweepResult run_ch_sweep(const ChSweepParams& p, unsigned threads) {
  SweepResult result({"N", "eta", "log_eta", "fit_eta"});
  const double t_star = ch_t_star(p);
  const RealVector angles = Eigen::Map<const RealVector>(p.angles.data(), static_cast<Index>(p.angles.size()));
  const Index levels = angles.size();
  result.summary = {{"t_star", t_star}, {"levels", levels}};
  std::vector<EtaPoint> points;
  try {
    points = eta_sweep(p.n_values, angles, t_star, p.bands, threads);
  } catch (const std::exception& e) {
    result.errors.push_back(e.what());
    return result;
  }
  std::optional<ScalingFit> fit;
  try {
    fit = fit_exponential(points, levels);
    result.summary["fit"] = {{"c_hat", fit->c_hat},
                             {"intercept", fit->intercept},
                             {"r_squared", fit->r_squared},
                             {"used_points", fit->used_points},
                             {"warnings", fit->warnings}};
  } catch (const std::exception& e) {
    result.errors.push_back(e.what());
  }
  for (const EtaPoint& pt : points) {
    const double fitted =
        fit ? std::exp(fit->intercept - fit->c_hat * static_cast<double>(pt.n_spins) /
                                            static_cast<double>(levels))
            : std::numeric_limits<double>::quiet_NaN();
    result.add_row({static_cast<std::int64_t>(pt.n_spins), pt.eta,
                    pt.eta > 0 ? std::log(pt.eta) : -std::numeric_limits<double>::infinity(),
                    fitted});
  }
  return result;
}

SweepResult run_reliability(const ReliabilityParams& p) {
  SweepResult result({"N", "n", "target_band", "up_probability", "misread_probability",
                      "risk_exponent"});
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0;
  for (const auto& [big_n, levels] : p.grid) {
    const Index target = p.target_band.value_or(levels / 2);
    const double prob = reliability_probe(big_n, levels, target);
    lo = std::min(lo, prob);
    hi = std::max(hi, prob);
    result.add_row({static_cast<std::int64_t>(big_n), static_cast<std::int64_t>(levels),
                    static_cast<std::int64_t>(target),
                    (static_cast<double>(target) + 0.5) / static_cast<double>(levels), prob,
                    static_cast<double>(big_n) / static_cast<double>(levels * levels)});
  }
  result.summary = {{"min_misread", lo},
                    {"max_misread", hi},
                    {"spread_factor", lo > 0 ? hi / lo : std::numeric_limits<double>::infinity()}};
  return result;
}

struct ApproximantRun {
  ContinuumProxy proxy;
  Partition partition;
  HermitianOperator fa;
};

ApproximantRun build_approximant(const ApproximantParams& p, std::uint64_t seed) {
  std::optional<ContinuumProxy> proxy;
  if (p.proxy == "position") {
    proxy = ContinuumProxy::position_grid(p.grid_dim, p.lower, p.upper);
  } else {
    Rng rng(seed);
    const HermitianOperator h = random_hermitian(p.grid_dim, rng);
    const double norm = hermitian_norm(h.matrix());
    const double mid = 0.5 * (p.lower + p.upper);
    const double half = 0.5 * (p.upper - p.lower);
    ComplexMatrix a = h.matrix() * (half / norm);
    a.diagonal().array() += mid;
    proxy = ContinuumProxy::make(HermitianOperator(0.5 * (a + a.adjoint())), p.lower, p.upper);
  }
  Partition part = make_partition(p.lower, p.upper, p.epsilon, rule_of(p.rule), p.representatives);
  HermitianOperator fa = approximant(*proxy, part);
  return {std::move(*proxy), std::move(part), std::move(fa)};
}

json partition_json(const Partition& part, const std::string& rule) {
  return {{"range", {part.lower(), part.upper()}},
          {"epsilon", part.epsilon()},
          {"rule", rule},
          {"cuts", part.cuts()},
          {"representatives", part.representatives()}};
}

SweepResult run_approximant(const ExperimentConfig& cfg, const ApproximantParams& p) {
  SweepResult result({"bin", "lower", "upper", "representative", "readout", "readout_value",
                      "eigenvalue_count"});
  const ApproximantRun a = build_approximant(p, cfg.seed);
  const ComplexMatrix& am = a.proxy.op.matrix();
  const ComplexMatrix& fm = a.fa.matrix();
  const double error = hermitian_norm(am - fm);
  const ComplexMatrix comm = am * fm - fm * am;
  const double commutator = hermitian_norm(Complex{0, 1} * comm);

  std::vector<std::int64_t> counts(static_cast<std::size_t>(a.partition.bin_count()), 0);
  const RealVector spectrum = am.isDiagonal(0.0) ? RealVector(am.diagonal().real())
                                                 : RealVector(eigensystem(a.proxy.op).values);
  for (Index i = 0; i < spectrum.size(); ++i) ++counts[static_cast<std::size_t>(a.partition.bin_of(spectrum(i)))];

  std::optional<QInstrument> inst;
  try {
    inst = rationalize(a.partition, p.max_denominator);
  } catch (const std::exception& e) {
    result.errors.push_back(e.what());
  }
  json readouts = json::array();
  for (Index k = 0; k < a.partition.bin_count(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    std::string text = "";
    double value = std::numeric_limits<double>::quiet_NaN();
    if (inst) {
      text = to_string(inst->readouts[ks]);
      value = boost::rational_cast<double>(inst->readouts[ks]);
      readouts.push_back(text);
    }
    result.add_row({static_cast<std::int64_t>(k), a.partition.bin_lower(k), a.partition.bin_upper(k),
                    a.partition.representatives()[ks], text, value, counts[ks]});
  }
  const TradeoffReport trade = tradeoff_report(p.lower, p.upper, p.epsilon, p.apparatus_size);
  result.summary = {{"grid_dim", a.proxy.grid_dim()},
                    {"proxy", p.proxy},
                    {"error_norm", error},
                    {"commutator_norm", commutator},
                    {"partition", partition_json(a.partition, p.rule)},
                    {"readouts", readouts},
                    {"tradeoff",
                     {{"levels", trade.levels},
                      {"reliable", trade.reliable},
                      {"risk_exponent", trade.risk_exponent}}}};
  return result;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

void add_check(VerifyReport& rep, std::string name, bool ok, std::string detail) {
  rep.checks.push_back({std::move(name), ok, std::move(detail)});
}

std::string worst(double x) { return "worst " + format_double(x); }

void verify_simulate(VerifyReport& rep, const ExperimentConfig& cfg, const SimulateParams& p,
                     unsigned threads) {
  constexpr double kF = 1e-10;
  constexpr double kOracle = 1e-9;
  const SimulateSetup setup = build_simulation(p, cfg.seed);
  const CoupledModel& model = *setup.model;
  const HermitianOperator& a = *setup.observable;
  const bool faulted = cfg.verify.fault != "none";

  std::vector<FTensor> fs;
  fs.reserve(p.times.size());
  for (double t : p.times) fs.emplace_back(t, 1, 1);
  parallel_for(p.times.size(), threads, [&](std::size_t i) {
    fs[i] = simulate_f(p, setup, p.times[i]);
    inject_fault(fs[i], cfg.verify.fault);
  });

  FConditionReport total;
  double w_norm = 0, cond_consistency = 0, decoherence_excess = 0;
  double ideal_collapse = 0;
  bool any_bijective = false;
  for (const FTensor& f : fs) {
    const FConditionReport c = check_f_conditions(f);
    total.conjugate_symmetry = std::max(total.conjugate_symmetry, c.conjugate_symmetry);
    total.diagonal_range = std::max(total.diagonal_range, c.diagonal_range);
    total.sum_rule = std::max(total.sum_rule, c.sum_rule);
    total.positivity = std::max(total.positivity, c.positivity);
    total.cauchy_schwarz = std::max(total.cauchy_schwarz, c.cauchy_schwarz);
    const RealVector w = pointer_probabilities(model, f);
    w_norm = std::max(w_norm, std::abs(w.sum() - 1.0));
    const double e = expectation(model, f, a);
    double mix = 0;
    for (Index alpha = 0; alpha < f.nu(); ++alpha)
      if (w(alpha) > 1e-12) mix += w(alpha) * conditional_expectation(model, f, a, alpha);
    cond_consistency = std::max(cond_consistency, std::abs(mix - e));
    try {
      const PointerMap gamma = infer_pointer_map(f);
      if (gamma.bijective) {
        any_bijective = true;
        const IdealityReport ideal = ideality_report(f, gamma);
        decoherence_excess = std::max(decoherence_excess,
                                      ideal.offdiag_max - std::sqrt(2.0 * ideal.diag_deficit));
        if (p.model == "ideal") {
          const CollapseReport cr = collapse_check(model, f, a, gamma);
          ideal_collapse = std::max(
              {ideal_collapse, cr.collapse_residual, cr.projection_residual, cr.born_residual});
        }
      }
    } catch (const MeasurementError&) {
    }
  }
  add_check(rep, "F conjugate symmetry", total.conjugate_symmetry <= kF, worst(total.conjugate_symmetry));
  add_check(rep, "F diagonal in [0,1]", total.diagonal_range <= kF, worst(total.diagonal_range));
  add_check(rep, "F sum rule", total.sum_rule <= kF, worst(total.sum_rule));
  add_check(rep, "F positivity", total.positivity <= kF, worst(total.positivity));
  add_check(rep, "F |F_rs|^2 <= F_rr F_ss", total.cauchy_schwarz <= kF, worst(total.cauchy_schwarz));
  add_check(rep, "pointer probabilities sum to 1", w_norm <= kF, worst(w_norm));
  add_check(rep, "sum_a w_a E(A|K_a) = E(A)", cond_consistency <= kOracle, worst(cond_consistency));
  if (any_bijective)
    add_check(rep, "offdiag_max <= sqrt(2 diag_deficit)", decoherence_excess <= kF,
              worst(decoherence_excess));
  if (p.model == "ideal")
    add_check(rep, "ideal instrument collapses (collapse, projection, Born)",
              ideal_collapse <= kF, worst(ideal_collapse));

  if (p.model != "ideal" && !faulted && model.total_dim() <= 64) {
    double diff = 0;
    for (const FTensor& f : fs) {
      const ComplexMatrix state = evolved_state(model, f.time());
      diff = std::max(diff, std::abs(expectation(model, f, a) - dense_expectation(model, state, a)));
      const RealVector w = pointer_probabilities(model, f);
      diff = std::max(diff, (w - dense_pointer_probabilities(model, state)).cwiseAbs().maxCoeff());
      for (Index alpha = 0; alpha < f.nu(); ++alpha)
        if (w(alpha) > 1e-6)
          diff = std::max(diff, std::abs(conditional_expectation(model, f, a, alpha) -
                                         dense_conditional_expectation(model, state, a, alpha)));
    }
    add_check(rep, "F functionals match the evolved full state", diff <= kOracle, worst(diff));
  }
  if (setup.chain && !faulted) {
    double diff = 0;
    for (const FTensor& f : fs) {
      const FTensor g = f_coefficients_structured(*setup.chain, *setup.bands, f.time());
      for (Index r = 0; r < f.n(); ++r)
        for (Index s = 0; s < f.n(); ++s)
          for (Index alpha = 0; alpha < f.nu(); ++alpha)
            diff = std::max(diff, std::abs(f(r, s, alpha) - g(r, s, alpha)));
    }
    add_check(rep, "structured spin chain matches dense", diff <= kF, worst(diff));
  }
}

void verify_ch_sweep(VerifyReport& rep, const ChSweepParams& p, unsigned threads) {
  const SweepResult r = run_ch_sweep(p, threads);
  add_check(rep, "pointer bijective at t*", r.errors.empty(),
            r.errors.empty() ? "ok" : r.errors.front());
  if (!r.errors.empty() || r.rows().empty()) return;
  bool monotone = true;
  for (std::size_t i = 1; i < r.rows().size(); ++i)
    monotone = monotone && std::get<double>(r.rows()[i][1]) <= std::get<double>(r.rows()[i - 1][1]);
  add_check(rep, "eta nonincreasing in N", monotone, monotone ? "ok" : "increase found");
  if (r.summary.contains("fit")) {
    const double c = r.summary["fit"]["c_hat"];
    const double r2 = r.summary["fit"]["r_squared"];
    add_check(rep, "fitted decay constant c > 0", c > 0, "c_hat " + format_double(c));
    add_check(rep, "log eta affine in N (r^2 >= 0.99)", r2 >= 0.99, "r^2 " + format_double(r2));
  }
}

void verify_reliability(VerifyReport& rep, const ReliabilityParams& p) {
  const SweepResult r = run_reliability(p);
  bool in_range = true;
  for (const auto& row : r.rows()) {
    const double x = std::get<double>(row[4]);
    in_range = in_range && x >= 0.0 && x <= 1.0;
  }
  add_check(rep, "misread probabilities in [0,1]", in_range, in_range ? "ok" : "out of range");
  bool same_ratio = true;
  const auto ratio = [](const std::pair<Index, Index>& g) {
    return static_cast<double>(g.first) / static_cast<double>(g.second * g.second);
  };
  for (const auto& g : p.grid) same_ratio = same_ratio && std::abs(ratio(g) - ratio(p.grid.front())) < 1e-12;
  if (same_ratio && p.grid.size() > 1) {
    const double spread = r.summary["spread_factor"];
    add_check(rep, "misread roughly constant at fixed N/n^2 (factor < 3)", spread < 3.0,
              "spread " + format_double(spread));
  }
}

void verify_approximant(VerifyReport& rep, const ExperimentConfig& cfg, const ApproximantParams& p) {
  const ApproximantRun a = build_approximant(p, cfg.seed);
  const ComplexMatrix& am = a.proxy.op.matrix();
  const ComplexMatrix& fm = a.fa.matrix();
  const double error = hermitian_norm(am - fm);
  add_check(rep, "||A - F(A)|| <= epsilon", error <= p.epsilon * (1 + 1e-12),
            "error " + format_double(error));
  const double comm = hermitian_norm(Complex{0, 1} * (am * fm - fm * am));
  add_check(rep, "[A, F(A)] = 0", comm <= 1e-10, worst(comm));
  const RealVector spectrum_fa = fm.isDiagonal(0.0) ? RealVector(fm.diagonal().real())
                                                    : RealVector(eigensystem(a.fa).values);
  double off = 0;
  for (Index i = 0; i < spectrum_fa.size(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (double rep_value : a.partition.representatives())
      nearest = std::min(nearest, std::abs(spectrum_fa(i) - rep_value));
    off = std::max(off, nearest);
  }
  add_check(rep, "spectrum of F(A) within representatives", off <= 1e-10, worst(off));
  const HermitianOperator again = approximant(ContinuumProxy{a.fa, p.lower, p.upper}, a.partition);
  const double idem = (again.matrix() - fm).cwiseAbs().maxCoeff();
  add_check(rep, "F(F(A)) = F(A)", idem <= 1e-12, worst(idem));
  try {
    const QInstrument inst = rationalize(a.partition, p.max_denominator);
    bool in_bin = true;
    for (Index k = 0; k < inst.state_count(); ++k) {
      const double v = boost::rational_cast<double>(inst.readouts[static_cast<std::size_t>(k)]);
      in_bin = in_bin && a.partition.bin_of(v) == k;
    }
    std::vector<Rational> sorted = inst.readouts;
    std::sort(sorted.begin(), sorted.end());
    const bool distinct = std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
    add_check(rep, "rational readouts lie in their bins", in_bin, in_bin ? "ok" : "outside bin");
    add_check(rep, "rational readouts distinct", distinct, distinct ? "ok" : "duplicate readout");
  } catch (const std::exception& e) {
    add_check(rep, "rational readouts lie in their bins", false, e.what());
  }
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::ChSweep: return "ch-sweep";
    case ExperimentKind::Reliability: return "reliability";
    case ExperimentKind::Approximant: return "approximant";
  }
  return "unknown";
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n');
    const auto nl = text.rfind('\n', end == 0 ? 0 : end - 1);
    const std::size_t col = nl == std::string::npos ? end + 1 : end - nl;
    throw ConfigError("line " + std::to_string(line) + ":" + std::to_string(col),
                      "JSON syntax error");
  }
  Section top(root, "");
  ExperimentConfig cfg;
  cfg.schema = top.req<std::string>("schema", read_string);
  if (cfg.schema != kConfigSchema)
    throw ConfigError("schema", "unsupported schema '" + cfg.schema + "', expected '" +
                                    kConfigSchema + "'");
  const std::string kind = top.req<std::string>("experiment", read_string);
  require_one_of(kind, {"simulate", "ch-sweep", "reliability", "approximant"}, "experiment");
  cfg.seed = top.opt<std::uint64_t>("seed", read_uint64).value_or(0);
  if (const json* out = top.get("output")) {
    Section o(*out, "output");
    cfg.output_dir = o.opt<std::string>("dir", read_string).value_or(cfg.output_dir);
    o.finish();
  }
  if (const json* v = top.get("verify")) {
    Section s(*v, "verify");
    cfg.verify.fault = s.opt<std::string>("fault", read_string).value_or("none");
    require_one_of(cfg.verify.fault, {"none", "sum-rule", "conjugate-symmetry"}, "verify.fault");
    s.finish();
  }
  const auto section = [&](const char* key) -> const json& {
    const json* v = top.get(key);
    if (v == nullptr) throw ConfigError(key, "section required for experiment '" + kind + "'");
    return *v;
  };
  if (kind == "simulate") {
    cfg.kind = ExperimentKind::Simulate;
    cfg.params = parse_simulate(section("simulate"));
  } else if (kind == "ch-sweep") {
    cfg.kind = ExperimentKind::ChSweep;
    cfg.params = parse_ch_sweep(section("ch_sweep"));
  } else if (kind == "reliability") {
    cfg.kind = ExperimentKind::Reliability;
    cfg.params = parse_reliability(section("reliability"));
  } else {
    cfg.kind = ExperimentKind::Approximant;
    cfg.params = parse_approximant(section("approximant"));
  }
  top.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

json to_json(const ExperimentConfig& cfg) {
  json j = {{"schema", cfg.schema},
            {"experiment", to_string(cfg.kind)},
            {"seed", cfg.seed},
            {"output", {{"dir", cfg.output_dir}}},
            {"verify", {{"fault", cfg.verify.fault}}}};
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SimulateParams>) {
          json amps = json::array();
          for (const Complex& c : p.amplitudes) amps.push_back(complex_json(c));
          j["simulate"] = {{"model", p.model},       {"n", p.n},
                           {"dim_k", p.dim_k},       {"nu", p.nu},
                           {"n_spins", p.n_spins},   {"angles", p.angles},
                           {"energies", p.energies}, {"amplitudes", amps},
                           {"times", p.times},       {"observable", p.observable}};
        } else if constexpr (std::is_same_v<P, ChSweepParams>) {
          json s = {{"n_values", p.n_values}, {"angles", p.angles}};
          if (p.up_probability) s["up_probability"] = *p.up_probability;
          if (p.t_star) s["t_star"] = *p.t_star;
          if (p.bands) s["bands"] = *p.bands;
          j["ch_sweep"] = s;
        } else if constexpr (std::is_same_v<P, ReliabilityParams>) {
          json grid = json::array();
          for (const auto& [big_n, levels] : p.grid) grid.push_back({big_n, levels});
          json s = {{"grid", grid}};
          if (p.target_band) s["target_band"] = *p.target_band;
          j["reliability"] = s;
        } else {
          j["approximant"] = {{"range", {p.lower, p.upper}},
                              {"epsilon", p.epsilon},
                              {"rule", p.rule},
                              {"representatives", p.representatives},
                              {"proxy", p.proxy},
                              {"grid_dim", p.grid_dim},
                              {"max_denominator", p.max_denominator},
                              {"apparatus_size", p.apparatus_size}};
        }
      },
      cfg.params);
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  std::ostringstream out;
  // Where results go does not change what is computed.
  json j = to_json(config);
  j.erase("output");
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a(j.dump());
  return out.str();
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void SweepResult::add_row(std::vector<Cell> row) {
  if (row.size() != columns_.size())
    throw std::logic_error("SweepResult: row has " + std::to_string(row.size()) + " cells, header has " +
                           std::to_string(columns_.size()));
  rows_.push_back(std::move(row));
}

std::string SweepResult::to_csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + columns_[i];
  out += '\n';
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>) out += format_double(v);
            else if constexpr (std::is_same_v<V, std::int64_t>) out += std::to_string(v);
            else out += v;
          },
          row[i]);
    }
    out += '\n';
  }
  return out;
}

SweepResult run(const ExperimentConfig& config, unsigned threads) {
  return std::visit(
      [&](const auto& p) -> SweepResult {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SimulateParams>) return run_simulate(config, p, threads);
        else if constexpr (std::is_same_v<P, ChSweepParams>) return run_ch_sweep(p, threads);
        else if constexpr (std::is_same_v<P, ReliabilityParams>) return run_reliability(p);
        else return run_approximant(config, p);
      },
      config.params);
}

bool VerifyReport::all_passed() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

VerifyReport verify(const ExperimentConfig& config, unsigned threads) {
  VerifyReport rep;
  try {
    std::visit(
        [&](const auto& p) {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, SimulateParams>) verify_simulate(rep, config, p, threads);
          else if constexpr (std::is_same_v<P, ChSweepParams>) verify_ch_sweep(rep, p, threads);
          else if constexpr (std::is_same_v<P, ReliabilityParams>) verify_reliability(rep, p);
          else verify_approximant(rep, config, p);
        },
        config.params);
  } catch (const std::exception& e) {
    add_check(rep, "evaluation completed", false, e.what());
  }
  return rep;
}

void write_outputs(const SweepResult& result, const ExperimentConfig& config,
                   const std::filesystem::path& dir, double wall_seconds) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "results.csv", std::ios::binary);
    csv << result.to_csv();
    if (!csv) throw std::runtime_error("cannot write " + (dir / "results.csv").string());
  }
  json summary = result.summary;
  summary["metadata"] = {{"experiment", to_string(config.kind)},
                         {"config_hash", config_hash(config)},
                         {"version", QMEAS_VERSION},
                         {"seed", config.seed},
                         {"wall_seconds", wall_seconds},
                         {"rows", result.rows().size()}};
  summary["config"] = to_json(config);
  summary["errors"] = result.errors;
  std::ofstream js(dir / "summary.json", std::ios::binary);
  js << summary.dump(2) << '\n';
  if (!js) throw std::runtime_error("cannot write " + (dir / "summary.json").string());
}

}  // namespace qmeas
