#pragma once

// Finite system + apparatus measurement scheme.
//
// The system lives on C^n with Hamiltonian H = diag(energies) in the
// coordinate basis u_r; the apparatus on C^dim_k with free Hamiltonian K,
// initial state Omega and macrostate projectors Pi_alpha. The coupling does
// not induce transitions between the u_r, so the full Hamiltonian is block
// diagonal:
//
//   H_c = sum_r P(u_r) (x) K_r,   K_r = K + V_r + energies[r] * I.
//
// States evolve as Phi(t) = U(t)^dagger Phi(0) U(t) with U(t) = exp(+i H_c t),
// i.e. the textbook Schrodinger picture with H -> -H in the exponent. All
// measurement statistics are carried by the tensor
//
//   F[r][s][alpha] = Tr(U_r(t)^dagger Omega U_s(t) Pi_alpha),  U_r = exp(i K_r t).
//
// Indices are 0-based throughout.

#include <optional>
#include <stdexcept>
#include <vector>

#include "qmeas/linalg.hpp"

namespace qmeas {

class MeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SystemModel {
 public:
  /// Throws LinalgError unless n >= 2, sizes agree and sum |c_r|^2 = 1.
  SystemModel(RealVector energies, ComplexVector amplitudes);

  Index n() const { return energies_.size(); }
  const RealVector& energies() const { return energies_; }
  const ComplexVector& amplitudes() const { return amplitudes_; }
  /// |c_r|^2
  RealVector weights() const { return amplitudes_.cwiseAbs2(); }
  HermitianOperator hamiltonian() const { return HermitianOperator::diagonal(energies_); }

 private:
  RealVector energies_;
  ComplexVector amplitudes_;
};

class ApparatusModel {
 public:
  /// The macrostate projectors must resolve the identity on the apparatus.
  ApparatusModel(HermitianOperator free_hamiltonian, DensityMatrix initial_state,
                 std::vector<Projector> macrostates);

  Index dim() const { return free_hamiltonian_.dim(); }
  Index macrostate_count() const { return static_cast<Index>(macrostates_.size()); }
  const HermitianOperator& free_hamiltonian() const { return free_hamiltonian_; }
  const DensityMatrix& initial_state() const { return initial_state_; }
  const std::vector<Projector>& macrostates() const { return macrostates_; }

 private:
  HermitianOperator free_hamiltonian_;
  DensityMatrix initial_state_;
  std::vector<Projector> macrostates_;
};

class CoupledModel {
 public:
  const SystemModel& system() const { return system_; }
  const ApparatusModel& apparatus() const { return apparatus_; }
  const std::vector<HermitianOperator>& couplings() const { return couplings_; }
  /// K_r = K + V_r + energies[r] * I
  const std::vector<HermitianOperator>& sector_hamiltonians() const { return sectors_; }
  Index n() const { return system_.n(); }
  Index total_dim() const { return system_.n() * apparatus_.dim(); }

 private:
  friend CoupledModel build_coupled(SystemModel, ApparatusModel, std::vector<HermitianOperator>);
  CoupledModel(SystemModel s, ApparatusModel a, std::vector<HermitianOperator> v,
               std::vector<HermitianOperator> k)
      : system_(std::move(s)), apparatus_(std::move(a)), couplings_(std::move(v)),
        sectors_(std::move(k)) {}

  SystemModel system_;
  ApparatusModel apparatus_;
  std::vector<HermitianOperator> couplings_;
  std::vector<HermitianOperator> sectors_;
};

CoupledModel build_coupled(SystemModel system, ApparatusModel apparatus,
                           std::vector<HermitianOperator> couplings);

/// sum_r P(u_r) (x) K_r
ComplexMatrix coupled_hamiltonian(const CoupledModel& model);
/// H (x) I + I (x) K + sum_r P(u_r) (x) V_r, assembled independently of the sectors.
ComplexMatrix coupled_hamiltonian_sum_form(const CoupledModel& model);

std::vector<UnitaryMatrix> sector_propagators(const CoupledModel& model, double t);

class FTensor {
 public:
  FTensor(double time, Index n, Index nu);

  double time() const { return time_; }
  Index n() const { return n_; }
  Index nu() const { return nu_; }

  Complex& operator()(Index r, Index s, Index alpha) { return values_[offset(r, s, alpha)]; }
  const Complex& operator()(Index r, Index s, Index alpha) const {
    return values_[offset(r, s, alpha)];
  }
  /// The n x n matrix F[.][.][alpha].
  ComplexMatrix slice(Index alpha) const;

 private:
  std::size_t offset(Index r, Index s, Index alpha) const {
    return static_cast<std::size_t>((r * n_ + s) * nu_ + alpha);
  }

  double time_;
  Index n_;
  Index nu_;
  std::vector<Complex> values_;
};

FTensor f_coefficients(const CoupledModel& model, double t);

/// Largest violation of each structural condition on F.
struct FConditionReport {
  double conjugate_symmetry = 0;  // max |F_rs - conj(F_sr)|
  double diagonal_range = 0;      // distance of Re F_rr outside [0,1], or |Im F_rr|
  double sum_rule = 0;            // max_r |sum_alpha F_rr - 1|
  double positivity = 0;          // max(0, -min eigenvalue of F[.][.][alpha])
  double cauchy_schwarz = 0;      // max(0, |F_rs|^2 - F_rr F_ss)

  bool holds(double tolerance) const;
};

FConditionReport check_f_conditions(const FTensor& f);

/// w_alpha = sum_r |c_r|^2 F_rr;alpha
RealVector pointer_probabilities(const CoupledModel& model, const FTensor& f);

/// E(A) for a system observable A (n x n).
double expectation(const CoupledModel& model, const FTensor& f, const HermitianOperator& a);

/// E(A | K_alpha); throws MeasurementError when w_alpha <= 1e-12.
double conditional_expectation(const CoupledModel& model, const FTensor& f,
                               const HermitianOperator& a, Index alpha);

struct PointerMap {
  std::vector<Index> mapping;  // alpha(r)
  bool bijective = false;
};

/// alpha(r) = argmax_alpha Re F_rr;alpha. Throws MeasurementError on a tie.
PointerMap infer_pointer_map(const FTensor& f);

struct IdealityReport {
  double offdiag_max = 0;
  /// max_r (1 - F_rr;alpha(r)), evaluated as the mass outside alpha(r) so that
  /// deficits far below machine epsilon stay resolvable.
  double diag_deficit = 0;
};

IdealityReport ideality_report(const FTensor& f, const PointerMap& gamma);

struct CollapseReport {
  double collapse_residual = 0;
  double projection_residual = 0;
  double born_residual = 0;
};

/// Requires a bijective pointer map.
CollapseReport collapse_check(const CoupledModel& model, const FTensor& f,
                              const HermitianOperator& a, const PointerMap& gamma);

// ---------------------------------------------------------------------------
// Full-state route: evolves Phi(t) on the composite space directly. Used as the
// independent reference for the F-tensor functionals; only sensible for small
// total dimension.
// ---------------------------------------------------------------------------

/// Phi(t) = U^dagger (P(psi) (x) Omega) U,  U = exp(i H_c t), H_c from the sum form.
ComplexMatrix evolved_state(const CoupledModel& model, double t);

double dense_expectation(const CoupledModel& model, const ComplexMatrix& state,
                         const HermitianOperator& a);
RealVector dense_pointer_probabilities(const CoupledModel& model, const ComplexMatrix& state);
double dense_conditional_expectation(const CoupledModel& model, const ComplexMatrix& state,
                                     const HermitianOperator& a, Index alpha);
/// Reads F back out of the (r,s) blocks of Phi(t): block_rs = c_r conj(c_s) Omega_rs.
/// Requires every amplitude to be nonzero.
FTensor f_from_state(const CoupledModel& model, const ComplexMatrix& state, double t);

}  // namespace qmeas
