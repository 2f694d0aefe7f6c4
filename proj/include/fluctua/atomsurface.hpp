#pragma once

#include <array>
#include <cmath>

#include "constants.hpp"
#include "errors.hpp"
#include "modes.hpp"
#include "quadrature.hpp"
#include "scattering.hpp"
#include "spectral.hpp"
#include "thermal.hpp"

namespace fluctua {

/// Ground-state atom at z_A < 0 in front of a slab whose left face is z = 0.
struct AtomConfig {
  PolarizabilityModel alpha = polarizability::Static{};
  double z_A = -1e-6;
  SlabBody slab;

  AtomConfig() = default;
  AtomConfig(PolarizabilityModel a, double z, SlabBody s)
      : alpha(std::move(a)), z_A(z), slab(std::move(s)) {
    if (!(z < 0.0)) throw DomainError("AtomConfig: z_A must be < 0");
  }
};

/// Force on the atom along +z (N); positive pushes the atom toward the slab.
struct AtomForceResult {
  double total = 0.0;
  double term_distance_independent = 0.0;
  double term_propagative = 0.0;
  double term_evanescent = 0.0;
  double eq_part = 0.0;
  double quadrature_error = 0.0;
};

/// Spectral density of the non-equilibrium atom force at one ω, before the
/// prefactor and the ∫dω: Im{ω²α[...]} split into the three terms, plus the
/// inner quadrature error in slot 3.
inline std::array<double, 4> atom_delta2_density(const AtomConfig& cfg,
                                                 const TemperatureTriple& temps, double omega,
                                                 double inner_tol = 1e-5) {
  std::array<double, 4> v{};
  const OccupationDiffs n = OccupationDiffs::at(omega, temps);
  if (n.n12 == 0.0 && n.n13 == 0.0 && n.n23 == 0.0) return v;
  const double c = constants::c;
  const double z = cfg.z_A;
  const double dist = -z;
  const cplx I(0.0, 1.0);
  const cplx alpha = polarizability_at(cfg.alpha, omega);
  const MaterialAt mat = MaterialAt::evaluate(cfg.slab.material, omega);
  const double k0 = omega / c;

  // propagative: [Σ(|ρ|²+|τ|²−1), Re J, Im J], J = Σ(ε̂⁺·ε̂⁻)ρe^{−2ik_z z_A}
  auto fpw = [&](double theta) {
    std::array<double, 3> r{};
    const double st = std::sin(theta), ct = std::cos(theta);
    const double k = k0 * st;
    const double jac = k0 * k0 * st * ct;
    const cplx phase = std::exp(-2.0 * I * (k0 * ct) * z);
    for (Polarization p : kPolarizations) {
      const SpecularAmplitudes a = slab_amplitudes(mat, cfg.slab.thickness, p, omega, k);
      const cplx j = polarization_dot_pm(p, omega, k) * a.rho_minus * phase;
      r[0] += jac * (std::norm(a.rho_minus) + std::norm(a.tau) - 1.0);
      r[1] += jac * j.real();
      r[2] += jac * j.imag();
    }
    return r;
  };
  // evanescent: Σ(ε̂⁺·ε̂⁻)ρ*e^{−2κ|z_A|}, with k dk = κ dκ
  auto few = [&](double kappa) {
    std::array<double, 2> r{};
    const double k = std::sqrt(kappa * kappa + k0 * k0);
    const double decay = std::exp(-2.0 * kappa * dist);
    for (Polarization p : kPolarizations) {
      const SpecularAmplitudes a = slab_amplitudes(mat, cfg.slab.thickness, p, omega, k);
      const cplx j = polarization_dot_pm(p, omega, k) * std::conj(a.rho_minus) * decay;
      r[0] += kappa * j.real();
      r[1] += kappa * j.imag();
    }
    return r;
  };
  QuadratureOptions qo;
  qo.rel_tol = inner_tol;
  qo.relative_to_abs = true;
  qo.return_on_limit = true;
  const auto pw = integrate_adaptive_vec<3>(fpw, 0.0, constants::pi / 2.0, qo);
  VectorQuadratureResult<2> ew{};
  if (n.n12 != 0.0) ew = integrate_adaptive_vec<2>(few, 0.0, detail::kappa_max(dist), qo);
  const cplx J(pw.value[1], pw.value[2]);
  const cplx E(ew.value[0], ew.value[1]);
  const cplx a2 = omega * omega * alpha;
  v[0] = (a2 * (n.n23 * pw.value[0])).imag();
  v[1] = (a2 * (-n.n23 * J + n.n13 * std::conj(J))).imag();
  v[2] = (a2 * (n.n12 * E)).imag();
  v[3] = std::abs(a2) * (std::fabs(n.n23) * pw.error[0] +
                         (std::fabs(n.n23) + std::fabs(n.n13)) * (pw.error[1] + pw.error[2]) +
                         std::fabs(n.n12) * ew.error_estimate);
  return v;
}

/// ħ/(4π²ε₀c²), the prefactor of the atom force integrals.
inline double atom_force_prefactor() {
  return constants::hbar /
         (4.0 * constants::pi * constants::pi * constants::eps0 * constants::c * constants::c);
}

/// Non-equilibrium force on the atom to first order in α:
/// ħ/(4π²ε₀c²) Im{Σ_p ∫dω ω²α [n₂₃∫_pw k(|ρ|²+|τ|²−1)
///   + ∫_pw k(ε̂⁺·ε̂⁻)(n₃₂ρe^{−2ik_z z_A} + n₁₃ρ*e^{2ik_z z_A})
///   + n₁₂∫_ew k(ε̂⁺·ε̂⁻)ρ*e^{−2ik_z z_A}]}.
inline AtomForceResult atom_delta2(const AtomConfig& cfg, const TemperatureTriple& temps,
                                   double tol = 1e-3) {
  if (!(tol > 0.0)) throw DomainError("atom_delta2: tol must be > 0");
  AtomForceResult out;
  if (temps.equilibrium() || temps.max() == 0.0) return out;
  const double omega_max = detail::kOmegaCutoff * constants::kB * temps.max() / constants::hbar;
  auto at_omega = [&](double omega) { return atom_delta2_density(cfg, temps, omega, tol * 1e-2); };

  QuadratureOptions oo;
  oo.rel_tol = tol;
  for (int i = 1; i < 16; ++i) oo.breakpoints.push_back(omega_max * i / 16.0);
  const auto r = integrate_adaptive_vec<4>(at_omega, 0.0, omega_max, oo);
  const double pref = atom_force_prefactor();
  out.term_distance_independent = pref * r.value[0];
  out.term_propagative = pref * r.value[1];
  out.term_evanescent = pref * r.value[2];
  out.total = out.term_distance_independent + out.term_propagative + out.term_evanescent;
  out.quadrature_error = pref * (r.error[0] + r.error[1] + r.error[2] + std::fabs(r.value[3]));
  return out;
}

/// Equilibrium force on the atom at temperature T (N, positive toward the
/// slab), first order in α, on the Matsubara axis:
/// ħ/(4π²ε₀c²)·(2πk_BT/ħ)Σ'_n α(iξ_n)∫_{ξ_n/c}^∞ dκ κe^{−2κ|z_A|}[−ξ_n²ρ_TE + (2κ²c² − ξ_n²)ρ_TM].
inline QuadratureResult atom_eq_force(const AtomConfig& cfg, double T, double tol = 1e-6) {
  const double c = constants::c;
  const double dist = -cfg.z_A;
  auto g = [&](double xi) {
    const double alpha = polarizability_imag_axis(cfg.alpha, xi);
    std::array<double, 1> r{0.0};
    if (alpha == 0.0) return r;
    const MaterialImag mat = MaterialImag::evaluate(cfg.slab.material, xi);
    const double k0 = xi / c;
    auto f = [&](double kappa) {
      const double k = std::sqrt(std::fmax(kappa * kappa - k0 * k0, 0.0));
      const double rte = slab_reflection_imag_axis(mat, cfg.slab.thickness, Polarization::TE, xi, k);
      const double rtm = slab_reflection_imag_axis(mat, cfg.slab.thickness, Polarization::TM, xi, k);
      const double bracket = -xi * xi * rte + (2.0 * kappa * kappa * c * c - xi * xi) * rtm;
      return std::array<double, 1>{kappa * std::exp(-2.0 * kappa * dist) * bracket};
    };
    QuadratureOptions q;
    q.rel_tol = tol * 1e-2;
    r[0] = alpha * integrate_semiinfinite_vec<1>(f, k0, 1.0 / (2.0 * dist), q).value[0];
    return r;
  };
  MatsubaraOptions mo;
  mo.rel_tol = tol * 1e-2;
  mo.xi_scale = c / (2.0 * dist);
  const auto s = matsubara_sum_vec<1>(g, T, mo);
  const double pref = atom_force_prefactor();
  return {pref * s.value[0], pref * s.error_estimate + tol * 1e-2 * std::fabs(pref * s.value[0]),
          s.evaluations};
}

/// ½[F_eq(T1) + F_eq(T2)] + Δ₂(T1, T2, T3).
inline AtomForceResult atom_total_force(const AtomConfig& cfg, const TemperatureTriple& temps,
                                        double tol = 1e-3) {
  AtomForceResult out = atom_delta2(cfg, temps, tol);
  const QuadratureResult e1 = atom_eq_force(cfg, temps.T1, tol);
  const QuadratureResult e2 = temps.T2 == temps.T1 ? e1 : atom_eq_force(cfg, temps.T2, tol);
  out.eq_part = 0.5 * (e1.value + e2.value);
  out.total = out.eq_part + out.term_distance_independent + out.term_propagative +
              out.term_evanescent;
  out.quadrature_error += 0.5 * (e1.error_estimate + e2.error_estimate);
  return out;
}

}  // namespace fluctua
