#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "materials.hpp"
#include "modes.hpp"
#include "quadrature.hpp"
#include "scattering.hpp"
#include "thermal.hpp"

namespace fluctua {

/// Two planar bodies facing each other across a vacuum gap of width d.
/// Body 1 occupies z < 0, body 2 occupies z > d.
struct CavityConfig {
  SlabBody body1;
  SlabBody body2;
  double d = 1e-6;

  CavityConfig() = default;
  CavityConfig(SlabBody b1, SlabBody b2, double gap)
      : body1(std::move(b1)), body2(std::move(b2)), d(gap) {
    if (!(gap > 0.0)) throw DomainError("CavityConfig: separation d must be > 0");
  }
};

/// Densities keyed by the occupation difference they multiply.
struct NijTerms {
  double n12 = 0.0;
  double n13 = 0.0;
  double n23 = 0.0;
  double total() const { return n12 + n13 + n23; }
  double abs_sum() const { return std::fabs(n12) + std::fabs(n13) + std::fabs(n23); }
};

/// Non-equilibrium density at one (ω, k, p) in the trace measure
/// Σ_p ∫d²k/(2π)² ∫dω/(2π), split by sector.
struct SpectralPoint {
  double omega = 0.0;
  double k = 0.0;
  Polarization p = Polarization::TE;
  Sector sector = Sector::Propagative;
  NijTerms propagative;
  NijTerms evanescent;
  /// Σ|individual contributions| before they cancel; tolerance scale.
  double magnitude = 0.0;

  double total() const { return propagative.total() + evanescent.total(); }
};

struct Term {
  std::string name;
  double value;
};

/// Integrated pressure (Pa, negative = attraction) or heat flux (W/m²,
/// positive = net heat lost by body 1).
struct FluxResult {
  double value = 0.0;
  double quadrature_error = 0.0;
  std::vector<Term> breakdown;

  double term(const std::string& name) const {
    for (const auto& t : breakdown) {
      if (t.name == name) return t.value;
    }
    throw DomainError("FluxResult: no term named '" + name + "'");
  }
  double breakdown_abs_sum() const {
    double s = 0.0;
    for (const auto& t : breakdown) s += std::fabs(t.value);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Field correlators (diagonal specialisations), prefactor (ω/2ε₀c²)N included.

inline double correlator_prefactor(double omega, double T) {
  return omega / (2.0 * constants::eps0 * constants::c * constants::c) * N_sym(omega, T);
}

inline double env_correlator_density(const AngularMode& mode, double T3) {
  const cplx q = mode.kz();
  if (mode.sector() == Sector::Evanescent) return 0.0;
  return correlator_prefactor(mode.omega, T3) * (1.0 / q).real();
}

inline double emitted_correlator_same_dir(const SpecularAmplitudes& a, const AngularMode& mode,
                                          double T) {
  const cplx q = mode.kz();
  const cplx rho = mode.phi > 0 ? a.rho_plus : a.rho_minus;
  const double pref = correlator_prefactor(mode.omega, T);
  if (mode.sector() == Sector::Propagative) {
    return pref * (1.0 - std::norm(rho) - std::norm(a.tau)) / q.real();
  }
  return pref * 2.0 * rho.imag() / q.imag();
}

inline cplx emitted_correlator_opp_dir(const SpecularAmplitudes& a, const AngularMode& mode,
                                       double T) {
  const cplx q = mode.kz();
  const cplx rho = mode.phi > 0 ? a.rho_plus : a.rho_minus;
  const cplx rho_o = mode.phi > 0 ? a.rho_minus : a.rho_plus;
  const double pref = correlator_prefactor(mode.omega, T);
  if (mode.sector() == Sector::Propagative) {
    return pref * -(rho * std::conj(a.tau) + a.tau * std::conj(rho_o)) / q.real();
  }
  return pref * 2.0 * a.tau.imag() / q.imag();
}

// ---------------------------------------------------------------------------
// Non-equilibrium integrand.

struct DeltaOptions {
  /// Body 1 fills z < 0 entirely: no radiation reaches it from behind, and
  /// the back-side pressure is the equilibrium one already contained in F_eq.
  bool body1_semi_infinite = false;
};

/// Grouped per-mode density of Δ_m (m = 1 heat, m = 2 force) in the trace
/// sign (Δ₁ = power absorbed by body 1, Δ₂ = force along +z on body 1).
/// Every remaining term carries a factor ρ₁ or τ̃₁.
inline SpectralPoint delta_m_integrand(int m, double omega, double k, Polarization p,
                                       const SpecularAmplitudes& a1, const SpecularAmplitudes& a2,
                                       double d, const OccupationDiffs& n,
                                       const DeltaOptions& opt = {}) {
  if (m != 1 && m != 2) throw DomainError("delta_m_integrand: m must be 1 or 2");
  SpectralPoint sp;
  sp.omega = omega;
  sp.k = k;
  sp.p = p;
  sp.sector = sector_of(omega, k);
  const cplx q = kz(omega, k);
  // k rounded onto the light cone: zero measure, and both k dk Jacobians vanish there
  if (q == cplx(0.0, 0.0)) return sp;
  const double sign = m == 1 ? 1.0 : -1.0;  // (−1)^{m+1}
  const double hbar = constants::hbar;

  const cplx X = a1.rho_plus;
  const cplx Y = a2.rho_minus * std::exp(cplx(0.0, 2.0) * q * d);
  const cplx U = 1.0 / (1.0 - X * Y);

  if (sp.sector == Sector::Propagative) {
    const double s = m == 1 ? -1.0 : 1.0;  // (−1)^m
    const cplx Xm = a1.rho_minus;
    const cplx tt = a1.tau_tilde;
    const cplx T1 = 1.0 + tt;
    const cplx T2 = a2.tau;
    const cplx xyu = X * Y * U;
    const double h = 2.0 * xyu.real() + std::norm(xyu);
    const double g = 2.0 * tt.real() + std::norm(tt);
    const double hg = h + g + h * g;
    const double aX = std::norm(X), aY = std::norm(Y), aU = std::norm(U), aXm = std::norm(Xm);
    const double aT2 = std::norm(T2);

    NijTerms t;
    // n21 terms (cavity exchange between the bodies)
    const double r1 = m == 1 ? (1.0 - aY) * (h - aX * aU) : (aU * aX - h * aY);
    t.n12 -= r1;
    // body 1 seen from behind through its left face
    t.n13 += aXm;
    const cplx T1c = std::conj(T1);
    const double cross = 2.0 * (Xm * T1c * T1c * std::conj(U * Y)).real();
    t.n13 -= (s + aY) * hg - cross;
    // radiation arriving on body 1 from the gap side
    t.n12 += (1.0 - aY) * hg;
    t.n23 += aT2 * hg;
    t.n13 += aY * hg + aY * g * (1.0 + h) * (1.0 + g);
    // body 2 emission / environment through body 2
    t.n23 -= aT2 * (h + s * aX * aU);

    double g12 = std::fabs(r1) + std::fabs((1.0 - aY) * hg);
    double g13 = aXm + std::fabs((s + aY) * hg) + std::fabs(cross) +
                 std::fabs(aY * hg + aY * g * (1.0 + h) * (1.0 + g));
    double g23 = std::fabs(aT2 * hg) + std::fabs(aT2 * (h + s * aX * aU));
    if (opt.body1_semi_infinite) {
      if (m == 1) {
        t.n13 += 1.0 - aXm;
        g13 += std::fabs(1.0 - aXm);
      } else {
        t.n23 -= 1.0;
        t.n13 -= aXm;
        g23 += 1.0;
        g13 += aXm;
      }
    }
    const double pref = sign * hbar * (m == 1 ? omega : q.real());
    sp.propagative = {pref * n.n12 * t.n12, pref * n.n13 * t.n13, pref * n.n23 * t.n23};
    sp.magnitude = std::fabs(pref) * (std::fabs(n.n12) * g12 + std::fabs(n.n13) * g13 +
                                      std::fabs(n.n23) * g23);
  } else {
    const double kappa = q.imag();
    double e;
    const double gross =
        m == 1 ? 4.0 * std::norm(U) * std::fabs(X.imag() * Y.imag())
               : 2.0 * kappa * std::norm(U) *
                     (std::fabs(X.imag() * Y.real()) + std::fabs(X.real() * Y.imag()));
    if (m == 1) {
      e = 4.0 * std::norm(U) * X.imag() * Y.imag();
    } else {
      e = 2.0 * kappa * std::norm(U) * (X * std::conj(Y)).imag();
    }
    const double pref = sign * hbar * (m == 1 ? omega : 1.0);
    sp.evanescent.n12 = -pref * n.n12 * e;
    sp.magnitude = std::fabs(pref * n.n12) * gross;
  }

  if (!std::isfinite(sp.propagative.abs_sum()) || !std::isfinite(sp.evanescent.abs_sum())) {
    std::ostringstream os;
    os << "delta_m_integrand: non-finite density at omega=" << omega << " rad/s, k=" << k
       << " 1/m, p=" << to_string(p);
    throw NumericalDomainError(os.str());
  }
  return sp;
}

inline SpectralPoint delta_m_integrand(int m, double omega, double k, Polarization p,
                                       const SpecularAmplitudes& a1, const SpecularAmplitudes& a2,
                                       double d, const TemperatureTriple& temps,
                                       const DeltaOptions& opt = {}) {
  return delta_m_integrand(m, omega, k, p, a1, a2, d, OccupationDiffs::at(omega, temps), opt);
}

/// Real-frequency equilibrium force density −2Re[(k_z/ω)N·2XYU] per mode
/// (trace sign and measure). Oscillates without decay in ω; used only for
/// cross-checks at fixed ω.
inline double eq_force_density_real_axis(double omega, double k, const SpecularAmplitudes& a1,
                                         const SpecularAmplitudes& a2, double d, double T) {
  const cplx q = kz(omega, k);
  const cplx X = a1.rho_plus;
  const cplx Y = a2.rho_minus * std::exp(cplx(0.0, 2.0) * q * d);
  const cplx U = 1.0 / (1.0 - X * Y);
  return -2.0 * ((q / omega) * N_sym(omega, T) * 2.0 * X * Y * U).real();
}

// ---------------------------------------------------------------------------
// Integrated quantities.

namespace detail {

/// ħω_max/(k_B T_max).
inline constexpr double kOmegaCutoff = 45.0;
/// e^{−2κ_max d} = 1e−14.
inline double kappa_max(double d) { return std::log(1e14) / (2.0 * d); }

}  // namespace detail

inline bool body_is_transparent(const SlabBody& b) {
  if (const auto* c = std::get_if<material::Constant>(&b.material)) {
    return c->eps == cplx(1.0, 0.0);
  }
  return false;
}

/// Equilibrium pressure on body 1 at temperature T (Pa, negative =
/// attraction), from the Matsubara representation
/// P = −(ħ/2π²)·(2πk_BT/ħ)Σ'_n Σ_p ∫_{ξ_n/c}^∞ dκ κ² r₁r₂e^{−2κd}/(1 − r₁r₂e^{−2κd}).
inline FluxResult eq_pressure(double T, const CavityConfig& cfg, double tol = 1e-6) {
  if (!(T >= 0.0)) throw DomainError("eq_pressure: T must be >= 0");
  FluxResult out;
  out.breakdown = {{"TE", 0.0}, {"TM", 0.0}};
  if (body_is_transparent(cfg.body1) || body_is_transparent(cfg.body2)) return out;

  const double d = cfg.d;
  const double c = constants::c;
  auto g = [&](double xi) {
    const MaterialImag m1 = MaterialImag::evaluate(cfg.body1.material, xi);
    const MaterialImag m2 = MaterialImag::evaluate(cfg.body2.material, xi);
    const double k0 = xi / c;
    auto f = [&](double kappa) {
      std::array<double, 2> v{};
      const double k = std::sqrt(std::fmax(kappa * kappa - k0 * k0, 0.0));
      const double e = std::exp(-2.0 * kappa * d);
      for (int ip = 0; ip < 2; ++ip) {
        const Polarization p = kPolarizations[ip];
        const double r1 = slab_reflection_imag_axis(m1, cfg.body1.thickness, p, xi, k);
        const double r2 = slab_reflection_imag_axis(m2, cfg.body2.thickness, p, xi, k);
        const double x = r1 * r2 * e;
        v[ip] = kappa * kappa * x / (1.0 - x);
      }
      return v;
    };
    QuadratureOptions q;
    q.rel_tol = tol * 1e-2;
    q.abs_tol = 0.0;
    const auto r = integrate_semiinfinite_vec<2>(f, k0, 1.0 / (2.0 * d), q);
    return r.value;
  };

  MatsubaraOptions mo;
  mo.rel_tol = tol * 1e-2;
  mo.xi_scale = c / (2.0 * d);
  const auto s = matsubara_sum_vec<2>(g, T, mo);
  const double pref = -constants::hbar / (2.0 * constants::pi * constants::pi);
  out.breakdown[0].value = pref * s.value[0];
  out.breakdown[1].value = pref * s.value[1];
  out.value = out.breakdown[0].value + out.breakdown[1].value;
  out.quadrature_error = std::fabs(pref) * s.error_estimate + tol * 1e-2 * std::fabs(out.value);
  return out;
}

/// Δ_m integrated over (ω, k, p), reported as a pressure contribution
/// (m = 2, Pa, −Δ₂) or as heat lost by body 1 (m = 1, W/m², −Δ₁).
/// Breakdown: terms "n12", "n13", "n23".
inline FluxResult noneq_flux(int m, const TemperatureTriple& temps, const CavityConfig& cfg,
                             double tol = 1e-3) {
  if (m != 1 && m != 2) throw DomainError("noneq_flux: m must be 1 or 2");
  if (!(tol > 0.0)) throw DomainError("noneq_flux: tol must be > 0");
  FluxResult out;
  out.breakdown = {{"n12", 0.0}, {"n13", 0.0}, {"n23", 0.0}};
  if (temps.equilibrium() || temps.max() == 0.0 || body_is_transparent(cfg.body1)) return out;

  DeltaOptions dopt;
  dopt.body1_semi_infinite = cfg.body1.is_semi_infinite();
  const double c = constants::c;
  const double d = cfg.d;
  const double omega_max = detail::kOmegaCutoff * constants::kB * temps.max() / constants::hbar;
  const double kappa_max = detail::kappa_max(d);
  const double inner_tol = tol * 1e-1;

  auto at_omega = [&](double omega) {
    const OccupationDiffs n = OccupationDiffs::at(omega, temps);
    std::array<double, 4> out4{};
    if (n.n12 == 0.0 && n.n13 == 0.0 && n.n23 == 0.0) return out4;
    const MaterialAt m1 = MaterialAt::evaluate(cfg.body1.material, omega);
    const MaterialAt m2 = MaterialAt::evaluate(cfg.body2.material, omega);
    const double k0 = omega / c;

    auto accumulate = [&](double k, double jac, std::array<double, 4>& v) {
      for (Polarization p : kPolarizations) {
        const SpecularAmplitudes a1 = slab_amplitudes(m1, cfg.body1.thickness, p, omega, k);
        const SpecularAmplitudes a2 = slab_amplitudes(m2, cfg.body2.thickness, p, omega, k);
        const SpectralPoint sp = delta_m_integrand(m, omega, k, p, a1, a2, d, n, dopt);
        v[0] += jac * (sp.propagative.n12 + sp.evanescent.n12);
        v[1] += jac * (sp.propagative.n13 + sp.evanescent.n13);
        v[2] += jac * (sp.propagative.n23 + sp.evanescent.n23);
        v[3] += jac * sp.magnitude;
      }
    };
    // propagative panel: k = k0 sin θ, k dk = k0² sin θ cos θ dθ
    auto fpw = [&](double theta) {
      std::array<double, 4> v{};
      const double st = std::sin(theta), ct = std::cos(theta);
      accumulate(k0 * st, k0 * k0 * st * ct, v);
      return v;
    };
    // evanescent panel: k = √(κ² + k0²), k dk = κ dκ
    auto few = [&](double kappa) {
      std::array<double, 4> v{};
      accumulate(std::sqrt(kappa * kappa + k0 * k0), kappa, v);
      return v;
    };
    QuadratureOptions qo;
    qo.rel_tol = inner_tol;
    qo.relative_to_abs = true;
    qo.return_on_limit = true;
    const auto pw = integrate_adaptive_vec<4>(fpw, 0.0, constants::pi / 2.0, qo);
    const auto ew = integrate_adaptive_vec<4>(few, 0.0, kappa_max, qo);
    for (int i = 0; i < 3; ++i) out4[i] = pw.value[i] + ew.value[i];
    out4[3] = pw.error[0] + pw.error[1] + pw.error[2] + ew.error[0] + ew.error[1] + ew.error[2];
    return out4;
  };

  QuadratureOptions oo;
  oo.rel_tol = tol;
  for (int i = 1; i < 16; ++i) oo.breakpoints.push_back(omega_max * i / 16.0);
  const auto r = integrate_adaptive_vec<4>(at_omega, 0.0, omega_max, oo);
  const double scale = -1.0 / (4.0 * constants::pi * constants::pi);
  out.breakdown[0].value = scale * r.value[0];
  out.breakdown[1].value = scale * r.value[1];
  out.breakdown[2].value = scale * r.value[2];
  out.value = out.breakdown[0].value + out.breakdown[1].value + out.breakdown[2].value;
  out.quadrature_error =
      std::fabs(scale) * (r.error[0] + r.error[1] + r.error[2] + std::fabs(r.value[3]));
  return out;
}

/// Pressure on body 1 (Pa, negative = attraction):
/// [P_eq(T1) + P_eq(T2)]/2 + non-equilibrium part.
/// Breakdown: "eq_T1", "eq_T2", "delta2_n12", "delta2_n13", "delta2_n23".
inline FluxResult total_force(const TemperatureTriple& temps, const CavityConfig& cfg,
                              double tol = 1e-3) {
  const FluxResult e1 = eq_pressure(temps.T1, cfg, tol);
  const FluxResult e2 = temps.T2 == temps.T1 ? e1 : eq_pressure(temps.T2, cfg, tol);
  const FluxResult dn = noneq_flux(2, temps, cfg, tol);
  FluxResult out;
  out.breakdown = {{"eq_T1", e1.value},
                   {"eq_T2", e2.value},
                   {"delta2_n12", dn.breakdown[0].value},
                   {"delta2_n13", dn.breakdown[1].value},
                   {"delta2_n23", dn.breakdown[2].value}};
  out.value = 0.5 * (e1.value + e2.value) + dn.value;
  out.quadrature_error = 0.5 * (e1.quadrature_error + e2.quadrature_error) + dn.quadrature_error;
  return out;
}

}  // namespace fluctua
