#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <variant>

#include "constants.hpp"
#include "errors.hpp"
#include "materials.hpp"
#include "modes.hpp"

namespace fluctua {

/// Per-mode amplitudes of a planar body, referenced to its own faces.
/// τ̃ = τ − 1 is the modified (scattered-only) transmission.
struct SpecularAmplitudes {
  cplx rho_plus;
  cplx rho_minus;
  cplx tau;
  cplx tau_tilde;

  static SpecularAmplitudes symmetric(cplx rho, cplx tau) { return {rho, rho, tau, tau - 1.0}; }
  static SpecularAmplitudes transparent() { return symmetric(0.0, 1.0); }
  static SpecularAmplitudes black() { return symmetric(0.0, 0.0); }
};

struct SlabBody {
  double thickness = std::numeric_limits<double>::infinity();
  DielectricModel material = material::Constant{};

  SlabBody() = default;
  SlabBody(double t, DielectricModel m) : thickness(t), material(std::move(m)) {
    if (!(t > 0.0)) throw DomainError("SlabBody: thickness must be > 0");
  }
  static SlabBody semi_infinite(DielectricModel m) {
    return SlabBody(std::numeric_limits<double>::infinity(), std::move(m));
  }
  bool is_semi_infinite() const { return std::isinf(thickness); }
};

struct InterfaceCoefficients {
  cplx r;
  cplx t;
};

/// k_zm = √(εω²/c² − k²) with Im ≥ 0 (Re ≥ 0 when real).
inline cplx medium_kz(cplx eps, double omega, double k) {
  const double k0 = omega / constants::c;
  cplx q = std::sqrt(eps * (k0 * k0) - k * k);
  if (q.imag() < 0.0 || (q.imag() == 0.0 && q.real() < 0.0)) q = -q;
  return q;
}

/// Vacuum-to-medium Fresnel coefficients; t = 1 + r (tangential E for TE,
/// tangential H for TM).
inline InterfaceCoefficients interface_fresnel(Polarization p, double omega, double k, cplx eps) {
  if (eps == cplx(1.0, 0.0)) return {0.0, 1.0};
  const cplx q = kz(omega, k);
  const cplx qm = medium_kz(eps, omega, k);
  cplx r = p == Polarization::TE ? (q - qm) / (q + qm) : (eps * q - qm) / (eps * q + qm);
  return {r, 1.0 + r};
}

/// Material evaluated at one real frequency.
struct MaterialAt {
  bool mirror = false;
  cplx eps{1.0, 0.0};

  static MaterialAt evaluate(const DielectricModel& m, double omega) {
    if (is_perfect_mirror(m)) return {true, {}};
    return {false, permittivity(m, omega)};
  }
};

/// Airy-summed slab amplitudes at (ω, k) for a material already evaluated at ω.
inline SpecularAmplitudes slab_amplitudes(const MaterialAt& mat, double thickness, Polarization p,
                                          double omega, double k) {
  if (mat.mirror) {
    return SpecularAmplitudes::symmetric(p == Polarization::TE ? -1.0 : 1.0, 0.0);
  }
  const cplx qm = medium_kz(mat.eps, omega, k);
  const InterfaceCoefficients f = interface_fresnel(p, omega, k, mat.eps);
  const cplx r = f.r;
  if (std::isinf(thickness)) {
    if (qm.imag() == 0.0) {
      std::ostringstream os;
      os << "semi-infinite lossless medium: wave does not decay (omega=" << omega << ", k=" << k
         << ")";
      throw DomainError(os.str());
    }
    return SpecularAmplitudes::symmetric(r, 0.0);
  }
  const cplx e1 = std::exp(cplx(0.0, 1.0) * qm * thickness);
  const cplx e2 = e1 * e1;
  const cplx den = 1.0 - r * r * e2;
  const cplx rho = r * (1.0 - e2) / den;
  const cplx tau = (1.0 - r * r) * e1 / den;
  return SpecularAmplitudes::symmetric(rho, tau);
}

inline SpecularAmplitudes slab_amplitudes(const SlabBody& slab, const AngularMode& mode) {
  return slab_amplitudes(MaterialAt::evaluate(slab.material, mode.omega), slab.thickness, mode.p,
                         mode.omega, mode.k());
}

/// Material on the imaginary axis at ξ ≥ 0; ξ = 0 uses the static limits.
struct MaterialImag {
  bool mirror = false;
  bool is_static = false;
  double eps = 1.0;
  double xi2_eps = 0.0;

  static MaterialImag evaluate(const DielectricModel& m, double xi) {
    if (is_perfect_mirror(m)) return {true, xi == 0.0, 0.0, 0.0};
    if (xi == 0.0) {
      const StaticLimit s = static_limit(m);
      return {false, true, s.eps, s.xi2_eps};
    }
    return {false, false, permittivity_imag_axis(m, xi), 0.0};
  }
};

/// Slab reflection ρ(iξ, k), real. The perfect mirror gives −1 (TE) and +1
/// (TM), except TE at ξ = 0, which is taken as 0 (dissipative-metal limit).
inline double slab_reflection_imag_axis(const MaterialImag& mat, double thickness, Polarization p,
                                        double xi, double k) {
  if (mat.mirror) {
    if (p == Polarization::TM) return 1.0;
    return mat.is_static ? 0.0 : -1.0;
  }
  const double c2 = constants::c * constants::c;
  double kappa, kappa_m, r;
  if (mat.is_static) {
    kappa = k;
    if (p == Polarization::TE) {
      kappa_m = std::sqrt(k * k + mat.xi2_eps / c2);
      r = (kappa - kappa_m) / (kappa + kappa_m);
    } else if (std::isinf(mat.eps)) {
      kappa_m = std::sqrt(k * k + mat.xi2_eps / c2);
      r = 1.0;
    } else {
      kappa_m = k;
      r = (mat.eps - 1.0) / (mat.eps + 1.0);
    }
  } else {
    kappa = std::sqrt(xi * xi / c2 + k * k);
    kappa_m = std::sqrt(mat.eps * xi * xi / c2 + k * k);
    r = p == Polarization::TE ? (kappa - kappa_m) / (kappa + kappa_m)
                              : (mat.eps * kappa - kappa_m) / (mat.eps * kappa + kappa_m);
  }
  if (std::isinf(thickness)) return r;
  const double e2 = std::exp(-2.0 * kappa_m * thickness);
  return r * (1.0 - e2) / (1.0 - r * r * e2);
}

namespace polarizability {

struct Static {
  double alpha0 = 0.0;
};

/// α(ω) = α₀ω₀²/(ω₀² − ω² − iγω).
struct Lorentz {
  double alpha0 = 0.0;
  double omega0 = 0.0;
  double gamma = 0.0;
};

}  // namespace polarizability

/// Atomic polarizability in SI units (C·m²/V).
using PolarizabilityModel = std::variant<polarizability::Static, polarizability::Lorentz>;

inline cplx polarizability_at(const PolarizabilityModel& model, double omega) {
  if (const auto* s = std::get_if<polarizability::Static>(&model)) return s->alpha0;
  const auto& l = std::get<polarizability::Lorentz>(model);
  const double w02 = l.omega0 * l.omega0;
  return l.alpha0 * w02 / cplx(w02 - omega * omega, -l.gamma * omega);
}

inline double polarizability_imag_axis(const PolarizabilityModel& model, double xi) {
  if (const auto* s = std::get_if<polarizability::Static>(&model)) return s->alpha0;
  const auto& l = std::get<polarizability::Lorentz>(model);
  const double w02 = l.omega0 * l.omega0;
  return l.alpha0 * w02 / (w02 + xi * xi + l.gamma * xi);
}

using Vec3 = std::array<double, 3>;

namespace detail {

inline cplx atom_element(cplx alpha, const AngularMode& mode, const AngularMode& other,
                         const Vec3& r_A, bool reflection) {
  const double omega = mode.omega;
  const cplx q = mode.kz();
  if (q == cplx(0.0, 0.0)) {
    std::ostringstream os;
    os << "atom element: singular mode k_z = 0 (omega=" << omega << ", k=" << mode.k() << ")";
    throw DomainError(os.str());
  }
  const int phi = mode.phi;
  const int phi_other = reflection ? -phi : phi;
  const cplx qo = fluctua::kz(omega, other.k());
  const auto e = polarization_vectors(omega, mode.kx, mode.ky, phi);
  const auto eo = polarization_vectors(omega, other.kx, other.ky, phi_other);
  const cplx pol = dot(polarization_vector(e, mode.p), polarization_vector(eo, other.p));
  const double c2 = constants::c * constants::c;
  const cplx pref = cplx(0.0, 1.0) * omega * omega * alpha / (2.0 * constants::eps0 * c2 * q);
  const double transverse = (other.kx - mode.kx) * r_A[0] + (other.ky - mode.ky) * r_A[1];
  const cplx longitudinal = reflection ? -static_cast<double>(phi) * (q + qo) * r_A[2]
                                       : -static_cast<double>(phi) * (q - qo) * r_A[2];
  return pref * pol * std::exp(cplx(0.0, 1.0) * (transverse + longitudinal));
}

}  // namespace detail

/// ⟨k,p|R^φ|k′,p′⟩ for a point dipole at R_A; `mode` carries (k, p, φ),
/// `incoming` carries (k′, p′) and travels in direction −φ.
inline cplx atom_reflection_element(cplx alpha, const AngularMode& mode,
                                    const AngularMode& incoming, const Vec3& r_A) {
  return detail::atom_element(alpha, mode, incoming, r_A, true);
}

/// ⟨k,p|T̃^φ|k′,p′⟩ (modified transmission); `incoming` travels in direction φ.
inline cplx atom_transmission_element(cplx alpha, const AngularMode& mode,
                                      const AngularMode& incoming, const Vec3& r_A) {
  return detail::atom_element(alpha, mode, incoming, r_A, false);
}

}  // namespace fluctua
