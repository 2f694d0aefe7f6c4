#pragma once

#include <array>
#include <cmath>

#include "constants.hpp"
#include "errors.hpp"

namespace fluctua {

using Vec3c = std::array<cplx, 3>;

enum class Sector { Propagative, Evanescent };

/// k_z = √(ω²/c² − k²) with Im k_z ≥ 0; real in the propagative sector,
/// i·κ with κ > 0 in the evanescent sector.
inline cplx kz(double omega, double k) {
  const double k0 = omega / constants::c;
  const double s = (k0 - k) * (k0 + k);
  return s >= 0.0 ? cplx(std::sqrt(s), 0.0) : cplx(0.0, std::sqrt(-s));
}

inline Sector sector_of(double omega, double k) {
  return k < omega / constants::c ? Sector::Propagative : Sector::Evanescent;
}

struct AngularMode {
  double omega = 0.0;
  double kx = 0.0;
  double ky = 0.0;
  Polarization p = Polarization::TE;
  int phi = +1;

  AngularMode() = default;
  AngularMode(double w, double kx_, double ky_, Polarization p_, int phi_ = +1)
      : omega(w), kx(kx_), ky(ky_), p(p_), phi(phi_) {
    if (!(w > 0.0)) throw DomainError("AngularMode: omega must be > 0");
    if (phi_ != 1 && phi_ != -1) throw DomainError("AngularMode: phi must be +1 or -1");
  }
  /// Mode with k along x̂.
  static AngularMode along_x(double w, double k, Polarization p, int phi = +1) {
    return AngularMode(w, k, 0.0, p, phi);
  }

  double k() const { return std::hypot(kx, ky); }
  cplx kz() const { return fluctua::kz(omega, k()); }
  Sector sector() const { return sector_of(omega, k()); }
};

inline cplx dot(const Vec3c& a, const Vec3c& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

/// ε̂_TE = ẑ × k̂ and ε̂_TM^φ = ε̂_TE × K̂^φ with K̂^φ = (k, φk_z)c/ω.
/// The evanescent TM vector is kept as the algebraic cross product.
struct PolarizationVectors {
  Vec3c te;
  Vec3c tm;
};

inline PolarizationVectors polarization_vectors(double omega, double kx, double ky, int phi) {
  const double k = std::hypot(kx, ky);
  double ux = 1.0, uy = 0.0;  // k = 0: k̂ = x̂
  if (k > 0.0) {
    ux = kx / k;
    uy = ky / k;
  }
  const cplx q = kz(omega, k) * static_cast<double>(phi);
  const double s = constants::c / omega;
  PolarizationVectors v;
  v.te = {cplx(-uy), cplx(ux), cplx(0.0)};
  v.tm = {s * q * ux, s * q * uy, cplx(-s * k)};
  return v;
}

inline PolarizationVectors polarization_vectors(const AngularMode& m) {
  return polarization_vectors(m.omega, m.kx, m.ky, m.phi);
}

inline const Vec3c& polarization_vector(const PolarizationVectors& v, Polarization p) {
  return p == Polarization::TE ? v.te : v.tm;
}

/// ε̂_p^+ · ε̂_p^− at a single (ω, k): 1 for TE, (k² − k_z²)c²/ω² for TM.
inline cplx polarization_dot_pm(Polarization p, double omega, double k) {
  if (p == Polarization::TE) return 1.0;
  const cplx q = kz(omega, k);
  const double s = constants::c / omega;
  return (k * k - q * q) * s * s;
}

}  // namespace fluctua
