#pragma once

#include <cmath>

#include "constants.hpp"
#include "errors.hpp"

namespace fluctua {

/// Temperatures of body 1, body 2 and the environment, in kelvin.
struct TemperatureTriple {
  double T1 = 0.0;
  double T2 = 0.0;
  double T3 = 0.0;

  TemperatureTriple() = default;
  TemperatureTriple(double t1, double t2, double t3) : T1(t1), T2(t2), T3(t3) {
    if (!(t1 >= 0.0) || !(t2 >= 0.0) || !(t3 >= 0.0)) {
      throw DomainError("temperatures must be >= 0 K");
    }
  }

  double max() const { return std::fmax(T1, std::fmax(T2, T3)); }
  bool equilibrium() const { return T1 == T2 && T2 == T3; }
};

/// Bose-Einstein occupation n(ω,T). Returns 0 for T = 0 and when ħω/k_BT > 700.
inline double bose(double omega, double T) {
  if (T <= 0.0) return 0.0;
  const double x = constants::hbar * omega / (constants::kB * T);
  if (x > 700.0) return 0.0;
  return 1.0 / std::expm1(x);
}

inline double n_diff(double omega, double Ti, double Tj) { return bose(omega, Ti) - bose(omega, Tj); }

/// N(ω,T) = ħω(1/2 + n(ω,T)), in joules.
inline double N_sym(double omega, double T) {
  return constants::hbar * omega * (0.5 + bose(omega, T));
}

/// The three occupation differences entering the non-equilibrium terms.
struct OccupationDiffs {
  double n12;
  double n13;
  double n23;

  static OccupationDiffs at(double omega, const TemperatureTriple& t) {
    const double n1 = bose(omega, t.T1);
    const double n2 = bose(omega, t.T2);
    const double n3 = bose(omega, t.T3);
    return {n1 - n2, n1 - n3, n2 - n3};
  }
};

}  // namespace fluctua
