#pragma once

#include <complex>
#include <numbers>

namespace fluctua {

using cplx = std::complex<double>;

/// CODATA 2018 values, SI units.
namespace constants {
inline constexpr double c = 299792458.0;
inline constexpr double hbar = 1.054571817e-34;
inline constexpr double kB = 1.380649e-23;
inline constexpr double eps0 = 8.8541878128e-12;
inline constexpr double pi = std::numbers::pi;
}  // namespace constants

enum class Polarization { TE, TM };

inline constexpr Polarization kPolarizations[2] = {Polarization::TE, Polarization::TM};

inline const char* to_string(Polarization p) { return p == Polarization::TE ? "TE" : "TM"; }

}  // namespace fluctua
