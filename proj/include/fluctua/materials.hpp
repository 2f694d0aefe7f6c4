#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"

namespace fluctua {

namespace material {

struct Constant {
  cplx eps{1.0, 0.0};
};

/// ε = 1 − ω_p²/(ω(ω + iγ)).
struct Drude {
  double omega_p = 0.0;
  double gamma = 0.0;
};

/// One term ω_p²/(ω_0² − ω² − iγω). ω_0 = 0 gives a Drude-like term.
struct Oscillator {
  double omega = 0.0;
  double omega_p = 0.0;
  double gamma = 0.0;
};

struct LorentzOscillators {
  double eps_inf = 1.0;
  std::vector<Oscillator> oscillators;
};

struct Sample {
  double omega;
  cplx eps;
};

/// Samples sorted by ω; interpolated linearly in log ω, Re and Im separately.
struct Tabulated {
  std::vector<Sample> samples;
};

struct PerfectMirror {};

}  // namespace material

using DielectricModel = std::variant<material::Constant, material::Drude,
                                     material::LorentzOscillators, material::Tabulated,
                                     material::PerfectMirror>;

inline bool is_perfect_mirror(const DielectricModel& m) {
  return std::holds_alternative<material::PerfectMirror>(m);
}

inline cplx permittivity(const DielectricModel& model, double omega) {
  using namespace material;
  if (!(omega > 0.0)) throw DomainError("permittivity: omega must be > 0");
  return std::visit(
      [omega](const auto& m) -> cplx {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Constant>) {
          return m.eps;
        } else if constexpr (std::is_same_v<M, Drude>) {
          return 1.0 - m.omega_p * m.omega_p / (omega * cplx(omega, m.gamma));
        } else if constexpr (std::is_same_v<M, LorentzOscillators>) {
          cplx e = m.eps_inf;
          for (const auto& o : m.oscillators) {
            e += o.omega_p * o.omega_p / cplx(o.omega * o.omega - omega * omega, -o.gamma * omega);
          }
          return e;
        } else if constexpr (std::is_same_v<M, Tabulated>) {
          const auto& s = m.samples;
          if (s.empty() || omega < s.front().omega || omega > s.back().omega) {
            throw OutOfRangeError("permittivity: omega outside tabulated range");
          }
          auto it = std::lower_bound(s.begin(), s.end(), omega,
                                     [](const Sample& a, double w) { return a.omega < w; });
          if (it->omega == omega) return it->eps;
          const Sample& hi = *it;
          const Sample& lo = *(it - 1);
          const double u = std::log(omega / lo.omega) / std::log(hi.omega / lo.omega);
          return lo.eps + u * (hi.eps - lo.eps);
        } else {
          throw UnsupportedModelError("permittivity: perfect mirror has no finite permittivity");
        }
      },
      model);
}

/// ε(iξ), real for causal models.
inline double permittivity_imag_axis(const DielectricModel& model, double xi) {
  using namespace material;
  if (!(xi > 0.0)) throw DomainError("permittivity_imag_axis: xi must be > 0");
  return std::visit(
      [xi](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Constant>) {
          if (m.eps.imag() != 0.0 || m.eps.real() < 1.0) {
            throw UnsupportedModelError(
                "permittivity_imag_axis: constant model needs real eps >= 1");
          }
          return m.eps.real();
        } else if constexpr (std::is_same_v<M, Drude>) {
          return 1.0 + m.omega_p * m.omega_p / (xi * (xi + m.gamma));
        } else if constexpr (std::is_same_v<M, LorentzOscillators>) {
          double e = m.eps_inf;
          for (const auto& o : m.oscillators) {
            e += o.omega_p * o.omega_p / (o.omega * o.omega + xi * xi + o.gamma * xi);
          }
          return e;
        } else if constexpr (std::is_same_v<M, Tabulated>) {
          throw UnsupportedModelError(
              "permittivity_imag_axis: tabulated data needs a Kramers-Kronig transform");
        } else {
          throw UnsupportedModelError("permittivity_imag_axis: perfect mirror has no finite permittivity");
        }
      },
      model);
}

/// ξ → 0⁺ behaviour of ε(iξ): `eps` is the limit of ε (possibly +∞) and
/// `xi2_eps` the limit of ξ²ε(iξ) (non-zero only for dissipationless
/// free carriers).
struct StaticLimit {
  double eps;
  double xi2_eps;
};

inline StaticLimit static_limit(const DielectricModel& model) {
  using namespace material;
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(
      [](const auto& m) -> StaticLimit {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Constant>) {
          if (m.eps.imag() != 0.0 || m.eps.real() < 1.0) {
            throw UnsupportedModelError("static_limit: constant model needs real eps >= 1");
          }
          return {m.eps.real(), 0.0};
        } else if constexpr (std::is_same_v<M, Drude>) {
          if (m.omega_p == 0.0) return {1.0, 0.0};
          return {inf, m.gamma == 0.0 ? m.omega_p * m.omega_p : 0.0};
        } else if constexpr (std::is_same_v<M, LorentzOscillators>) {
          StaticLimit s{m.eps_inf, 0.0};
          for (const auto& o : m.oscillators) {
            if (o.omega_p == 0.0) continue;
            if (o.omega == 0.0) {
              s.eps = inf;
              if (o.gamma == 0.0) s.xi2_eps += o.omega_p * o.omega_p;
            } else {
              s.eps += o.omega_p * o.omega_p / (o.omega * o.omega);
            }
          }
          return s;
        } else if constexpr (std::is_same_v<M, Tabulated>) {
          throw UnsupportedModelError("static_limit: tabulated data has no imaginary-axis continuation");
        } else {
          return {inf, inf};
        }
      },
      model);
}

inline std::vector<std::string> preset_names() {
  return {"fused-silica-2osc", "silicon-drude-lorentz", "perfect-mirror", "vacuum"};
}

/// Built-in material fits.
///
/// "fused-silica-2osc": two damped phonon oscillators at 8.66e13 and
/// 2.02e14 rad/s (about 21.8 µm and 9.3 µm) on ε∞ = 2.03.
/// "silicon-drude-lorentz": one interband oscillator giving ε(0) ≈ 11.7
/// plus free carriers of a lightly doped wafer.
inline DielectricModel preset(std::string_view name) {
  using namespace material;
  if (name == "fused-silica-2osc") {
    const double w1 = 8.66e13, w2 = 2.02e14;
    return LorentzOscillators{2.03,
                              {{w1, w1, 0.08 * w1},
                               {w2, w2 * std::sqrt(0.67), 0.06 * w2}}};
  }
  if (name == "silicon-drude-lorentz") {
    const double w0 = 6.6e15;
    return LorentzOscillators{1.035,
                              {{w0, w0 * std::sqrt(11.7 - 1.035), 1e13},
                               {0.0, 3.5e13, 1.0e13}}};
  }
  if (name == "perfect-mirror") return PerfectMirror{};
  if (name == "vacuum") return Constant{{1.0, 0.0}};
  std::string list;
  for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
  throw UnsupportedModelError("unknown material preset '" + std::string(name) +
                              "'; available presets: " + list);
}

}  // namespace fluctua
