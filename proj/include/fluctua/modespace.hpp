#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "modes.hpp"
#include "quadrature.hpp"
#include "scattering.hpp"
#include "spectral.hpp"
#include "thermal.hpp"

/// Discretised (p, k) mode space. Operators are finite matrices over a
/// product quadrature grid; the continuum identity (2π)²δ²(k − k′)δ_pp′
/// maps to 1/μ_i on the diagonal, μ_i = w_i/(2π)² being the node's share of
/// the measure d²k/(2π)². Matrices are stored as M̃_ij = √(μ_iμ_j)⟨i|S|j⟩,
/// so composition, inversion and adjoints are plain matrix operations.
namespace fluctua::modespace {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

struct GridNode {
  double kx;
  double ky;
  double k;
  Polarization p;
  double weight;  ///< share of ∫d²k, 1/m²
  cplx kz;
  bool propagative;
};

class ModeGrid {
 public:
  ModeGrid(double omega, double k_max, std::vector<GridNode> nodes)
      : omega_(omega), k_max_(k_max), nodes_(std::move(nodes)) {}

  double omega() const { return omega_; }
  double k_max() const { return k_max_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<GridNode>& nodes() const { return nodes_; }
  const GridNode& node(std::size_t i) const { return nodes_[i]; }
  double measure(std::size_t i) const {
    return nodes_[i].weight / (4.0 * constants::pi * constants::pi);
  }
  AngularMode mode(std::size_t i, int phi) const {
    const auto& n = nodes_[i];
    return AngularMode(omega_, n.kx, n.ky, n.p, phi);
  }

 private:
  double omega_;
  double k_max_;
  std::vector<GridNode> nodes_;
};

using GridPtr = std::shared_ptr<const ModeGrid>;

/// Polar product grid. Radial direction: n_radial/2 Gauss-Legendre nodes in
/// θ on the propagative disc (k = (ω/c) sin θ) and n_radial/2 in κ on the
/// evanescent annulus (k = √(κ² + ω²/c²)); angular direction: n_angular
/// equispaced nodes. Each (k, angle) carries both polarizations.
/// Optional κ breakpoints split the evanescent nodes into panels of
/// (nearly) equal node count.
inline GridPtr build_grid(double omega, double k_max, int n_radial, int n_angular,
                          const std::vector<double>& kappa_breakpoints = {}) {
  const double k0 = omega / constants::c;
  if (!(omega > 0.0)) throw DomainError("build_grid: omega must be > 0");
  if (!(k_max > k0)) throw DomainError("build_grid: k_max must exceed omega/c");
  if (n_radial < 2 || n_radial % 2 != 0) throw DomainError("build_grid: n_radial must be even and >= 2");
  if (n_angular < 1) throw DomainError("build_grid: n_angular must be >= 1");
  const int half = n_radial / 2;
  std::vector<double> xt, wt, xk, wk;
  gauss_legendre(half, 0.0, constants::pi / 2.0, xt, wt);
  const double kappa_max = std::sqrt((k_max - k0) * (k_max + k0));
  std::vector<double> edges{0.0};
  for (double b : kappa_breakpoints) {
    if (b > edges.back() && b < kappa_max) edges.push_back(b);
  }
  edges.push_back(kappa_max);
  const int panels = static_cast<int>(edges.size()) - 1;
  if (half < panels) throw DomainError("build_grid: fewer evanescent nodes than kappa panels");
  for (int j = 0; j < panels; ++j) {
    std::vector<double> x, w;
    gauss_legendre(half / panels + (j < half % panels ? 1 : 0), edges[j], edges[j + 1], x, w);
    xk.insert(xk.end(), x.begin(), x.end());
    wk.insert(wk.end(), w.begin(), w.end());
  }
  const double dphi = 2.0 * constants::pi / n_angular;

  std::vector<GridNode> nodes;
  nodes.reserve(static_cast<std::size_t>(n_radial) * n_angular * 2);
  auto add_ring = [&](double k, double radial_w, cplx q, bool pw) {
    for (int j = 0; j < n_angular; ++j) {
      const double ang = dphi * (j + 0.5);
      for (Polarization p : kPolarizations) {
        nodes.push_back({k * std::cos(ang), k * std::sin(ang), k, p, radial_w * dphi, q, pw});
      }
    }
  };
  for (int i = 0; i < half; ++i) {
    const double st = std::sin(xt[i]), ct = std::cos(xt[i]);
    add_ring(k0 * st, k0 * k0 * st * ct * wt[i], cplx(k0 * ct, 0.0), true);
  }
  for (int i = 0; i < half; ++i) {
    const double kappa = xk[i];
    add_ring(std::sqrt(kappa * kappa + k0 * k0), kappa * wk[i], cplx(0.0, kappa), false);
  }
  return std::make_shared<const ModeGrid>(omega, k_max, std::move(nodes));
}

/// Same nodes with every weight multiplied by λ.
inline GridPtr rescale_weights(const ModeGrid& g, double lambda) {
  auto nodes = g.nodes();
  for (auto& n : nodes) n.weight *= lambda;
  return std::make_shared<const ModeGrid>(g.omega(), g.k_max(), std::move(nodes));
}

enum class TraceNorm {
  Total,    ///< Σ_i μ_i⟨i|A|i⟩
  PerArea,  ///< divided by the δ(0) ↔ area factor carried by each diagonal
};

class OperatorMatrix {
 public:
  OperatorMatrix(GridPtr grid, Mat scaled) : grid_(std::move(grid)), m_(std::move(scaled)) {
    if (m_.rows() != static_cast<Eigen::Index>(grid_->size()) || m_.cols() != m_.rows()) {
      throw DomainError("OperatorMatrix: dimension does not match grid");
    }
  }

  static OperatorMatrix identity(GridPtr g) {
    const auto n = static_cast<Eigen::Index>(g->size());
    return OperatorMatrix(g, Mat::Identity(n, n));
  }
  static OperatorMatrix zero(GridPtr g) {
    const auto n = static_cast<Eigen::Index>(g->size());
    return OperatorMatrix(g, Mat::Zero(n, n));
  }

  const ModeGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return grid_->size(); }
  const Mat& scaled() const { return m_; }
  Mat& scaled() { return m_; }

  /// Continuum matrix element ⟨i|S|j⟩.
  cplx element(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) /
           std::sqrt(grid_->measure(i) * grid_->measure(j));
  }

  OperatorMatrix adjoint() const { return OperatorMatrix(grid_, m_.adjoint()); }

  cplx trace(TraceNorm norm = TraceNorm::Total) const {
    cplx s = 0.0;
    for (Eigen::Index i = 0; i < m_.rows(); ++i) {
      s += m_(i, i) * (norm == TraceNorm::Total ? 1.0 : grid_->measure(static_cast<std::size_t>(i)));
    }
    return s;
  }

  friend OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
    return OperatorMatrix(a.grid_, a.m_ + b.m_);
  }
  friend OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) {
    return OperatorMatrix(a.grid_, a.m_ - b.m_);
  }
  friend OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
    return OperatorMatrix(a.grid_, a.m_ * b.m_);
  }
  friend OperatorMatrix operator*(cplx s, const OperatorMatrix& a) {
    return OperatorMatrix(a.grid_, s * a.m_);
  }

 private:
  GridPtr grid_;
  Mat m_;
};

/// Operator diagonal in (k, p) with symbol s: ⟨i|S|i⟩ = s_i/μ_i.
inline OperatorMatrix diagonal_operator(const GridPtr& g,
                                        const std::function<cplx(const GridNode&)>& s) {
  const auto n = static_cast<Eigen::Index>(g->size());
  Mat m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) = s(g->node(static_cast<std::size_t>(i)));
  return OperatorMatrix(g, std::move(m));
}

/// P_m^(pw) or P_m^(ew): k_z^m on one sector, 0 on the other.
inline Vec projector_diag(const ModeGrid& g, int m, bool propagative) {
  Vec v(static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& n = g.node(i);
    v(static_cast<Eigen::Index>(i)) = n.propagative == propagative ? std::pow(n.kz, m) : cplx(0.0);
  }
  return v;
}

inline OperatorMatrix projector(const GridPtr& g, int m, bool propagative) {
  return OperatorMatrix(g, projector_diag(*g, m, propagative).asDiagonal());
}

enum class AtomOperatorKind { Reflection, ModifiedTransmission };

/// Dense atom operator R^φ or T̃^φ for a point dipole at r_A.
inline OperatorMatrix atom_operator(const GridPtr& g, cplx alpha, const Vec3& r_A, int phi,
                                    AtomOperatorKind kind) {
  const auto n = static_cast<Eigen::Index>(g->size());
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const AngularMode mi = g->mode(static_cast<std::size_t>(i), phi);
    const double si = std::sqrt(g->measure(static_cast<std::size_t>(i)));
    for (Eigen::Index j = 0; j < n; ++j) {
      const AngularMode mj = g->mode(static_cast<std::size_t>(j), phi);
      const double sj = std::sqrt(g->measure(static_cast<std::size_t>(j)));
      const cplx e = kind == AtomOperatorKind::Reflection
                         ? atom_reflection_element(alpha, mi, mj, r_A)
                         : atom_transmission_element(alpha, mi, mj, r_A);
      m(i, j) = si * sj * e;
    }
  }
  return OperatorMatrix(g, std::move(m));
}

/// Scattering operators of one body; T± are full transmissions (1 + T̃±).
struct BodyOperators {
  OperatorMatrix R_plus;
  OperatorMatrix R_minus;
  OperatorMatrix T_plus;
  OperatorMatrix T_minus;
};

inline BodyOperators transparent_body(const GridPtr& g) {
  return {OperatorMatrix::zero(g), OperatorMatrix::zero(g), OperatorMatrix::identity(g),
          OperatorMatrix::identity(g)};
}

/// Slab occupying [z_left, z_right], amplitudes referenced to z = 0.
inline BodyOperators slab_operators(const GridPtr& g, const SlabBody& slab, double z_left) {
  if (slab.is_semi_infinite()) {
    throw DomainError("slab_operators: semi-infinite bodies are not representable in mode space");
  }
  const double z_right = z_left + slab.thickness;
  const MaterialAt mat = MaterialAt::evaluate(slab.material, g->omega());
  const auto n = static_cast<Eigen::Index>(g->size());
  Vec rp(n), rm(n), tr(n);
  const cplx I(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nd = g->node(static_cast<std::size_t>(i));
    const SpecularAmplitudes a = slab_amplitudes(mat, slab.thickness, nd.p, g->omega(), nd.k);
    rp(i) = a.rho_plus * std::exp(-2.0 * I * nd.kz * z_right);
    rm(i) = a.rho_minus * std::exp(2.0 * I * nd.kz * z_left);
    if (mat.mirror) {
      tr(i) = 0.0;
    } else {
      // τe^{−ik_z t} with the exponents combined so thick slabs do not overflow
      const cplx qm = medium_kz(mat.eps, g->omega(), nd.k);
      const cplx r = interface_fresnel(nd.p, g->omega(), nd.k, mat.eps).r;
      const cplx e2 = std::exp(2.0 * I * qm * slab.thickness);
      tr(i) = (1.0 - r * r) * std::exp(I * (qm - nd.kz) * slab.thickness) / (1.0 - r * r * e2);
    }
    if (!std::isfinite(std::abs(rp(i))) || !std::isfinite(std::abs(rm(i)))) {
      std::ostringstream os;
      os << "slab_operators: evanescent phase overflows at k = " << nd.k
         << " 1/m; reduce k_max or move the slab closer to z = 0";
      throw NumericalDomainError(os.str());
    }
  }
  return {OperatorMatrix(g, rp.asDiagonal()), OperatorMatrix(g, rm.asDiagonal()),
          OperatorMatrix(g, tr.asDiagonal()), OperatorMatrix(g, tr.asDiagonal())};
}

inline BodyOperators atom_body_operators(const GridPtr& g, cplx alpha, const Vec3& r_A) {
  using K = AtomOperatorKind;
  return {atom_operator(g, alpha, r_A, +1, K::Reflection),
          atom_operator(g, alpha, r_A, -1, K::Reflection),
          OperatorMatrix::identity(g) + atom_operator(g, alpha, r_A, +1, K::ModifiedTransmission),
          OperatorMatrix::identity(g) + atom_operator(g, alpha, r_A, -1, K::ModifiedTransmission)};
}

namespace detail {

inline Mat inverse_one_minus(const Mat& a) {
  const auto n = a.rows();
  const Mat m = Mat::Identity(n, n) - a;
  Eigen::PartialPivLU<Mat> lu(m);
  const double rc = lu.rcond();
  if (!(rc > 1e-14)) {
    std::ostringstream os;
    os << "multiple-scattering operator is singular (rcond = " << rc << ")";
    throw ResonanceError(os.str());
  }
  return lu.solve(Mat::Identity(n, n));
}

/// Σ_i w_i (AB)_ii without forming AB.
inline cplx trace_product(const Mat& a, const Mat& b, const Eigen::VectorXd& w) {
  return (w.cast<cplx>().asDiagonal() * a).cwiseProduct(b.transpose()).sum();
}

inline Eigen::VectorXd trace_weights(const ModeGrid& g, TraceNorm norm) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    w(static_cast<Eigen::Index>(i)) = norm == TraceNorm::Total ? 1.0 : g.measure(i);
  }
  return w;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Field correlators and the multiple-scattering solution.

struct DirectionalCorrelators {
  OperatorMatrix pp;
  OperatorMatrix pm;
  OperatorMatrix mp;
  OperatorMatrix mm;
};

/// Correlators of the field emitted by one body at temperature T (including
/// the prefactor (ω/2ε₀c²)N(ω,T)).
inline DirectionalCorrelators emitted_correlators(const BodyOperators& b, double T) {
  const ModeGrid& g = b.R_plus.grid();
  const GridPtr& gp = b.R_plus.grid_ptr();
  const double w = g.omega();
  const cplx pref = w / (2.0 * constants::eps0 * constants::c * constants::c) * N_sym(w, T);
  const Vec vpw = projector_diag(g, -1, true);
  const Vec vew = projector_diag(g, -1, false);
  const auto Ppw = vpw.asDiagonal();
  const auto Pew = vew.asDiagonal();
  auto same = [&](const Mat& R, const Mat& Tm) {
    Mat c = Mat(Ppw) - R * Ppw * R.adjoint() - Tm * Ppw * Tm.adjoint() + R * Pew -
            Pew * R.adjoint();
    return OperatorMatrix(gp, pref * c);
  };
  auto opp = [&](const Mat& Ra, const Mat& Ta, const Mat& Rb, const Mat& Tb) {
    Mat c = -(Ra * Ppw * Tb.adjoint()) - Ta * Ppw * Rb.adjoint() + Ta * Pew - Pew * Tb.adjoint();
    return OperatorMatrix(gp, pref * c);
  };
  const Mat &Rp = b.R_plus.scaled(), &Rm = b.R_minus.scaled();
  const Mat &Tp = b.T_plus.scaled(), &Tm = b.T_minus.scaled();
  return {same(Rp, Tp), opp(Rp, Tp, Rm, Tm), opp(Rm, Tm, Rp, Tp), same(Rm, Tm)};
}

/// Isotropic environment field at T3, same for both directions.
inline OperatorMatrix environment_correlator(const GridPtr& g, double T3) {
  const double w = g->omega();
  const double pref = w / (2.0 * constants::eps0 * constants::c * constants::c) * N_sym(w, T3);
  return diagonal_operator(g, [&](const GridNode& n) {
    return n.propagative ? cplx(pref / n.kz.real(), 0.0) : cplx(0.0);
  });
}

/// z-extent of the two bodies; region A lies left of body 1, B between the
/// bodies, C right of body 2.
struct Geometry {
  double z1_left;
  double z1_right;
  double z2_left;
  double z2_right;
};

struct FieldProblem {
  BodyOperators body1;
  BodyOperators body2;
  TemperatureTriple temps;
  Geometry geometry;
};

enum class Region { A, B, C };

struct CorrelatorSet {
  GridPtr grid;
  Geometry geometry;
  DirectionalCorrelators A;
  DirectionalCorrelators B;
  DirectionalCorrelators C;

  const DirectionalCorrelators& region(Region r) const {
    return r == Region::A ? A : (r == Region::B ? B : C);
  }
};

/// Total-field correlators in regions A, B, C. Sources (emission of body 1,
/// body 2, environment) are mutually uncorrelated; the fields follow
///   E^{B+} = U¹²(S₁ + R₁⁺S₂),  E^{B−} = U²¹(S₂ + R₂⁻S₁),
///   S₁ = E₁⁺ + T₁⁺E₃⁺,  S₂ = E₂⁻ + T₂⁻E₃⁻,
///   E^{A+} = E₃⁺,  E^{A−} = E₁⁻ + R₁⁻E₃⁺ + T₁⁻E^{B−},
///   E^{C+} = E₂⁺ + R₂⁺E₃⁻ + T₂⁺E^{B+},  E^{C−} = E₃⁻.
inline CorrelatorSet solve_region_fields(const FieldProblem& pr) {
  const BodyOperators& b1 = pr.body1;
  const BodyOperators& b2 = pr.body2;
  const GridPtr& gp = b1.R_plus.grid_ptr();
  const auto n = static_cast<Eigen::Index>(gp->size());
  const Mat I = Mat::Identity(n, n);
  const Mat Z = Mat::Zero(n, n);

  const Mat U12 = detail::inverse_one_minus(b1.R_plus.scaled() * b2.R_minus.scaled());
  const Mat U21 = detail::inverse_one_minus(b2.R_minus.scaled() * b1.R_plus.scaled());

  // sources: 0 E1+, 1 E1-, 2 E2+, 3 E2-, 4 E3+, 5 E3-
  const DirectionalCorrelators c1 = emitted_correlators(b1, pr.temps.T1);
  const DirectionalCorrelators c2 = emitted_correlators(b2, pr.temps.T2);
  const Mat c3 = environment_correlator(gp, pr.temps.T3).scaled();
  struct Block {
    int a, b;
    const Mat* m;
  };
  const std::vector<Block> src = {{0, 0, &c1.pp.scaled()}, {0, 1, &c1.pm.scaled()},
                                  {1, 0, &c1.mp.scaled()}, {1, 1, &c1.mm.scaled()},
                                  {2, 2, &c2.pp.scaled()}, {2, 3, &c2.pm.scaled()},
                                  {3, 2, &c2.mp.scaled()}, {3, 3, &c2.mm.scaled()},
                                  {4, 4, &c3},             {5, 5, &c3}};

  using Field = std::array<Mat, 6>;
  auto field = [&]() {
    Field f;
    for (auto& m : f) m = Z;
    return f;
  };
  const Mat &R1p = b1.R_plus.scaled(), &R1m = b1.R_minus.scaled();
  const Mat &T1p = b1.T_plus.scaled(), &T1m = b1.T_minus.scaled();
  const Mat &R2p = b2.R_plus.scaled(), &R2m = b2.R_minus.scaled();
  const Mat &T2p = b2.T_plus.scaled(), &T2m = b2.T_minus.scaled();

  Field Bp = field(), Bm = field(), Ap = field(), Am = field(), Cp = field(), Cm = field();
  Bp[0] = U12;
  Bp[4] = U12 * T1p;
  Bp[3] = U12 * R1p;
  Bp[5] = Bp[3] * T2m;
  Bm[3] = U21;
  Bm[5] = U21 * T2m;
  Bm[0] = U21 * R2m;
  Bm[4] = Bm[0] * T1p;
  Ap[4] = I;
  for (int a = 0; a < 6; ++a) Am[a] = T1m * Bm[a];
  Am[1] += I;
  Am[4] += R1m;
  for (int a = 0; a < 6; ++a) Cp[a] = T2p * Bp[a];
  Cp[2] += I;
  Cp[5] += R2p;
  Cm[5] = I;

  auto corr = [&](const Field& f, const Field& h) {
    Mat out = Z;
    for (const Block& s : src) {
      if (f[s.a].isZero(0.0) || h[s.b].isZero(0.0)) continue;
      out += f[s.a] * (*s.m) * h[s.b].adjoint();
    }
    return OperatorMatrix(gp, std::move(out));
  };
  auto region = [&](const Field& p, const Field& m) {
    return DirectionalCorrelators{corr(p, p), corr(p, m), corr(m, p), corr(m, m)};
  };
  return {gp, pr.geometry, region(Ap, Am), region(Bp, Bm), region(Cp, Cm)};
}

enum class FluxComponent { X, Y, Z, Heat };

/// Flux of ⟨T_mz⟩ (m = x, y, z; N per unit dω/2π) or ⟨S_z⟩ (W per unit
/// dω/2π) through the plane z = z̄ at the grid frequency. Same-direction
/// blocks contribute on propagative nodes, cross-direction blocks on
/// evanescent nodes.
inline double flux_at_plane(const CorrelatorSet& cs, Region region, FluxComponent comp,
                            double z_bar, TraceNorm norm = TraceNorm::PerArea) {
  const Geometry& geo = cs.geometry;
  const bool inside = (region == Region::A && z_bar < geo.z1_left) ||
                      (region == Region::B && z_bar > geo.z1_right && z_bar < geo.z2_left) ||
                      (region == Region::C && z_bar > geo.z2_right);
  if (!inside) {
    std::ostringstream os;
    os << "flux_at_plane: z = " << z_bar << " m is outside the requested region";
    throw DomainError(os.str());
  }
  const ModeGrid& g = *cs.grid;
  const DirectionalCorrelators& c = cs.region(region);
  const double w = g.omega();
  const double e2 = 2.0 * constants::eps0 * constants::c * constants::c;
  const cplx I(0.0, 1.0);
  cplx total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const GridNode& n = g.node(i);
    const cplx q = n.kz;
    const cplx dp = std::exp(I * q * z_bar);   // D^+
    const cplx dm = std::exp(-I * q * z_bar);  // D^-
    const double weight = norm == TraceNorm::Total ? 1.0 : g.measure(i);
    cplx pp, mm, pm, mp;
    if (n.propagative) {
      pp = dp * c.pp.scaled()(ii, ii) * std::conj(dp);
      mm = dm * c.mm.scaled()(ii, ii) * std::conj(dm);
    } else {
      pm = dp * c.pm.scaled()(ii, ii) * std::conj(dm);
      mp = dm * c.mp.scaled()(ii, ii) * std::conj(dp);
    }
    cplx v;
    switch (comp) {
      case FluxComponent::Z:
        v = -(e2 * q / (w * w)) * q * (pp + mm + pm + mp);
        break;
      case FluxComponent::X:
        v = -(e2 * q / (w * w)) * n.kx * (pp - mm + pm - mp);
        break;
      case FluxComponent::Y:
        v = -(e2 * q / (w * w)) * n.ky * (pp - mm + pm - mp);
        break;
      case FluxComponent::Heat:
        v = (e2 * q / w) * (pp - mm + pm - mp);
        break;
    }
    total += weight * v;
  }
  return total.real();
}

// ---------------------------------------------------------------------------
// Traces.

/// Fixed-ω equilibrium force density −2Re Tr{(k_z/ω)N[U¹²R₁⁺R₂⁻ + U²¹R₂⁻R₁⁺]}
/// (force on body 1 along +z; caller integrates ∫dω/2π).
inline double trace_eq_force(const OperatorMatrix& R1p, const OperatorMatrix& R2m, double T,
                             TraceNorm norm = TraceNorm::PerArea) {
  const ModeGrid& g = R1p.grid();
  const double w = g.omega();
  const Mat& A = R1p.scaled();
  const Mat& B = R2m.scaled();
  const Mat AB = A * B;
  const Mat BA = B * A;
  const Mat U12 = detail::inverse_one_minus(AB);
  const Mat U21 = detail::inverse_one_minus(BA);
  const Vec K = projector_diag(g, 1, true) + projector_diag(g, 1, false);
  const Eigen::VectorXd wt = detail::trace_weights(g, norm);
  const Mat KU12 = (K / w).asDiagonal() * U12;
  const Mat KU21 = (K / w).asDiagonal() * U21;
  const cplx t = detail::trace_product(KU12, AB, wt) + detail::trace_product(KU21, BA, wt);
  return -2.0 * (N_sym(w, T) * t).real();
}

/// Every term of the non-equilibrium trace Δ_m at fixed ω (trace sign),
/// including the individually divergent ones.
struct DeltaTrace {
  double value = 0.0;
  double term_abs_sum = 0.0;
  std::vector<Term> terms;
};

inline DeltaTrace trace_delta_m(const BodyOperators& b1, const BodyOperators& b2,
                                const TemperatureTriple& temps, int m,
                                TraceNorm norm = TraceNorm::PerArea) {
  if (m != 1 && m != 2) throw DomainError("trace_delta_m: m must be 1 or 2");
  const ModeGrid& g = b1.R_plus.grid();
  const double w = g.omega();
  const auto n = static_cast<Eigen::Index>(g.size());
  const double s = m == 1 ? -1.0 : 1.0;
  const Eigen::VectorXd wt = detail::trace_weights(g, norm);

  const Mat &R1p = b1.R_plus.scaled(), &R1m = b1.R_minus.scaled();
  const Mat &T1p = b1.T_plus.scaled(), &T1m = b1.T_minus.scaled();
  const Mat &R2m = b2.R_minus.scaled(), &T2m = b2.T_minus.scaled();

  const Vec Pm1pw = projector_diag(g, -1, true), Pm1ew = projector_diag(g, -1, false);
  const Vec Pmpw = projector_diag(g, m, true), Pmew = projector_diag(g, m, false);
  const Vec Pm_1pw = projector_diag(g, m - 1, true);

  const OccupationDiffs nd = OccupationDiffs::at(w, temps);
  const double n12 = nd.n12, n13 = nd.n13, n23 = nd.n23;
  const double n21 = -n12, n31 = -n13, n32 = -n23;
  const double nm3 = m == 1 ? n13 : n23;

  const Mat U12 = detail::inverse_one_minus(R1p * R2m);
  const Mat U21 = detail::inverse_one_minus(R2m * R1p);

  // right factor shared by A_m and B_m: P_m^pw + s Y†P_m^pw Y + Y†P_m^ew + s P_m^ew Y
  auto right = [&](const Mat& Y) {
    Mat r = Y.adjoint() * (Pmpw.asDiagonal() * Y) * s + Y.adjoint() * Pmew.asDiagonal();
    r += s * (Pmew.asDiagonal() * Y);
    r.diagonal() += Pmpw;
    return r;
  };
  auto A_m = [&](const Mat& X, const Mat& Y, const Mat& U) {
    Mat inner = -(X * Pm1pw.asDiagonal() * X.adjoint()) + X * Pm1ew.asDiagonal() -
                Pm1ew.asDiagonal() * X.adjoint();
    inner.diagonal() += Pm1pw;
    const Mat left = U * inner * U.adjoint();
    return detail::trace_product(left, right(Y), wt);
  };
  auto B_m = [&](const Mat& Y, const Mat& Tm, const Mat& U) {
    const Mat UT = U * Tm;
    const Mat left = UT * Pm1pw.asDiagonal() * UT.adjoint();
    return detail::trace_product(left, right(Y), wt);
  };

  std::vector<std::pair<std::string, cplx>> t;
  t.emplace_back("A21", 0.5 * n21 * A_m(R2m, R1p, U21));
  t.emplace_back("A12", -0.5 * n21 * s * A_m(R1p, R2m, U12));
  {
    const Mat a = Pmpw.asDiagonal() * R1m;
    const Mat b = Pm1pw.asDiagonal() * R1m.adjoint();
    t.emplace_back("R1m", n13 * detail::trace_product(a, b, wt));
  }
  {
    cplx tr = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) tr += wt(i) * Pm_1pw(i);
    t.emplace_back("P_m-1", s * nm3 * tr);
  }
  t.emplace_back("B1", n31 * s * B_m(R2m, T1p, U12));
  {
    const Mat a = Pmpw.asDiagonal() * R1m * Pm1pw.asDiagonal();
    const Mat b = T1p.adjoint() * U12.adjoint() * R2m.adjoint() * T1m.adjoint();
    const cplx z = detail::trace_product(a, b, wt);
    t.emplace_back("R1mT1", -n31 * (z + std::conj(z)));
  }
  {
    const Mat V = T1m * U21;
    const Mat tail = V.adjoint() * Pmpw.asDiagonal() * V;  // U21† T1-† P_m T1- U21
    Mat f12 = R2m * Pm1ew.asDiagonal() - Pm1ew.asDiagonal() * R2m.adjoint() -
              R2m * Pm1pw.asDiagonal() * R2m.adjoint();
    f12.diagonal() += Pm1pw;
    const Mat f23 = T2m * Pm1pw.asDiagonal() * T2m.adjoint();
    const Mat RT = R2m * T1p;
    const Mat f13 = RT * Pm1pw.asDiagonal() * RT.adjoint();
    t.emplace_back("gap_n12", n12 * detail::trace_product(f12, tail, wt));
    t.emplace_back("gap_n23", n23 * detail::trace_product(f23, tail, wt));
    t.emplace_back("gap_n13", n13 * detail::trace_product(f13, tail, wt));
  }
  t.emplace_back("B2", n32 * B_m(R1p, T2m, U21));

  const double pref = (m == 1 ? 1.0 : -1.0) * constants::hbar * (m == 1 ? w : 1.0);
  DeltaTrace out;
  cplx total = 0.0;
  for (const auto& [name, v] : t) {
    total += v;
    out.terms.push_back({name, pref * v.real()});
    out.term_abs_sum += std::fabs(pref) * std::abs(v);
  }
  out.value = pref * total.real();
  return out;
}

}  // namespace fluctua::modespace
