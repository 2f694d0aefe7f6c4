#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fluctua/modespace.hpp"
#include "fluctua/spectral.hpp"

using namespace fluctua;
using namespace fluctua::modespace;

namespace {

constexpr double kOmega = 1.2e14;
constexpr double kGap = 5e-6;
constexpr double kT1 = 2e-6;
constexpr double kT2 = 3e-6;

SlabBody silica() { return SlabBody(kT1, preset("fused-silica-2osc")); }
SlabBody silicon() { return SlabBody(kT2, preset("silicon-drude-lorentz")); }

GridPtr cavity_grid(int n_radial, int n_angular) {
  return build_grid(kOmega, fluctua::detail::kappa_max(kGap) + kOmega / constants::c, n_radial,
                    n_angular);
}

Geometry cavity_geometry() { return {-kT1, 0.0, kGap, kGap + kT2}; }

BodyOperators black_body(const GridPtr& g) {
  return {OperatorMatrix::zero(g), OperatorMatrix::zero(g), OperatorMatrix::zero(g),
          OperatorMatrix::zero(g)};
}

double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

/// Σ_i μ_i · grouped closed-form density on the grid nodes.
double spectral_on_grid(const ModeGrid& g, int m, const TemperatureTriple& tt) {
  const double w = g.omega();
  const MaterialAt m1 = MaterialAt::evaluate(silica().material, w);
  const MaterialAt m2 = MaterialAt::evaluate(silicon().material, w);
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const GridNode& n = g.node(i);
    const auto a1 = slab_amplitudes(m1, kT1, n.p, w, n.k);
    const auto a2 = slab_amplitudes(m2, kT2, n.p, w, n.k);
    s += g.measure(i) * delta_m_integrand(m, w, n.k, n.p, a1, a2, kGap, tt).total();
  }
  return s;
}

/// Atom operators with every entry small enough for first-order behaviour.
double small_alpha(const GridPtr& g, const Vec3& r) {
  const double a0 = 1e-39;
  const auto probe = atom_body_operators(g, a0, r);
  return a0 * 1e-4 / probe.R_plus.scaled().norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid and operator plumbing.

TEST(ModeGrid, MinimalGridHasFourModes) {
  const auto g = build_grid(kOmega, 3.0 * kOmega / constants::c, 2, 1);
  EXPECT_EQ(g->size(), 4u);
  int pw = 0;
  for (const auto& n : g->nodes()) pw += n.propagative ? 1 : 0;
  EXPECT_EQ(pw, 2);
}

TEST(ModeGrid, PropagativeAreaIsLightDisc) {
  const double k0 = kOmega / constants::c;
  const auto g = build_grid(kOmega, 4.0 * k0, 16, 5);
  double area = 0.0;
  for (const auto& n : g->nodes()) {
    EXPECT_GT(n.weight, 0.0);
    if (n.propagative && n.p == Polarization::TE) area += n.weight;
  }
  EXPECT_NEAR(area / (constants::pi * k0 * k0), 1.0, 1e-12);
}

TEST(ModeGrid, RefinementDoublesNodeCount) {
  const double kmax = 4.0 * kOmega / constants::c;
  EXPECT_EQ(build_grid(kOmega, kmax, 8, 4)->size() * 2, build_grid(kOmega, kmax, 16, 4)->size());
  EXPECT_EQ(build_grid(kOmega, kmax, 8, 4)->size() * 2, build_grid(kOmega, kmax, 8, 8)->size());
}

TEST(ModeGrid, RejectsDegenerateInput) {
  const double k0 = kOmega / constants::c;
  EXPECT_THROW(build_grid(kOmega, 0.5 * k0, 4, 2), DomainError);
  EXPECT_THROW(build_grid(kOmega, 2.0 * k0, 3, 2), DomainError);
  EXPECT_THROW(build_grid(kOmega, 2.0 * k0, 0, 2), DomainError);
  EXPECT_THROW(build_grid(kOmega, 2.0 * k0, 4, 0), DomainError);
  EXPECT_THROW(build_grid(-1.0, 2.0 * k0, 4, 2), DomainError);
}

TEST(DiagonalOperator, UnitSymbolIsIdentity) {
  const auto g = cavity_grid(6, 3);
  const auto id = diagonal_operator(g, [](const GridNode&) { return cplx(1.0); });
  EXPECT_EQ(max_abs(id.scaled() - Mat::Identity(id.scaled().rows(), id.scaled().cols())), 0.0);
  for (std::size_t i = 0; i < g->size(); ++i) {
    EXPECT_NEAR(id.element(i, i).real() * g->measure(i), 1.0, 1e-14);
  }
}

TEST(DiagonalOperator, ProductMultipliesSymbols) {
  const auto g = cavity_grid(6, 3);
  auto s1 = [](const GridNode& n) { return cplx(n.k * 1e-6, 0.3); };
  auto s2 = [](const GridNode& n) { return n.kz * 1e-6; };
  const auto prod = diagonal_operator(g, s1) * diagonal_operator(g, s2);
  const auto direct = diagonal_operator(g, [&](const GridNode& n) { return s1(n) * s2(n); });
  EXPECT_LT(max_abs(prod.scaled() - direct.scaled()), 1e-14 * max_abs(direct.scaled()));
}

TEST(DiagonalOperator, SlabOperatorsMatchAmplitudes) {
  const auto g = cavity_grid(8, 3);
  const auto b = slab_operators(g, silicon(), kGap);
  const MaterialAt mat = MaterialAt::evaluate(silicon().material, kOmega);
  const cplx I(0.0, 1.0);
  const Mat& rm = b.R_minus.scaled();
  for (std::size_t i = 0; i < g->size(); ++i) {
    const auto& n = g->node(i);
    const auto a = slab_amplitudes(mat, kT2, n.p, kOmega, n.k);
    const auto ii = static_cast<Eigen::Index>(i);
    EXPECT_LT(std::abs(rm(ii, ii) - a.rho_minus * std::exp(2.0 * I * n.kz * kGap)),
              1e-13 * (1.0 + std::abs(a.rho_minus)));
    EXPECT_LT(std::abs(b.T_plus.scaled()(ii, ii) - a.tau * std::exp(-I * n.kz * kT2)),
              1e-12 * (1.0 + std::abs(a.tau)));
  }
  EXPECT_EQ(max_abs(rm - Mat(rm.diagonal().asDiagonal())), 0.0);
}

TEST(DiagonalOperator, SemiInfiniteSlabRejected) {
  const auto g = cavity_grid(4, 1);
  EXPECT_THROW(slab_operators(g, SlabBody::semi_infinite(preset("silicon-drude-lorentz")), 0.0),
               DomainError);
}

TEST(AtomOperator, ZeroPolarizabilityGivesZeroMatrix) {
  const auto g = cavity_grid(6, 4);
  const auto r = atom_operator(g, 0.0, {0.0, 0.0, -1e-6}, +1, AtomOperatorKind::Reflection);
  EXPECT_EQ(max_abs(r.scaled()), 0.0);
}

TEST(AtomOperator, EntriesCarryNoDiagonalWeight) {
  const auto g = cavity_grid(6, 4);
  const Vec3 r{1e-7, -2e-7, -1e-6};
  const cplx alpha(3e-40, 1e-41);
  for (int phi : {+1, -1}) {
    for (auto kind : {AtomOperatorKind::Reflection, AtomOperatorKind::ModifiedTransmission}) {
      const auto op = atom_operator(g, alpha, r, phi, kind);
      for (std::size_t i = 0; i < g->size(); i += 7) {
        for (std::size_t j = 0; j < g->size(); j += 5) {
          const cplx e = kind == AtomOperatorKind::Reflection
                             ? atom_reflection_element(alpha, g->mode(i, phi), g->mode(j, phi), r)
                             : atom_transmission_element(alpha, g->mode(i, phi), g->mode(j, phi), r);
          EXPECT_LE(std::abs(op.element(i, j) - e), 1e-12 * std::abs(e));
        }
      }
    }
  }
}

TEST(AtomOperator, ReciprocityStructure) {
  // k_z⟨k,p|R|k′,p′⟩ = σ_pσ_p′ k′_z⟨−k′,p′|R|−k,p⟩, σ_TE = −1, σ_TM = 1;
  // −k sits half a turn away on the angular ring.
  const int na = 6;
  const auto g = cavity_grid(4, na);
  const Vec3 r{2e-7, 1e-7, -1.5e-6};
  const auto op = atom_operator(g, cplx(2e-40, 5e-42), r, +1, AtomOperatorKind::Reflection);
  auto opposite = [&](std::size_t i) {
    const std::size_t ring = i / (2 * na), j = (i / 2) % na, pol = i % 2;
    return ring * 2 * na + ((j + na / 2) % na) * 2 + pol;
  };
  auto sigma = [](Polarization p) { return p == Polarization::TE ? -1.0 : 1.0; };
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    for (std::size_t j = 0; j < g->size(); ++j) {
      const auto& a = g->node(i);
      const auto& b = g->node(j);
      ASSERT_NEAR(g->node(opposite(j)).kx, -b.kx, 1e-9 * b.k + 1e-6);
      const cplx lhs = a.kz * op.element(i, j);
      const cplx rhs = sigma(a.p) * sigma(b.p) * b.kz * op.element(opposite(j), opposite(i));
      worst = std::max(worst, std::abs(lhs - rhs));
      scale = std::max(scale, std::abs(lhs));
    }
  }
  ASSERT_GT(scale, 0.0);
  EXPECT_LT(worst, 1e-12 * scale);
}

// ---------------------------------------------------------------------------
// Region fields.

TEST(RegionFields, TransparentBodiesGiveEnvironmentField) {
  const auto g = cavity_grid(6, 2);
  const auto tb = transparent_body(g);
  const auto cs = solve_region_fields({tb, tb, TemperatureTriple(0, 0, 300), cavity_geometry()});
  const Mat env = environment_correlator(g, 300).scaled();
  for (Region reg : {Region::A, Region::B, Region::C}) {
    const auto& c = cs.region(reg);
    EXPECT_LT(max_abs(c.pp.scaled() - env), 1e-14 * max_abs(env));
    EXPECT_LT(max_abs(c.mm.scaled() - env), 1e-14 * max_abs(env));
    EXPECT_EQ(max_abs(c.pm.scaled()), 0.0);
  }
}

TEST(RegionFields, TransparentBodyTwoCollapses) {
  const auto g = cavity_grid(8, 2);
  const auto b1 = slab_operators(g, silica(), -kT1);
  const TemperatureTriple tt(300, 500, 200);
  const auto cs = solve_region_fields({b1, transparent_body(g), tt, cavity_geometry()});
  // E^{B+} = E₁⁺ + T₁⁺E₃⁺ + R₁⁺E₃⁻
  const Mat& T1 = b1.T_plus.scaled();
  const Mat& R1 = b1.R_plus.scaled();
  const Mat c3 = environment_correlator(g, tt.T3).scaled();
  const Mat expect = emitted_correlators(b1, tt.T1).pp.scaled() + T1 * c3 * T1.adjoint() +
                     R1 * c3 * R1.adjoint();
  EXPECT_LT(max_abs(cs.B.pp.scaled() - expect), 1e-12 * max_abs(expect));
}

TEST(RegionFields, DiagonalSlabsMatchScalarCavity) {
  const auto g = cavity_grid(10, 2);
  const auto b1 = slab_operators(g, silica(), -kT1);
  const auto b2 = slab_operators(g, silicon(), kGap);
  const TemperatureTriple tt(300, 100, 50);
  const auto cs = solve_region_fields({b1, b2, tt, cavity_geometry()});
  const MaterialAt m1 = MaterialAt::evaluate(silica().material, kOmega);
  const MaterialAt m2 = MaterialAt::evaluate(silicon().material, kOmega);
  const Mat& Bpp = cs.B.pp.scaled();
  EXPECT_EQ(max_abs(Bpp - Mat(Bpp.diagonal().asDiagonal())), 0.0);
  for (std::size_t i = 0; i < g->size(); ++i) {
    const auto& n = g->node(i);
    if (!n.propagative) continue;
    const auto a1 = slab_amplitudes(m1, kT1, n.p, kOmega, n.k);
    const auto a2 = slab_amplitudes(m2, kT2, n.p, kOmega, n.k);
    const cplx X = a1.rho_plus;
    const cplx Y = a2.rho_minus * std::exp(cplx(0.0, 2.0) * n.kz * kGap);
    const double aU = 1.0 / std::norm(1.0 - X * Y);
    const AngularMode up(kOmega, n.kx, n.ky, n.p, +1), down(kOmega, n.kx, n.ky, n.p, -1);
    const double c3 = env_correlator_density(up, tt.T3);
    const double s1 = emitted_correlator_same_dir(a1, up, tt.T1) + std::norm(a1.tau) * c3;
    const double s2 = emitted_correlator_same_dir(a2, down, tt.T2) + std::norm(a2.tau) * c3;
    const double expect = aU * (s1 + std::norm(X) * s2);
    const auto ii = static_cast<Eigen::Index>(i);
    EXPECT_NEAR(Bpp(ii, ii).real(), expect, 1e-10 * std::fabs(expect));
    EXPECT_LT(std::fabs(Bpp(ii, ii).imag()), 1e-10 * std::fabs(expect));
  }
}

TEST(RegionFields, CorrelatorsAreHermitian) {
  const auto g = cavity_grid(6, 4);
  const Vec3 r{0.0, 0.0, -1e-6};
  const auto b1 = atom_body_operators(g, 0.3 * small_alpha(g, r) * 1e4, r);
  const auto b2 = slab_operators(g, silicon(), kGap);
  const auto cs = solve_region_fields(
      {b1, b2, TemperatureTriple(300, 100, 0), Geometry{r[2], r[2], kGap, kGap + kT2}});
  for (Region reg : {Region::A, Region::B, Region::C}) {
    const auto& c = cs.region(reg);
    for (const Mat* m : {&c.pp.scaled(), &c.mm.scaled()}) {
      EXPECT_LT(max_abs(*m - m->adjoint()), 1e-12 * max_abs(*m));
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (!g->node(i).propagative) continue;
        const auto ii = static_cast<Eigen::Index>(i);
        EXPECT_GE((*m)(ii, ii).real(), 0.0);
      }
    }
    EXPECT_LT(max_abs(c.pm.scaled() - c.mp.scaled().adjoint()), 1e-12 * max_abs(c.pm.scaled()));
  }
}

// ---------------------------------------------------------------------------
// Plane fluxes.

TEST(PlaneFlux, IsotropicFieldIsPureRadiationPressure) {
  // no net energy or tangential momentum crosses the plane; the normal
  // stress is the radiation pressure u/3 of the spectral energy density
  const auto g = cavity_grid(16, 4);
  const auto tb = transparent_body(g);
  const double T = 300.0;
  const auto cs = solve_region_fields({tb, tb, TemperatureTriple(0, 0, T), cavity_geometry()});
  const double u = kOmega * kOmega / (constants::pi * constants::pi * std::pow(constants::c, 3)) *
                   N_sym(kOmega, T) * 2.0 * constants::pi;
  const double pz = flux_at_plane(cs, Region::B, FluxComponent::Z, 1e-6);
  EXPECT_NEAR(std::fabs(pz), u / 3.0, 1e-10 * u);
  for (auto comp : {FluxComponent::X, FluxComponent::Y}) {
    EXPECT_LT(std::fabs(flux_at_plane(cs, Region::B, comp, 1e-6)), 1e-14 * std::fabs(pz));
  }
  const double heat_scale = std::fabs(pz) * constants::c;
  EXPECT_LT(std::fabs(flux_at_plane(cs, Region::B, FluxComponent::Heat, 1e-6)),
            1e-14 * heat_scale);
}

TEST(PlaneFlux, BlackBodyStefanBoltzmann) {
  const double T = 300.0;
  const double wmax = 45.0 * constants::kB * T / constants::hbar;
  double total = 0.0;
  for (int panel = 0; panel < 6; ++panel) {
    std::vector<double> x, w;
    gauss_legendre(10, wmax * panel / 6.0, wmax * (panel + 1) / 6.0, x, w);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const auto g = build_grid(x[j], 2.0 * x[j] / constants::c, 16, 1);
      const auto cs = solve_region_fields(
          {black_body(g), transparent_body(g), TemperatureTriple(T, 0, 0), cavity_geometry()});
      total += w[j] / (2.0 * constants::pi) * flux_at_plane(cs, Region::B, FluxComponent::Heat, 1e-6);
    }
  }
  const double sigma = constants::pi * constants::pi * std::pow(constants::kB, 4) /
                       (60.0 * std::pow(constants::hbar, 3) * constants::c * constants::c);
  EXPECT_NEAR(total / (sigma * std::pow(T, 4)), 1.0, 1e-2);
}

TEST(PlaneFlux, IndependentOfPlanePosition) {
  const auto g = cavity_grid(12, 2);
  const auto b1 = slab_operators(g, silica(), -kT1);
  const auto b2 = slab_operators(g, silicon(), kGap);
  const auto cs = solve_region_fields({b1, b2, TemperatureTriple(300, 0, 0), cavity_geometry()});
  for (auto comp : {FluxComponent::Z, FluxComponent::Heat}) {
    const double a = flux_at_plane(cs, Region::B, comp, 0.7e-6);
    const double b = flux_at_plane(cs, Region::B, comp, 4.1e-6);
    EXPECT_LT(std::fabs(a - b), 1e-10 * std::fabs(a));
    const double c1 = flux_at_plane(cs, Region::A, comp, -3e-6);
    const double c2 = flux_at_plane(cs, Region::A, comp, -9e-6);
    EXPECT_LT(std::fabs(c1 - c2), 1e-10 * std::fabs(c1));
  }
}

TEST(PlaneFlux, PlaneOutsideRegionRejected) {
  const auto g = cavity_grid(4, 1);
  const auto tb = transparent_body(g);
  const auto cs = solve_region_fields({tb, tb, TemperatureTriple(0, 0, 300), cavity_geometry()});
  EXPECT_THROW(flux_at_plane(cs, Region::B, FluxComponent::Z, -1e-6), DomainError);
  EXPECT_THROW(flux_at_plane(cs, Region::A, FluxComponent::Z, 1e-6), DomainError);
  EXPECT_THROW(flux_at_plane(cs, Region::C, FluxComponent::Heat, kGap + 1e-6), DomainError);
}

// ---------------------------------------------------------------------------
// Equilibrium trace.

TEST(EqTrace, MirrorsMatchSpectralDensity) {
  const auto g = cavity_grid(12, 1);
  const SlabBody mirror(1e-6, material::PerfectMirror{});
  const auto b1 = slab_operators(g, mirror, -1e-6);
  const auto b2 = slab_operators(g, mirror, kGap);
  const double T = 300.0;
  const double trace = trace_eq_force(b1.R_plus, b2.R_minus, T);
  const auto a = SpecularAmplitudes::symmetric(1.0, 0.0);
  double oracle = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    const auto& n = g->node(i);
    const auto am = n.p == Polarization::TE ? SpecularAmplitudes::symmetric(-1.0, 0.0) : a;
    oracle += g->measure(i) * eq_force_density_real_axis(kOmega, n.k, am, am, kGap, T);
  }
  EXPECT_NEAR(trace, oracle, 1e-10 * std::fabs(oracle));
}

TEST(EqTrace, VanishesWithoutBodyOne) {
  const auto g = cavity_grid(6, 2);
  const auto b2 = slab_operators(g, silicon(), kGap);
  EXPECT_EQ(trace_eq_force(OperatorMatrix::zero(g), b2.R_minus, 300.0), 0.0);
}

TEST(EqTrace, InterchangeGivesOppositeForceOnBodyTwo) {
  const auto g = cavity_grid(10, 2);
  const auto b1 = slab_operators(g, silica(), -kT1);
  const auto b2 = slab_operators(g, silicon(), kGap);
  const double T = 300.0;
  const double f1 = trace_eq_force(b1.R_plus, b2.R_minus, T);
  const double f2 = -trace_eq_force(b2.R_minus, b1.R_plus, T);
  EXPECT_NEAR(f2, -f1, 1e-12 * std::fabs(f1));
  // body-2 force from the stress flux on either side of it
  const auto cs = solve_region_fields({b1, b2, TemperatureTriple(T, T, T), cavity_geometry()});
  const double f2_flux = flux_at_plane(cs, Region::C, FluxComponent::Z, kGap + kT2 + 1e-6) -
                         flux_at_plane(cs, Region::B, FluxComponent::Z, 1e-6);
  EXPECT_NEAR(f2_flux, f2, 1e-9 * std::fabs(f1));
}

// ---------------------------------------------------------------------------
// Non-equilibrium trace.

TEST(DeltaTrace, DivergentPiecesCancelForTransparentBodyOne) {
  const auto g = cavity_grid(12, 4);
  const auto b2 = slab_operators(g, silicon(), kGap);
  for (int m : {1, 2}) {
    const auto d = trace_delta_m(transparent_body(g), b2, TemperatureTriple(300, 100, 0), m);
    EXPECT_GT(d.term_abs_sum, 0.0);
    EXPECT_LE(std::fabs(d.value), 1e-12 * d.term_abs_sum);
  }
}

TEST(DeltaTrace, VanishesInEquilibrium) {
  const auto g = cavity_grid(8, 2);
  const auto b1 = slab_operators(g, silica(), -kT1);
  const auto b2 = slab_operators(g, silicon(), kGap);
  for (int m : {1, 2}) {
    const auto d = trace_delta_m(b1, b2, TemperatureTriple(300, 300, 300), m);
    EXPECT_EQ(d.value, 0.0);
  }
}

TEST(DeltaTrace, MatchesSpectralOnSharedGrid) {
  const auto g = cavity_grid(16, 2);
  const auto b1 = slab_operators(g, silica(), -kT1);
  const auto b2 = slab_operators(g, silicon(), kGap);
  for (const auto& tt : {TemperatureTriple(300, 0, 0), TemperatureTriple(0, 300, 600),
                         TemperatureTriple(300, 300, 0)}) {
    for (int m : {1, 2}) {
      const double generic = trace_delta_m(b1, b2, tt, m).value;
      const double grouped = spectral_on_grid(*g, m, tt);
      EXPECT_NEAR(generic, grouped, 1e-6 * std::fabs(grouped)) << "m=" << m << " T1=" << tt.T1;
    }
  }
}

TEST(DeltaTrace, FluxBalanceOnBodyOne) {
  const auto g = cavity_grid(12, 2);
  const auto b1 = slab_operators(g, silica(), -kT1);
  const auto b2 = slab_operators(g, silicon(), kGap);
  const TemperatureTriple tt(300, 100, 0);
  const auto cs = solve_region_fields({b1, b2, tt, cavity_geometry()});
  const double f1 = flux_at_plane(cs, Region::B, FluxComponent::Z, 1e-6) -
                    flux_at_plane(cs, Region::A, FluxComponent::Z, -3e-6);
  const double h1 = flux_at_plane(cs, Region::B, FluxComponent::Heat, 1e-6) -
                    flux_at_plane(cs, Region::A, FluxComponent::Heat, -3e-6);
  const double feq = 0.5 * (trace_eq_force(b1.R_plus, b2.R_minus, tt.T1) +
                            trace_eq_force(b1.R_plus, b2.R_minus, tt.T2));
  const auto d2 = trace_delta_m(b1, b2, tt, 2);
  const auto d1 = trace_delta_m(b1, b2, tt, 1);
  EXPECT_NEAR(f1, feq + d2.value, 1e-8 * (std::fabs(feq) + d2.term_abs_sum));
  EXPECT_NEAR(h1, -d1.value, 1e-8 * d1.term_abs_sum);
}

TEST(DeltaTrace, BodyTwoFromMirroredSystem) {
  // force and heat of body 2 equal those of body 1 in the mirror image with
  // T1 and T2 exchanged; the force flips sign with the axis
  const auto g = cavity_grid(12, 2);
  const TemperatureTriple tt(300, 100, 0), swapped(100, 300, 0);
  const auto b1 = slab_operators(g, silica(), -kT1);
  const auto b2 = slab_operators(g, silicon(), kGap);
  const auto cs = solve_region_fields({b1, b2, tt, cavity_geometry()});
  const double zc = kGap + kT2 + 1e-6;
  const double f2 = flux_at_plane(cs, Region::C, FluxComponent::Z, zc) -
                    flux_at_plane(cs, Region::B, FluxComponent::Z, 1e-6);
  const double h2 = flux_at_plane(cs, Region::C, FluxComponent::Heat, zc) -
                    flux_at_plane(cs, Region::B, FluxComponent::Heat, 1e-6);

  const auto m1 = slab_operators(g, silicon(), -kT2);
  const auto m2 = slab_operators(g, silica(), kGap);
  const double feq = 0.5 * (trace_eq_force(m1.R_plus, m2.R_minus, swapped.T1) +
                            trace_eq_force(m1.R_plus, m2.R_minus, swapped.T2));
  const auto d2 = trace_delta_m(m1, m2, swapped, 2);
  const auto d1 = trace_delta_m(m1, m2, swapped, 1);
  EXPECT_NEAR(f2, -(feq + d2.value), 1e-8 * (std::fabs(feq) + d2.term_abs_sum));
  EXPECT_NEAR(h2, -d1.value, 1e-8 * d1.term_abs_sum);
}

TEST(DeltaTrace, GridConvergenceOrder) {
  const TemperatureTriple tt(300, 0, 0);
  auto value = [&](int nr) {
    const auto g = cavity_grid(nr, 1);
    return trace_delta_m(slab_operators(g, silica(), -kT1), slab_operators(g, silicon(), kGap), tt,
                         2)
        .value;
  };
  const double ref = value(256);
  const double e1 = std::fabs(value(16) - ref);
  const double e2 = std::fabs(value(32) - ref);
  ASSERT_GT(e1, 0.0);
  EXPECT_GE(std::log2(e1 / std::max(e2, 1e-300)), 2.0);
}

TEST(DeltaTrace, WeightRescalingKeepsFirstOrderResponse) {
  // Under w_i → λw_i the atom's scaled entries grow by λ while every
  // diagonal (would-be divergent) piece is unchanged; only their exact
  // cancellation leaves a response that is linear in λ.
  const double lambda = 3.0;
  const Vec3 r{0.0, 0.0, -1e-6};
  const auto g = cavity_grid(6, 4);
  const auto gl = rescale_weights(*g, lambda);
  const double a = small_alpha(g, r);
  const TemperatureTriple tt(0, 300, 0);
  auto response = [&](const GridPtr& grid) {
    const auto b2 = slab_operators(grid, silicon(), kGap);
    auto f = [&](double al) {
      const auto b1 = al == 0.0 ? transparent_body(grid) : atom_body_operators(grid, al, r);
      return trace_delta_m(b1, b2, tt, 2, TraceNorm::Total).value;
    };
    return (4.0 * f(a / 2.0) - f(a) - 3.0 * f(0.0)) / a;
  };
  const double base = response(g);
  EXPECT_NEAR(response(gl) / lambda, base, 1e-6 * std::fabs(base));
}
