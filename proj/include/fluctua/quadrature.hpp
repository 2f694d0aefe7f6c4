#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"

namespace fluctua {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
};

/// Component-wise result for vector-valued integrands.
template <std::size_t N>
struct VectorQuadratureResult {
  std::array<double, N> value{};
  std::array<double, N> error{};
  double error_estimate = 0.0;  ///< sum of component errors
  std::size_t evaluations = 0;
};

struct QuadratureOptions {
  double rel_tol = 1e-8;
  double abs_tol = 0.0;
  std::size_t max_subdivisions = 4000;
  /// Measure rel_tol against Σ_c ∫|f_c| instead of Σ_c |∫f_c|; for
  /// integrands whose integral may cancel to zero.
  bool relative_to_abs = false;
  /// On hitting max_subdivisions return the current estimate (its error
  /// reflects the shortfall) instead of throwing ConvergenceError.
  bool return_on_limit = false;
  /// Interior points used to seed the initial partition.
  std::vector<double> breakpoints;
};

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

namespace detail {

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
inline constexpr std::array<double, 11> kXgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000};
inline constexpr std::array<double, 11> kWgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208608924210, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> kWg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

template <std::size_t N>
struct Panel {
  double a;
  double b;
  std::array<double, N> value;
  std::array<double, N> error;
  double err_norm;
  double abs_norm;
};

template <std::size_t N>
struct PanelOrder {
  bool operator()(const Panel<N>& x, const Panel<N>& y) const {
    if (x.err_norm != y.err_norm) return x.err_norm < y.err_norm;
    return x.a > y.a;  // tie-break: leftmost first
  }
};

template <std::size_t N, class F>
Panel<N> gauss_kronrod21(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  std::array<double, N> resk{}, resg{}, resabs{}, resasc{};
  std::array<std::array<double, N>, 21> fv;

  fv[10] = f(center);
  for (int j = 0; j < 10; ++j) {
    const double dx = half * kXgk[j];
    fv[j] = f(center - dx);
    fv[20 - j] = f(center + dx);
  }
  for (std::size_t c = 0; c < N; ++c) {
    double k = kWgk[10] * fv[10][c];
    double g = 0.0;
    double ab = kWgk[10] * std::fabs(fv[10][c]);
    for (int j = 0; j < 10; ++j) {
      const double s = fv[j][c] + fv[20 - j][c];
      k += kWgk[j] * s;
      ab += kWgk[j] * (std::fabs(fv[j][c]) + std::fabs(fv[20 - j][c]));
      if (j % 2 == 1) g += kWg[j / 2] * s;
    }
    const double mean = 0.5 * k;
    double asc = kWgk[10] * std::fabs(fv[10][c] - mean);
    for (int j = 0; j < 10; ++j) {
      asc += kWgk[j] * (std::fabs(fv[j][c] - mean) + std::fabs(fv[20 - j][c] - mean));
    }
    resk[c] = k * half;
    resg[c] = g * half;
    resabs[c] = ab * std::fabs(half);
    resasc[c] = asc * std::fabs(half);
  }

  Panel<N> p{a, b, resk, {}, 0.0, 0.0};
  for (std::size_t c = 0; c < N; ++c) p.abs_norm += resabs[c];
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr double tiny = std::numeric_limits<double>::min();
  for (std::size_t c = 0; c < N; ++c) {
    double err = std::fabs(resk[c] - resg[c]);
    if (resasc[c] != 0.0 && err != 0.0) {
      err = resasc[c] * std::fmin(1.0, std::pow(200.0 * err / resasc[c], 1.5));
    }
    if (resabs[c] > tiny / (50.0 * eps)) err = std::fmax(50.0 * eps * resabs[c], err);
    if (!std::isfinite(resk[c]) || !std::isfinite(err)) {
      std::ostringstream os;
      os << "non-finite integrand on [" << a << ", " << b << "]";
      throw NumericalDomainError(os.str());
    }
    p.error[c] = err;
    p.err_norm += err;
  }
  return p;
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (21-point) integration of a vector-valued
/// integrand. Stops when Σ errors ≤ max(abs_tol, rel_tol·Σ_c |I_c|).
/// Panels are bisected worst-first with a deterministic tie-break and the
/// result is summed left to right with compensation, so repeated calls are
/// bit-identical.
template <std::size_t N, class F>
VectorQuadratureResult<N> integrate_adaptive_vec(const F& f, double a, double b,
                                                 const QuadratureOptions& opt) {
  if (!(a < b)) throw DomainError("integrate_adaptive: need a < b");
  if (!(opt.rel_tol > 0.0) && !(opt.abs_tol > 0.0)) {
    throw DomainError("integrate_adaptive: tolerance must be > 0");
  }
  using P = detail::Panel<N>;
  std::priority_queue<P, std::vector<P>, detail::PanelOrder<N>> heap;
  std::vector<P> done;

  std::vector<double> cuts{a};
  for (double x : opt.breakpoints) {
    if (x > a && x < b) cuts.push_back(x);
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::size_t evals = 0;
  std::array<double, N> total{};
  double total_err = 0.0;
  double total_abs = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    P p = detail::gauss_kronrod21<N>(f, cuts[i], cuts[i + 1]);
    evals += 21;
    for (std::size_t c = 0; c < N; ++c) total[c] += p.value[c];
    total_err += p.err_norm;
    total_abs += p.abs_norm;
    heap.push(p);
  }

  auto target = [&]() {
    double scale = 0.0;
    for (std::size_t c = 0; c < N; ++c) scale += std::fabs(total[c]);
    if (opt.relative_to_abs) scale = total_abs;
    return std::fmax(opt.abs_tol, opt.rel_tol * scale);
  };

  std::size_t subdivisions = 0;
  double stuck_err = 0.0;  // error held by intervals too narrow to bisect
  while (!heap.empty() && total_err > target() && total_err - stuck_err > target()) {
    P worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    const double width = worst.b - worst.a;
    const double mag = std::fmax(std::fabs(worst.a), std::fabs(worst.b));
    if (width <= 1e3 * std::numeric_limits<double>::epsilon() * mag) {
      // Cannot be resolved further in double precision; its error stays in the estimate.
      heap.pop();
      done.push_back(worst);
      stuck_err += worst.err_norm;
      if (heap.empty()) break;
      continue;
    }
    if (subdivisions >= opt.max_subdivisions) {
      if (opt.return_on_limit) break;
      std::ostringstream os;
      os << "adaptive quadrature did not converge after " << subdivisions
         << " subdivisions; worst interval [" << worst.a << ", " << worst.b
         << "] with error " << worst.err_norm << " (total " << total_err << ", target "
         << target() << ")";
      throw ConvergenceError(os.str(), worst.a, worst.b, worst.err_norm);
    }
    heap.pop();
    P left = detail::gauss_kronrod21<N>(f, worst.a, mid);
    P right = detail::gauss_kronrod21<N>(f, mid, worst.b);
    evals += 42;
    ++subdivisions;
    for (std::size_t c = 0; c < N; ++c) total[c] += left.value[c] + right.value[c] - worst.value[c];
    total_err += left.err_norm + right.err_norm - worst.err_norm;
    total_abs += left.abs_norm + right.abs_norm - worst.abs_norm;
    heap.push(left);
    heap.push(right);
  }

  while (!heap.empty()) {
    done.push_back(heap.top());
    heap.pop();
  }
  std::sort(done.begin(), done.end(), [](const P& x, const P& y) { return x.a < y.a; });

  VectorQuadratureResult<N> r;
  for (std::size_t c = 0; c < N; ++c) {
    CompensatedSum v, e;
    for (const P& p : done) {
      v.add(p.value[c]);
      e.add(p.error[c]);
    }
    r.value[c] = v.value();
    r.error[c] = e.value();
    r.error_estimate += r.error[c];
  }
  r.evaluations = evals;
  return r;
}

template <class F>
QuadratureResult integrate_adaptive(const F& f, double a, double b, double tol) {
  QuadratureOptions opt;
  opt.rel_tol = tol;
  auto g = [&f](double x) { return std::array<double, 1>{f(x)}; };
  const auto r = integrate_adaptive_vec<1>(g, a, b, opt);
  return {r.value[0], r.error_estimate, r.evaluations};
}

/// ∫_a^∞ f via x = a + s·t/(1−t), t ∈ (0,1), with s the decay scale of f.
template <std::size_t N, class F>
VectorQuadratureResult<N> integrate_semiinfinite_vec(const F& f, double a, double decay_scale,
                                                     const QuadratureOptions& opt) {
  if (!(decay_scale > 0.0)) throw DomainError("integrate_semiinfinite: decay_scale must be > 0");
  auto g = [&](double t) {
    const double u = 1.0 - t;
    const double x = a + decay_scale * t / u;
    const double jac = decay_scale / (u * u);
    std::array<double, N> v = f(x);
    for (auto& e : v) e *= jac;
    return v;
  };
  return integrate_adaptive_vec<N>(g, 0.0, 1.0, opt);
}

template <class F>
QuadratureResult integrate_semiinfinite(const F& f, double a, double decay_scale, double tol) {
  QuadratureOptions opt;
  opt.rel_tol = tol;
  auto g = [&f](double x) { return std::array<double, 1>{f(x)}; };
  const auto r = integrate_semiinfinite_vec<1>(g, a, decay_scale, opt);
  return {r.value[0], r.error_estimate, r.evaluations};
}

/// n-th Matsubara frequency ξ_n = 2πn k_BT/ħ.
inline double matsubara_frequency(int n, double T) {
  return 2.0 * constants::pi * n * constants::kB * T / constants::hbar;
}

struct MatsubaraOptions {
  double rel_tol = 1e-8;
  /// Characteristic decay frequency of g; sets the T = 0 integral map.
  double xi_scale = 1e14;
  std::size_t max_terms = 2000000;
  /// Tolerance for the per-term inner quadratures, relative.
  double inner_tol = 1e-10;
};

/// (2πk_BT/ħ) Σ'_n g(ξ_n) with the n = 0 term halved; at T = 0 the
/// continuum limit ∫_0^∞ g(ξ) dξ. The sum stops once a term falls below
/// rel_tol times the partial sum (two consecutive terms).
template <std::size_t N, class G>
VectorQuadratureResult<N> matsubara_sum_vec(const G& g, double T, const MatsubaraOptions& opt) {
  if (!(T >= 0.0)) throw DomainError("matsubara_sum: T must be >= 0");
  if (T == 0.0) {
    QuadratureOptions q;
    q.rel_tol = opt.rel_tol;
    return integrate_semiinfinite_vec<N>(g, 0.0, opt.xi_scale, q);
  }
  const double step = matsubara_frequency(1, T);
  std::array<CompensatedSum, N> acc;
  VectorQuadratureResult<N> r;
  int small_run = 0;
  for (std::size_t n = 0;; ++n) {
    if (n >= opt.max_terms) {
      std::ostringstream os;
      os << "Matsubara sum did not converge within " << opt.max_terms << " terms at T = " << T
         << " K";
      throw ConvergenceError(os.str(), step * 0.0, step * static_cast<double>(n), 0.0);
    }
    std::array<double, N> term = g(step * static_cast<double>(n));
    ++r.evaluations;
    double term_norm = 0.0;
    double part_norm = 0.0;
    for (std::size_t c = 0; c < N; ++c) {
      if (!std::isfinite(term[c])) throw NumericalDomainError("matsubara_sum: non-finite term");
      if (n == 0) term[c] *= 0.5;
      acc[c].add(term[c]);
      term_norm += std::fabs(term[c]);
      part_norm += std::fabs(acc[c].value());
    }
    if (n > 0 && term_norm <= opt.rel_tol * part_norm) {
      if (++small_run >= 2) break;
    } else if (n > 0 && part_norm == 0.0 && term_norm == 0.0) {
      if (++small_run >= 2) break;
    } else {
      small_run = 0;
    }
  }
  for (std::size_t c = 0; c < N; ++c) {
    r.value[c] = step * acc[c].value();
    r.error[c] = opt.rel_tol * std::fabs(r.value[c]);
    r.error_estimate += r.error[c];
  }
  return r;
}

template <class G>
QuadratureResult matsubara_sum(const G& g, double T, double tol, double xi_scale = 1e14) {
  MatsubaraOptions opt;
  opt.rel_tol = tol;
  opt.xi_scale = xi_scale;
  auto h = [&g](double xi) { return std::array<double, 1>{g(xi)}; };
  const auto r = matsubara_sum_vec<1>(h, T, opt);
  return {r.value[0], r.error_estimate, r.evaluations};
}

/// Gauss-Legendre nodes and weights on [a, b] (Newton iteration on P_n).
inline void gauss_legendre(int n, double a, double b, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw DomainError("gauss_legendre: n must be >= 1");
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(constants::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::fabs(dz) < 1e-16) break;
    }
    double p0 = 1.0, p1 = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
    x[i] = mid - half * z;
    x[n - 1 - i] = mid + half * z;
    w[i] = half * wi;
    w[n - 1 - i] = half * wi;
  }
}

}  // namespace fluctua
