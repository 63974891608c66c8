#ifndef ZMLAB_BMK_HPP
#define ZMLAB_BMK_HPP

#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <fftw3.h>

#include "fields.hpp"
#include "forms.hpp"
#include "lattice.hpp"

namespace zmlab::bmk {

using lattice::Grid;
using lattice::index_t;

// Sign of reordering a wedge of generators into increasing order; generator
// codes: dzeta^nu -> 2nu-2, dzetabar^nu -> 2nu-1. Zero on repeats.
inline int wedge_sign(const std::vector<int>& seq)
{
  std::vector<int> sorted = seq;
  std::sort(sorted.begin(), sorted.end());
  return forms::perm_sign(seq, sorted);
}

inline int code_dz(int nu) { return 2 * nu - 2; }
inline int code_dzbar(int nu) { return 2 * nu - 1; }

struct KernelEntry {
  int source;   // basis position of L (length q)
  int target;   // basis position of J (length q-1)
  int plane;    // j in 1..d: kernel (zetabar^j - zbar^j) / |zeta - z|^{2d}
  double coeff; // includes the leading minus of beta = -int alpha ^ K
};

// Component table of the operator alpha (degree q) -> -int alpha ^ K_{q-1}.
class KernelSpec {
public:
  KernelSpec(int d, int q) : d_(d), q_(q), basis_(d)
  {
    if (q < 1 || q > d) throw std::invalid_argument("KernelSpec: need 1 <= q <= d");
    double fact = 1;
    for (int i = 2; i <= d - 1; ++i) fact *= i;
    norm_ = fact / (std::pow(2.0, q) * std::pow(std::numbers::pi, d));
    const cplx I(0, 1);
    // *dzeta_L = (-1)^{q(q-1)/2} / (2^{d-q} i^d) dzeta^L ^ prod_{nu in L'} (dzetabar^nu ^ dzeta^nu)
    const cplx star = std::pow(-1.0, q * (q - 1) / 2) / (std::pow(2.0, d - q) * std::pow(I, d));
    const cplx volume = std::pow(cplx(0, -2), d);  // canonical product = (-2i)^d dlambda
    for (int t = basis_.degree_begin(q - 1); t < basis_.degree_end(q - 1); ++t) {
      const forms::MultiIndex& J = basis_.index(t);
      for (int j = 1; j <= d; ++j) {
        if (J.contains(j)) continue;
        std::vector<int> jJ{j};
        jJ.insert(jJ.end(), J.entries().begin(), J.entries().end());
        std::vector<int> Ls = jJ;
        std::sort(Ls.begin(), Ls.end());
        const forms::MultiIndex L(d, Ls);
        const int eps = forms::perm_sign(Ls, jJ);
        // dzetabar^L ^ dzeta^L ^ prod_{L'} (dzetabar ^ dzeta): only I = L survives
        std::vector<int> seq;
        for (int nu : Ls) seq.push_back(code_dzbar(nu));
        for (int nu : Ls) seq.push_back(code_dz(nu));
        const forms::MultiIndex Lc = L.complement();
        for (int nu : Lc.entries()) {
          seq.push_back(code_dzbar(nu));
          seq.push_back(code_dz(nu));
        }
        const cplx s = star * static_cast<double>(wedge_sign(seq)) * volume;
        if (std::abs(s.imag()) > 1e-12 * std::abs(s)) throw std::logic_error("KernelSpec: non-real component");
        entries_.push_back({basis_.position(L), t, j, -norm_ * eps * s.real()});
      }
    }
  }

  int d() const { return d_; }
  int q() const { return q_; }
  double normalization() const { return norm_; }  // (d-1)! / (2^q pi^d)
  const std::vector<KernelEntry>& entries() const { return entries_; }
  const forms::FormBasis& basis() const { return basis_; }

private:
  int d_, q_;
  forms::FormBasis basis_;
  double norm_;
  std::vector<KernelEntry> entries_;
};

// Cube integral over [-1/2,1/2]^n of Omega(u) |u|^{-p}, p <= n-1, by pyramid
// decomposition: sum over faces of int_0^{1/2} r^{n-1-p} dr * int_{[-1,1]^{n-1}} Omega(face) (1+|y|^2)^{-p/2} dy.
inline cplx cube_singular_integral(int n, int p, const std::function<cplx(const double*)>& omega = {})
{
  using GL = boost::math::quadrature::gauss<double, 20>;
  std::vector<double> x, w;
  for (std::size_t i = 0; i < GL::abscissa().size(); ++i) {
    x.push_back(GL::abscissa()[i]);
    w.push_back(GL::weights()[i]);
    if (GL::abscissa()[i] != 0) {
      x.push_back(-GL::abscissa()[i]);
      w.push_back(GL::weights()[i]);
    }
  }
  const int m = static_cast<int>(x.size()), dim = n - 1;
  const double radial = std::pow(0.5, n - p) / (n - p);
  std::vector<int> idx(dim, 0);
  std::vector<double> u(n);
  cplx total = 0;
  for (int face = 0; face < 2 * n; ++face) {
    const int ax = face / 2;
    const double sgn = face % 2 ? -1.0 : 1.0;
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      double wt = 1, y2 = 0;
      int c = 0;
      for (int a = 0; a < n; ++a) {
        if (a == ax) {
          u[a] = sgn;
          continue;
        }
        u[a] = x[idx[c]];
        wt *= w[idx[c]];
        y2 += u[a] * u[a];
        ++c;
      }
      const cplx om = omega ? omega(u.data()) : cplx(1.0);
      total += wt * om * std::pow(1.0 + y2, -0.5 * p);
      int k = 0;
      while (k < dim && ++idx[k] == m) idx[k++] = 0;
      if (k == dim) break;
    }
  }
  return total * radial;
}

enum class Summation { direct, fft, automatic };

// Discrete convolutions y(m) = sum_k f(k) K((m - k) h) over a grid, with K
// given as a table over integer offsets in [-(n-1), n-1]^{2d}.
class Convolver {
public:
  explicit Convolver(const Grid& g) : g_(g), M_(2 * g.n() - 1)
  {
    total_ = 1;
    for (int a = 0; a < g.dim(); ++a) total_ *= M_;
  }
  ~Convolver()
  {
    for (auto* p : bufs_) fftw_free(p);
    if (fwd_) fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
  }
  Convolver(const Convolver&) = delete;
  Convolver& operator=(const Convolver&) = delete;

  using Kernel = std::function<cplx(const int*)>;  // offset in grid steps, never all-zero

  // sum_terms  sum_k f_t(k) K_t(m - k), with K_t(0) = 0
  Eigen::VectorXcd apply(const std::vector<std::pair<const Eigen::VectorXcd*, Kernel>>& terms, Summation s) const
  {
    if (s == Summation::automatic) s = g_.points() > 6000 ? Summation::fft : Summation::direct;
    return s == Summation::direct ? direct(terms) : via_fft(terms);
  }

private:
  Eigen::VectorXcd direct(const std::vector<std::pair<const Eigen::VectorXcd*, Kernel>>& terms) const
  {
    const index_t N = g_.points();
    const int D = g_.dim(), n = g_.n();
    const int W = 2 * n - 1;
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(N);
    for (const auto& [f, K] : terms) {
      // kernel table over offsets
      std::vector<cplx> tab(total_);
      std::vector<int> off(D);
      for (index_t t = 0; t < total_; ++t) {
        index_t r = t;
        bool zero = true;
        for (int a = 0; a < D; ++a) {
          off[a] = static_cast<int>(r % W) - (n - 1);
          r /= W;
          zero = zero && off[a] == 0;
        }
        tab[t] = zero ? cplx(0) : K(off.data());
      }
#pragma omp parallel for schedule(dynamic, 16)
      for (index_t m = 0; m < N; ++m) {
        int im[16];
        for (int a = 0; a < D; ++a) im[a] = g_.axis_index(m, a);
        cplx acc = 0;
        for (index_t k = 0; k < N; ++k) {
          const cplx fk = (*f)[k];
          if (fk == cplx(0)) continue;
          index_t t = 0, st = 1;
          for (int a = 0; a < D; ++a) {
            t += (im[a] - g_.axis_index(k, a) + n - 1) * st;
            st *= W;
          }
          acc += fk * tab[t];
        }
        out[m] += acc;
      }
    }
    return out;
  }

  Eigen::VectorXcd via_fft(const std::vector<std::pair<const Eigen::VectorXcd*, Kernel>>& terms) const
  {
    ensure_buffers();
    fftw_complex* acc = bufs_[0];
    fftw_complex* A = bufs_[1];
    fftw_complex* B = bufs_[2];
    const int D = g_.dim(), n = g_.n();
    std::fill(reinterpret_cast<cplx*>(acc), reinterpret_cast<cplx*>(acc) + total_, cplx(0));
    for (const auto& [f, K] : terms) {
      cplx* a = reinterpret_cast<cplx*>(A);
      cplx* b = reinterpret_cast<cplx*>(B);
      std::fill(a, a + total_, cplx(0));
      for (index_t p = 0; p < g_.points(); ++p) a[padded(p)] = (*f)[p];
#pragma omp parallel for schedule(static)
      for (index_t t = 0; t < total_; ++t) {
        int off[16];
        index_t r = t;
        bool zero = true;
        for (int ax = 0; ax < D; ++ax) {
          int o = static_cast<int>(r % M_);
          r /= M_;
          if (o > n - 1) o -= M_;  // wrap to [-(n-1), n-1]
          off[ax] = o;
          zero = zero && o == 0;
        }
        b[t] = zero ? cplx(0) : K(off);
      }
      fftw_execute_dft(fwd_, A, A);
      fftw_execute_dft(fwd_, B, B);
      cplx* c = reinterpret_cast<cplx*>(acc);
#pragma omp parallel for schedule(static)
      for (index_t t = 0; t < total_; ++t) c[t] += a[t] * b[t];
    }
    fftw_execute_dft(bwd_, acc, acc);
    Eigen::VectorXcd out(g_.points());
    const cplx* c = reinterpret_cast<const cplx*>(acc);
    for (index_t p = 0; p < g_.points(); ++p) out[p] = c[padded(p)] / static_cast<double>(total_);
    return out;
  }

  index_t padded(index_t p) const
  {
    index_t t = 0, st = 1;
    for (int a = 0; a < g_.dim(); ++a) {
      t += g_.axis_index(p, a) * st;
      st *= M_;
    }
    return t;
  }

  void ensure_buffers() const
  {
    if (!bufs_.empty()) return;
    for (int i = 0; i < 3; ++i) {
      auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * total_));
      if (!p) throw std::bad_alloc();
      bufs_.push_back(p);
    }
    std::vector<int> dims(g_.dim(), M_);
    fwd_ = fftw_plan_dft(g_.dim(), dims.data(), bufs_[1], bufs_[1], FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft(g_.dim(), dims.data(), bufs_[0], bufs_[0], FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  Grid g_;
  int M_;
  index_t total_;
  mutable std::vector<fftw_complex*> bufs_;
  mutable fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

struct SolveOptions {
  Summation summation = Summation::automatic;
  bool gradient_correction = true;  // first-order singular-cell term
};

// beta = -int alpha ^ K_{q-1} for alpha of pure degree q >= 1.
inline lattice::FormField bmk_solve(const lattice::FormField& alpha, const SolveOptions& opt = {})
{
  const Grid& g = alpha.grid();
  const int d = g.d();
  int q = -1;
  for (int f = 0; f < alpha.basis().size(); ++f)
    if (alpha.component(f).cwiseAbs().maxCoeff() > 0) {
      if (q >= 0 && alpha.basis().degree(f) != q) throw std::invalid_argument("bmk_solve: alpha must have a single degree");
      q = alpha.basis().degree(f);
    }
  lattice::FormField beta(g);
  if (q < 0) return beta;  // alpha = 0
  if (q == 0) throw std::invalid_argument("bmk_solve: degree-0 input, nothing to solve");
  const KernelSpec spec(d, q);
  const double h = g.h(), vol = g.cell_volume();
  const double Gd = cube_singular_integral(2 * d, 2 * d - 2).real();
  const Convolver conv(g);
  for (int t = spec.basis().degree_begin(q - 1); t < spec.basis().degree_end(q - 1); ++t) {
    std::vector<std::pair<const Eigen::VectorXcd*, Convolver::Kernel>> terms;
    Eigen::VectorXcd corr = Eigen::VectorXcd::Zero(g.points());
    std::vector<Eigen::VectorXcd> sources;
    sources.reserve(d);
    for (const auto& e : spec.entries()) {
      if (e.target != t) continue;
      sources.push_back(alpha.component(e.source));
      const int j = e.plane;
      const double c = e.coeff;
      // beta(m) = c h^{2d} sum_k alpha(k) Kj(zeta_k - z_m), Kj(v) = conj(v_j) / |v|^{2d};
      // as a convolution in m - k the offset is o = m - k, v = -o h.
      terms.emplace_back(&sources.back(), [c, j, d, h, vol](const int* o) {
        double r2 = 0;
        for (int a = 0; a < 2 * d; ++a) r2 += double(o[a]) * o[a];
        const cplx vj(-o[2 * j - 2] * h, o[2 * j - 1] * h);  // conj of v_j with v = -o h
        return c * vol * vj / std::pow(r2 * h * h, d);
      });
      if (opt.gradient_correction) corr += c * (2.0 * h * h * Gd / (2 * d)) * lattice::partial_z(g, sources.back(), j);
    }
    Eigen::VectorXcd b = conv.apply(terms, opt.summation);
    if (opt.gradient_correction) b += corr;
    beta.component(t) = b;
  }
  return beta;
}

// alpha = dbar u for u = exp(-|z|^2), the manufactured degree-1 datum.
inline lattice::FormField gaussian_dbar_datum(const Grid& g)
{
  lattice::FormField a(g);
  for (int j = 1; j <= g.d(); ++j)
    a.set_component(a.basis().position_of_mask(1u << (j - 1)), [&g, j](const double* x) {
      double s = 0;
      for (int k = 0; k < g.dim(); ++k) s += x[k] * x[k];
      return -cplx(x[2 * j - 2], x[2 * j - 1]) * std::exp(-s);
    });
  return a;
}

struct ManufacturedResidual {
  double dbar_rel_l2;       // ||dbar_h beta - alpha|| / ||alpha||
  double solution_max_err;  // max |beta - u|
};

inline ManufacturedResidual manufactured_residual(const Grid& g, const SolveOptions& opt = {})
{
  const auto alpha = gaussian_dbar_datum(g);
  const auto beta = bmk_solve(alpha, opt);
  const Eigen::VectorXcd b = beta.component(0);
  double num = 0, den = 0;
  for (int j = 1; j <= g.d(); ++j) {
    const Eigen::VectorXcd aj = alpha.component(alpha.basis().position_of_mask(1u << (j - 1)));
    num += (lattice::partial_zbar(g, b, j) - aj).squaredNorm();
    den += aj.squaredNorm();
  }
  double err = 0;
  for (index_t p = 0; p < g.points(); ++p) {
    double x[16], s = 0;
    g.point(p, x);
    for (int k = 0; k < g.dim(); ++k) s += x[k] * x[k];
    err = std::max(err, std::abs(b[p] - std::exp(-s)));
  }
  return {std::sqrt(num / den), err};
}

// alpha = dbar(e^W zbar^1 / (1 + |z|^2)): square integrable against e^{-2W},
// not compactly supported, so beta has mass at every scale.
inline lattice::FormField annulus_alpha(const Grid& g, const fields::ScalarPotential& W)
{
  lattice::FormField a(g);
  for (int j = 1; j <= g.d(); ++j)
    a.set_component(a.basis().position_of_mask(1u << (j - 1)), [&g, &W, j](const double* x) {
      double s = 0;
      for (int k = 0; k < g.dim(); ++k) s += x[k] * x[k];
      const cplx zb1(x[0], -x[1]), zj(x[2 * j - 2], x[2 * j - 1]);
      const cplx f = zb1 / (1 + s);
      cplx df = -zb1 * zj / ((1 + s) * (1 + s));
      if (j == 1) df += 1.0 / (1 + s);
      return std::exp(W.value(x)) * (W.dzbar(x, j) * f + df);
    });
  return a;
}

// int_{R < |z| <= 2R} |beta|^2 |z|^{-2} e^{-2W}
inline double annulus_estimate(const lattice::FormField& beta, const fields::ScalarPotential& W, double R)
{
  const Grid& g = beta.grid();
  if (!(R > 0) || R >= g.L() * std::sqrt(double(g.dim()))) throw std::invalid_argument("annulus_estimate: annulus outside box");
  double s = 0;
  const int nf = beta.basis().size();
  for (index_t p = 0; p < g.points(); ++p) {
    double x[16];
    g.point(p, x);
    double r2 = 0;
    for (int a = 0; a < g.dim(); ++a) r2 += x[a] * x[a];
    if (r2 <= R * R || r2 > 4 * R * R) continue;
    double b2 = 0;
    for (int f = 0; f < nf; ++f) b2 += std::norm(beta.at(f, p));
    s += b2 / r2 * std::exp(-2.0 * W.value(x));
  }
  return s * g.cell_volume();
}

// Omega of degree zero; Tf(z) = int Omega(z - zeta) |z - zeta|^{1-2d} f(zeta)
class HomogeneousKernel {
public:
  using Omega = std::function<cplx(const double*)>;
  HomogeneousKernel(int d, Omega om) : d_(d), omega_(std::move(om)) {}
  static HomogeneousKernel constant(int d) { return {d, {}}; }

  int d() const { return d_; }
  cplx omega(const double* x) const { return omega_ ? omega_(x) : cplx(1.0); }
  bool is_constant() const { return !omega_; }

  // max |Omega(t x) - Omega(x)| over the sample points and scalings
  double homogeneity_defect(const std::vector<std::vector<double>>& samples) const
  {
    double dev = 0;
    for (const auto& x : samples)
      for (double t : {0.1, 0.5, 2.0, 10.0}) {
        std::vector<double> y(x);
        for (double& v : y) v *= t;
        dev = std::max(dev, std::abs(omega(y.data()) - omega(x.data())));
      }
    return dev;
  }
  const Omega& function() const { return omega_; }

private:
  int d_;
  Omega omega_;
};

inline Eigen::VectorXcd hls_apply(const HomogeneousKernel& T, const Grid& g, const Eigen::VectorXcd& f,
                                  Summation s = Summation::automatic)
{
  if (T.d() != g.d()) throw std::invalid_argument("hls_apply: dimension mismatch");
  const int d = g.d();
  const double h = g.h(), vol = g.cell_volume();
  const Convolver conv(g);
  std::vector<std::pair<const Eigen::VectorXcd*, Convolver::Kernel>> terms;
  terms.emplace_back(&f, [&T, d, h, vol](const int* o) {
    double x[16], r2 = 0;
    for (int a = 0; a < 2 * d; ++a) {
      x[a] = o[a] * h;
      r2 += x[a] * x[a];
    }
    return vol * T.omega(x) * std::pow(r2, -(2.0 * d - 1) / 2.0);
  });
  Eigen::VectorXcd out = conv.apply(terms, s);
  // singular cell: frozen f times h * int_{cube} Omega |u|^{1-2d}
  const cplx cell = h * cube_singular_integral(2 * d, 2 * d - 1, T.function());
  out += cell * f;
  return out;
}

inline double lp_norm(const Grid& g, const Eigen::VectorXcd& f, double p)
{
  if (std::isinf(p)) return f.cwiseAbs().maxCoeff();
  double s = 0;
  for (index_t i = 0; i < f.size(); ++i) s += std::pow(std::abs(f[i]), p);
  return std::pow(s * g.cell_volume(), 1.0 / p);
}

// ||T f||_{2d/(d-1)} / ||f||_2 (sup norm when d = 1)
inline double hls_ratio(const HomogeneousKernel& T, const Grid& g, const Eigen::VectorXcd& f,
                        Summation s = Summation::automatic)
{
  const double p = g.d() == 1 ? INFINITY : 2.0 * g.d() / (g.d() - 1);
  return lp_norm(g, hls_apply(T, g, f, s), p) / lp_norm(g, f, 2.0);
}

// ||(T f) psi||_{2d/(d-1)} / ||f psi||_2
inline double weighted_hls_ratio(const HomogeneousKernel& T, const Grid& g, const Eigen::VectorXcd& f,
                                 const std::function<double(const double*)>& psi,
                                 Summation s = Summation::automatic)
{
  const double p = g.d() == 1 ? INFINITY : 2.0 * g.d() / (g.d() - 1);
  Eigen::VectorXcd w(g.points());
  for (index_t i = 0; i < g.points(); ++i) {
    double x[16];
    g.point(i, x);
    w[i] = psi(x);
  }
  const Eigen::VectorXcd Tf = hls_apply(T, g, f, s);
  return lp_norm(g, Tf.cwiseProduct(w), p) / lp_norm(g, f.cwiseProduct(w), 2.0);
}

} // namespace zmlab::bmk

#endif // ZMLAB_BMK_HPP
