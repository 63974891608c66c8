#ifndef ZMLAB_ANALYSIS_HPP
#define ZMLAB_ANALYSIS_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "fields.hpp"
#include "lattice.hpp"

namespace zmlab::analysis {

using lattice::index_t;

inline std::int64_t binomial(int n, int k)
{
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Multi-degrees (k_1..k_d) with k_1 + ... + k_d <= m.
class MonomialBasis {
public:
  MonomialBasis(int d, int m) : d_(d), m_(m)
  {
    if (d < 1) throw std::invalid_argument("MonomialBasis: d < 1");
    if (m < 0) return;
    std::vector<int> k(d, 0);
    while (true) {
      int s = 0;
      for (int v : k) s += v;
      if (s <= m) deg_.push_back(k);
      int i = 0;
      while (i < d && ++k[i] > m) k[i++] = 0;
      if (i == d) break;
    }
  }
  int d() const { return d_; }
  int max_degree() const { return m_; }
  std::size_t size() const { return deg_.size(); }
  const std::vector<std::vector<int>>& degrees() const { return deg_; }

private:
  int d_, m_;
  std::vector<std::vector<int>> deg_;
};

// Degree bound m = ceil(|Phi| - d) - 1: total degree strictly below |Phi| - d.
inline int max_zero_mode_degree(double phi, int d) { return static_cast<int>(std::ceil(std::abs(phi) - d)) - 1; }

inline std::int64_t count_Nd_closed(double phi, int d)
{
  const int m = max_zero_mode_degree(phi, d);
  return m < 0 ? 0 : binomial(m + d, d);
}

// Number of monomials in d variables of total degree < |Phi| - d, by enumeration.
inline std::int64_t count_Nd(double phi, int d)
{
  if (d < 1) throw std::invalid_argument("count_Nd: d must be >= 1");
  const double bound = std::abs(phi) - d;
  if (bound <= 0) return 0;
  const int K = static_cast<int>(std::ceil(bound));
  std::int64_t c = 0;
  std::vector<int> k(d, 0);
  while (true) {
    int s = 0;
    for (int v : k) s += v;
    if (s < bound) ++c;
    int i = 0;
    while (i < d && ++k[i] > K) k[i++] = 0;
    if (i == d) break;
  }
  return c;
}

inline bool zero_mode_normalizable(const std::vector<int>& p, double phi, int d)
{
  int s = 0;
  for (int v : p) s += v;
  return s < phi - d;
}

// e^{W} zbar^p dzbar^1 ^ ... ^ dzbar^d in the unweighted gauge.
inline lattice::FormField explicit_zero_mode(const lattice::Grid& g, const std::vector<int>& p, const fields::ScalarPotential& W)
{
  if (static_cast<int>(p.size()) != g.d()) throw std::invalid_argument("explicit_zero_mode: need one exponent per plane");
  lattice::FormField a(g);
  const int top = a.basis().size() - 1;
  a.set_component(top, [&](const double* x) {
    cplx m = 1.0;
    for (int j = 0; j < g.d(); ++j) m *= std::pow(cplx(x[2 * j], -x[2 * j + 1]), p[j]);
    return std::exp(W.value(x)) * m;
  });
  return a;
}

struct Ball {
  std::vector<double> center;
  double radius;
  int type;      // 1 if |center| > 3R/2, else 2
  double value;  // (avg psi^q)^{1/q} (avg psi^{-p'})^{1/p'}-type product
};

struct MuckenhouptEstimate {
  double p, q;
  std::vector<Ball> balls;
  std::vector<double> running_sup;
  double sup() const { return running_sup.empty() ? 0.0 : running_sup.back(); }
};

struct BallProtocol {
  std::vector<double> radii;
  std::vector<double> center_norms;  // centres placed at t * direction
  std::vector<double> direction;     // unit vector; default e_1
  int radial_nodes = 16, polar_nodes = 16, azimuth_nodes = 32;

  // 12 radii 2^-3 .. 2^10, 9 centres {0} u {2^{2k-3}}
  static BallProtocol standard(int d)
  {
    BallProtocol b;
    for (int i = 0; i < 12; ++i) b.radii.push_back(std::pow(2.0, -3.0 + 13.0 * i / 11.0));
    b.center_norms.push_back(0.0);
    for (int k = 0; k < 8; ++k) b.center_norms.push_back(std::pow(2.0, 2 * k - 3));
    b.direction.assign(2 * d, 0.0);
    b.direction[0] = 1.0;
    return b;
  }
};

namespace detail {

inline void gauss_nodes(int n, std::vector<double>& x, std::vector<double>& w)
{
  // Golub-Welsch on the Legendre Jacobi matrix
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    x[i] = es.eigenvalues()[i];
    w[i] = 2.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
}

// Averages over a ball of several functions of the same point, in
// hyperspherical coordinates: composite Gauss in rho, Gauss in the polar
// angles, trapezoid in the azimuth.
inline std::vector<double> ball_averages(const std::vector<double>& c, double R,
                                         const std::vector<std::function<double(const double*)>>& fs,
                                         const BallProtocol& proto)
{
  const int n = static_cast<int>(c.size());
  std::vector<double> gx, gw, ax, aw;
  gauss_nodes(proto.radial_nodes, gx, gw);
  gauss_nodes(proto.polar_nodes, ax, aw);
  // radial panels: [0, r0], then doubling up to R
  std::vector<double> br{0.0};
  double r0 = std::min(R, 0.125);
  br.push_back(r0);
  while (br.back() < R) br.push_back(std::min(R, 2 * br.back()));
  std::vector<double> rho, rw;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    const double a = br[i], b = br[i + 1];
    for (int k = 0; k < proto.radial_nodes; ++k) {
      const double r = 0.5 * (a + b) + 0.5 * (b - a) * gx[k];
      rho.push_back(r);
      rw.push_back(0.5 * (b - a) * gw[k] * std::pow(r, n - 1));
    }
  }
  // angular nodes on S^{n-1}
  std::vector<std::vector<double>> dirs;
  std::vector<double> dw;
  const int npolar = n - 2;
  std::vector<int> idx(std::max(npolar, 0), 0);
  while (true) {
    double wt = 1;
    std::vector<double> th(npolar);
    for (int i = 0; i < npolar; ++i) {
      th[i] = 0.5 * std::numbers::pi * (1 + ax[idx[i]]);
      wt *= 0.5 * std::numbers::pi * aw[idx[i]] * std::pow(std::sin(th[i]), n - 2 - i);
    }
    for (int k = 0; k < proto.azimuth_nodes; ++k) {
      const double phi = 2 * std::numbers::pi * k / proto.azimuth_nodes;
      std::vector<double> u(n);
      double s = 1;
      for (int i = 0; i < npolar; ++i) {
        u[i] = s * std::cos(th[i]);
        s *= std::sin(th[i]);
      }
      u[n - 2] = s * std::cos(phi);
      u[n - 1] = s * std::sin(phi);
      dirs.push_back(u);
      dw.push_back(wt * 2 * std::numbers::pi / proto.azimuth_nodes);
    }
    int i = 0;
    while (i < npolar && ++idx[i] == proto.polar_nodes) idx[i++] = 0;
    if (i >= npolar) break;
  }
  std::vector<double> sums(fs.size(), 0.0);
  double vol = 0;
  std::vector<double> x(n);
  for (std::size_t r = 0; r < rho.size(); ++r)
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      const double w = rw[r] * dw[k];
      for (int a = 0; a < n; ++a) x[a] = c[a] + rho[r] * dirs[k][a];
      vol += w;
      for (std::size_t f = 0; f < fs.size(); ++f) sums[f] += w * fs[f](x.data());
    }
  for (double& s : sums) s /= vol;
  return sums;
}

} // namespace detail

inline MuckenhouptEstimate muckenhoupt_estimate(const std::function<double(const double*)>& psi, double p, double q,
                                                const BallProtocol& proto)
{
  if (!(p > 1) || !(q > 1)) throw std::invalid_argument("muckenhoupt_estimate: need p, q > 1");
  MuckenhouptEstimate est{p, q, {}, {}};
  const double pp = p / (p - 1);
  const int n = static_cast<int>(proto.direction.size());
  bool bad = false;
  auto up = [&](const double* x) {
    const double v = psi(x);
    if (!(v > 0)) bad = true;
    return std::pow(v, q);
  };
  auto down = [&](const double* x) { return std::pow(psi(x), -pp); };
  double sup = 0;
  for (double t : proto.center_norms)
    for (double R : proto.radii) {
      std::vector<double> c(n);
      for (int a = 0; a < n; ++a) c[a] = t * proto.direction[a];
      const auto avg = detail::ball_averages(c, R, {up, down}, proto);
      if (bad) throw std::domain_error("muckenhoupt_estimate: non-positive weight sample");
      const double v = std::pow(avg[0], 1.0 / q) * std::pow(avg[1], 1.0 / pp);
      est.balls.push_back({c, R, t > 1.5 * R ? 1 : 2, v});
      sup = std::max(sup, v);
      est.running_sup.push_back(sup);
    }
  return est;
}

struct WrongIdentity {
  double lhs;        // correct expansion of int |dbar alpha|^2 e^{-2W}
  double wrong_rhs;  // cross term replaced by separate squares
  double gap;        // |lhs - wrong_rhs| / lhs
};

// d = 2, alpha = a00 + a10 dzbar^1 + a01 dzbar^2 + a11 dzbar^1^dzbar^2.
inline WrongIdentity wrong_identity_demo(const lattice::FormField& alpha, const fields::ScalarPotential& W)
{
  const lattice::Grid& g = alpha.grid();
  if (g.d() != 2) throw std::invalid_argument("wrong_identity_demo: requires d = 2");
  const auto& B = alpha.basis();
  const Eigen::VectorXcd a00 = alpha.component(B.position_of_mask(0));
  const Eigen::VectorXcd a10 = alpha.component(B.position_of_mask(1));
  const Eigen::VectorXcd a01 = alpha.component(B.position_of_mask(2));
  const Eigen::VectorXcd d1a00 = lattice::partial_zbar(g, a00, 1), d2a00 = lattice::partial_zbar(g, a00, 2);
  const Eigen::VectorXcd d1a01 = lattice::partial_zbar(g, a01, 1), d2a10 = lattice::partial_zbar(g, a10, 2);
  double lhs = 0, wrong = 0;
  for (index_t p = 0; p < g.points(); ++p) {
    double x[16];
    g.point(p, x);
    const double w = W.is_zero() ? 1.0 : std::exp(-2.0 * W.value(x));
    const double base = std::norm(d1a00[p]) + std::norm(d2a00[p]);
    lhs += w * (base + std::norm(d1a01[p] - d2a10[p]));
    wrong += w * (base + std::norm(d1a01[p]) + std::norm(d2a10[p]));
  }
  lhs *= g.cell_volume();
  wrong *= g.cell_volume();
  return {lhs, wrong, lhs > 0 ? std::abs(lhs - wrong) / lhs : 0.0};
}

enum class DemoCase { correlated, only_a01, no_cross };

// Fixed demonstration forms on W = 0:
// correlated: a01 = zbar^1 e^{-|z|^2}, a10 = zbar^2 e^{-|z|^2} (exact gap 1);
// only_a01:   a01 = zbar^1 e^{-|z|^2}, a10 = 0;
// no_cross:   a00 = e^{-|z|^2}, a10 = a01 = 0.
inline lattice::FormField wrong_identity_form(const lattice::Grid& g, DemoCase c = DemoCase::correlated)
{
  if (g.d() != 2) throw std::invalid_argument("wrong_identity_form: requires d = 2");
  lattice::FormField a(g);
  const auto& B = a.basis();
  auto gauss = [](const double* x) { return std::exp(-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3])); };
  if (c == DemoCase::no_cross) {
    a.set_component(B.position_of_mask(0), [&](const double* x) { return cplx(gauss(x)); });
    return a;
  }
  a.set_component(B.position_of_mask(2), [&](const double* x) { return cplx(x[0], -x[1]) * gauss(x); });
  if (c == DemoCase::correlated)
    a.set_component(B.position_of_mask(1), [&](const double* x) { return cplx(x[2], -x[3]) * gauss(x); });
  return a;
}

} // namespace zmlab::analysis

#endif // ZMLAB_ANALYSIS_HPP
