#ifndef ZMLAB_FIELDS_HPP
#define ZMLAB_FIELDS_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "forms.hpp"

namespace zmlab::fields {

// Radial families W = f(s), s = |z|^2, described by f, f', f''.
struct RadialJet {
  double f, df, ddf;
};

struct Zero {};

struct Quadratic {
  std::vector<double> kappa;  // W = sum kappa_j |z_j|^2 / 2
};

struct LogBulge {
  double phi;
  RadialJet jet(double s) const
  {
    const double u = 1.0 + s;
    return {-0.5 * phi * std::log1p(s), -0.5 * phi / u, 0.5 * phi / (u * u)};
  }
};

// W = A b(s/R^2) - (mu/2) log(s + R^2 b(s/R^2)), b(t) = exp(1 - 1/(1-t)) on t<1.
// mu = 0 gives compactly supported W; in d=1 the field is compactly supported for any mu.
struct CompactBump {
  double amplitude, radius, mu = 0.0;

  static void bump(double t, double& b, double& db, double& ddb)
  {
    if (t >= 1.0) {
      b = db = ddb = 0.0;
      return;
    }
    const double u = 1.0 / (1.0 - t);
    b = std::exp(1.0 - u);
    db = -b * u * u;
    ddb = b * (u * u * u * u - 2.0 * u * u * u);
  }
  RadialJet jet(double s) const
  {
    const double R2 = radius * radius, t = s / R2;
    double b, db, ddb;
    bump(t, b, db, ddb);
    RadialJet J{amplitude * b, amplitude * db / R2, amplitude * ddb / (R2 * R2)};
    if (mu != 0.0) {
      const double g = s + R2 * b, dg = 1.0 + db, ddg = ddb / R2;
      J.f -= 0.5 * mu * std::log(g);
      J.df -= 0.5 * mu * dg / g;
      J.ddf -= 0.5 * mu * (ddg / g - dg * dg / (g * g));
    }
    return J;
  }
};

// W = A (1+s)^{-(rho-2)/2}: |B| ~ r^{-rho}, W bounded.
struct PowerDecay {
  double rho, amplitude;
  RadialJet jet(double s) const
  {
    const double e = -(rho - 2.0) / 2.0, u = 1.0 + s;
    const double f = amplitude * std::pow(u, e);
    return {f, e * f / u, e * (e - 1.0) * f / (u * u)};
  }
};

// Radial table produced by radial_field_to_potential.
struct RadialTable {
  double dr = 0;
  std::vector<double> r, W, fp, fpp;  // fp = dW/ds, fpp = d^2W/ds^2
  double tail_moment = 0;              // lim s f'(s); nonzero means a log tail
  double sup_abs_W = 0;

  RadialJet jet(double s) const
  {
    const double rr = std::sqrt(s);
    const std::size_t n = r.size();
    if (rr >= r.back()) {
      const double m = tail_moment;
      return {W.back() + m * std::log(s / (r.back() * r.back())), m / s, -m / (s * s)};
    }
    // quintic Hermite in s through (W, fp, fpp) at both ends; df and ddf are its exact derivatives
    const double x = rr / dr;
    std::size_t i = std::min(static_cast<std::size_t>(x), n - 2);
    const double s0 = r[i] * r[i], s1 = r[i + 1] * r[i + 1], H = s1 - s0;
    const double t = (s - s0) / H, t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    const double c[6] = {W[i], H * fp[i], H * H * fpp[i], H * H * fpp[i + 1], H * fp[i + 1], W[i + 1]};
    const double b0[6] = {1 - 10 * t3 + 15 * t4 - 6 * t5, t - 6 * t3 + 8 * t4 - 3 * t5,
                          0.5 * (t2 - 3 * t3 + 3 * t4 - t5), 0.5 * (t3 - 2 * t4 + t5),
                          -4 * t3 + 7 * t4 - 3 * t5, 10 * t3 - 15 * t4 + 6 * t5};
    const double b1[6] = {-30 * t2 + 60 * t3 - 30 * t4, 1 - 18 * t2 + 32 * t3 - 15 * t4,
                          0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4), 0.5 * (3 * t2 - 8 * t3 + 5 * t4),
                          -12 * t2 + 28 * t3 - 15 * t4, 30 * t2 - 60 * t3 + 30 * t4};
    const double b2[6] = {-60 * t + 180 * t2 - 120 * t3, -36 * t + 96 * t2 - 60 * t3,
                          0.5 * (2 - 18 * t + 36 * t2 - 20 * t3), 0.5 * (6 * t - 24 * t2 + 20 * t3),
                          -24 * t + 84 * t2 - 60 * t3, 60 * t - 180 * t2 + 120 * t3};
    RadialJet J{0, 0, 0};
    for (int k = 0; k < 6; ++k) {
      J.f += b0[k] * c[k];
      J.df += b1[k] * c[k];
      J.ddf += b2[k] * c[k];
    }
    J.df /= H;
    J.ddf /= H * H;
    return J;
  }
};

struct Tabulated {
  std::shared_ptr<const RadialTable> table;
  RadialJet jet(double s) const { return table->jet(s); }
};

class ScalarPotential {
public:
  using Family = std::variant<Zero, Quadratic, LogBulge, CompactBump, PowerDecay, Tabulated>;

  ScalarPotential(int d, Family f) : d_(d), fam_(std::move(f))
  {
    if (d < 1) throw std::invalid_argument("ScalarPotential: d < 1");
    if (auto* q = std::get_if<Quadratic>(&fam_); q && static_cast<int>(q->kappa.size()) != d)
      throw std::invalid_argument("Quadratic: need one kappa per plane");
  }

  static ScalarPotential zero(int d) { return {d, Zero{}}; }
  static ScalarPotential quadratic(int d, std::vector<double> kappa) { return {d, Quadratic{std::move(kappa)}}; }
  static ScalarPotential log_bulge(int d, double phi) { return {d, LogBulge{phi}}; }
  static ScalarPotential compact_bump(int d, double A, double R, double mu = 0.0) { return {d, CompactBump{A, R, mu}}; }
  static ScalarPotential power_decay(int d, double rho, double A) { return {d, PowerDecay{rho, A}}; }
  static ScalarPotential tabulated(int d, std::shared_ptr<const RadialTable> t) { return {d, Tabulated{std::move(t)}}; }

  int d() const { return d_; }
  const Family& family() const { return fam_; }
  bool is_zero() const { return std::holds_alternative<Zero>(fam_); }

  std::string name() const
  {
    return std::visit([](const auto& f) -> std::string {
      using T = std::decay_t<decltype(f)>;
      if constexpr (std::is_same_v<T, Zero>) return "zero";
      else if constexpr (std::is_same_v<T, Quadratic>) return "quadratic";
      else if constexpr (std::is_same_v<T, LogBulge>) return "log_bulge";
      else if constexpr (std::is_same_v<T, CompactBump>) return "compact_bump";
      else if constexpr (std::is_same_v<T, PowerDecay>) return "power_decay";
      else return "tabulated";
    }, fam_);
  }

  // Short parameter string, e.g. "log_bulge(phi=4)".
  std::string describe() const
  {
    std::ostringstream o;
    o << name() << "(";
    std::visit([&](const auto& f) {
      using T = std::decay_t<decltype(f)>;
      if constexpr (std::is_same_v<T, Quadratic>) {
        for (std::size_t i = 0; i < f.kappa.size(); ++i) o << (i ? "," : "") << "k" << i + 1 << "=" << f.kappa[i];
      } else if constexpr (std::is_same_v<T, LogBulge>) {
        o << "phi=" << f.phi;
      } else if constexpr (std::is_same_v<T, CompactBump>) {
        o << "A=" << f.amplitude << ",R=" << f.radius << ",mu=" << f.mu;
      } else if constexpr (std::is_same_v<T, PowerDecay>) {
        o << "rho=" << f.rho << ",A=" << f.amplitude;
      }
    }, fam_);
    o << ")";
    return o.str();
  }

  double value(const double* x) const
  {
    return std::visit([&](const auto& f) -> double {
      using T = std::decay_t<decltype(f)>;
      if constexpr (std::is_same_v<T, Zero>) return 0.0;
      else if constexpr (std::is_same_v<T, Quadratic>) {
        double w = 0;
        for (int j = 0; j < d_; ++j) w += 0.5 * f.kappa[j] * (x[2 * j] * x[2 * j] + x[2 * j + 1] * x[2 * j + 1]);
        return w;
      } else return f.jet(norm2(x)).f;
    }, fam_);
  }

  // g[a] = dW/dx^{a+1}, a = 0..2d-1
  void grad(const double* x, double* g) const
  {
    std::visit([&](const auto& f) {
      using T = std::decay_t<decltype(f)>;
      if constexpr (std::is_same_v<T, Zero>) {
        for (int a = 0; a < 2 * d_; ++a) g[a] = 0.0;
      } else if constexpr (std::is_same_v<T, Quadratic>) {
        for (int j = 0; j < d_; ++j) {
          g[2 * j] = f.kappa[j] * x[2 * j];
          g[2 * j + 1] = f.kappa[j] * x[2 * j + 1];
        }
      } else {
        const double df = f.jet(norm2(x)).df;
        for (int a = 0; a < 2 * d_; ++a) g[a] = 2.0 * df * x[a];
      }
    }, fam_);
  }

  // H(j,k) = d^2 W / dz^j dzbar^k
  Eigen::MatrixXcd hessian(const double* x) const
  {
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(d_, d_);
    std::visit([&](const auto& f) {
      using T = std::decay_t<decltype(f)>;
      if constexpr (std::is_same_v<T, Zero>) {
      } else if constexpr (std::is_same_v<T, Quadratic>) {
        for (int j = 0; j < d_; ++j) H(j, j) = 0.5 * f.kappa[j];
      } else {
        const RadialJet J = f.jet(norm2(x));
        for (int j = 0; j < d_; ++j)
          for (int k = 0; k < d_; ++k) {
            const cplx zj(x[2 * j], x[2 * j + 1]), zk(x[2 * k], x[2 * k + 1]);
            H(j, k) = (j == k ? J.df : 0.0) + J.ddf * std::conj(zj) * zk;
          }
      }
    }, fam_);
    return H;
  }

  // dW/dzbar^j = (d_{2j-1} + i d_{2j}) W / 2
  cplx dzbar(const double* x, int j) const
  {
    std::vector<double> g(2 * d_);
    grad(x, g.data());
    return 0.5 * cplx(g[2 * (j - 1)], g[2 * (j - 1) + 1]);
  }

private:
  double norm2(const double* x) const
  {
    double s = 0;
    for (int a = 0; a < 2 * d_; ++a) s += x[a] * x[a];
    return s;
  }

  int d_;
  Family fam_;
};

// Real vector potential a_1..a_{2d}.
class VectorPotential {
public:
  using Eval = std::function<void(const double*, double*)>;
  VectorPotential(int d, Eval f) : d_(d), f_(std::move(f)) {}
  int d() const { return d_; }
  void operator()(const double* x, double* a) const { f_(x, a); }
  std::vector<double> at(const double* x) const
  {
    std::vector<double> a(2 * d_);
    f_(x, a.data());
    return a;
  }

  // Integral of dW along the segment x -> x + len e_axis, recovered from a alone:
  // dW/dx^{2j-1} = a_{2j}, dW/dx^{2j} = -a_{2j-1}.
  double edge_integral(const double* x, int axis, double len) const
  {
    const int partner = (axis % 2 == 0) ? axis + 1 : axis - 1;
    const double sgn = (axis % 2 == 0) ? 1.0 : -1.0;
    std::vector<double> p(x, x + 2 * d_), a(2 * d_);
    auto integrand = [&](double t) {
      p[axis] = x[axis] + t;
      f_(p.data(), a.data());
      return sgn * a[partner];
    };
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(integrand, 0.0, len, 10, 1e-13);
  }

private:
  int d_;
  Eval f_;
};

inline VectorPotential potential_to_vector(const ScalarPotential& W)
{
  return VectorPotential(W.d(), [W](const double* x, double* a) {
    const int d = W.d();
    std::vector<double> g(2 * d);
    W.grad(x, g.data());
    for (int j = 0; j < d; ++j) {
      a[2 * j] = -g[2 * j + 1];
      a[2 * j + 1] = g[2 * j];
    }
  });
}

enum class FieldNorm { frobenius, hessian_nuclear };

inline const char* to_string(FieldNorm n)
{
  return n == FieldNorm::frobenius ? "frobenius" : "hessian_nuclear";
}

// Real antisymmetric matrix of B = sum_{j,k} bc_{jk} dz^j ^ dzbar^k (upper triangle = b_{jk}).
inline Eigen::MatrixXd complex_to_real(const Eigen::MatrixXcd& bc)
{
  const int d = static_cast<int>(bc.rows());
  Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(2 * d, 2 * d);
  const cplx I(0, 1);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) {
      const int a = 2 * j, b = 2 * j + 1, c = 2 * k, e = 2 * k + 1;
      // dz^j ^ dzbar^k = dx_a^dx_c - i dx_a^dx_e + i dx_b^dx_c + dx_b^dx_e
      C(a, c) += bc(j, k);
      C(a, e) += -I * bc(j, k);
      C(b, c) += I * bc(j, k);
      C(b, e) += bc(j, k);
    }
  return (C - C.transpose()).real();
}

class MagneticField {
public:
  using RealEval = std::function<Eigen::MatrixXd(const double*)>;

  MagneticField(int d, RealEval real, std::function<Eigen::MatrixXcd(const double*)> cplx_eval = {})
    : d_(d), real_(std::move(real)), cplx_(std::move(cplx_eval)) {}

  int d() const { return d_; }
  Eigen::MatrixXd b(const double* x) const { return real_(x); }
  bool has_complex() const { return static_cast<bool>(cplx_); }
  Eigen::MatrixXcd bc(const double* x) const
  {
    if (!cplx_) throw std::logic_error("MagneticField: no complex coefficients");
    return cplx_(x);
  }
  double norm(const double* x, FieldNorm n = FieldNorm::frobenius) const
  {
    if (n == FieldNorm::frobenius) return b(x).norm();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(bc(x) / cplx(0, 2), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
  }

private:
  int d_;
  RealEval real_;
  std::function<Eigen::MatrixXcd(const double*)> cplx_;
};

inline MagneticField field_from_potential(const ScalarPotential& W)
{
  auto bc = [W](const double* x) -> Eigen::MatrixXcd { return cplx(0, 2) * W.hessian(x); };
  return MagneticField(W.d(), [bc](const double* x) { return complex_to_real(bc(x)); }, bc);
}

// b_jk = d_j a_k - d_k a_j by central differences of step h.
inline Eigen::MatrixXd curl_fd(const VectorPotential& a, const double* x, double h)
{
  const int n = 2 * a.d();
  Eigen::MatrixXd D(n, n);  // D(j, k) = d_j a_k
  std::vector<double> y(x, x + n), ap(n), am(n);
  for (int j = 0; j < n; ++j) {
    y[j] = x[j] + h;
    a(y.data(), ap.data());
    y[j] = x[j] - h;
    a(y.data(), am.data());
    y[j] = x[j];
    for (int k = 0; k < n; ++k) D(j, k) = (ap[k] - am[k]) / (2 * h);
  }
  return D - D.transpose();
}

// max |d_i b_jk + d_j b_ki + d_k b_ij| by central differences.
inline double closedness_fd(const MagneticField& B, const double* x, double h)
{
  const int n = 2 * B.d();
  std::vector<Eigen::MatrixXd> db(n);
  std::vector<double> y(x, x + n);
  for (int i = 0; i < n; ++i) {
    y[i] = x[i] + h;
    const Eigen::MatrixXd p = B.b(y.data());
    y[i] = x[i] - h;
    db[i] = (p - B.b(y.data())) / (2 * h);
    y[i] = x[i];
  }
  double v = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) v = std::max(v, std::abs(db[i](j, k) + db[j](k, i) + db[k](i, j)));
  return v;
}

inline double validate_oneone(const MagneticField& B, const std::vector<std::vector<double>>& samples)
{
  double v = 0;
  const int d = B.d();
  for (const auto& x : samples) {
    const Eigen::MatrixXd b = B.b(x.data());
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) {
        if (j == k) continue;
        v = std::max(v, std::abs(b(2 * j, 2 * k) - b(2 * j + 1, 2 * k + 1)));
        v = std::max(v, std::abs(b(2 * j, 2 * k + 1) + b(2 * j + 1, 2 * k)));
      }
  }
  return v;
}

struct FluxResult {
  double value;
  double truncation_estimate;  // |Q(N) - Q(2N)| of the tensor rule
};

// (1/2pi) * integral of b_12 over [-a,a]^2, composite tensor Gauss-Legendre.
inline FluxResult total_flux_2d(const MagneticField& B, double a, int panels = 0)
{
  if (B.d() != 1) throw std::invalid_argument("total_flux_2d: requires d = 1");
  if (panels <= 0) panels = std::max(8, static_cast<int>(std::ceil(a)));
  using GL = boost::math::quadrature::gauss<double, 20>;
  auto rule = [&](int np) {
    std::vector<double> nodes, weights;
    const double w = 2 * a / np;
    for (int p = 0; p < np; ++p) {
      const double c = -a + (p + 0.5) * w;
      const auto& ab = GL::abscissa();
      const auto& wt = GL::weights();
      for (std::size_t i = 0; i < ab.size(); ++i) {
        nodes.push_back(c + 0.5 * w * ab[i]);
        weights.push_back(0.5 * w * wt[i]);
        if (ab[i] != 0.0) {
          nodes.push_back(c - 0.5 * w * ab[i]);
          weights.push_back(0.5 * w * wt[i]);
        }
      }
    }
    double s = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double x[2] = {nodes[i], nodes[k]};
        s += weights[i] * weights[k] * B.b(x)(0, 1);
      }
    return s / (2 * std::numbers::pi);
  };
  const double q1 = rule(panels), q2 = rule(2 * panels);
  return {q2, std::abs(q2 - q1)};
}

struct RadialOptions {
  double r_max = 40.0;
  int intervals = 4000;
  double tail_tol = 1e-10;
};

// Radial W(r) with 4 (s f')' = kappa(r), f(0) = 0. kappa is treated as zero beyond r_max.
inline std::shared_ptr<RadialTable> radial_field_to_potential(const std::function<double(double)>& kappa,
                                                              const RadialOptions& opt = {})
{
  using GL = boost::math::quadrature::gauss<double, 20>;
  auto t = std::make_shared<RadialTable>();
  const int n = opt.intervals;
  t->dr = opt.r_max / n;
  t->r.resize(n + 1);
  t->W.assign(n + 1, 0.0);
  t->fp.assign(n + 1, 0.0);
  t->fpp.assign(n + 1, 0.0);
  std::vector<double> m(n + 1, 0.0);  // m(r) = int_0^r kappa t dt = 2 s f'
  for (int i = 0; i <= n; ++i) t->r[i] = i * t->dr;
  for (int i = 0; i < n; ++i) {
    const double a = t->r[i], b = t->r[i + 1];
    const double dm = GL::integrate([&](double x) { return kappa(x) * x; }, a, b);
    if (!std::isfinite(dm)) throw std::domain_error("radial_field_to_potential: non-integrable profile");
    m[i + 1] = m[i] + dm;
    auto mom = [&](double rho) {
      return m[i] + GL::integrate([&](double x) { return kappa(x) * x; }, a, rho);
    };
    // dW/dr = m / r, with m ~ kappa(0) r^2 / 2 near 0
    const double dW = GL::integrate([&](double rho) { return rho > 0 ? mom(rho) / rho : 0.0; }, a, b);
    t->W[i + 1] = t->W[i] + dW;
  }
  for (int i = 0; i <= n; ++i) {
    const double r = t->r[i], s = r * r;
    const double k = kappa(r);
    if (!std::isfinite(k)) throw std::domain_error("radial_field_to_potential: non-integrable profile");
    if (i == 0) {
      t->fp[i] = k / 4.0;
    } else {
      t->fp[i] = m[i] / (2.0 * s);
    }
    // (s f')' = kappa / 4  =>  f'' = (kappa/4 - f') / s
    t->fpp[i] = (i == 0) ? 0.0 : (k / 4.0 - t->fp[i]) / s;
  }
  // near the origin the quotient loses digits; replace by a difference of fp
  for (int i = 0; i <= std::min(n, 4); ++i) {
    const int a = std::max(i, 1), b = a + 1;
    t->fpp[i] = (t->fp[b] - t->fp[a]) / (t->r[b] * t->r[b] - t->r[a] * t->r[a]);
  }
  t->tail_moment = std::abs(m[n]) > opt.tail_tol ? 0.5 * m[n] : 0.0;
  for (double w : t->W) t->sup_abs_W = std::max(t->sup_abs_W, std::abs(w));
  return t;
}

inline bool has_log_tail(const RadialTable& t) { return t.tail_moment != 0.0; }

} // namespace zmlab::fields

#endif // ZMLAB_FIELDS_HPP
