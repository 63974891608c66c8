#ifndef ZMLAB_LATTICE_HPP
#define ZMLAB_LATTICE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fields.hpp"
#include "forms.hpp"

namespace zmlab::lattice {

using index_t = std::int64_t;

// [-L, L]^{2d}, n points per axis, axis 0 fastest.
class Grid {
public:
  Grid(int d, int n, double L) : d_(d), n_(n), L_(L)
  {
    if (d < 1) throw std::invalid_argument("grid: d must be >= 1");
    if (n < 3 || n % 2 == 0) throw std::invalid_argument("grid.n must be odd and >= 3 (got " + std::to_string(n) + ")");
    if (!(L > 0)) throw std::invalid_argument("grid.L must be positive");
    h_ = 2.0 * L / (n - 1);
    npts_ = 1;
    stride_.resize(2 * d);
    for (int a = 0; a < 2 * d; ++a) {
      stride_[a] = npts_;
      npts_ *= n;
    }
  }

  int d() const { return d_; }
  int dim() const { return 2 * d_; }
  int n() const { return n_; }
  double L() const { return L_; }
  double h() const { return h_; }
  index_t points() const { return npts_; }
  index_t dofs() const { return npts_ << d_; }
  index_t stride(int axis) const { return stride_[axis]; }
  double coord(int i) const { return -L_ + i * h_; }
  double cell_volume() const { return std::pow(h_, 2 * d_); }
  int axis_index(index_t p, int axis) const { return static_cast<int>((p / stride_[axis]) % n_); }
  void point(index_t p, double* x) const
  {
    for (int a = 0; a < 2 * d_; ++a) {
      x[a] = coord(static_cast<int>(p % n_));
      p /= n_;
    }
  }
  std::vector<double> point(index_t p) const
  {
    std::vector<double> x(2 * d_);
    point(p, x.data());
    return x;
  }
  index_t origin() const
  {
    index_t p = 0;
    for (int a = 0; a < 2 * d_; ++a) p += (n_ / 2) * stride_[a];
    return p;
  }

private:
  int d_, n_;
  double L_, h_;
  index_t npts_;
  std::vector<index_t> stride_;
};

// Coefficients per (form position, point); dof = pos * points + point.
class FormField {
public:
  explicit FormField(const Grid& g) : grid_(g), basis_(g.d()), data_(Eigen::VectorXcd::Zero(g.dofs())) {}
  FormField(const Grid& g, Eigen::VectorXcd v) : grid_(g), basis_(g.d()), data_(std::move(v))
  {
    if (data_.size() != g.dofs()) throw std::invalid_argument("FormField: size mismatch");
  }

  const Grid& grid() const { return grid_; }
  const forms::FormBasis& basis() const { return basis_; }
  Eigen::VectorXcd& data() { return data_; }
  const Eigen::VectorXcd& data() const { return data_; }
  cplx& at(int pos, index_t p) { return data_[pos * grid_.points() + p]; }
  cplx at(int pos, index_t p) const { return data_[pos * grid_.points() + p]; }
  auto component(int pos) { return data_.segment(pos * grid_.points(), grid_.points()); }
  auto component(int pos) const { return data_.segment(pos * grid_.points(), grid_.points()); }

  void set_component(int pos, const std::function<cplx(const double*)>& f)
  {
    const index_t N = grid_.points();
#pragma omp parallel for schedule(static)
    for (index_t p = 0; p < N; ++p) {
      double x[16];
      grid_.point(p, x);
      data_[pos * N + p] = f(x);
    }
  }
  // true if all nonzero coefficients sit on indices of length q
  bool is_degree(int q) const
  {
    for (int pos = 0; pos < basis_.size(); ++pos)
      if (basis_.degree(pos) != q && component(pos).cwiseAbs().maxCoeff() > 0) return false;
    return true;
  }

private:
  Grid grid_;
  forms::FormBasis basis_;
  Eigen::VectorXcd data_;
};

using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor, index_t>;
using Triplet = Eigen::Triplet<cplx, index_t>;

struct SparseHermitianOperator {
  SparseMatrix matrix;
  bool hermitian = false;
  double hermiticity_defect = 0;  // max |M - M^H|

  index_t dim() const { return matrix.rows(); }
  void apply(const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const { y.noalias() = matrix * x; }

  static SparseHermitianOperator certify(SparseMatrix m, double tol = 1e-12)
  {
    SparseHermitianOperator op;
    SparseMatrix diff = m - SparseMatrix(m.adjoint());
    double dev = 0;
    for (index_t k = 0; k < diff.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(diff, k); it; ++it) dev = std::max(dev, std::abs(it.value()));
    op.matrix = std::move(m);
    op.hermiticity_defect = dev;
    op.hermitian = dev <= tol;
    return op;
  }
};

inline double max_abs_entry(const SparseMatrix& m)
{
  double v = 0;
  for (index_t k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
  return v;
}

// pointwise: dbar_W = dbar + e(dbar W) with W-derivatives at nodes.
// exponential: dbar_W = e^{-W} dbar e^{W} on the lattice (edge factors exp(W_y - W_x)).
enum class Coupling { pointwise, exponential };

inline const char* to_string(Coupling c) { return c == Coupling::pointwise ? "pointwise" : "exponential"; }

// Per-axis edge data of W on the grid.
struct EdgeData {
  // delta[axis][p] = W(p + h e_axis) - W(p); meaningless on the last layer
  std::vector<std::vector<double>> delta;
  // grad[axis][p] = dW/dx^axis at p (pointwise coupling only)
  std::vector<std::vector<double>> grad;

  static EdgeData from_potential(const Grid& g, const fields::ScalarPotential& W, Coupling c)
  {
    EdgeData e;
    const index_t N = g.points();
    const int D = g.dim();
    std::vector<double> w(N);
#pragma omp parallel for schedule(static)
    for (index_t p = 0; p < N; ++p) {
      double x[16];
      g.point(p, x);
      w[p] = W.value(x);
    }
    e.delta.assign(D, std::vector<double>(N, 0.0));
    for (int a = 0; a < D; ++a)
      for (index_t p = 0; p < N; ++p)
        if (g.axis_index(p, a) + 1 < g.n()) e.delta[a][p] = w[p + g.stride(a)] - w[p];
    if (c == Coupling::pointwise) {
      e.grad.assign(D, std::vector<double>(N, 0.0));
#pragma omp parallel for schedule(static)
      for (index_t p = 0; p < N; ++p) {
        double x[16], gr[16];
        g.point(p, x);
        W.grad(x, gr);
        for (int a = 0; a < D; ++a) e.grad[a][p] = gr[a];
      }
    }
    return e;
  }

  // Same quantities recovered from the vector potential only.
  static EdgeData from_vector(const Grid& g, const fields::VectorPotential& A, Coupling c)
  {
    EdgeData e;
    const index_t N = g.points();
    const int D = g.dim();
    e.delta.assign(D, std::vector<double>(N, 0.0));
    if (c == Coupling::exponential) {
#pragma omp parallel for schedule(static)
      for (index_t p = 0; p < N; ++p) {
        double x[16];
        g.point(p, x);
        for (int a = 0; a < D; ++a)
          if (g.axis_index(p, a) + 1 < g.n()) e.delta[a][p] = A.edge_integral(x, a, g.h());
      }
    } else {
      e.grad.assign(D, std::vector<double>(N, 0.0));
#pragma omp parallel for schedule(static)
      for (index_t p = 0; p < N; ++p) {
        double x[16], av[16];
        g.point(p, x);
        A(x, av);
        for (int j = 0; j < g.d(); ++j) {
          e.grad[2 * j][p] = av[2 * j + 1];
          e.grad[2 * j + 1][p] = -av[2 * j];
        }
      }
    }
    return e;
  }
};

namespace detail {

inline bool has_next(const Grid& g, index_t p, int a) { return g.axis_index(p, a) + 1 < g.n(); }
inline bool has_prev(const Grid& g, index_t p, int a) { return g.axis_index(p, a) > 0; }

// Scalar operator Y_a = e^{-W} D_a e^{W} (exponential) or D_a + diag(dW/dx^a) (pointwise).
inline void push_Y(const Grid& g, const EdgeData& e, Coupling c, int a, std::vector<Triplet>& t,
                   index_t ro, index_t co, cplx scale)
{
  const index_t N = g.points(), s = g.stride(a);
  const double ih = 1.0 / (2.0 * g.h());
  for (index_t p = 0; p < N; ++p) {
    if (c == Coupling::exponential) {
      if (has_next(g, p, a)) t.emplace_back(ro + p, co + p + s, scale * ih * std::exp(e.delta[a][p]));
      if (has_prev(g, p, a)) t.emplace_back(ro + p, co + p - s, -scale * ih * std::exp(-e.delta[a][p - s]));
    } else {
      if (has_next(g, p, a)) t.emplace_back(ro + p, co + p + s, scale * ih);
      if (has_prev(g, p, a)) t.emplace_back(ro + p, co + p - s, -scale * ih);
      t.emplace_back(ro + p, co + p, scale * e.grad[a][p]);
    }
  }
}

// Kronecker product F (x) S in the form-blocked layout, S given as a triplet emitter.
template <class Emit>
void push_fiber(const Grid& g, const forms::FiberMatrix& F, Emit emit)
{
  const index_t N = g.points();
  for (int r = 0; r < F.rows(); ++r)
    for (int c = 0; c < F.cols(); ++c)
      if (std::abs(F(r, c)) > 0) emit(r * N, c * N, F(r, c));
}

} // namespace detail

struct DbarPair {
  SparseMatrix dbar, adjoint;
};

inline DbarPair assemble_dbarW(const Grid& g, const fields::ScalarPotential& W, Coupling c = Coupling::exponential)
{
  const forms::FormBasis basis(g.d());
  const EdgeData e = EdgeData::from_potential(g, W, c);
  std::vector<Triplet> t;
  for (int j = 1; j <= g.d(); ++j) {
    const forms::FiberMatrix E = forms::ext_matrix(basis, j);
    detail::push_fiber(g, E, [&](index_t ro, index_t co, cplx v) {
      detail::push_Y(g, e, c, 2 * j - 2, t, ro, co, 0.5 * v);
      detail::push_Y(g, e, c, 2 * j - 1, t, ro, co, cplx(0, 0.5) * v);
    });
  }
  DbarPair r;
  r.dbar.resize(g.dofs(), g.dofs());
  r.dbar.setFromTriplets(t.begin(), t.end());
  r.adjoint = r.dbar.adjoint();
  return r;
}

inline SparseHermitianOperator assemble_dirac_complex(const Grid& g, const fields::ScalarPotential& W,
                                                      Coupling c = Coupling::exponential)
{
  DbarPair p = assemble_dbarW(g, W, c);
  SparseMatrix D = 2.0 * (p.dbar + p.adjoint);
  return SparseHermitianOperator::certify(std::move(D));
}

// sum_k gamma^k (x) (-i d_k - a_k), built from the vector potential only.
inline SparseHermitianOperator assemble_dirac_coordinate(const Grid& g, const fields::VectorPotential& A,
                                                         Coupling c = Coupling::exponential)
{
  const forms::FormBasis basis(g.d());
  const EdgeData e = EdgeData::from_vector(g, A, c);
  const index_t N = g.points();
  const double ih = 1.0 / (2.0 * g.h());
  const cplx I(0, 1);
  std::vector<Triplet> t;
  for (int k = 1; k <= g.dim(); ++k) {
    const int a = k - 1;
    const index_t s = g.stride(a);
    const forms::FiberMatrix G = forms::gamma(basis, k);
    if (c == Coupling::pointwise) {
      // a_k at the node; grad holds dW, so a_{2j-1} = -grad[2j], a_{2j} = grad[2j-1]
      const int partner = (a % 2 == 0) ? a + 1 : a - 1;
      const double sgn = (a % 2 == 0) ? -1.0 : 1.0;
      detail::push_fiber(g, G, [&](index_t ro, index_t co, cplx v) {
        for (index_t p = 0; p < N; ++p) {
          if (detail::has_next(g, p, a)) t.emplace_back(ro + p, co + p + s, -I * v * ih);
          if (detail::has_prev(g, p, a)) t.emplace_back(ro + p, co + p - s, I * v * ih);
          t.emplace_back(ro + p, co + p, -v * sgn * e.grad[partner][p]);
        }
      });
      continue;
    }
    // -i gamma^k (x) S_k, S_xy = D_xy cosh(delta)
    detail::push_fiber(g, G, [&](index_t ro, index_t co, cplx v) {
      for (index_t p = 0; p < N; ++p) {
        if (detail::has_next(g, p, a)) t.emplace_back(ro + p, co + p + s, -I * v * ih * std::cosh(e.delta[a][p]));
        if (detail::has_prev(g, p, a)) t.emplace_back(ro + p, co + p - s, I * v * ih * std::cosh(e.delta[a][p - s]));
      }
    });
    // gauge part along this axis: (1/2) A_k with A_xy = 2 D_xy sinh(delta), attached to
    // +gamma^{2j-1} for k = 2j and -gamma^{2j} for k = 2j-1
    const bool odd = (a % 2 == 0);
    const forms::FiberMatrix Gp = odd ? forms::gamma(basis, k + 1) : forms::gamma(basis, k - 1);
    const double sg = odd ? -1.0 : 1.0;
    detail::push_fiber(g, Gp, [&](index_t ro, index_t co, cplx v) {
      for (index_t p = 0; p < N; ++p) {
        if (detail::has_next(g, p, a)) t.emplace_back(ro + p, co + p + s, sg * v * ih * std::sinh(e.delta[a][p]));
        if (detail::has_prev(g, p, a)) t.emplace_back(ro + p, co + p - s, sg * v * ih * std::sinh(e.delta[a][p - s]));
      }
    });
  }
  SparseMatrix D(g.dofs(), g.dofs());
  D.setFromTriplets(t.begin(), t.end());
  return SparseHermitianOperator::certify(std::move(D));
}

struct PauliOptions {
  Coupling coupling = Coupling::exponential;
  double penalty = 0.25;  // c in c^2 h^2 M^T M; 0 gives exactly D*D
};

// M = e^{W} Lap_h e^{-W}, scalar; returned as real-valued complex sparse matrix.
inline SparseMatrix doubler_filter(const Grid& g, const EdgeData& e)
{
  const index_t N = g.points();
  const double ih2 = 1.0 / (g.h() * g.h());
  std::vector<Triplet> t;
  for (index_t p = 0; p < N; ++p) {
    t.emplace_back(p, p, -2.0 * g.dim() * ih2);
    for (int a = 0; a < g.dim(); ++a) {
      const index_t s = g.stride(a);
      if (detail::has_next(g, p, a)) t.emplace_back(p, p + s, ih2 * std::exp(-e.delta[a][p]));
      if (detail::has_prev(g, p, a)) t.emplace_back(p, p - s, ih2 * std::exp(e.delta[a][p - s]));
    }
  }
  SparseMatrix M(N, N);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

inline SparseHermitianOperator assemble_pauli(const Grid& g, const fields::ScalarPotential& W,
                                              const PauliOptions& opt = {})
{
  SparseHermitianOperator D = assemble_dirac_complex(g, W, opt.coupling);
  SparseMatrix P = D.matrix * D.matrix;
  if (opt.penalty != 0.0) {
    const EdgeData e = EdgeData::from_potential(g, W, Coupling::exponential);
    const SparseMatrix M = doubler_filter(g, e);
    const SparseMatrix Q = SparseMatrix(M.adjoint()) * M;
    const double w = opt.penalty * opt.penalty * g.h() * g.h();
    const index_t N = g.points();
    std::vector<Triplet> t;
    for (int f = 0; f < (1 << g.d()); ++f)
      for (index_t k = 0; k < Q.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(Q, k); it; ++it)
          t.emplace_back(f * N + it.row(), f * N + it.col(), w * it.value());
    SparseMatrix Pen(g.dofs(), g.dofs());
    Pen.setFromTriplets(t.begin(), t.end());
    P += Pen;
  }
  P.prune(cplx(0.0), 0.0);
  return SparseHermitianOperator::certify(std::move(P));
}

// Matrix-free D = 2(dbar_W + dbar_W^*) in the form-blocked layout.
class DiracStencil {
public:
  DiracStencil(const Grid& g, const fields::ScalarPotential& W, Coupling c = Coupling::exponential)
    : grid_(g), basis_(g.d()), coupling_(c), edges_(EdgeData::from_potential(g, W, c))
  {
    const int D = g.dim();
    const index_t N = g.points();
    fwd_.assign(D, std::vector<double>(N, 0.0));
    bwd_.assign(D, std::vector<double>(N, 0.0));
    for (int a = 0; a < D; ++a)
      for (index_t p = 0; p < N; ++p) {
        if (c == Coupling::exponential) {
          if (detail::has_next(g, p, a)) fwd_[a][p] = std::exp(edges_.delta[a][p]);
          if (detail::has_prev(g, p, a)) bwd_[a][p] = std::exp(-edges_.delta[a][p - g.stride(a)]);
        } else {
          fwd_[a][p] = detail::has_next(g, p, a) ? 1.0 : 0.0;
          bwd_[a][p] = detail::has_prev(g, p, a) ? 1.0 : 0.0;
        }
      }
    mnext_.assign(D, std::vector<double>(N, 0.0));
    mprev_.assign(D, std::vector<double>(N, 0.0));
    tnext_.assign(D, std::vector<double>(N, 0.0));
    tprev_.assign(D, std::vector<double>(N, 0.0));
    for (int a = 0; a < D; ++a)
      for (index_t p = 0; p < N; ++p) {
        if (detail::has_next(g, p, a)) {
          mnext_[a][p] = std::exp(-edges_.delta[a][p]);
          tnext_[a][p] = std::exp(edges_.delta[a][p]);
        }
        if (detail::has_prev(g, p, a)) {
          mprev_[a][p] = std::exp(edges_.delta[a][p - g.stride(a)]);
          tprev_[a][p] = std::exp(-edges_.delta[a][p - g.stride(a)]);
        }
      }
    for (int j = 1; j <= g.d(); ++j) {
      ext_.push_back(forms::FiberPerm::from(forms::ext_matrix(basis_, j)));
      int_.push_back(forms::FiberPerm::from(forms::int_matrix(basis_, j)));
    }
  }

  const Grid& grid() const { return grid_; }
  const forms::FormBasis& basis() const { return basis_; }
  const EdgeData& edges() const { return edges_; }
  Coupling coupling() const { return coupling_; }

  // out(dst degrees) = D in(src degrees); bit q of a mask selects degree q.
  void apply(const cplx* in, cplx* out, unsigned src_mask, unsigned dst_mask) const
  {
    const index_t N = grid_.points();
    const int nf = basis_.size();
    for (int f = 0; f < nf; ++f)
      if (dst_mask >> basis_.degree(f) & 1u) std::fill(out + f * N, out + (f + 1) * N, cplx(0));
    for (int f = 0; f < nf; ++f) {
      if (!(src_mask >> basis_.degree(f) & 1u)) continue;
      for (int j = 0; j < grid_.d(); ++j) {
        const bool raise = !basis_.index(f).contains(j + 1);
        const forms::FiberPerm& P = raise ? ext_[j] : int_[j];
        const int tgt = P.target[f];
        if (!(dst_mask >> basis_.degree(tgt) & 1u)) continue;
        const cplx v = 2.0 * P.value[f];
        if (raise) apply_Z(in + f * N, out + tgt * N, j, v, false);
        else apply_Z(in + f * N, out + tgt * N, j, v, true);
      }
    }
  }

  void apply(const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const
  {
    y.resize(x.size());
    const unsigned all = (1u << (grid_.d() + 1)) - 1;
    apply(x.data(), y.data(), all, all);
  }

  // out += w M^T M in (scalar), M = e^{W} Lap_h e^{-W}; scratch holds 2 * points
  void add_penalty(const cplx* in, cplx* out, double w, cplx* scratch) const
  {
    const index_t N = grid_.points();
    laplace_conj(in, scratch, false);
    laplace_conj(scratch, scratch + N, true);
#pragma omp parallel for schedule(static)
    for (index_t p = 0; p < N; ++p) out[p] += w * scratch[N + p];
  }

private:
  // out += v * Z_j in (adjoint=false) or v * Z_j^H in (adjoint=true);
  // Z_j = (Y_{2j-1} + i Y_{2j}) / 2
  void apply_Z(const cplx* in, cplx* out, int j, cplx v, bool adjoint) const
  {
    const index_t N = grid_.points();
    const int a = 2 * j, b = 2 * j + 1;
    const index_t sa = grid_.stride(a), sb = grid_.stride(b);
    const double ih = 1.0 / (2.0 * grid_.h());
    const cplx I(0, 1);
    const bool pw = coupling_ == Coupling::pointwise;
    const double* fa = fwd_[a].data();
    const double* ba = bwd_[a].data();
    const double* fb = fwd_[b].data();
    const double* bb = bwd_[b].data();
#pragma omp parallel for schedule(static)
    for (index_t p = 0; p < N; ++p) {
      cplx ya = 0, yb = 0;
      if (!adjoint) {
        // Y f(x) = [F+ f(x+) - F- f(x-)] / 2h with F+ = e^{d+}, F- = e^{-d-} (pointwise: 1)
        if (fa[p] != 0) ya += fa[p] * in[p + sa];
        if (ba[p] != 0) ya -= ba[p] * in[p - sa];
        if (fb[p] != 0) yb += fb[p] * in[p + sb];
        if (bb[p] != 0) yb -= bb[p] * in[p - sb];
        ya *= ih;
        yb *= ih;
        if (pw) {
          ya += edges_.grad[a][p] * in[p];
          yb += edges_.grad[b][p] * in[p];
        }
        out[p] += v * 0.5 * (ya + I * yb);
      } else {
        // Y^T f(x) = [-Y(x+ -> x) ...]: entries -F-(x+) f(x+) + F+(x-) f(x-)
        if (fa[p] != 0) ya -= ba[p + sa] * in[p + sa];
        if (ba[p] != 0) ya += fa[p - sa] * in[p - sa];
        if (fb[p] != 0) yb -= bb[p + sb] * in[p + sb];
        if (bb[p] != 0) yb += fb[p - sb] * in[p - sb];
        ya *= ih;
        yb *= ih;
        if (pw) {
          ya += edges_.grad[a][p] * in[p];
          yb += edges_.grad[b][p] * in[p];
        }
        out[p] += v * 0.5 * (ya - I * yb);
      }
    }
  }

  // transpose=false: M f; transpose=true: M^T f
  void laplace_conj(const cplx* in, cplx* out, bool transpose) const
  {
    const index_t N = grid_.points();
    const double ih2 = 1.0 / (grid_.h() * grid_.h());
    const int D = grid_.dim();
    const auto& nx = transpose ? tnext_ : mnext_;
    const auto& pv = transpose ? tprev_ : mprev_;
#pragma omp parallel for schedule(static)
    for (index_t p = 0; p < N; ++p) {
      cplx acc = -2.0 * D * in[p];
      for (int a = 0; a < D; ++a) {
        const index_t s = grid_.stride(a);
        if (nx[a][p] != 0) acc += nx[a][p] * in[p + s];
        if (pv[a][p] != 0) acc += pv[a][p] * in[p - s];
      }
      out[p] = ih2 * acc;
    }
  }

  Grid grid_;
  forms::FormBasis basis_;
  Coupling coupling_;
  EdgeData edges_;
  std::vector<std::vector<double>> fwd_, bwd_;
  std::vector<std::vector<double>> mnext_, mprev_, tnext_, tprev_;
  std::vector<forms::FiberPerm> ext_, int_;
};

// Pauli operator restricted to the form degrees in `degrees` (bit q = degree q),
// acting on the packed coefficients of those degrees.
class PauliOperator {
public:
  PauliOperator(const DiracStencil& D, unsigned degrees, double penalty)
    : D_(D), degrees_(degrees), penalty_(penalty)
  {
    const auto& B = D.basis();
    for (int f = 0; f < B.size(); ++f)
      if (degrees >> B.degree(f) & 1u) comps_.push_back(f);
    const index_t N = D.grid().points();
    full_in_.resize(D.grid().dofs());
    full_mid_.resize(D.grid().dofs());
    full_out_.resize(D.grid().dofs());
    scratch_.resize(2 * N);
    mid_ = 0;
    for (int q = 0; q <= D.grid().d(); ++q)
      if (degrees >> q & 1u) {
        if (q > 0) mid_ |= 1u << (q - 1);
        mid_ |= 1u << (q + 1);
      }
    mid_ &= (1u << (D.grid().d() + 1)) - 1;
  }

  index_t dim() const { return static_cast<index_t>(comps_.size()) * D_.grid().points(); }
  const std::vector<int>& components() const { return comps_; }
  unsigned degrees() const { return degrees_; }

  void apply(const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const
  {
    const index_t N = D_.grid().points();
    y.resize(dim());
    full_in_.setZero();
    for (std::size_t c = 0; c < comps_.size(); ++c) full_in_.segment(comps_[c] * N, N) = x.segment(c * N, N);
    D_.apply(full_in_.data(), full_mid_.data(), degrees_, mid_);
    D_.apply(full_mid_.data(), full_out_.data(), mid_, degrees_);
    const double w = penalty_ * penalty_ * D_.grid().h() * D_.grid().h();
    for (std::size_t c = 0; c < comps_.size(); ++c) {
      if (w != 0.0) D_.add_penalty(full_in_.data() + comps_[c] * N, full_out_.data() + comps_[c] * N, w, scratch_.data());
      y.segment(c * N, N) = full_out_.segment(comps_[c] * N, N);
    }
  }

  // packed <-> full FormField layout
  Eigen::VectorXcd embed(const Eigen::VectorXcd& x) const
  {
    const index_t N = D_.grid().points();
    Eigen::VectorXcd f = Eigen::VectorXcd::Zero(D_.grid().dofs());
    for (std::size_t c = 0; c < comps_.size(); ++c) f.segment(comps_[c] * N, N) = x.segment(c * N, N);
    return f;
  }
  Eigen::VectorXcd restrict(const Eigen::VectorXcd& f) const
  {
    const index_t N = D_.grid().points();
    Eigen::VectorXcd x(dim());
    for (std::size_t c = 0; c < comps_.size(); ++c) x.segment(c * N, N) = f.segment(comps_[c] * N, N);
    return x;
  }

private:
  const DiracStencil& D_;
  unsigned degrees_, mid_;
  double penalty_;
  std::vector<int> comps_;
  mutable Eigen::VectorXcd full_in_, full_mid_, full_out_, scratch_;
};

// d/dz^j and d/dzbar^j of a scalar grid function by central differences
// (one-sided on the boundary layer).
inline Eigen::VectorXcd partial_complex(const Grid& g, const Eigen::VectorXcd& f, int j, bool bar)
{
  Eigen::VectorXcd out(g.points());
  const int a = 2 * (j - 1), b = a + 1;
  auto partial = [&](index_t p, int ax) -> cplx {
    const index_t s = g.stride(ax);
    const int i = g.axis_index(p, ax);
    if (i == 0) return (f[p + s] - f[p]) / g.h();
    if (i == g.n() - 1) return (f[p] - f[p - s]) / g.h();
    return (f[p + s] - f[p - s]) / (2 * g.h());
  };
  const cplx I(0, bar ? 1.0 : -1.0);
#pragma omp parallel for schedule(static)
  for (index_t p = 0; p < g.points(); ++p) out[p] = 0.5 * (partial(p, a) + I * partial(p, b));
  return out;
}

inline Eigen::VectorXcd partial_z(const Grid& g, const Eigen::VectorXcd& f, int j) { return partial_complex(g, f, j, false); }
inline Eigen::VectorXcd partial_zbar(const Grid& g, const Eigen::VectorXcd& f, int j) { return partial_complex(g, f, j, true); }

enum class Weight { plain, exp_minus_2W, exp_plus_2W };

// h^{2d} sum |alpha|^2 w over the nodes (midpoint rule on node-centred cells).
inline double weighted_norm(const FormField& alpha, const fields::ScalarPotential& W, Weight mode)
{
  const Grid& g = alpha.grid();
  const index_t N = g.points();
  const int nf = alpha.basis().size();
  double s = 0;
#pragma omp parallel for reduction(+ : s) schedule(static)
  for (index_t p = 0; p < N; ++p) {
    double a2 = 0;
    for (int f = 0; f < nf; ++f) a2 += std::norm(alpha.at(f, p));
    if (mode != Weight::plain && a2 > 0) {
      double x[16];
      g.point(p, x);
      const double w = W.value(x);
      a2 *= std::exp(mode == Weight::exp_minus_2W ? -2.0 * w : 2.0 * w);
    }
    s += a2;
  }
  return s * g.cell_volume();
}

} // namespace zmlab::lattice

#endif // ZMLAB_LATTICE_HPP
