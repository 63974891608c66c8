#ifndef ZMLAB_SPECTRUM_HPP
#define ZMLAB_SPECTRUM_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fields.hpp"
#include "lattice.hpp"

namespace zmlab::spectrum {

using lattice::index_t;

template <class Op>
concept HermitianOperator = requires(const Op& op, const Eigen::VectorXcd& x, Eigen::VectorXcd& y) {
  { op.dim() } -> std::convertible_to<index_t>;
  op.apply(x, y);
};

struct SolverOptions {
  int k = 6;
  double tol = 1e-10;     // residual bound relative to the largest Ritz value
  int block = 2;
  int basis = 0;          // Krylov basis size; 0 picks a default
  int max_restarts = 4000;
  index_t dense_limit = 800;
  std::uint64_t seed = 20240611;
  bool keep_vectors = false;
};

struct SpectrumReport {
  std::vector<double> eigenvalues;  // ascending
  std::vector<double> residuals;    // ||M v - lambda v|| / ||v||, recomputed by plain matvec
  std::vector<int> degree;          // form degree carrying most of each vector (-1 if unknown)
  Eigen::MatrixXcd vectors;         // only when keep_vectors
  double lambda_max = 0;
  long matvecs = 0;
  int restarts = 0;
  bool converged = false;
  double seconds = 0;
  int n = 0;
  double L = 0, h = 0;
  double floor = 0;                 // cluster floor used by count_zero_modes
};

namespace detail {

inline void random_fill(Eigen::Ref<Eigen::MatrixXcd> M, std::mt19937_64& rng)
{
  std::normal_distribution<double> nd;
  for (index_t c = 0; c < M.cols(); ++c)
    for (index_t r = 0; r < M.rows(); ++r) M(r, c) = cplx(nd(rng), nd(rng));
}

template <class Op>
SpectrumReport dense_eigenpairs(const Op& op, const SolverOptions& o)
{
  const index_t N = op.dim();
  Eigen::MatrixXcd A(N, N);
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(N), y;
  for (index_t c = 0; c < N; ++c) {
    e.setZero();
    e[c] = 1.0;
    op.apply(e, y);
    A.col(c) = y;
  }
  A = 0.5 * (A + A.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A);
  SpectrumReport r;
  const int k = static_cast<int>(std::min<index_t>(o.k, N));
  r.lambda_max = es.eigenvalues().maxCoeff();
  r.matvecs = N;
  r.converged = true;
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXcd v = es.eigenvectors().col(i);
    op.apply(v, y);
    r.eigenvalues.push_back(es.eigenvalues()[i]);
    r.residuals.push_back((y - es.eigenvalues()[i] * v).norm());
  }
  if (o.keep_vectors) r.vectors = es.eigenvectors().leftCols(k);
  return r;
}

} // namespace detail

// k smallest eigenpairs of a Hermitian PSD operator: block Lanczos with full
// reorthogonalization and thick (Krylov-Schur) restarts.
template <HermitianOperator Op>
SpectrumReport lowest_eigenpairs(const Op& op, const SolverOptions& o = {})
{
  if (o.k < 1) throw std::invalid_argument("lowest_eigenpairs: k must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const index_t N = op.dim();
  const int b = std::max(1, o.block);
  const int k = static_cast<int>(std::min<index_t>(o.k, N));
  const int p = ((k + b - 1) / b) * b + b;  // multiple of b so blocks stay aligned from j = 0
  int m = o.basis > 0 ? o.basis : p + std::max(3 * p, 40);
  m = p + ((m - p + b - 1) / b) * b;
  const int keep = p + ((m - p) / (2 * b)) * b;  // Ritz vectors kept across a restart
  if (N <= o.dense_limit || m + b >= N) {
    SpectrumReport r = detail::dense_eigenpairs(op, o);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

  std::mt19937_64 rng(o.seed);
  Eigen::MatrixXcd Q(N, m + b);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(m + b, m + b);
  Eigen::MatrixXcd W(N, b);
  Eigen::VectorXcd x(N), y(N), v(N);
  Eigen::VectorXd wnorm = Eigen::VectorXd::Zero(b);  // column norms of W before projection
  SpectrumReport r;

  auto orthonormalize_block = [&](int j0) -> Eigen::MatrixXcd {
    // columns W -> Q[:, j0 .. j0+b), against Q[:, 0..j0) already removed
    Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(b, b);
    for (int c = 0; c < b; ++c) {
      v = W.col(c);
      const double scale = std::max(std::max(v.norm(), wnorm[c]), 1e-300);
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i < c; ++i) {
          const cplx rr = Q.col(j0 + i).dot(v);
          v -= rr * Q.col(j0 + i);
          R(i, c) += rr;
        }
      double nrm = v.norm();
      if (nrm > 1e-10 * scale && nrm > 1e-280) {
        Q.col(j0 + c) = v / nrm;
        R(c, c) = nrm;
        continue;
      }
      // breakdown: continue with a fresh random direction
      detail::random_fill(Eigen::Map<Eigen::MatrixXcd>(v.data(), N, 1), rng);
      for (int pass = 0; pass < 2; ++pass) {
        const auto Qa = Q.leftCols(j0 + c);
        v -= Qa * (Qa.adjoint() * v);
      }
      Q.col(j0 + c) = v / v.norm();
    }
    return R;
  };

  detail::random_fill(W, rng);
  H.setZero();
  orthonormalize_block(0);
  wnorm.setZero();
  int j = 0;
  Eigen::VectorXd theta;
  Eigen::MatrixXcd Y;
  std::vector<double> est(k);
  for (r.restarts = 0; r.restarts < o.max_restarts; ++r.restarts) {
    for (; j + b <= m; j += b) {
      for (int c = 0; c < b; ++c) {
        x = Q.col(j + c);
        op.apply(x, y);
        W.col(c) = y;
        wnorm[c] = y.norm();
        ++r.matvecs;
      }
      const auto Qa = Q.leftCols(j + b);
      Eigen::MatrixXcd C = Qa.adjoint() * W;
      W.noalias() -= Qa * C;
      const Eigen::MatrixXcd C2 = Qa.adjoint() * W;
      W.noalias() -= Qa * C2;
      C += C2;
      H.block(0, j, j + b, b) = C;
      H.block(j + b, j, b, b) = orthonormalize_block(j + b);
    }
    Eigen::MatrixXcd Hm = H.topLeftCorner(m, m);
    Eigen::MatrixXcd Hs = Hm.triangularView<Eigen::StrictlyUpper>();
    Hs += Hs.adjoint().eval();
    for (int i = 0; i < m; ++i) Hs(i, i) = Hm(i, i).real();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Hs);
    theta = es.eigenvalues();
    Y = es.eigenvectors();
    r.lambda_max = std::max(r.lambda_max, theta.maxCoeff());
    const Eigen::MatrixXcd Bres = H.block(m, 0, b, m);
    bool done = true;
    for (int i = 0; i < k; ++i) {
      est[i] = (Bres * Y.col(i)).norm();
      if (est[i] > o.tol * r.lambda_max) done = false;
    }
    if (done || r.restarts + 1 == o.max_restarts) {
      r.converged = done;
      break;
    }
    const Eigen::MatrixXcd U = Q.leftCols(m) * Y.leftCols(keep);
    Q.leftCols(keep) = U;
    Q.middleCols(keep, b) = Q.middleCols(m, b).eval();
    H.setZero();
    for (int i = 0; i < keep; ++i) H(i, i) = theta[i];
    const Eigen::MatrixXcd Bn = Bres * Y.leftCols(keep);
    H.block(keep, 0, b, keep) = Bn;
    H.block(0, keep, keep, b) = Bn.adjoint();
    j = keep;
  }

  const Eigen::MatrixXcd X = Q.leftCols(m) * Y.leftCols(k);
  for (int i = 0; i < k; ++i) {
    x = X.col(i);
    op.apply(x, y);
    ++r.matvecs;
    const double lam = x.dot(y).real() / x.squaredNorm();
    r.eigenvalues.push_back(lam);
    r.residuals.push_back((y - lam * x).norm() / x.norm());
  }
  if (o.keep_vectors) r.vectors = X;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// <alpha, M alpha> / <alpha, alpha>
template <HermitianOperator Op>
double rayleigh_residual(const Eigen::VectorXcd& alpha, const Op& M)
{
  const double nn = alpha.squaredNorm();
  if (!(nn > 0)) throw std::invalid_argument("rayleigh_residual: zero vector");
  Eigen::VectorXcd y;
  M.apply(alpha, y);
  return alpha.dot(y).real() / nn;
}

template <HermitianOperator Op>
double rayleigh_residual(const lattice::FormField& alpha, const Op& M)
{
  return rayleigh_residual(alpha.data(), M);
}

enum class Confidence { confirmed, pending_refinement, inconclusive };

inline const char* to_string(Confidence c)
{
  switch (c) {
  case Confidence::confirmed: return "confirmed";
  case Confidence::pending_refinement: return "pending_refinement";
  default: return "inconclusive";
  }
}

struct ClusterVerdict {
  int count = 0;
  Confidence confidence = Confidence::inconclusive;
  double gap_ratio = 0;  // lambda_{count+1} / max(lambda_count, floor)
};

// Leading near-zero cluster of an ascending spectrum.
inline ClusterVerdict count_zero_modes(const std::vector<double>& ev, double floor, double threshold = 10.0)
{
  if (ev.size() < 2) throw std::invalid_argument("count_zero_modes: need at least two eigenvalues");
  ClusterVerdict v;
  if (ev[0] / floor >= threshold) return {0, Confidence::confirmed, ev[0] / floor};
  for (std::size_t c = 1; c < ev.size(); ++c) {
    const double ratio = ev[c] / std::max(ev[c - 1], floor);
    v.gap_ratio = std::max(v.gap_ratio, ratio);
    if (ratio >= threshold) return {static_cast<int>(c), Confidence::pending_refinement, ratio};
  }
  return v;
}

inline ClusterVerdict count_zero_modes(const SpectrumReport& r, double threshold = 10.0)
{
  return count_zero_modes(r.eigenvalues, r.floor, threshold);
}

// Counts from two consecutive refinements; agreement confirms.
inline ClusterVerdict confirm_count(const ClusterVerdict& coarse, const ClusterVerdict& fine)
{
  ClusterVerdict v = fine;
  const bool ok = coarse.confidence != Confidence::inconclusive && fine.confidence != Confidence::inconclusive &&
                  coarse.count == fine.count;
  v.confidence = ok ? Confidence::confirmed : Confidence::inconclusive;
  return v;
}

struct FloorOptions {
  double scale = 1e-4;  // kappa in 10 h^2 kappa
  double box = 1e-2;    // fraction of the free Dirichlet box gap
};

// 10 h^2 kappa plus a fraction of 2d (pi / 2L)^2, the lowest free eigenvalue of the box
inline double cluster_floor(const lattice::Grid& g, const FloorOptions& f = {})
{
  const double box_gap = g.dim() * std::pow(std::numbers::pi / (2.0 * g.L()), 2);
  return 10.0 * g.h() * g.h() * f.scale + f.box * box_gap;
}

struct PauliSpectrumOptions {
  lattice::PauliOptions pauli;
  SolverOptions solver;
  FloorOptions floor;
  std::vector<int> degrees;  // empty: all degrees
};

// Lowest eigenvalues of the lattice Pauli operator, solved per form degree
// (exponential coupling) or per parity (pointwise coupling) and merged.
inline SpectrumReport pauli_spectrum(const lattice::Grid& g, const fields::ScalarPotential& W,
                                     const PauliSpectrumOptions& opt = {})
{
  const auto t0 = std::chrono::steady_clock::now();
  const lattice::DiracStencil D(g, W, opt.pauli.coupling);
  std::vector<unsigned> blocks;
  std::vector<int> degs = opt.degrees;
  if (degs.empty())
    for (int q = 0; q <= g.d(); ++q) degs.push_back(q);
  if (opt.pauli.coupling == lattice::Coupling::exponential) {
    for (int q : degs) blocks.push_back(1u << q);
  } else {
    unsigned even = 0, odd = 0;
    for (int q : degs) (q % 2 ? odd : even) |= 1u << q;
    if (even) blocks.push_back(even);
    if (odd) blocks.push_back(odd);
  }
  struct Entry {
    double lam, res;
    int deg;
    Eigen::VectorXcd vec;
  };
  std::vector<Entry> all;
  SpectrumReport out;
  out.converged = true;
  for (unsigned mask : blocks) {
    const lattice::PauliOperator P(D, mask, opt.pauli.penalty);
    SolverOptions so = opt.solver;
    so.keep_vectors = true;
    const SpectrumReport r = lowest_eigenpairs(P, so);
    out.matvecs += r.matvecs;
    out.restarts += r.restarts;
    out.converged = out.converged && r.converged;
    out.lambda_max = std::max(out.lambda_max, r.lambda_max);
    const index_t N = g.points();
    for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
      Entry e{r.eigenvalues[i], r.residuals[i], -1, {}};
      // degree carrying most weight
      std::vector<double> w(g.d() + 1, 0.0);
      const auto& comps = P.components();
      for (std::size_t c = 0; c < comps.size(); ++c)
        w[D.basis().degree(comps[c])] += r.vectors.col(i).segment(c * N, N).squaredNorm();
      e.deg = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
      if (opt.solver.keep_vectors) e.vec = P.embed(r.vectors.col(i));
      all.push_back(std::move(e));
    }
  }
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.lam < b.lam; });
  const std::size_t k = std::min<std::size_t>(all.size(), opt.solver.k);
  if (opt.solver.keep_vectors) out.vectors.resize(g.dofs(), k);
  for (std::size_t i = 0; i < k; ++i) {
    out.eigenvalues.push_back(all[i].lam);
    out.residuals.push_back(all[i].res);
    out.degree.push_back(all[i].deg);
    if (opt.solver.keep_vectors) out.vectors.col(i) = all[i].vec;
  }
  out.n = g.n();
  out.L = g.L();
  out.h = g.h();
  out.floor = cluster_floor(g, opt.floor);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

} // namespace zmlab::spectrum

#endif // ZMLAB_SPECTRUM_HPP
