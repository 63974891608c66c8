#ifndef ZMLAB_FORMS_HPP
#define ZMLAB_FORMS_HPP

#include <algorithm>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace zmlab {

using cplx = std::complex<double>;

namespace forms {

// Sign of the permutation taking sequence a to sequence b; 0 unless both
// are arrangements of the same set.
inline int perm_sign(std::span<const int> a, std::span<const int> b)
{
  if (a.size() != b.size()) return 0;
  std::vector<int> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa != sb) return 0;
  if (std::adjacent_find(sa.begin(), sa.end()) != sa.end()) return 0;
  // bubble a into b, counting transpositions
  std::vector<int> w(a.begin(), a.end());
  int swaps = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto it = std::find(w.begin() + i, w.end(), b[i]);
    for (auto k = it - w.begin(); k > static_cast<std::ptrdiff_t>(i); --k) {
      std::swap(w[k], w[k - 1]);
      ++swaps;
    }
  }
  return (swaps % 2) ? -1 : 1;
}

inline int perm_sign(std::initializer_list<int> a, std::initializer_list<int> b)
{
  return perm_sign(std::span<const int>(a.begin(), a.size()),
                   std::span<const int>(b.begin(), b.size()));
}

class MultiIndex {
public:
  MultiIndex() = default;
  MultiIndex(int d, std::vector<int> entries) : d_(d), e_(std::move(entries))
  {
    for (std::size_t i = 0; i < e_.size(); ++i) {
      if (e_[i] < 1 || e_[i] > d_) throw std::invalid_argument("MultiIndex: entry out of range");
      if (i && e_[i] <= e_[i - 1]) throw std::invalid_argument("MultiIndex: entries not increasing");
    }
  }
  static MultiIndex from_mask(int d, unsigned mask)
  {
    std::vector<int> e;
    for (int j = 1; j <= d; ++j)
      if (mask & (1u << (j - 1))) e.push_back(j);
    return MultiIndex(d, std::move(e));
  }

  int d() const { return d_; }
  int size() const { return static_cast<int>(e_.size()); }
  const std::vector<int>& entries() const { return e_; }
  int operator[](int i) const { return e_[i]; }
  bool contains(int j) const { return std::binary_search(e_.begin(), e_.end(), j); }
  unsigned mask() const
  {
    unsigned m = 0;
    for (int j : e_) m |= 1u << (j - 1);
    return m;
  }
  // increasing complement in {1..d}
  MultiIndex complement() const { return from_mask(d_, ((1u << d_) - 1) & ~mask()); }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

private:
  int d_ = 0;
  std::vector<int> e_;
};

// Positions 0..2^d-1 ordered by (degree, lexicographic).
class FormBasis {
public:
  explicit FormBasis(int d) : d_(d)
  {
    if (d < 1 || d > 8) throw std::invalid_argument("FormBasis: d out of range");
    const unsigned n = 1u << d;
    std::vector<MultiIndex> all;
    for (unsigned m = 0; m < n; ++m) all.push_back(MultiIndex::from_mask(d, m));
    std::sort(all.begin(), all.end(), [](const MultiIndex& a, const MultiIndex& b) {
      if (a.size() != b.size()) return a.size() < b.size();
      return a.entries() < b.entries();
    });
    idx_ = std::move(all);
    pos_of_mask_.assign(n, -1);
    for (unsigned p = 0; p < n; ++p) pos_of_mask_[idx_[p].mask()] = static_cast<int>(p);
    offset_.assign(d + 2, 0);
    for (const auto& I : idx_) ++offset_[I.size() + 1];
    for (int q = 1; q <= d + 1; ++q) offset_[q] += offset_[q - 1];
  }

  int d() const { return d_; }
  int size() const { return 1 << d_; }
  const MultiIndex& index(int pos) const { return idx_.at(pos); }
  int degree(int pos) const { return idx_[pos].size(); }
  int position(const MultiIndex& I) const { return pos_of_mask_.at(I.mask()); }
  int position_of_mask(unsigned m) const { return pos_of_mask_.at(m); }
  // positions [begin(q), end(q)) hold the degree-q indices
  int degree_begin(int q) const { return offset_.at(q); }
  int degree_end(int q) const { return offset_.at(q + 1); }

private:
  int d_;
  std::vector<MultiIndex> idx_;
  std::vector<int> pos_of_mask_;
  std::vector<int> offset_;
};

using FiberMatrix = Eigen::MatrixXcd;

inline void check_plane(const FormBasis& b, int j)
{
  if (j < 1 || j > b.d()) throw std::out_of_range("plane index out of range");
}

// Left wedge by dzbar^j.
inline FiberMatrix ext_matrix(const FormBasis& basis, int j)
{
  check_plane(basis, j);
  const int n = basis.size();
  FiberMatrix m = FiberMatrix::Zero(n, n);
  for (int col = 0; col < n; ++col) {
    const MultiIndex& I = basis.index(col);
    if (I.contains(j)) continue;
    std::vector<int> seq{j};
    seq.insert(seq.end(), I.entries().begin(), I.entries().end());
    std::vector<int> sorted = seq;
    std::sort(sorted.begin(), sorted.end());
    const int row = basis.position(MultiIndex(basis.d(), sorted));
    m(row, col) = static_cast<double>(perm_sign(seq, sorted));
  }
  return m;
}

inline FiberMatrix int_matrix(const FormBasis& basis, int j)
{
  return ext_matrix(basis, j).adjoint();
}

// gamma^{2j-1} = i(e_j - iota_j), gamma^{2j} = -(e_j + iota_j)
inline FiberMatrix gamma(const FormBasis& basis, int k)
{
  if (k < 1 || k > 2 * basis.d()) throw std::out_of_range("gamma index out of range");
  const int j = (k + 1) / 2;
  const FiberMatrix e = ext_matrix(basis, j);
  const FiberMatrix t = int_matrix(basis, j);
  if (k % 2) return cplx(0, 1) * (e - t);
  return -(e + t);
}

struct CliffordReport {
  double gamma = 0;     // max |{g_j,g_k} - 2 delta|
  double ext_ext = 0;   // max |{e_j,e_k}|
  double int_int = 0;   // max |{i_j,i_k}|
  double ext_int = 0;   // max |{e_j,i_k} - delta|
  double max() const { return std::max({gamma, ext_ext, int_int, ext_int}); }
};

inline CliffordReport anticommutator_check(const FormBasis& basis)
{
  const int d = basis.d(), n = basis.size();
  const FiberMatrix I = FiberMatrix::Identity(n, n);
  auto dev = [](const FiberMatrix& m) { return m.cwiseAbs().maxCoeff(); };
  CliffordReport r;
  std::vector<FiberMatrix> g, e, t;
  for (int k = 1; k <= 2 * d; ++k) g.push_back(gamma(basis, k));
  for (int j = 1; j <= d; ++j) {
    e.push_back(ext_matrix(basis, j));
    t.push_back(int_matrix(basis, j));
  }
  for (int a = 0; a < 2 * d; ++a)
    for (int b = 0; b < 2 * d; ++b)
      r.gamma = std::max(r.gamma, dev(g[a] * g[b] + g[b] * g[a] - (a == b ? 2.0 : 0.0) * I));
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      r.ext_ext = std::max(r.ext_ext, dev(e[a] * e[b] + e[b] * e[a]));
      r.int_int = std::max(r.int_int, dev(t[a] * t[b] + t[b] * t[a]));
      r.ext_int = std::max(r.ext_int, dev(e[a] * t[b] + t[b] * e[a] - (a == b ? 1.0 : 0.0) * I));
    }
  return r;
}

// Sparse view of a fiber matrix with at most one nonzero per column
// (ext, int, gamma all qualify): column c maps to row target[c] with value[c].
struct FiberPerm {
  std::vector<int> target;
  std::vector<cplx> value;

  static FiberPerm from(const FiberMatrix& m)
  {
    FiberPerm p;
    const int n = static_cast<int>(m.cols());
    p.target.assign(n, -1);
    p.value.assign(n, 0.0);
    for (int c = 0; c < n; ++c)
      for (int r = 0; r < n; ++r)
        if (std::abs(m(r, c)) > 0) {
          if (p.target[c] >= 0) throw std::logic_error("FiberPerm: more than one entry in column");
          p.target[c] = r;
          p.value[c] = m(r, c);
        }
    return p;
  }
};

} // namespace forms
} // namespace zmlab

#endif // ZMLAB_FORMS_HPP
