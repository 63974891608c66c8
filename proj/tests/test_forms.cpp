#include <bit>
#include <catch_amalgamated.hpp>

#include <zmlab/forms.hpp>

using namespace zmlab;
using namespace zmlab::forms;

namespace {

// dzbar^j ^ e_I by bitmask: sign (-1)^{#I below j}
double wedge_oracle(unsigned I, int j, unsigned J)
{
  const unsigned bit = 1u << (j - 1);
  if (I & bit) return 0;
  if (J != (I | bit)) return 0;
  return std::popcount(I & (bit - 1)) % 2 ? -1.0 : 1.0;
}

int inversion_parity(const std::vector<int>& a, const std::vector<int>& b)
{
  // position of each a-entry inside b, then count inversions
  std::vector<int> pos;
  for (int x : a) pos.push_back(static_cast<int>(std::find(b.begin(), b.end(), x) - b.begin()));
  int inv = 0;
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t k = i + 1; k < pos.size(); ++k) inv += pos[i] > pos[k];
  return inv % 2 ? -1 : 1;
}

} // namespace

TEST_CASE("perm_sign small cases")
{
  CHECK(perm_sign({1, 2}, {1, 2}) == 1);
  CHECK(perm_sign({1, 2}, {2, 1}) == -1);
  CHECK(perm_sign({1, 2}, {1, 3}) == 0);
  CHECK(perm_sign({1, 2}, {1, 2, 3}) == 0);
  CHECK(perm_sign({1, 1}, {1, 1}) == 0);
  CHECK(perm_sign({}, {}) == 1);
}

TEST_CASE("perm_sign agrees with inversion counting on all permutations of 5")
{
  std::vector<int> b{1, 2, 3, 4, 5}, a = b;
  int n = 0;
  do {
    REQUIRE(perm_sign(a, b) == inversion_parity(a, b));
    ++n;
  } while (std::next_permutation(a.begin(), a.end()));
  CHECK(n == 120);
}

TEST_CASE("MultiIndex rejects bad entries")
{
  CHECK_THROWS_AS(MultiIndex(2, {0}), std::invalid_argument);
  CHECK_THROWS_AS(MultiIndex(2, {3}), std::invalid_argument);
  CHECK_THROWS_AS(MultiIndex(3, {2, 1}), std::invalid_argument);
  CHECK_THROWS_AS(MultiIndex(3, {2, 2}), std::invalid_argument);
  const MultiIndex I(4, {1, 3});
  CHECK(I.complement() == MultiIndex(4, {2, 4}));
  CHECK(I.mask() == 5u);
}

TEST_CASE("FormBasis ordering is (degree, lex) and bijective")
{
  const FormBasis b(3);
  REQUIRE(b.size() == 8);
  const std::vector<std::vector<int>> expect = {{}, {1}, {2}, {3}, {1, 2}, {1, 3}, {2, 3}, {1, 2, 3}};
  for (int p = 0; p < 8; ++p) {
    CHECK(b.index(p).entries() == expect[p]);
    CHECK(b.position(b.index(p)) == p);
  }
  CHECK(b.degree_begin(2) == 4);
  CHECK(b.degree_end(2) == 7);
}

TEST_CASE("ext_matrix matches the bitmask wedge for d <= 4")
{
  for (int d = 1; d <= 4; ++d) {
    const FormBasis b(d);
    for (int j = 1; j <= d; ++j) {
      const FiberMatrix E = ext_matrix(b, j);
      for (int r = 0; r < b.size(); ++r)
        for (int c = 0; c < b.size(); ++c)
          REQUIRE(E(r, c) == cplx(wedge_oracle(b.index(c).mask(), j, b.index(r).mask())));
      CHECK((E * E).cwiseAbs().maxCoeff() == 0.0);
      const FiberMatrix T = int_matrix(b, j);
      CHECK((T * T).cwiseAbs().maxCoeff() == 0.0);
      CHECK((T - E.adjoint()).cwiseAbs().maxCoeff() == 0.0);
      // degree raise / lower
      for (int c = 0; c < b.size(); ++c)
        for (int r = 0; r < b.size(); ++r) {
          if (E(r, c) != 0.0) CHECK(b.degree(r) == b.degree(c) + 1);
          if (T(r, c) != 0.0) CHECK(b.degree(r) == b.degree(c) - 1);
        }
    }
  }
}

TEST_CASE("hand examples of wedge and contraction")
{
  const FormBasis b1(1);
  CHECK(ext_matrix(b1, 1)(1, 0) == cplx(1));
  const FormBasis b(2);
  const int e1 = b.position_of_mask(1), e2 = b.position_of_mask(2), e12 = b.position_of_mask(3);
  CHECK(ext_matrix(b, 1)(e12, e2) == cplx(1));
  CHECK(ext_matrix(b, 2)(e12, e1) == cplx(-1));
  CHECK(int_matrix(b, 1)(e2, e12) == cplx(1));
  CHECK(int_matrix(b, 1).col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(ext_matrix(b, 3), std::out_of_range);
  CHECK_THROWS_AS(gamma(b, 5), std::out_of_range);
}

TEST_CASE("gamma matrices: Hermitian, traceless, Clifford")
{
  const FormBasis b1(1);
  const FiberMatrix I2 = FiberMatrix::Identity(2, 2);
  CHECK((gamma(b1, 1) * gamma(b1, 1) - I2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((gamma(b1, 2) * gamma(b1, 2) - I2).cwiseAbs().maxCoeff() == 0.0);
  for (int d = 1; d <= 3; ++d) {
    const FormBasis b(d);
    for (int k = 1; k <= 2 * d; ++k) {
      const FiberMatrix g = gamma(b, k);
      CHECK((g - g.adjoint()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(std::abs(g.trace()) == 0.0);
    }
    const auto rep = anticommutator_check(b);
    CHECK(rep.max() == 0.0);
  }
}

TEST_CASE("FiberPerm sees one entry per column")
{
  const FormBasis b(3);
  for (int k = 1; k <= 6; ++k) {
    const FiberMatrix g = gamma(b, k);
    const auto p = FiberPerm::from(g);
    for (int c = 0; c < b.size(); ++c) CHECK(g(p.target[c], c) == p.value[c]);
  }
  FiberMatrix two = FiberMatrix::Ones(2, 2);
  CHECK_THROWS_AS(FiberPerm::from(two), std::logic_error);
}
