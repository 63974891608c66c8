// Acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <zmlab/analysis.hpp>
#include <zmlab/bmk.hpp>
#include <zmlab/fields.hpp>
#include <zmlab/forms.hpp>
#include <zmlab/lattice.hpp>
#include <zmlab/spectrum.hpp>

using namespace zmlab;
using fields::ScalarPotential;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what)
  {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::vector<ScalarPotential> families(int d)
{
  return {ScalarPotential::zero(d),
          ScalarPotential::quadratic(d, std::vector<double>(d, 0.7)),
          ScalarPotential::log_bulge(d, 3.0),
          ScalarPotential::compact_bump(d, 1.3, 2.0, 0.5),
          ScalarPotential::power_decay(d, 3.0, 1.0),
          ScalarPotential::tabulated(d, fields::radial_field_to_potential([](double r) { return std::exp(-r * r); }))};
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

spectrum::SpectrumReport spectrum_on(int d, int n, double L, const ScalarPotential& W, int k)
{
  spectrum::PauliSpectrumOptions o;
  o.solver.k = k;
  return spectrum::pauli_spectrum(lattice::Grid(d, n, L), W, o);
}

std::string head(const std::vector<double>& v, std::size_t m)
{
  std::ostringstream s;
  s << "{";
  for (std::size_t i = 0; i < std::min(m, v.size()); ++i) s << (i ? " " : "") << v[i];
  s << "}";
  return s.str();
}

void ac1(Outcome& o)
{
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (int d = 1; d <= 3; ++d) worst = std::max(worst, forms::anticommutator_check(forms::FormBasis(d)).max());
  const double s = seconds_since(t0);
  o.detail << "max deviation " << worst << ", " << s << " s";
  o.require(worst <= 1e-14, "deviation <= 1e-14");
  o.require(s < 1.0, "runtime < 1 s");
}

void ac2(Outcome& o)
{
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  int cases = 0;
  for (int d = 1; d <= 2; ++d)
    for (const auto& W : families(d))
      for (auto c : {lattice::Coupling::exponential, lattice::Coupling::pointwise}) {
        const lattice::Grid g(d, 9, 3.0);
        const auto Dc = lattice::assemble_dirac_complex(g, W, c);
        const auto Dx = lattice::assemble_dirac_coordinate(g, fields::potential_to_vector(W), c);
        worst = std::max(worst, lattice::max_abs_entry(Dc.matrix - Dx.matrix));
        ++cases;
      }
  const double s = seconds_since(t0);
  o.detail << cases << " assemblies, max entry difference " << worst << ", " << s << " s";
  o.require(worst <= 1e-12, "entrywise <= 1e-12");
  o.require(s < 10.0, "runtime < 10 s");
}

void ac3(Outcome& o)
{
  const double base[] = {0.3, -0.7, 1.1, 0.4};
  double lo = INFINITY, hi = -INFINITY;
  int exact = 0;
  for (int d = 1; d <= 2; ++d)
    for (const auto& W : families(d)) {
      const auto a = fields::potential_to_vector(W);
      const auto B = fields::field_from_potential(W);
      std::vector<double> x(base, base + 2 * d);
      std::vector<double> err;
      for (double h : {0.04, 0.02, 0.01})
        err.push_back((fields::curl_fd(a, x.data(), h) - B.b(x.data())).cwiseAbs().maxCoeff());
      if (err[0] < 1e-10) {  // a linear in x: differences are exact
        ++exact;
        o.require(err[2] < 1e-10, W.name() + " exact at roundoff");
        continue;
      }
      for (int i = 0; i < 2; ++i) {
        const double order = std::log2(err[i] / err[i + 1]);
        lo = std::min(lo, order);
        hi = std::max(hi, order);
      }
    }
  o.detail << "observed orders in [" << lo << ", " << hi << "], " << exact << " cases exact to roundoff";
  o.require(lo >= 1.8 && hi <= 2.2, "order in [1.8, 2.2]");
}

void ac4(Outcome& o)
{
  const auto W = ScalarPotential::log_bulge(1, 3.0);
  const int expected = static_cast<int>(analysis::count_Nd(3.0, 1));
  std::vector<spectrum::ClusterVerdict> v;
  for (int n : {129, 257}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = spectrum_on(1, n, 12.0, W, 6);
    v.push_back(spectrum::count_zero_modes(r));
    o.detail << "n=" << n << ": " << head(r.eigenvalues, 4) << " count " << v.back().count << " ("
             << spectrum::to_string(v.back().confidence) << ") gap ratio "
             << v.back().gap_ratio << " (" << seconds_since(t0) << " s); ";
    o.require(r.converged, "solver converged");
  }
  const auto c = spectrum::confirm_count(v[0], v[1]);
  o.detail << "N_1(3) = " << expected;
  o.require(c.confidence == spectrum::Confidence::confirmed, "count stable across refinement");
  o.require(c.count == expected, "count equals N_1(3)");
  for (const auto& x : v) o.require(x.gap_ratio >= 10, "gap ratio >= 10");
}

void ac5(Outcome& o)
{
  const double phi = 4.0, L = 8.0;
  const auto W = ScalarPotential::log_bulge(2, phi);
  const int expected = static_cast<int>(analysis::count_Nd(phi, 2));
  const analysis::MonomialBasis mb(2, analysis::max_zero_mode_degree(phi, 2));
  std::vector<double> hs;
  std::vector<std::vector<double>> rq;
  std::vector<spectrum::ClusterVerdict> v;
  for (int n : {17, 25}) {
    const auto t0 = std::chrono::steady_clock::now();
    const lattice::Grid g(2, n, L);
    const auto r = spectrum_on(2, n, L, W, 6);
    v.push_back(spectrum::count_zero_modes(r));
    const lattice::DiracStencil D(g, W, lattice::Coupling::exponential);
    const lattice::PauliOperator P(D, 1u << 2, lattice::PauliOptions{}.penalty);
    std::vector<double> q;
    for (const auto& p : mb.degrees()) {
      const auto a = analysis::explicit_zero_mode(g, p, W);
      q.push_back(spectrum::rayleigh_residual(P.restrict(a.data()), P));
    }
    hs.push_back(g.h());
    rq.push_back(q);
    o.detail << "n=" << n << ": " << head(r.eigenvalues, 5) << " count " << v.back().count << " ("
             << spectrum::to_string(v.back().confidence) << ") gap ratio "
             << v.back().gap_ratio << " explicit RQ " << head(q, 3) << " (" << seconds_since(t0) << " s); ";
    o.require(r.converged, "solver converged");
  }
  for (const auto& x : v) {
    o.require(x.count >= expected, "cluster size >= N_2(4)");
    o.require(x.gap_ratio >= 10, "next eigenvalue >= 10x cluster top");
  }
  std::vector<double> orders;
  for (std::size_t i = 0; i < rq[0].size(); ++i)
    orders.push_back(std::log(rq[0][i] / rq[1][i]) / std::log(hs[0] / hs[1]));
  o.detail << "explicit RQ orders " << head(orders, 3);
  bool ok = true;
  for (double x : orders) ok = ok && x >= 1.5 && x <= 2.5;
  o.require(ok, "explicit RQ order in [1.5, 2.5]");
}

void lowest_stable(Outcome& o, const ScalarPotential& W, double L, std::vector<int> ladder)
{
  std::vector<double> low;
  for (int n : ladder) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = spectrum_on(2, n, L, W, 4);
    const auto v = spectrum::count_zero_modes(r);
    low.push_back(r.eigenvalues.front());
    o.detail << "n=" << n << ", L=" << L << ": " << head(r.eigenvalues, 4) << " count " << v.count << " ("
             << spectrum::to_string(v.confidence) << ", " << seconds_since(t0) << " s); ";
    o.require(r.converged, "solver converged");
    o.require(v.count == 0 && v.confidence == spectrum::Confidence::confirmed, "no near-zero modes");
    o.require(low.back() > 0, "lowest eigenvalue positive");
  }
  const double ratio = low[1] / low[0];
  o.detail << "lowest ratio " << ratio;
  o.require(ratio >= 0.8 && ratio <= 1.2, "lowest eigenvalue within 20%");
}

void ac6(Outcome& o) { lowest_stable(o, ScalarPotential::log_bulge(2, 1.5), 3.0, {17, 25}); }

void ac7(Outcome& o) { lowest_stable(o, ScalarPotential::compact_bump(2, 1.0, 2.0), 3.0, {17, 25}); }

void ac8(Outcome& o)
{
  std::vector<double> hs, err;
  for (int n : {9, 13, 17}) {
    const lattice::Grid g(2, n, 3.0);
    hs.push_back(g.h());
    err.push_back(bmk::manufactured_residual(g).dbar_rel_l2);
  }
  o.detail << "d=2 dbar residual " << head(err, 3) << " orders";
  for (int i = 0; i < 2; ++i) {
    const double order = std::log(err[i] / err[i + 1]) / std::log(hs[i] / hs[i + 1]);
    o.detail << " " << order;
    o.require(err[i + 1] < err[i], "monotone decrease");
    o.require(order >= 0.8, "order >= 0.8");
  }
  const double c = bmk::manufactured_residual(lattice::Grid(1, 129, 4.0)).solution_max_err;
  o.detail << "; d=1 n=129 max error against the Cauchy solution " << c;
  o.require(c <= 1e-3, "d=1 error <= 1e-3");
}

void ac9(Outcome& o)
{
  const lattice::Grid g(2, 33, 16.0);
  bmk::SolveOptions so;
  so.summation = bmk::Summation::fft;
  for (const auto& W : {ScalarPotential::zero(2), ScalarPotential::log_bulge(2, 1.0)}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto alpha = bmk::annulus_alpha(g, W);
    const auto beta = bmk::bmk_solve(alpha, so);
    const double an = lattice::weighted_norm(alpha, W, lattice::Weight::exp_minus_2W);
    std::vector<double> r;
    for (double R : {1.0, 2.0, 4.0, 8.0}) r.push_back(bmk::annulus_estimate(beta, W, R) / an);
    const double mm = *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end());
    o.detail << W.name() << ": ratios " << head(r, 4) << " max/min " << mm << " (" << seconds_since(t0) << " s); ";
    o.require(mm <= 5, W.name() + " max/min <= 5");
  }
}

void ac10(Outcome& o)
{
  const auto proto = analysis::BallProtocol::standard(2);
  const auto one = analysis::muckenhoupt_estimate([](const double*) { return 1.0; }, 2, 4, proto);
  o.detail << "psi=1 sup " << one.sup();
  o.require(std::abs(one.sup() - 1) <= 0.05, "psi=1 sup 1 +- 5%");

  const auto W = ScalarPotential::log_bulge(2, 1.0);
  const auto e = analysis::muckenhoupt_estimate([&](const double* x) { return std::exp(-W.value(x)); }, 2, 4, proto);
  // largest value over all centres, per radius
  const std::size_t nr = proto.radii.size();
  std::vector<double> per(nr, 0.0);
  for (std::size_t i = 0; i < e.balls.size(); ++i) per[i % nr] = std::max(per[i % nr], e.balls[i].value);
  const double slope = std::log(per[nr - 1] / per[nr - 4]) / std::log(proto.radii[nr - 1] / proto.radii[nr - 4]);
  o.detail << "; e^{-W}, Phi=1: sup " << e.sup() << ", per-radius max over the last four radii " << per[nr - 4] << " "
           << per[nr - 3] << " " << per[nr - 2] << " " << per[nr - 1] << ", log-slope " << slope;
  o.require(std::isfinite(e.sup()) && e.sup() < 10, "bounded supremum");
  o.require(std::abs(slope) < 0.05, "no growth trend");
}

void ac11(Outcome& o)
{
  const lattice::Grid g(2, 33, 5.0);
  const auto W = ScalarPotential::zero(2);
  const auto demo = analysis::wrong_identity_demo(analysis::wrong_identity_form(g, analysis::DemoCase::correlated), W);
  const auto a = analysis::wrong_identity_demo(analysis::wrong_identity_form(g, analysis::DemoCase::only_a01), W);
  const auto b = analysis::wrong_identity_demo(analysis::wrong_identity_form(g, analysis::DemoCase::no_cross), W);
  o.detail << "demo gap " << demo.gap << ", trivial gaps " << a.gap << " " << b.gap;
  o.require(demo.gap >= 0.1, "demo gap >= 0.1");
  o.require(a.gap <= 1e-10 && b.gap <= 1e-10, "trivial gaps <= 1e-10");
}

void ac12(Outcome& o)
{
  int checked = 0, bad = 0;
  for (int d = 1; d <= 5; ++d)
    for (int t = -48; t <= 48; ++t) {
      const double phi = t / 4.0;
      ++checked;
      if (analysis::count_Nd(phi, d) != analysis::count_Nd_closed(phi, d)) ++bad;
    }
  for (int d = 1; d <= 5; ++d)
    for (int phi = -12; phi <= 12; ++phi) {
      ++checked;
      if (analysis::count_Nd(phi, d) != analysis::count_Nd_closed(phi, d)) ++bad;
    }
  const auto n24 = analysis::count_Nd(4, 2), n22 = analysis::count_Nd(2, 2), n13 = analysis::count_Nd(3, 1);
  o.detail << checked << " (d, Phi) pairs, " << bad << " mismatches; N_2(4)=" << n24 << " N_2(2)=" << n22
           << " N_1(3)=" << n13;
  o.require(bad == 0, "enumeration equals closed form");
  o.require(n24 == 3 && n22 == 0 && n13 == 2, "spot values");
}

} // namespace

int main(int argc, char** argv)
{
  const std::vector<std::pair<const char*, void (*)(Outcome&)>> criteria = {
    {"Clifford relations", ac1},
    {"dual assembly", ac2},
    {"gauge consistency", ac3},
    {"d=1 zero-mode count", ac4},
    {"d=2 lower bound, Phi=4", ac5},
    {"d=2 no zero modes, Phi=1.5", ac6},
    {"d=2 compact field, no zero modes", ac7},
    {"dbar solver", ac8},
    {"annulus estimate", ac9},
    {"Muckenhoupt weight", ac10},
    {"cross-term identity", ac11},
    {"zero-mode count table", ac12},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failed;
    std::printf("AC%-2d %s  %s: %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.str().c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
