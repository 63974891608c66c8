#ifndef ZMLAB_CLI_HPP
#define ZMLAB_CLI_HPP

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "analysis.hpp"
#include "bmk.hpp"
#include "fields.hpp"
#include "lattice.hpp"
#include "spectrum.hpp"

namespace zmlab::cli {

inline constexpr const char* version = "0.3.0";

struct ConfigError : std::runtime_error {
  ConfigError(std::string f, int l, const std::string& msg) : std::runtime_error(msg), field(std::move(f)), line(l) {}
  std::string field;
  int line;
};

// Flat key = value file; '#' starts a comment; keys may be dotted (grid.n).
class Config {
public:
  static Config parse(std::istream& in, const std::string& source = "<config>")
  {
    Config c;
    std::string raw;
    int ln = 0;
    while (std::getline(in, raw)) {
      ++ln;
      const auto hash = raw.find('#');
      std::string s = trim(raw.substr(0, hash));
      if (s.empty()) continue;
      const auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("", ln, source + ":" + std::to_string(ln) + ": expected key = value");
      const std::string k = trim(s.substr(0, eq)), v = trim(s.substr(eq + 1));
      if (k.empty()) throw ConfigError("", ln, source + ":" + std::to_string(ln) + ": empty key");
      for (char ch : k)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-'))
          throw ConfigError(k, ln, source + ":" + std::to_string(ln) + ": invalid character in key '" + k + "'");
      if (c.kv_.count(k))
        throw ConfigError(k, ln, source + ":" + std::to_string(ln) + ": duplicate key '" + k + "'");
      c.kv_[k] = v;
      c.line_[k] = ln;
    }
    c.source_ = source;
    return c;
  }

  static Config load(const std::string& path)
  {
    std::ifstream f(path);
    if (!f) throw ConfigError("", 0, "cannot open config '" + path + "'");
    return parse(f, path);
  }

  static Config from_string(const std::string& text)
  {
    std::istringstream s(text);
    return parse(s);
  }

  bool has(const std::string& k) const { return kv_.count(k) > 0; }
  void set(const std::string& k, const std::string& v) { kv_[k] = v; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

  std::string str(const std::string& k, const std::string& def) const { return has(k) ? kv_.at(k) : def; }
  std::string str(const std::string& k) const
  {
    if (!has(k)) throw ConfigError(k, 0, "missing required field '" + k + "'");
    return kv_.at(k);
  }
  double num(const std::string& k, std::optional<double> def = {}) const
  {
    if (!has(k)) {
      if (def) return *def;
      throw ConfigError(k, 0, "missing required field '" + k + "'");
    }
    return to_double(k, kv_.at(k));
  }
  int integer(const std::string& k, std::optional<int> def = {}) const
  {
    const double v = num(k, def ? std::optional<double>(*def) : std::nullopt);
    if (v != std::floor(v)) fail(k, "must be an integer");
    return static_cast<int>(v);
  }
  std::vector<double> list(const std::string& k, std::vector<double> def = {}) const
  {
    if (!has(k)) return def;
    std::vector<double> out;
    std::stringstream ss(kv_.at(k));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(k, trim(item)));
    if (out.empty()) fail(k, "empty list");
    return out;
  }
  std::vector<int> int_list(const std::string& k, std::vector<int> def = {}) const
  {
    if (!has(k)) return def;
    std::vector<int> out;
    for (double v : list(k)) {
      if (v != std::floor(v)) fail(k, "entries must be integers");
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& k, const std::string& msg) const
  {
    const int ln = line_.count(k) ? line_.at(k) : 0;
    std::string where = ln > 0 ? source_ + ":" + std::to_string(ln) + ": " : "";
    throw ConfigError(k, ln, where + k + ": " + msg);
  }

  // FNV-1a over the sorted key=value lines, output.* excluded
  std::uint64_t hash() const
  {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [k, v] : kv_) {
      if (k.rfind("output.", 0) == 0) continue;
      for (char c : k + "=" + v + "\n") {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
      }
    }
    return h;
  }

  nlohmann::json params() const
  {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : kv_) {
      if (k.rfind("output.", 0) == 0 || k == "solver.threads") continue;
      char* end = nullptr;
      const double x = std::strtod(v.c_str(), &end);
      if (!v.empty() && end && *end == '\0') {
        if (x == std::floor(x) && std::abs(x) < 1e15)
          j[k] = static_cast<long long>(x);
        else
          j[k] = x;
      } else
        j[k] = v;
    }
    return j;
  }

private:
  static std::string trim(const std::string& s)
  {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }
  double to_double(const std::string& k, const std::string& v) const
  {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || !end || *end != '\0' || !std::isfinite(x)) fail(k, "not a number: '" + v + "'");
    return x;
  }

  std::map<std::string, std::string> kv_;
  std::map<std::string, int> line_;
  std::string source_ = "<config>";
};

struct Row {
  std::optional<int> n;
  std::optional<double> L;
  std::string metric;
  long index = 0;
  double value = 0;
  std::optional<double> residual;
  double seconds = 0;
};

inline std::string format_number(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s)
{
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline const char* csv_header = "experiment,param_json,n,L,metric,index,value,residual,seconds";

class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& file, std::string experiment, std::string params)
    : out_(file), exp_(std::move(experiment)), params_(csv_quote(params))
  {
    if (!out_) throw std::runtime_error("cannot write '" + file.string() + "'");
    out_ << csv_header << "\n";
  }
  void write_manifest(const std::string& json)
  {
    out_ << exp_ << ',' << csv_quote(json) << ",,,manifest,0,0,,0.000\n";
    out_.flush();
  }
  void write(const Row& r)
  {
    char sec[32];
    std::snprintf(sec, sizeof sec, "%.3f", r.seconds);
    out_ << exp_ << ',' << params_ << ',' << (r.n ? std::to_string(*r.n) : "") << ','
         << (r.L ? format_number(*r.L) : "") << ',' << r.metric << ',' << r.index << ',' << format_number(r.value) << ','
         << (r.residual ? format_number(*r.residual) : "") << ',' << sec << "\n";
    out_.flush();
  }

private:
  std::ofstream out_;
  std::string exp_, params_;
};

struct Context {
  const Config& cfg;
  CsvWriter& csv;
  bool converged = true;
  std::ostream& log;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- config helpers

inline int config_d(const Config& c)
{
  const int d = c.integer("d", 2);
  if (d < 1 || d > 3) c.fail("d", "must be 1, 2 or 3");
  return d;
}

inline fields::ScalarPotential config_potential(const Config& c, int d)
{
  const std::string fam = c.str("potential.family", "log_bulge");
  if (fam == "zero") return fields::ScalarPotential::zero(d);
  if (fam == "quadratic") {
    auto k = c.list("potential.kappa", {1.0});
    if (k.size() == 1) k.assign(d, k[0]);
    if (static_cast<int>(k.size()) != d) c.fail("potential.kappa", "needs 1 or d entries");
    return fields::ScalarPotential::quadratic(d, k);
  }
  if (fam == "log_bulge") {
    const double phi = c.num("potential.phi");
    if (phi < 0) c.fail("potential.phi", "must be >= 0");
    return fields::ScalarPotential::log_bulge(d, phi);
  }
  if (fam == "compact_bump") {
    const double R = c.num("potential.radius", 2.0);
    if (!(R > 0)) c.fail("potential.radius", "must be > 0");
    return fields::ScalarPotential::compact_bump(d, c.num("potential.amplitude", 1.0), R, c.num("potential.mu", 0.0));
  }
  if (fam == "power_decay") {
    const double rho = c.num("potential.rho", 3.0);
    if (!(rho > 2)) c.fail("potential.rho", "must be > 2");
    return fields::ScalarPotential::power_decay(d, rho, c.num("potential.amplitude", 1.0));
  }
  c.fail("potential.family", "unknown family '" + fam + "'");
}

inline std::vector<int> config_ladder(const Config& c)
{
  std::vector<int> ns;
  if (c.has("grid.ladder")) {
    ns = c.int_list("grid.ladder");
    for (int n : ns)
      if (n < 3 || n % 2 == 0) c.fail("grid.ladder", "every n must be odd and >= 3 (got " + std::to_string(n) + ")");
  } else {
    const int n = c.integer("grid.n", 17);
    if (n < 3 || n % 2 == 0) c.fail("grid.n", "must be odd and >= 3 (got " + std::to_string(n) + ")");
    ns.push_back(n);
  }
  return ns;
}

inline double config_L(const Config& c, double def)
{
  const double L = c.num("grid.L", def);
  if (!(L > 0)) c.fail("grid.L", "must be > 0");
  return L;
}

inline spectrum::PauliSpectrumOptions config_spectrum(const Config& c)
{
  spectrum::PauliSpectrumOptions o;
  o.solver.k = c.integer("solver.k", 6);
  if (o.solver.k < 1) c.fail("solver.k", "must be >= 1");
  o.solver.tol = c.num("solver.tol", 1e-10);
  if (!(o.solver.tol > 0)) c.fail("solver.tol", "must be > 0");
  o.solver.max_restarts = c.integer("solver.max_restarts", 4000);
  o.solver.block = c.integer("solver.block", 2);
  if (o.solver.block < 1) c.fail("solver.block", "must be >= 1");
  o.solver.basis = c.integer("solver.basis", 0);
  o.pauli.penalty = c.num("pauli.penalty", 0.25);
  const std::string cp = c.str("pauli.coupling", "exponential");
  if (cp == "exponential")
    o.pauli.coupling = lattice::Coupling::exponential;
  else if (cp == "pointwise")
    o.pauli.coupling = lattice::Coupling::pointwise;
  else
    c.fail("pauli.coupling", "expected exponential or pointwise");
  o.floor.scale = c.num("floor.scale", 1e-4);
  o.floor.box = c.num("floor.box", 1e-2);
  o.degrees = c.int_list("solver.degrees", {});
  return o;
}

inline double config_floor(const Config& c, const spectrum::SpectrumReport& r)
{
  return c.has("floor.value") ? c.num("floor.value") : r.floor;
}

// ---- experiments

inline spectrum::SpectrumReport run_spectrum_grid(Context& ctx, const lattice::Grid& g, const fields::ScalarPotential& W,
                                                  const spectrum::PauliSpectrumOptions& o)
{
  ctx.log << "  n=" << g.n() << " L=" << g.L() << " dofs=" << g.dofs() << std::flush;
  const auto r = spectrum::pauli_spectrum(g, W, o);
  ctx.log << "  " << r.seconds << " s, " << r.matvecs << " matvecs" << (r.converged ? "" : " (not converged)") << "\n";
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
    ctx.csv.write({g.n(), g.L(), "eigenvalue", long(i), r.eigenvalues[i], r.residuals[i], r.seconds});
    ctx.csv.write({g.n(), g.L(), "degree", long(i), double(r.degree[i]), {}, r.seconds});
  }
  ctx.csv.write({g.n(), g.L(), "lambda_max", 0, r.lambda_max, {}, r.seconds});
  ctx.csv.write({g.n(), g.L(), "matvecs", 0, double(r.matvecs), {}, r.seconds});
  if (!r.converged) {
    ctx.csv.write({g.n(), g.L(), "not_converged", 0, 1.0, {}, r.seconds});
    ctx.converged = false;
  }
  return r;
}

inline void exp_spectrum(Context& ctx)
{
  const Config& c = ctx.cfg;
  const int d = config_d(c);
  const auto W = config_potential(c, d);
  const auto o = config_spectrum(c);
  const double L = config_L(c, 8.0);
  for (int n : config_ladder(c)) run_spectrum_grid(ctx, lattice::Grid(d, n, L), W, o);
}

inline void write_verdict(Context& ctx, const lattice::Grid& g, const spectrum::ClusterVerdict& v, double floor,
                          double secs, const std::string& prefix = "")
{
  ctx.csv.write({g.n(), g.L(), prefix + "cluster_count", 0, double(v.count), {}, secs});
  ctx.csv.write({g.n(), g.L(), prefix + "gap_ratio", 0, v.gap_ratio, {}, secs});
  ctx.csv.write({g.n(), g.L(), prefix + "confidence", 0, double(static_cast<int>(v.confidence)), {}, secs});
  ctx.csv.write({g.n(), g.L(), "floor", 0, floor, {}, secs});
}

// Spectrum on each grid, cluster verdicts, and the confirmed count across refinement.
inline std::vector<spectrum::SpectrumReport> spectral_ladder(Context& ctx, int d, const fields::ScalarPotential& W,
                                                             double L_default)
{
  const Config& c = ctx.cfg;
  const auto o = config_spectrum(c);
  const double L = config_L(c, L_default);
  const double thr = c.num("floor.ratio", 10.0);
  std::vector<spectrum::SpectrumReport> reps;
  std::optional<spectrum::ClusterVerdict> prev;
  for (int n : config_ladder(c)) {
    const lattice::Grid g(d, n, L);
    const auto r = run_spectrum_grid(ctx, g, W, o);
    const double floor = config_floor(c, r);
    auto v = spectrum::count_zero_modes(r.eigenvalues, floor, thr);
    write_verdict(ctx, g, v, floor, r.seconds);
    if (prev) {
      const auto cv = spectrum::confirm_count(*prev, v);
      ctx.csv.write({g.n(), g.L(), "confirmed_count", 0, cv.confidence == spectrum::Confidence::confirmed ? double(cv.count) : -1.0,
                     {}, 0.0});
    }
    prev = v;
    reps.push_back(r);
  }
  return reps;
}

inline void exp_zero_modes(Context& ctx)
{
  const Config& c = ctx.cfg;
  const int d = config_d(c);
  const auto W = config_potential(c, d);
  const double phi = c.num("potential.phi", 0.0);
  ctx.csv.write({{}, {}, "N_d", 0, double(analysis::count_Nd(phi, d)), {}, 0.0});
  const auto reps = spectral_ladder(ctx, d, W, 8.0);
  // explicit top-degree modes e^W zbar^p on each grid
  const analysis::MonomialBasis mb(d, std::max(analysis::max_zero_mode_degree(phi, d), 0));
  const auto o = config_spectrum(c);
  const double L = config_L(c, 8.0);
  for (int n : config_ladder(c)) {
    const auto t0 = std::chrono::steady_clock::now();
    const lattice::Grid g(d, n, L);
    const lattice::DiracStencil D(g, W, o.pauli.coupling);
    const lattice::PauliOperator P(D, 1u << d, o.pauli.penalty);
    for (std::size_t i = 0; i < mb.size(); ++i) {
      const auto& p = mb.degrees()[i];
      if (!analysis::zero_mode_normalizable(p, phi, d)) continue;
      const auto a = analysis::explicit_zero_mode(g, p, W);
      const double rq = spectrum::rayleigh_residual(P.restrict(a.data()), P);
      ctx.csv.write({n, L, "explicit_rq", long(i), rq, {}, seconds_since(t0)});
    }
  }
}

inline void exp_gap(Context& ctx)
{
  const Config& c = ctx.cfg;
  const int d = config_d(c);
  const auto W = config_potential(c, d);
  const auto reps = spectral_ladder(ctx, d, W, 8.0);
  for (std::size_t i = 1; i < reps.size(); ++i) {
    const double a = reps[i - 1].eigenvalues.front(), b = reps[i].eigenvalues.front();
    ctx.csv.write({reps[i].n, reps[i].L, "lowest_ratio", long(i), b / a, {}, 0.0});
  }
}

inline void exp_ac_baseline(Context& ctx)
{
  const Config& c = ctx.cfg;
  if (c.integer("d", 1) != 1) c.fail("d", "ac-baseline requires d = 1");
  const auto W = config_potential(c, 1);
  const auto t0 = std::chrono::steady_clock::now();
  const auto flux = fields::total_flux_2d(fields::field_from_potential(W), c.num("flux.box", 50.0));
  ctx.csv.write({{}, {}, "flux", 0, flux.value, flux.truncation_estimate, seconds_since(t0)});
  ctx.csv.write({{}, {}, "N_d", 0, double(analysis::count_Nd(flux.value, 1)), {}, 0.0});
  spectral_ladder(ctx, 1, W, 12.0);
}

// u = exp(-|z|^2), alpha = dbar u
inline void exp_dbar_solve(Context& ctx)
{
  const Config& c = ctx.cfg;
  const int d = config_d(c);
  const double L = config_L(c, 3.0);
  const std::string sum = c.str("dbar.summation", "automatic");
  bmk::SolveOptions so;
  if (sum == "direct")
    so.summation = bmk::Summation::direct;
  else if (sum == "fft")
    so.summation = bmk::Summation::fft;
  else if (sum != "automatic")
    c.fail("dbar.summation", "expected direct, fft or automatic");
  std::vector<double> hs, errs;
  for (int n : config_ladder(c)) {
    const auto t0 = std::chrono::steady_clock::now();
    const lattice::Grid g(d, n, L);
    const auto res = bmk::manufactured_residual(g, so);
    const double secs = seconds_since(t0);
    ctx.csv.write({n, L, "dbar_rel_l2", 0, res.dbar_rel_l2, {}, secs});
    ctx.csv.write({n, L, "solution_max_err", 0, res.solution_max_err, {}, secs});
    hs.push_back(g.h());
    errs.push_back(res.dbar_rel_l2);
    ctx.log << "  n=" << n << " dbar rel err " << res.dbar_rel_l2 << " (" << secs << " s)\n";
  }
  for (std::size_t i = 1; i < hs.size(); ++i)
    ctx.csv.write({{}, {}, "observed_order", long(i), std::log(errs[i - 1] / errs[i]) / std::log(hs[i - 1] / hs[i]), {}, 0.0});
}

inline void exp_annulus(Context& ctx)
{
  const Config& c = ctx.cfg;
  const int d = config_d(c);
  const auto W = config_potential(c, d);
  const double L = config_L(c, 16.0);
  const auto radii = c.list("annulus.radii", {1, 2, 4, 8});
  for (int n : config_ladder(c)) {
    const auto t0 = std::chrono::steady_clock::now();
    const lattice::Grid g(d, n, L);
    const auto alpha = bmk::annulus_alpha(g, W);
    const auto beta = bmk::bmk_solve(alpha);
    const double an = lattice::weighted_norm(alpha, W, lattice::Weight::exp_minus_2W);
    double lo = INFINITY, hi = 0;
    for (std::size_t i = 0; i < radii.size(); ++i) {
      const double v = bmk::annulus_estimate(beta, W, radii[i]) / an;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ctx.csv.write({n, L, "annulus_ratio", long(i), v, {}, seconds_since(t0)});
      ctx.csv.write({n, L, "annulus_R", long(i), radii[i], {}, 0.0});
    }
    ctx.csv.write({n, L, "max_over_min", 0, hi / lo, {}, seconds_since(t0)});
  }
}

inline void exp_muckenhoupt(Context& ctx)
{
  const Config& c = ctx.cfg;
  const int d = config_d(c);
  const double p = c.num("muckenhoupt.p", 2.0);
  const double q = c.num("muckenhoupt.q", d > 1 ? 2.0 * d / (d - 1) : 4.0);
  if (!(p > 1)) c.fail("muckenhoupt.p", "must be > 1");
  if (!(q > 1)) c.fail("muckenhoupt.q", "must be > 1");
  const std::string weight = c.str("muckenhoupt.weight", "exp_minus_W");
  std::function<double(const double*)> psi;
  std::optional<fields::ScalarPotential> W;
  if (weight == "one")
    psi = [](const double*) { return 1.0; };
  else if (weight == "exp_minus_W") {
    W = config_potential(c, d);
    psi = [&W](const double* x) { return std::exp(-W->value(x)); };
  } else
    c.fail("muckenhoupt.weight", "expected one or exp_minus_W");
  const auto t0 = std::chrono::steady_clock::now();
  const auto est = analysis::muckenhoupt_estimate(psi, p, q, analysis::BallProtocol::standard(d));
  const double secs = seconds_since(t0);
  for (std::size_t i = 0; i < est.balls.size(); ++i) {
    const auto& b = est.balls[i];
    double cn = 0;
    for (double v : b.center) cn += v * v;
    ctx.csv.write({{}, {}, "ball_value", long(i), b.value, {}, secs});
    ctx.csv.write({{}, {}, "ball_radius", long(i), b.radius, {}, 0.0});
    ctx.csv.write({{}, {}, "ball_center", long(i), std::sqrt(cn), {}, 0.0});
    ctx.csv.write({{}, {}, "ball_type", long(i), double(b.type), {}, 0.0});
    ctx.csv.write({{}, {}, "running_sup", long(i), est.running_sup[i], {}, 0.0});
  }
  ctx.csv.write({{}, {}, "sup", 0, est.sup(), {}, secs});
}

inline void exp_wrong_identity(Context& ctx)
{
  const Config& c = ctx.cfg;
  if (c.integer("d", 2) != 2) c.fail("d", "wrong-identity requires d = 2");
  const double L = config_L(c, 5.0);
  const auto W = c.has("potential.family") ? config_potential(c, 2) : fields::ScalarPotential::zero(2);
  const analysis::DemoCase cases[] = {analysis::DemoCase::correlated, analysis::DemoCase::only_a01,
                                      analysis::DemoCase::no_cross};
  for (int n : config_ladder(c)) {
    const lattice::Grid g(2, n, L);
    for (int i = 0; i < 3; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = analysis::wrong_identity_demo(analysis::wrong_identity_form(g, cases[i]), W);
      const double s = seconds_since(t0);
      ctx.csv.write({n, L, "lhs", i, r.lhs, {}, s});
      ctx.csv.write({n, L, "wrong_rhs", i, r.wrong_rhs, {}, s});
      ctx.csv.write({n, L, "gap", i, r.gap, {}, s});
    }
  }
}

inline void exp_count(Context& ctx)
{
  const Config& c = ctx.cfg;
  const auto ds = c.int_list("count.d", {c.integer("d", 2)});
  const auto phis = c.list("count.phi", {1, 2, 3, 4, 5, 6});
  long i = 0;
  for (int d : ds) {
    if (d < 1) c.fail("count.d", "entries must be >= 1");
    for (double phi : phis) {
      const auto n = analysis::count_Nd(phi, d);
      if (n != analysis::count_Nd_closed(phi, d)) throw std::logic_error("count: enumeration disagrees with closed form");
      ctx.csv.write({{}, {}, "d", i, double(d), {}, 0.0});
      ctx.csv.write({{}, {}, "phi", i, phi, {}, 0.0});
      ctx.csv.write({{}, {}, "N_d", i, double(n), {}, 0.0});
      ++i;
    }
  }
}

struct Experiment {
  const char* name;
  const char* summary;
  void (*fn)(Context&);
};

inline const std::vector<Experiment>& experiments()
{
  static const std::vector<Experiment> table = {
    {"spectrum", "lowest Pauli eigenpairs on a refinement ladder", exp_spectrum},
    {"zero-modes", "near-zero cluster count and explicit-mode Rayleigh quotients", exp_zero_modes},
    {"gap", "lowest eigenvalue under refinement for decaying fields", exp_gap},
    {"ac-baseline", "d=1 flux versus near-zero count", exp_ac_baseline},
    {"dbar-solve", "Bochner-Martinelli solve of dbar beta = alpha, manufactured data", exp_dbar_solve},
    {"annulus", "weighted annulus ratios of the dbar solution", exp_annulus},
    {"muckenhoupt", "ball-average products of a weight", exp_muckenhoupt},
    {"wrong-identity", "cross-term identity check on fixed forms", exp_wrong_identity},
    {"count", "table of N_d(phi)", exp_count},
  };
  return table;
}

inline const Experiment* find_experiment(const std::string& name)
{
  for (const auto& e : experiments())
    if (name == e.name) return &e;
  return nullptr;
}

inline void apply_threads(const Config& c)
{
  int t = c.integer("solver.threads", 0);
  if (const char* env = std::getenv("ZMLAB_THREADS")) t = std::atoi(env);
#ifdef _OPENMP
  if (t > 0) omp_set_num_threads(t);
#else
  (void)t;
#endif
}

enum Exit { ok = 0, failure = 1, config_error = 2, not_converged = 3 };

// Runs the configured experiment; CSV goes to <output.dir>/<experiment>.csv.
inline int run(const Config& c, std::ostream& log = std::cerr)
{
  std::filesystem::path file;
  try {
    const std::string name = c.str("experiment");
    const Experiment* e = find_experiment(name);
    if (!e) c.fail("experiment", "unknown experiment '" + name + "'");
    // validate the shared fields before any work
    if (c.has("grid.n") || c.has("grid.ladder")) config_ladder(c);
    if (c.has("grid.L")) config_L(c, 1.0);
    config_d(c);
    const std::filesystem::path dir = c.str("output.dir", "results");
    std::filesystem::create_directories(dir);
    file = dir / (name + ".csv");
    apply_threads(c);
    const std::string params = c.params().dump();
    CsvWriter csv(file, name, params);
    {
      nlohmann::json m;
      m["version"] = version;
      char h[32];
      std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(c.hash()));
      m["config_hash"] = h;
      m["norm"] = fields::to_string(fields::FieldNorm::frobenius);
      csv.write_manifest(m.dump());
    }
    Context ctx{c, csv, true, log};
    log << name << ": " << e->summary << "\n";
    e->fn(ctx);
    return ctx.converged ? ok : not_converged;
  } catch (const ConfigError& err) {
    log << "config error: " << err.what() << "\n";
    return config_error;
  } catch (const std::exception& err) {
    log << "error: " << err.what() << "\n";
    return failure;
  }
}

inline int run(const std::string& path, std::ostream& log = std::cerr)
{
  try {
    return run(Config::load(path), log);
  } catch (const ConfigError& err) {
    log << "config error: " << err.what() << "\n";
    return config_error;
  }
}

// ---- plot scripts

struct CsvRecord {
  std::string experiment, n, L, metric;
  long index;
  double value;
};

inline std::vector<std::string> split_csv(const std::string& line)
{
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"')
        quoted = false;
      else
        cur += ch;
    } else if (ch == '"')
      quoted = true;
    else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else
      cur += ch;
  }
  out.push_back(cur);
  return out;
}

inline std::vector<CsvRecord> read_csv(const std::filesystem::path& f)
{
  std::ifstream in(f);
  std::string line;
  std::getline(in, line);
  if (line != csv_header) throw std::runtime_error(f.string() + ": unexpected header");
  std::vector<CsvRecord> out;
  while (std::getline(in, line)) {
    const auto c = split_csv(line);
    if (c.size() != 9) throw std::runtime_error(f.string() + ": malformed row");
    out.push_back({c[0], c[2], c[3], c[4], std::stol(c[5]), std::stod(c[6])});
  }
  return out;
}

// Writes gnuplot scripts (and the .dat files they read) next to the CSVs.
// Returns the script paths.
inline std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& dir)
{
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") csvs.push_back(e.path());
  if (csvs.empty()) throw std::runtime_error("no result CSV in " + dir.string());
  std::sort(csvs.begin(), csvs.end());
  std::vector<fs::path> scripts;
  auto script = [&](const std::string& stem, const std::string& body) {
    const fs::path p = dir / (stem + ".gp");
    std::ofstream(p) << "set terminal pngcairo size 800,600\nset output '" << stem << ".png'\n" << body;
    scripts.push_back(p);
  };
  auto data = [&](const std::string& name, const std::string& text) { std::ofstream(dir / name) << text; };
  for (const auto& f : csvs) {
    const auto rows = read_csv(f);
    if (rows.empty()) continue;
    const std::string exp = rows.front().experiment;
    auto select = [&](const std::string& metric) {
      std::vector<const CsvRecord*> v;
      for (const auto& r : rows)
        if (r.metric == metric) v.push_back(&r);
      return v;
    };
    if (exp == "spectrum" || exp == "zero-modes" || exp == "gap" || exp == "ac-baseline") {
      // eigenvalue i against h^2, one column block per index
      std::map<long, std::vector<std::pair<double, double>>> lines;
      for (const auto* r : select("eigenvalue")) {
        const double h = 2 * std::stod(r->L) / (std::stod(r->n) - 1);
        lines[r->index].push_back({h * h, r->value});
      }
      std::ostringstream dat, plot;
      plot << "set xlabel 'h^2'\nset ylabel 'eigenvalue'\nset logscale y\nplot ";
      int block = 0;
      for (const auto& [i, pts] : lines) {
        for (const auto& [x, y] : pts) dat << format_number(x) << ' ' << format_number(y) << '\n';
        dat << "\n\n";
        plot << (block ? ", " : "") << "'" << exp << "_eigs.dat' index " << block << " with linespoints title 'lambda_" << i
             << "'";
        ++block;
      }
      data(exp + "_eigs.dat", dat.str());
      script(exp + "_convergence", plot.str() + "\n");
      // finest-grid spectrum as bars, floor as a line
      std::string finest;
      for (const auto* r : select("eigenvalue"))
        if (finest.empty() || std::stoi(r->n) > std::stoi(finest)) finest = r->n;
      std::ostringstream bars;
      double floor = 0;
      for (const auto* r : select("eigenvalue"))
        if (r->n == finest) bars << r->index << ' ' << format_number(r->value) << '\n';
      for (const auto* r : select("floor"))
        if (r->n == finest) floor = r->value;
      data(exp + "_cluster.dat", bars.str());
      script(exp + "_cluster", "set style fill solid 0.5\nset logscale y\nset xlabel 'index'\nset ylabel 'eigenvalue'\nplot '" +
                                   exp + "_cluster.dat' using 1:2 with boxes title 'n=" + finest + "', " +
                                   format_number(floor > 0 ? floor : 1e-300) + " title 'floor'\n");
    } else if (exp == "annulus") {
      std::map<std::string, std::map<long, double>> R, ratio;
      for (const auto* r : select("annulus_R")) R[r->n][r->index] = r->value;
      for (const auto* r : select("annulus_ratio")) ratio[r->n][r->index] = r->value;
      std::ostringstream dat, plot;
      plot << "set logscale x 2\nset xlabel 'R'\nset ylabel 'annulus ratio'\nplot ";
      int block = 0;
      for (const auto& [n, m] : ratio) {
        for (const auto& [i, v] : m) dat << format_number(R[n][i]) << ' ' << format_number(v) << '\n';
        dat << "\n\n";
        plot << (block ? ", " : "") << "'annulus_ratio.dat' index " << block << " with linespoints title 'n=" << n << "'";
        ++block;
      }
      data("annulus_ratio.dat", dat.str());
      script("annulus_ratio", plot.str() + "\n");
    } else if (exp == "muckenhoupt") {
      std::map<long, double> rad, cen, val;
      for (const auto* r : select("ball_radius")) rad[r->index] = r->value;
      for (const auto* r : select("ball_center")) cen[r->index] = r->value;
      for (const auto* r : select("ball_value")) val[r->index] = r->value;
      std::map<double, std::vector<std::pair<double, double>>> curves;
      for (const auto& [i, v] : val) curves[cen[i]].push_back({rad[i], v});
      std::ostringstream dat, plot;
      plot << "set logscale x 2\nset xlabel 'R'\nset ylabel 'ball product'\nplot ";
      int block = 0;
      for (const auto& [c, pts] : curves) {
        for (const auto& [x, y] : pts) dat << format_number(x) << ' ' << format_number(y) << '\n';
        dat << "\n\n";
        plot << (block ? ", " : "") << "'muckenhoupt_balls.dat' index " << block << " with linespoints title '|c|="
             << format_number(c) << "'";
        ++block;
      }
      data("muckenhoupt_balls.dat", dat.str());
      script("muckenhoupt_balls", plot.str() + "\n");
    } else if (exp == "count") {
      std::map<long, double> dd, ph, nd;
      for (const auto* r : select("d")) dd[r->index] = r->value;
      for (const auto* r : select("phi")) ph[r->index] = r->value;
      for (const auto* r : select("N_d")) nd[r->index] = r->value;
      std::map<double, std::vector<std::pair<double, double>>> byd;
      for (const auto& [i, v] : nd) byd[dd[i]].push_back({ph[i], v});
      std::ostringstream dat, plot;
      plot << "set xlabel 'phi'\nset ylabel 'N_d'\nplot ";
      int block = 0;
      for (const auto& [d, pts] : byd) {
        for (const auto& [x, y] : pts) dat << format_number(x) << ' ' << format_number(y) << '\n';
        dat << "\n\n";
        plot << (block ? ", " : "") << "'count.dat' index " << block << " with steps title 'd=" << d << "'";
        ++block;
      }
      data("count.dat", dat.str());
      script("count_steps", plot.str() + "\n");
    } else if (exp == "dbar-solve") {
      std::ostringstream dat;
      for (const auto* r : select("dbar_rel_l2")) {
        const double h = 2 * std::stod(r->L) / (std::stod(r->n) - 1);
        dat << format_number(h) << ' ' << format_number(r->value) << '\n';
      }
      data("dbar_error.dat", dat.str());
      script("dbar_error", "set logscale xy\nset xlabel 'h'\nset ylabel 'relative L2 error'\nplot 'dbar_error.dat' with "
                           "linespoints title 'dbar beta - alpha'\n");
    } else if (exp == "wrong-identity") {
      std::ostringstream dat;
      for (const auto* r : select("gap")) dat << r->n << ' ' << r->index << ' ' << format_number(r->value) << '\n';
      data("wrong_identity.dat", dat.str());
      script("wrong_identity", "set style fill solid 0.5\nset xlabel 'case'\nset ylabel 'relative gap'\nplot "
                               "'wrong_identity.dat' using 2:3 with boxes notitle\n");
    }
  }
  if (scripts.empty()) throw std::runtime_error("no plottable CSV in " + dir.string());
  return scripts;
}

} // namespace zmlab::cli

#endif // ZMLAB_CLI_HPP
