#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <catch_amalgamated.hpp>

#include <zmlab/cli.hpp>

using namespace zmlab;
using namespace zmlab::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
  {
    path = fs::temp_directory_path() / ("zmlab_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> lines_of(const fs::path& f)
{
  std::ifstream in(f);
  std::vector<std::string> out;
  std::string s;
  while (std::getline(in, s)) out.push_back(s);
  return out;
}

// drop the trailing seconds column
std::vector<std::string> without_seconds(const std::vector<std::string>& ls)
{
  std::vector<std::string> out;
  for (const auto& l : ls) out.push_back(l.substr(0, l.rfind(',')));
  return out;
}

int run_text(const std::string& text, std::string* log = nullptr)
{
  std::ostringstream os;
  const int rc = run(Config::from_string(text), os);
  if (log) *log = os.str();
  return rc;
}

} // namespace

TEST_CASE("config parsing")
{
  const auto c = Config::from_string("# comment\nexperiment = count\n\ngrid.n = 9   # trailing\npotential.phi=2.5\n"
                                     "count.phi = 1, 2,3\nname = hello world\n");
  CHECK(c.str("experiment") == "count");
  CHECK(c.integer("grid.n") == 9);
  CHECK(c.num("potential.phi") == 2.5);
  CHECK(c.list("count.phi") == std::vector<double>{1, 2, 3});
  CHECK(c.str("name") == "hello world");
  CHECK(c.num("missing", 4.0) == 4.0);
  CHECK(c.int_list("missing", {7}) == std::vector<int>{7});

  auto err_line = [](const std::string& text) {
    try {
      Config::from_string(text);
    } catch (const ConfigError& e) {
      return e.line;
    }
    return -1;
  };
  CHECK(err_line("a = 1\nb = 2\nno equals here\n") == 3);
  CHECK(err_line("a = 1\n\n a = 2\n") == 3);
  CHECK(err_line("ok = 1\nbad key = 2\n") == 2);
  CHECK(err_line(" = 5\n") == 1);

  const auto d = Config::from_string("x = 1\ngrid.n = abc\ny = 1.5\n");
  try {
    (void)d.num("grid.n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "grid.n");
    CHECK(e.line == 2);
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("<config>:2"));
  }
  CHECK_THROWS_AS(d.integer("y"), ConfigError);
  CHECK_THROWS_AS(d.str("nope"), ConfigError);
}

TEST_CASE("config hash and parameters")
{
  const auto a = Config::from_string("experiment = count\nd = 2\noutput.dir = /tmp/x\nsolver.threads = 4\nphi = 2.5\n");
  const auto b = Config::from_string("phi = 2.5\nd = 2\nexperiment = count\noutput.dir = /tmp/x\nsolver.threads = 4\n");
  const auto c = Config::from_string("experiment = count\nd = 3\n");
  const auto e = Config::from_string("phi = 2.5\nd = 2\nexperiment = count\noutput.dir = elsewhere\nsolver.threads = 4\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() == e.hash());
  CHECK(a.hash() != c.hash());
  const auto j = a.params();
  CHECK(j["d"] == 2);
  CHECK(j["phi"] == 2.5);
  CHECK(j["experiment"] == "count");
  CHECK_FALSE(j.contains("output.dir"));
  CHECK_FALSE(j.contains("solver.threads"));
}

TEST_CASE("CSV formatting")
{
  CHECK(csv_quote("plain") == "plain");
  CHECK(csv_quote("a,b") == "\"a,b\"");
  CHECK(csv_quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(split_csv("a,\"b,c\",\"d\"\"e\",") == std::vector<std::string>{"a", "b,c", "d\"e", ""});
  CHECK(std::stod(format_number(0.1)) == 0.1);
  CHECK(std::stod(format_number(1.0 / 3)) == 1.0 / 3);
}

TEST_CASE("invalid configurations exit with status 2")
{
  TempDir t("invalid");
  const std::string out = "output.dir = " + t.path.string() + "\n";
  std::string log;
  CHECK(run_text(out + "experiment = spectrum\ngrid.n = 8\n", &log) == config_error);
  CHECK_THAT(log, Catch::Matchers::ContainsSubstring("grid.n"));
  CHECK(run_text(out + "experiment = spectrum\ngrid.ladder = 9, 12\n", &log) == config_error);
  CHECK_THAT(log, Catch::Matchers::ContainsSubstring("grid.ladder"));
  CHECK(run_text(out + "experiment = nonsense\n", &log) == config_error);
  CHECK_THAT(log, Catch::Matchers::ContainsSubstring("experiment"));
  CHECK(run_text(out + "grid.n = 9\n", &log) == config_error);
  CHECK(run_text(out + "experiment = spectrum\nd = 7\n", &log) == config_error);
  CHECK(run_text(out + "experiment = spectrum\ngrid.n = 5\npotential.family = wobbly\n", &log) == config_error);
  CHECK_THAT(log, Catch::Matchers::ContainsSubstring("potential.family"));
  CHECK(run_text(out + "experiment = wrong-identity\nd = 1\n", &log) == config_error);
  std::ostringstream os;
  CHECK(run((t.path / "does_not_exist.cfg").string(), os) == config_error);
  CHECK_THAT(os.str(), Catch::Matchers::ContainsSubstring("cannot open"));
}

TEST_CASE("count experiment")
{
  TempDir t("count");
  const std::string cfg = "experiment = count\ncount.d = 2\ncount.phi = 2, 3, 4, 5\noutput.dir = " + t.path.string() + "\n";
  REQUIRE(run_text(cfg) == ok);
  const auto rows = read_csv(t.path / "count.csv");
  std::map<long, double> phi, nd;
  for (const auto& r : rows) {
    if (r.metric == "phi") phi[r.index] = r.value;
    if (r.metric == "N_d") nd[r.index] = r.value;
  }
  // Phi = 3, d = 2: e^W * 1 ~ |z|^{-3} is square integrable in R^4
  const std::vector<std::pair<double, double>> expected{{2, 0}, {3, 1}, {4, 3}, {5, 6}};
  REQUIRE(nd.size() == 4);
  for (long i = 0; i < 4; ++i) {
    CHECK(phi[i] == expected[i].first);
    CHECK(nd[i] == expected[i].second);
  }
}

TEST_CASE("manifest row")
{
  TempDir t("manifest");
  REQUIRE(run_text("experiment = count\noutput.dir = " + t.path.string() + "\n") == ok);
  const auto ls = lines_of(t.path / "count.csv");
  REQUIRE(ls.size() >= 2);
  CHECK(ls[0] == csv_header);
  const auto cols = split_csv(ls[1]);
  REQUIRE(cols.size() == 9);
  CHECK(cols[0] == "count");
  CHECK(cols[4] == "manifest");
  const auto m = nlohmann::json::parse(cols[1]);
  CHECK(m["version"] == version);
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  CHECK(m["norm"] == "frobenius");
}

TEST_CASE("reruns reproduce the CSV apart from timings")
{
  TempDir a("rerun_a"), b("rerun_b");
  const std::vector<std::string> cfgs = {
    "experiment = spectrum\nd = 1\ngrid.ladder = 9, 13\ngrid.L = 3\npotential.phi = 2.5\nsolver.k = 4\n",
    "experiment = wrong-identity\ngrid.n = 9\n",
    "experiment = dbar-solve\nd = 1\ngrid.ladder = 17, 33\n",
  };
  for (const auto& cfg : cfgs) {
    INFO(cfg);
    const auto name = Config::from_string(cfg).str("experiment");
    REQUIRE(run_text(cfg + "output.dir = " + a.path.string() + "\n") == ok);
    REQUIRE(run_text(cfg + "output.dir = " + b.path.string() + "\n") == ok);
    const auto x = lines_of(a.path / (name + ".csv")), y = lines_of(b.path / (name + ".csv"));
    CHECK(x.size() > 2);
    CHECK(without_seconds(x) == without_seconds(y));
  }
}

TEST_CASE("spectral experiments write verdict rows")
{
  TempDir t("zm");
  const std::string cfg = "experiment = zero-modes\nd = 1\npotential.phi = 3.5\ngrid.ladder = 17, 25\ngrid.L = 6\n"
                          "solver.k = 5\noutput.dir = " +
                          t.path.string() + "\n";
  REQUIRE(run_text(cfg) == ok);
  const auto rows = read_csv(t.path / "zero-modes.csv");
  std::multiset<std::string> metrics;
  for (const auto& r : rows) metrics.insert(r.metric);
  CHECK(metrics.count("eigenvalue") == 10);
  CHECK(metrics.count("cluster_count") == 2);
  CHECK(metrics.count("confirmed_count") == 1);
  CHECK(metrics.count("explicit_rq") == 6);
  for (const auto& r : rows)
    if (r.metric == "N_d") CHECK(r.value == 3);
}

TEST_CASE("plot scripts")
{
  SECTION("empty directory")
  {
    TempDir t("plots_empty");
    CHECK_THROWS(emit_plots(t.path));
    CHECK(fs::is_empty(t.path));
    CHECK_THROWS(emit_plots(t.path / "missing"));
  }
  SECTION("scripts reference only files in the directory")
  {
    TempDir t("plots");
    const std::string out = "output.dir = " + t.path.string() + "\n";
    REQUIRE(run_text("experiment = spectrum\nd = 1\ngrid.ladder = 9, 13\ngrid.L = 3\npotential.phi = 2.5\nsolver.k = 4\n" + out) == ok);
    REQUIRE(run_text("experiment = count\n" + out) == ok);
    const auto scripts = emit_plots(t.path);
    std::set<std::string> names;
    for (const auto& s : scripts) names.insert(s.filename().string());
    CHECK(names.count("spectrum_convergence.gp") == 1);
    CHECK(names.count("spectrum_cluster.gp") == 1);
    CHECK(names.count("count_steps.gp") == 1);
    const std::regex quoted("'([^']+\\.dat)'");
    for (const auto& s : scripts) {
      std::ifstream in(s);
      const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      for (std::sregex_iterator it(text.begin(), text.end(), quoted), end; it != end; ++it) {
        const std::string f = (*it)[1];
        CHECK(f.find('/') == std::string::npos);
        CHECK(fs::exists(t.path / f));
      }
    }
    std::ifstream steps(t.path / "count_steps.gp");
    const std::string st((std::istreambuf_iterator<char>(steps)), std::istreambuf_iterator<char>());
    CHECK_THAT(st, Catch::Matchers::ContainsSubstring("with steps"));
  }
}

TEST_CASE("experiment table")
{
  for (const char* n : {"spectrum", "zero-modes", "gap", "ac-baseline", "dbar-solve", "annulus", "muckenhoupt",
                        "wrong-identity", "count"})
    CHECK(find_experiment(n) != nullptr);
  CHECK(find_experiment("nope") == nullptr);
}
