#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "tibbm/cli.hpp"
#include "tibbm/config.hpp"
#include "tibbm/csv.hpp"
#include "tibbm/errors.hpp"
#include "tibbm/rng.hpp"

using namespace tibbm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tibbm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tibbm_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Everything after the '#' metadata block.
std::string body(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("#", 0) != 0) out += line + "\n";
  return out;
}

int config_error_line(const std::string& text, bool plan = false) {
  try {
    const auto doc = JsonDoc::parse(text);
    if (plan) (void)parse_plan(doc);
    else (void)parse_profile(doc);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST(Config, ProfileExamples) {
  const auto c = parse_profile(JsonDoc::parse(R"({"kind":"constant","params":[1.0]})"));
  EXPECT_EQ(c.kind(), ProfileKind::constant);
  EXPECT_EQ(c.eval(0.3), 1.0);
  const auto a = parse_profile(JsonDoc::parse(R"({"kind":"affine","params":[2.0,-1.0]})"));
  EXPECT_EQ(a.eval(0.25), 1.75);
  EXPECT_NEAR(a.decreasing_margin(), 1.0, 1e-12);
  const auto t = parse_profile(JsonDoc::parse(R"({"kind":"tabulated","knots":[[0,2],[0.5,1.5],[1,1]]})"));
  EXPECT_NEAR(t.eval(0.5), 1.5, 1e-14);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_EQ(config_error_line("{\n  \"kind\": \"tabulated\",\n  \"knots\": [[0, 1],\n             [1, -0.5]]\n}"), 4);
  EXPECT_EQ(config_error_line("{\n  \"kind\": \"affine\",\n  \"params\": [2, -1],\n  \"colour\": 3\n}"), 4);
  EXPECT_EQ(config_error_line("{\n  \"kind\": \"affine\",\n  \"params\": [2, -1\n}"), 4);
  EXPECT_EQ(config_error_line("{\n  \"kind\": \"affine\",\n  \"params\": \"2, -1\"\n}"), 3);
  EXPECT_EQ(config_error_line("{\n  \"kind\": \"cubic\",\n  \"params\": [1]\n}"), 2);
  EXPECT_EQ(config_error_line("{\"kind\": \"affine\", \"params\": [2]}"), 1);
  // sigma must stay positive on [0,1]
  EXPECT_EQ(config_error_line("{\n\"kind\": \"affine\",\n\"params\": [1, -2]}"), 1);
}

TEST(Config, PlanValidation) {
  const auto plan = parse_plan(JsonDoc::parse(R"({
    "profile": {"kind": "affine", "params": [2, -1]},
    "t_grid": [4, 6],
    "sim": {"substep_h": 0.1, "bridge": false},
    "prune_beta": "inf",
    "seed": 9
  })"));
  EXPECT_EQ(plan.t_grid, (std::vector<double>{4, 6}));
  EXPECT_EQ(plan.sim.substep_h, 0.1);
  EXPECT_FALSE(plan.sim.bridge);
  EXPECT_TRUE(std::isinf(plan.sim.prune_beta));
  EXPECT_EQ(plan.seed, 9u);
  EXPECT_EQ(plan.replicates_per_t, 2000u);

  EXPECT_EQ(config_error_line("{\n\"sim\": {\n  \"substep\": 0.1\n}}", true), 3);
  EXPECT_EQ(config_error_line("{\n\"t_grid\": [4,\n 3]\n}", true), 1);
  EXPECT_EQ(config_error_line("{\n\"t_grid\": [4,\n \"x\"]\n}", true), 3);
  EXPECT_EQ(config_error_line("{\n\"replicates_per_t\": -4\n}", true), 2);
  EXPECT_EQ(config_error_line("{\n\"sim\": {\"mode\": \"half\"}\n}", true), 2);
}

TEST(Config, DigestIsCanonical) {
  const auto a = JsonDoc::parse(R"({"b": 1, "a": [1, 2]})").root();
  const auto b = JsonDoc::parse("{\n \"a\": [1,2],\n \"b\": 1\n}").root();
  EXPECT_EQ(config_digest(a), config_digest(b));
  EXPECT_EQ(config_digest(a).size(), 64u);
  EXPECT_NE(config_digest(a), config_digest(JsonDoc::parse(R"({"b": 2, "a": [1, 2]})").root()));
  // SHA-256 of the empty object "{}"
  EXPECT_EQ(config_digest(nlohmann::json::object()),
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a");
}

TEST(Csv, DoublesRoundTrip) {
  PhiloxEngine eng(StreamKey(31), 0, 0);
  for (int i = 0; i < 20000; ++i) {
    std::uint64_t bits = (static_cast<std::uint64_t>(eng()) << 32) | eng();
    double x;
    std::memcpy(&x, &bits, sizeof x);
    if (std::isnan(x)) continue;
    EXPECT_EQ(parse_double(format_double(x)), x) << format_double(x);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_TRUE(std::isnan(parse_double(format_double(std::nan("")))));
  EXPECT_THROW(parse_double("1.5x"), SchemaError);
  EXPECT_THROW(parse_double(""), SchemaError);
}

TEST(Csv, RejectsSchemaDrift) {
  CsvTable t{"demo/1", {{"seed", "3"}}, {"a", "b"}, {{"1", "2"}, {"3", "inf"}}};
  const std::string text = to_csv(t);
  std::istringstream ok(text);
  const auto back = read_csv(ok, "demo/1", {"a", "b"});
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.meta_value("seed"), "3");
  EXPECT_TRUE(std::isinf(back.number(1, "b")));

  std::istringstream v2(text);
  EXPECT_THROW(read_csv(v2, "demo/2", {"a", "b"}), SchemaError);
  std::istringstream renamed(text);
  EXPECT_THROW(read_csv(renamed, "demo/1", {"a", "c"}), SchemaError);
  std::istringstream widened(text);
  EXPECT_THROW(read_csv(widened, "demo/1", {"a", "b", "c"}), SchemaError);
  std::istringstream ragged("# schema: demo/1\na,b\n1,2,3\n");
  EXPECT_THROW(read_csv(ragged, "demo/1", {"a", "b"}), SchemaError);
  std::istringstream headerless("# schema: demo/1\n");
  EXPECT_THROW(read_csv(headerless, "demo/1", {"a", "b"}), SchemaError);
  EXPECT_THROW(to_csv(CsvTable{"demo/1", {}, {"a"}, {{"x,y"}}}), std::invalid_argument);
}

TEST(Cli, VariationalPrintsSpeed) {
  const auto dir = scratch("var");
  const auto cfg = write_file(dir / "aff.json", R"({"kind":"affine","params":[2.0,-1.0]})");
  const auto r = cli({"variational", "--config", cfg, "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "speed 2.121320\n");
  std::ifstream in(dir / "out" / "path.csv");
  const auto t = read_csv(in, "path/1", {"t", "f", "J_t", "binding"});
  EXPECT_EQ(t.rows.size(), 512u);
  EXPECT_NEAR(t.number(511, "f"), 3.0 / std::sqrt(2.0), 1e-3);
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Cli, SimulateZeroHorizon) {
  const auto r = cli({"simulate", "--T", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  const auto t = read_csv(in, "replicates/1", kReplicateHeader);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.number(0, "m_max"), 0.0);
  EXPECT_EQ(t.number(0, "n_final"), 1.0);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"simulate", "--no-such-flag"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);

  const auto neg = write_file(dir / "neg.json", "{\"kind\": \"tabulated\",\n \"knots\": [[0, 1], [1, -1]]}");
  const auto r = cli({"validate-profile", "--config", neg});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"validate-profile", "--config", (dir / "missing.json").string()}).code, 2);
  EXPECT_EQ(cli({"simulate", "--T", "-1"}).code, 2);
  EXPECT_EQ(cli({"corridor", "--lower", "1", "--upper", "0"}).code, 2);

  // runtime failure: the output directory is a regular file
  const auto blocker = write_file(dir / "blocker", "x");
  EXPECT_EQ(cli({"simulate", "--T", "1", "--out", blocker}).code, 1);

  ::setenv("TIBBM_WORKERS", "many", 1);
  EXPECT_EQ(cli({"simulate", "--T", "1"}).code, 2);
  ::setenv("TIBBM_WORKERS", "2", 1);
  EXPECT_EQ(cli({"simulate", "--T", "1"}).code, 0);
  ::unsetenv("TIBBM_WORKERS");
}

TEST(Cli, CorridorSpectralExample) {
  const auto r = cli({"corridor", "--lower", "0", "--upper", format_double(M_PI), "--start", format_double(M_PI / 2),
                      "--horizon", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  const auto t = read_csv(in, "corridor/1",
                          {"method", "lower", "upper", "start", "horizon", "clock_total", "estimate", "stderr",
                           "log_estimate", "n", "detail"});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_NEAR(t.number(0, "estimate"), 4 / M_PI * (std::exp(-0.5) - std::exp(-4.5) / 3 + std::exp(-12.5) / 5), 1e-9);
  EXPECT_EQ(t.rows[0][t.column("method")], "spectral");
}

TEST(Cli, ExperimentFitRoundTripAndReproducibility) {
  const auto dir = scratch("exp");
  const auto plan = write_file(dir / "plan.json", R"({
    "profile": {"kind": "constant", "params": [1.0]},
    "t_grid": [2, 3, 4, 5, 6],
    "replicates_per_t": 60,
    "bootstrap_n": 250,
    "prune_above": 4,
    "barrier_C_grid": [1.0],
    "seed": 11
  })");
  const auto a = cli({"experiment", "--plan", plan, "--out", (dir / "a").string(), "--workers", "1"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = cli({"experiment", "--plan", plan, "--out", (dir / "b").string(), "--workers", "3"});
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"summary.csv", "reports/barrier.csv", "reports/paley_zygmund.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_FALSE(body(slurp(dir / "a" / f)).empty());
  }
  int manifests = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) manifests += e.path().filename() == "manifest.json";
  EXPECT_EQ(manifests, 1);
  const auto ma = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(dir / "b" / "manifest.json"));
  EXPECT_EQ(ma["config_digest"], mb["config_digest"]);
  EXPECT_EQ(ma["master_seed"], 11);
  EXPECT_EQ(ma["outputs"].size(), 4u);

  // Re-fit from the CSV matches the in-process fit exactly.
  const auto f = cli({"fit", (dir / "a" / "summary.csv").string()});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(nlohmann::json::parse(f.out), nlohmann::json::parse(slurp(dir / "a" / "fits.json")));

  std::ifstream in(dir / "a" / "summary.csv");
  const auto rows = summary_rows(read_csv(in, "summary/1", kSummaryHeader));
  Series s;
  for (const auto& r : rows) s.emplace_back(r.T, r.g);
  const auto direct = fit_power(s, 250, 11);
  EXPECT_EQ(nlohmann::json::parse(f.out)["power"], fit_to_json(direct));

  // A different seed changes the bodies.
  const auto c = cli({"experiment", "--plan", plan, "--out", (dir / "c").string(), "--seed", "12"});
  ASSERT_EQ(c.code, 0);
  EXPECT_NE(body(slurp(dir / "a" / "summary.csv")), body(slurp(dir / "c" / "summary.csv")));
}

TEST(Cli, FitRejectsDriftedSummary) {
  const auto dir = scratch("drift");
  const auto p = write_file(dir / "summary.csv", "# schema: summary/0\n# seed: 1\nT,g\n8,1\n");
  const auto r = cli({"fit", p});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("schema"), std::string::npos);
}
