#include "tibbm/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "tibbm/config.hpp"
#include "tibbm/corridor.hpp"
#include "tibbm/errors.hpp"
#include "tibbm/simulator.hpp"
#include "tibbm/variational.hpp"

namespace tibbm {

using nlohmann::json;
namespace fs = std::filesystem;

#ifndef TIBBM_VERSION
#define TIBBM_VERSION "unknown"
#endif

std::string version_string() { return TIBBM_VERSION; }

const std::vector<std::string> kSummaryHeader{"T",    "mode", "n_replicates",    "n_effective",     "med",
                                              "med_lo", "med_hi", "mean",        "mean_se",         "g",
                                              "p_upper_crossed", "p_good_nonempty", "mean_good", "mean_good_se",
                                              "valid"};
const std::vector<std::string> kReplicateHeader{"replicate",  "m_max",        "n_final",      "upper_crossed", "theta",
                                                "good_count", "min_position", "pruned_count", "truncated"};

namespace {

const std::vector<std::string> kPathHeader{"t", "f", "J_t", "binding"};
const std::vector<std::string> kCorridorHeader{"method", "lower",  "upper", "start",        "horizon", "clock_total",
                                               "estimate", "stderr", "log_estimate", "n", "detail"};
const std::vector<std::string> kProfileHeader{"kind",   "sigma_min",          "sigma_max",     "grid_min",
                                              "grid_max", "margin",           "monotone_decreasing",
                                              "max_abs_deriv", "max_fd_error", "ok", "failures"};
const std::vector<std::string> kBarrierHeader{"T", "C", "n", "p_hat", "se", "lo", "hi", "bound", "vacuous", "exceeds"};
const std::vector<std::string> kPzHeader{"T",          "n",        "p_nonempty",  "p_se",          "mean_good",
                                         "mean_good_se", "mean_good_sq", "mean_good_sq_se", "ratio", "ratio_se",
                                         "holds",      "prediction", "prediction_se", "prediction_agrees"};

std::string fmt(double x) { return format_double(x); }
std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw SchemaError("not a boolean: '" + s + "'");
}

std::vector<std::pair<std::string, std::string>> base_meta(std::uint64_t seed) {
  return {{"seed", std::to_string(seed)}, {"version", version_string()}};
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json cell_json(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  try {
    const double x = parse_double(s);
    return std::isfinite(x) ? json(x) : json(nullptr);
  } catch (const SchemaError&) {
    return s;
  }
}

json table_to_json(const CsvTable& t) {
  json j;
  j["schema"] = t.schema;
  for (const auto& [k, v] : t.meta) j["meta"][k] = v;
  j["rows"] = json::array();
  for (const auto& r : t.rows) {
    json row = json::object();
    for (std::size_t i = 0; i < t.header.size(); ++i) row[t.header[i]] = cell_json(r[i]);
    j["rows"].push_back(std::move(row));
  }
  return j;
}

struct Common {
  std::string config;
  std::string out;
  std::string format = "csv";
  std::uint64_t seed = 1;
  std::size_t workers = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file, '-' for stdin");
  sub->add_option("--out", c.out, "output directory (stdout when omitted)");
  c.seed_opt = sub->add_option("--seed", c.seed, "master seed");
  c.workers_opt = sub->add_option("--workers", c.workers, "worker threads, 0 = all cores (env TIBBM_WORKERS)");
  sub->add_option("--format", c.format, "output format")->check(CLI::IsMember({"csv", "json"}));
}

std::optional<JsonDoc> load_config(const Common& c) {
  if (c.config.empty()) return std::nullopt;
  return JsonDoc::load(c.config);
}

// Flag, then environment, then config, then all cores.
std::size_t resolve_cli_workers(const Common& c, std::optional<std::uint64_t> from_config) {
  if (c.workers_opt->count() > 0) return c.workers;
  if (const char* env = std::getenv("TIBBM_WORKERS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError(std::string("TIBBM_WORKERS must be a non-negative integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
  return from_config ? static_cast<std::size_t>(*from_config) : 0;
}

std::uint64_t resolve_seed(const Common& c, std::optional<std::uint64_t> from_config) {
  if (c.seed_opt->count() > 0) return c.seed;
  return from_config.value_or(1);
}

// Collects outputs: files under --out plus one manifest, or stdout.
class Sink {
 public:
  Sink(const Common& c, std::string subcommand, std::ostream& out)
      : c_(c), sub_(std::move(subcommand)), out_(out), started_(utc_now()) {
    if (!c_.out.empty()) fs::create_directories(c_.out);
  }

  [[nodiscard]] bool to_dir() const { return !c_.out.empty(); }

  void table(const std::string& stem, const CsvTable& t) {
    if (c_.format == "json") text(stem + ".json", table_to_json(t).dump(2) + "\n");
    else text(stem + ".csv", to_csv(t));
  }

  void text(const std::string& name, const std::string& content) {
    if (!to_dir()) {
      out_ << content;
      return;
    }
    const fs::path p = fs::path(c_.out) / name;
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << content;
    if (!f) throw std::runtime_error("write failed: " + p.string());
    files_.push_back(name);
  }

  void finish(const json& effective, std::uint64_t seed) {
    if (!to_dir()) return;
    json m;
    m["subcommand"] = sub_;
    m["config"] = effective;
    m["config_digest"] = config_digest(effective);
    m["master_seed"] = seed;
    m["version"] = version_string();
    m["started"] = started_;
    m["finished"] = utc_now();
    m["outputs"] = files_;
    std::ofstream f(fs::path(c_.out) / "manifest.json", std::ios::binary);
    f << m.dump(2) << "\n";
    if (!f) throw std::runtime_error("cannot write manifest in " + c_.out);
  }

 private:
  const Common& c_;
  std::string sub_;
  std::ostream& out_;
  std::string started_;
  std::vector<std::string> files_;
};

// Profile from a config whose root is either a profile or holds one under "profile".
SigmaProfile profile_from(const JsonDoc& doc) {
  if (doc.root().is_object() && doc.root().contains("kind")) return parse_profile(doc, "");
  return parse_profile(doc, "/profile");
}

bool root_is_profile(const JsonDoc& doc) { return doc.root().is_object() && doc.root().contains("kind"); }

// ---------------------------------------------------------------- validate-profile

struct ValidateArgs {
  Common c;
  int n_grid = 1001;
  CLI::Option* n_opt = nullptr;
};

int cmd_validate(ValidateArgs& a, std::ostream& out, std::ostream& err) {
  const auto doc = load_config(a.c);
  if (!doc) throw ConfigError("validate-profile needs --config");
  int n_grid = a.n_grid;
  if (!root_is_profile(*doc)) {
    const ObjectReader obj(*doc, "");
    obj.allow({"profile", "n_grid", "seed"});
    n_grid = static_cast<int>(obj.integer("n_grid", static_cast<std::uint64_t>(n_grid)));
  }
  if (a.n_opt->count() > 0) n_grid = a.n_grid;
  if (n_grid < 2) throw ConfigError("n_grid must be >= 2");
  const SigmaProfile p = profile_from(*doc);
  const auto r = validate(p, n_grid);
  std::string failures;
  for (const auto& f : r.failures) failures += (failures.empty() ? "" : "; ") + f;
  for (char& ch : failures)
    if (ch == ',') ch = ';';

  const std::uint64_t seed = resolve_seed(a.c, std::nullopt);
  CsvTable t{"profile_report/1", base_meta(seed), kProfileHeader, {}};
  t.rows.push_back({to_string(p.kind()), fmt(p.sigma_min()), fmt(p.sigma_max()), fmt(r.grid_min), fmt(r.grid_max),
                    fmt(r.margin), fmt(r.monotone_decreasing), fmt(p.max_abs_deriv()), fmt(r.max_fd_error),
                    fmt(r.ok()), failures});
  Sink sink(a.c, "validate-profile", out);
  sink.table("profile_report", t);
  sink.finish({{"profile", profile_to_json(p)}, {"n_grid", n_grid}}, seed);
  if (!r.ok()) {
    for (const auto& f : r.failures) err << "tibbm: profile check failed: " << f << "\n";
    return 2;
  }
  return 0;
}

// ---------------------------------------------------------------- variational

struct VariationalArgs {
  Common c;
  int n_grid = 512;
  CLI::Option* n_opt = nullptr;
};

int cmd_variational(VariationalArgs& a, std::ostream& out, std::ostream& err) {
  const auto doc = load_config(a.c);
  if (!doc) throw ConfigError("variational needs --config with a profile");
  int n_grid = a.n_grid;
  if (!root_is_profile(*doc)) {
    const ObjectReader obj(*doc, "");
    obj.allow({"profile", "n_grid", "seed"});
    n_grid = static_cast<int>(obj.integer("n_grid", static_cast<std::uint64_t>(n_grid)));
  }
  if (a.n_opt->count() > 0) n_grid = a.n_grid;
  if (n_grid < 8) throw ConfigError("n_grid must be >= 8");
  const SigmaProfile p = profile_from(*doc);
  const auto sol = solve_constrained(p, n_grid);

  const std::uint64_t seed = resolve_seed(a.c, std::nullopt);
  CsvTable t{"path/1", base_meta(seed), kPathHeader, {}};
  t.meta.emplace_back("speed", fmt(sol.speed));
  t.meta.emplace_back("closed_form", fmt(speed_closed_form(p)));
  t.meta.emplace_back("certified", fmt(sol.certified));
  t.meta.emplace_back("solver_gap", fmt(sol.solver_gap));
  t.meta.emplace_back("unique", fmt(sol.unique));
  for (std::size_t i = 0; i < sol.path.grid.size(); ++i) {
    t.rows.push_back({fmt(sol.path.grid[i]), fmt(sol.path.values[i]), fmt(sol.running_cost[i]),
                      fmt(static_cast<bool>(sol.binding[i]))});
  }
  Sink sink(a.c, "variational", out);
  std::ostringstream line;
  line << "speed " << std::fixed << std::setprecision(6) << sol.speed << (sol.certified ? "" : " (not certified)")
       << "\n";
  (sink.to_dir() ? out : err) << line.str();
  sink.table("path", t);
  sink.finish({{"profile", profile_to_json(p)}, {"n_grid", n_grid}}, seed);
  return 0;
}

// ---------------------------------------------------------------- corridor

struct CorridorArgs {
  Common c;
  std::string method;
  double lower = NAN, upper = NAN, start = NAN, horizon = NAN, clock = NAN;
  double T = NAN, band_lower = NAN, band_upper = NAN, good_offset = NAN;
  double c3 = NAN, halfwidth = NAN, c5 = NAN;
  std::uint64_t paths = 0;
  double dt = NAN;
};

void set_if(double& dst, double flag) {
  if (!std::isnan(flag)) dst = flag;
}

int cmd_corridor(CorridorArgs& a, std::ostream& out, std::ostream&) {
  const auto doc = load_config(a.c);
  std::string method = "spectral";
  StripSpec strip;
  std::optional<SigmaProfile> profile;
  double T = 10.0;
  Band band{std::nan(""), std::nan("")};
  double good_offset = -1.0;
  SoftCorridorSpec soft;
  McOptions mc;
  std::optional<std::uint64_t> cfg_seed, cfg_workers;

  if (doc) {
    const ObjectReader obj(*doc, "");
    obj.allow({"method", "strip", "profile", "T", "band", "good_offset", "soft", "mc", "seed", "workers"});
    method = obj.string("method", method);
    if (obj.has("strip")) {
      const auto s = obj.object("strip");
      s.allow({"lower", "upper", "start", "horizon", "clock_total"});
      strip.lower = s.number("lower", strip.lower);
      strip.upper = s.number("upper", strip.upper);
      strip.start = s.number("start", strip.start);
      strip.horizon = s.number("horizon", strip.horizon);
      strip.clock_total = s.number("clock_total", s.has("horizon") ? strip.horizon : strip.clock_total);
    }
    if (obj.has("profile")) profile = parse_profile(*doc, "/profile");
    T = obj.number("T", T);
    if (obj.has("band")) {
      const auto b = obj.object("band");
      b.allow({"lower_width", "upper_offset"});
      band.lower_width = b.number("lower_width");
      band.upper_offset = b.number("upper_offset");
    }
    good_offset = obj.number("good_offset", good_offset);
    if (obj.has("soft")) {
      const auto s = obj.object("soft");
      s.allow({"c3", "endpoint_halfwidth", "start", "c5"});
      soft.c3 = s.number("c3", soft.c3);
      soft.endpoint_halfwidth = s.extended("endpoint_halfwidth", soft.endpoint_halfwidth);
      soft.start = s.number("start", soft.start);
      soft.c5 = s.number("c5", soft.c5);
    }
    if (obj.has("mc")) {
      const auto m = obj.object("mc");
      m.allow({"n_paths", "dt"});
      mc.n_paths = m.integer("n_paths", mc.n_paths);
      mc.dt = m.number("dt", mc.dt);
    }
    if (obj.has("seed")) cfg_seed = obj.integer("seed");
    if (obj.has("workers")) cfg_workers = obj.integer("workers");
  }
  if (!a.method.empty()) method = a.method;
  set_if(strip.lower, a.lower);
  set_if(strip.upper, a.upper);
  set_if(strip.start, a.start);
  if (!std::isnan(a.horizon)) {
    strip.horizon = a.horizon;
    if (std::isnan(a.clock) && !(doc && doc->root().contains("strip") && doc->root()["strip"].contains("clock_total")))
      strip.clock_total = a.horizon;
  }
  set_if(strip.clock_total, a.clock);
  set_if(T, a.T);
  set_if(band.lower_width, a.band_lower);
  set_if(band.upper_offset, a.band_upper);
  set_if(good_offset, a.good_offset);
  set_if(soft.c3, a.c3);
  set_if(soft.endpoint_halfwidth, a.halfwidth);
  set_if(soft.c5, a.c5);
  if (a.paths > 0) mc.n_paths = a.paths;
  set_if(mc.dt, a.dt);
  mc.seed = resolve_seed(a.c, cfg_seed);
  mc.workers = resolve_cli_workers(a.c, cfg_workers);

  static const std::vector<std::string> methods{"spectral", "mc", "both", "good", "tilted", "direct", "oracle", "soft"};
  if (std::find(methods.begin(), methods.end(), method) == methods.end())
    throw ConfigError("unknown corridor method '" + method + "'", doc ? doc->line("/method") : 0);
  if (!profile) profile = SigmaProfile::constant(1.0);
  if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T must be positive", doc ? doc->line("/T") : 0);
  const double w = std::cbrt(T);
  if (std::isnan(band.upper_offset)) band.upper_offset = good_offset < 0.0 ? default_start_offset(w) : good_offset;
  if (std::isnan(band.lower_width)) band.lower_width = w - band.upper_offset;

  CsvTable t{"corridor/1", base_meta(mc.seed), kCorridorHeader, {}};
  json effective{{"method", method}, {"seed", mc.seed}};
  auto strip_row = [&](const std::string& m, double est, double se, double logp, std::uint64_t n,
                       const std::string& detail) {
    t.rows.push_back({m, fmt(strip.lower), fmt(strip.upper), fmt(strip.start), fmt(strip.horizon),
                      fmt(strip.clock_total), fmt(est), fmt(se), fmt(logp), fmt(n), detail});
  };
  const bool strip_method = method == "spectral" || method == "mc" || method == "both";
  if (strip_method) {
    try {
      strip.check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("invalid strip: ") + e.what(), doc ? doc->line("/strip") : 0);
    }
    effective["strip"] = {{"lower", strip.lower}, {"upper", strip.upper}, {"start", strip.start},
                          {"horizon", strip.horizon}, {"clock_total", strip.clock_total}};
  } else {
    effective["profile"] = profile_to_json(*profile);
    effective["T"] = T;
  }
  if (method == "spectral" || method == "both") {
    const auto r = strip_survival_spectral(strip);
    strip_row("spectral", r.probability, 0.0, r.log_probability, static_cast<std::uint64_t>(r.terms), r.method);
  }
  if (method == "mc" || method == "both") {
    const auto e = strip_survival_mc(strip, mc);
    const double dt = mc.dt > 0.0 ? mc.dt : std::min(strip.clock_total * 1e-4, 1e-2);
    strip_row("mc", e.value, e.std_error, std::log(e.value), e.n,
              "dt=" + fmt(dt) + ";allowance=" + fmt(discretization_allowance(strip, dt)));
    effective["mc"] = {{"n_paths", mc.n_paths}, {"dt", mc.dt}};
  }
  const double clock_T = profile->clock(T, T);
  auto band_row = [&](const std::string& m, double est, double se, std::uint64_t n, const std::string& detail) {
    t.rows.push_back({m, fmt(-band.lower_width), fmt(band.upper_offset), "0", fmt(T), fmt(clock_T), fmt(est), fmt(se),
                      fmt(std::log(est)), fmt(n), detail});
  };
  if (method == "good") {
    const auto g = good_corridor_logprob(*profile, T, good_offset);
    t.rows.push_back({"good", "0", fmt(g.width), fmt(g.start_offset), fmt(T), fmt(g.clock_total),
                      fmt(std::exp(g.log_probability)), "0", fmt(g.log_probability), "0",
                      "ratio=" + fmt(-g.log_probability / g.width)});
    effective["good_offset"] = good_offset;
  }
  if (method == "tilted" || method == "direct" || method == "oracle") {
    effective["band"] = {{"lower_width", band.lower_width}, {"upper_offset", band.upper_offset}};
    if (method == "oracle") {
      if (profile->kind() != ProfileKind::constant) throw ConfigError("method 'oracle' needs a constant profile");
      band_row("oracle", tilted_strip_oracle(profile->eval(0.0), T, band), 0.0, 0, "exact");
    } else {
      const auto e = method == "tilted" ? tilted_corridor_estimate(*profile, T, band, mc)
                                        : direct_corridor_estimate(*profile, T, band, mc);
      band_row(method, e.value, e.std_error, e.n, "first_moment");
      effective["mc"] = {{"n_paths", mc.n_paths}, {"dt", mc.dt}};
    }
  }
  if (method == "soft") {
    soft.horizon = T;
    const auto r = soft_corridor_functional(soft, mc);
    std::string detail = "occupation_mean=" + fmt(r.occupation_mean) + ";p_occupation_half=" + fmt(r.p_occupation_half);
    t.rows.push_back({"soft", fmt(-soft.endpoint_halfwidth), fmt(soft.endpoint_halfwidth), fmt(soft.start), fmt(T),
                      fmt(T), fmt(r.functional.value), fmt(r.functional.std_error), fmt(std::log(r.functional.value)),
                      fmt(r.functional.n), detail});
    effective["soft"] = {{"c3", soft.c3}, {"endpoint_halfwidth", soft.endpoint_halfwidth}, {"start", soft.start},
                         {"c5", soft.c5}};
    effective["mc"] = {{"n_paths", mc.n_paths}, {"dt", mc.dt}};
  }
  Sink sink(a.c, "corridor", out);
  sink.table("corridor", t);
  sink.finish(effective, mc.seed);
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Common c;
  double T = NAN, beta = NAN, barrier_C = NAN;
  std::string mode;
  std::uint64_t replicates = 0;
  CLI::Option* rep_opt = nullptr;
  std::uint64_t first = 0;
  CLI::Option* first_opt = nullptr;
};

int cmd_simulate(SimulateArgs& a, std::ostream& out, std::ostream&) {
  const auto doc = load_config(a.c);
  SimConfig cfg;
  std::uint64_t replicates = 1, first = 0;
  std::optional<std::uint64_t> cfg_seed, cfg_workers;
  if (doc) {
    const ObjectReader obj(*doc, "");
    if (obj.has("profile")) cfg.profile = parse_profile(*doc, "/profile");
    cfg = parse_sim_config(obj, cfg, {"profile", "replicates", "first_replicate", "seed", "workers"});
    replicates = obj.integer("replicates", replicates);
    first = obj.integer("first_replicate", first);
    if (obj.has("seed")) cfg_seed = obj.integer("seed");
    if (obj.has("workers")) cfg_workers = obj.integer("workers");
  }
  set_if(cfg.T, a.T);
  set_if(cfg.prune_beta, a.beta);
  set_if(cfg.barrier_C, a.barrier_C);
  if (!a.mode.empty()) cfg.mode = sim_mode_from_string(a.mode);
  if (a.rep_opt->count() > 0) replicates = a.replicates;
  if (a.first_opt->count() > 0) first = a.first;
  cfg.seed = resolve_seed(a.c, cfg_seed);
  try {
    cfg.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid simulation settings: ") + e.what());
  }
  if (replicates < 1) throw ConfigError("replicates must be >= 1");

  const auto outcomes = run_replicates(cfg, replicates, resolve_cli_workers(a.c, cfg_workers), first);
  CsvTable t{"replicates/1", base_meta(cfg.seed), kReplicateHeader, {}};
  t.meta.emplace_back("T", fmt(cfg.T));
  t.meta.emplace_back("mode", to_string(cfg.mode));
  t.meta.emplace_back("profile", to_string(cfg.profile.kind()));
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    t.rows.push_back({fmt(static_cast<std::uint64_t>(first + i)), fmt(o.m_max), fmt(o.n_final), fmt(o.upper_crossed),
                      fmt(o.theta), fmt(o.good_count), fmt(o.min_position), fmt(o.pruned_count), fmt(o.truncated)});
  }
  json effective{{"profile", profile_to_json(cfg.profile)},
                 {"T", cfg.T},
                 {"mode", to_string(cfg.mode)},
                 {"prune_beta", std::isfinite(cfg.prune_beta) ? json(cfg.prune_beta) : json("inf")},
                 {"barrier_C", cfg.barrier_C},
                 {"extra_barrier_C", cfg.extra_barrier_C},
                 {"substep_h", cfg.substep_h},
                 {"max_particles", cfg.max_particles},
                 {"min_time_A", cfg.min_time_A},
                 {"good_offset", cfg.good_offset},
                 {"bridge", cfg.bridge},
                 {"branching_rate", cfg.branching_rate},
                 {"replicates", replicates},
                 {"first_replicate", first},
                 {"seed", cfg.seed}};
  Sink sink(a.c, "simulate", out);
  sink.table("replicates", t);
  sink.finish(effective, cfg.seed);
  return 0;
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
  Common c;
  std::string plan;
  std::uint64_t pz_paths = 0;
  CLI::Option* pz_opt = nullptr;
};

Series valid_series(const std::vector<SummaryRow>& rows) {
  Series s;
  for (const auto& r : rows)
    if (r.valid) s.emplace_back(r.T, r.g);
  return s;
}

int cmd_experiment(ExperimentArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.plan.empty()) a.c.config = a.plan;
  if (a.c.config.empty()) throw ConfigError("experiment needs --plan (or --config)");
  if (a.c.out.empty()) throw ConfigError("experiment needs --out DIR");
  const auto doc = *load_config(a.c);
  ExperimentPlan plan = parse_plan(doc);
  const ObjectReader root(doc, "");
  std::uint64_t pz_paths = root.integer("pz_paths", 20000);
  if (a.pz_opt->count() > 0) pz_paths = a.pz_paths;
  plan.seed = resolve_seed(a.c, root.has("seed") ? std::optional(plan.seed) : std::nullopt);
  plan.workers = resolve_cli_workers(a.c, root.has("workers") ? std::optional<std::uint64_t>(plan.workers) : std::nullopt);

  Sink sink(a.c, "experiment", out);
  const auto result = run_plan(plan);
  sink.table("summary", summary_table(result.rows, plan.seed, plan.bootstrap_n, result.speed));
  sink.text("fits.json", fits_document(valid_series(result.rows), plan.bootstrap_n, plan.seed).dump(2) + "\n");

  CsvTable bar{"barrier/1", base_meta(plan.seed), kBarrierHeader, {}};
  for (const auto& b : barrier_crossing_report(plan, result)) {
    bar.rows.push_back({fmt(b.T), fmt(b.C), fmt(b.n), fmt(b.p_hat), fmt(b.se), fmt(b.lo), fmt(b.hi), fmt(b.bound),
                        fmt(b.vacuous), fmt(b.exceeds)});
  }
  sink.table("reports/barrier", bar);

  CsvTable pz{"paley_zygmund/1", base_meta(plan.seed), kPzHeader, {}};
  pz.meta.emplace_back("prediction_paths", fmt(pz_paths));
  if (pz_paths > 0) {
    for (const auto& r : paley_zygmund_report(plan, result, pz_paths)) {
      pz.rows.push_back({fmt(r.T), fmt(r.n), fmt(r.p_nonempty), fmt(r.p_se), fmt(r.mean_good), fmt(r.mean_good_se),
                         fmt(r.mean_good_sq), fmt(r.mean_good_sq_se), fmt(r.ratio), fmt(r.ratio_se), fmt(r.holds),
                         fmt(r.prediction), fmt(r.prediction_se), fmt(r.prediction_agrees)});
    }
  }
  sink.table("reports/paley_zygmund", pz);

  json effective = plan_to_json(plan);
  effective["pz_paths"] = pz_paths;
  sink.finish(effective, plan.seed);

  out << "speed " << std::setprecision(10) << result.speed << "\n";
  for (const auto& r : result.rows) {
    out << "T=" << r.T << " mode=" << r.mode << " n=" << r.n_effective << " med=" << r.med << " g=" << r.g
        << (r.valid ? "" : " (invalid)") << "\n";
  }
  for (const auto& r : result.rows)
    if (!r.valid) err << "tibbm: warning: every replicate truncated at T=" << r.T << "\n";
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  Common c;
  std::string summary;
  std::uint64_t bootstrap_n = 0;
};

int cmd_fit(FitArgs& a, std::ostream& out, std::ostream&) {
  std::ifstream in(a.summary, std::ios::binary);
  if (!in) throw ConfigError("cannot read summary file '" + a.summary + "'");
  const CsvTable t = read_csv(in, "summary/1", kSummaryHeader);
  const std::uint64_t seed =
      a.c.seed_opt->count() > 0 ? a.c.seed : static_cast<std::uint64_t>(std::stoull(t.meta_value("seed")));
  const std::uint64_t boot =
      a.bootstrap_n > 0 ? a.bootstrap_n : static_cast<std::uint64_t>(std::stoull(t.meta_value("bootstrap_n")));
  const json doc = fits_document(valid_series(summary_rows(t)), boot, seed);
  Sink sink(a.c, "fit", out);
  sink.text("fits.json", doc.dump(2) + "\n");
  sink.finish({{"summary", fs::absolute(a.summary).lexically_normal().string()}, {"bootstrap_n", boot}, {"seed", seed}},
              seed);
  return 0;
}

}  // namespace

// ---------------------------------------------------------------- shared layouts

CsvTable summary_table(const std::vector<SummaryRow>& rows, std::uint64_t seed, std::uint64_t bootstrap_n, double speed) {
  CsvTable t{"summary/1", base_meta(seed), kSummaryHeader, {}};
  t.meta.emplace_back("bootstrap_n", std::to_string(bootstrap_n));
  t.meta.emplace_back("speed", fmt(speed));
  for (const auto& r : rows) {
    t.rows.push_back({fmt(r.T), r.mode, fmt(r.n_replicates), fmt(r.n_effective), fmt(r.med), fmt(r.med_lo),
                      fmt(r.med_hi), fmt(r.mean), fmt(r.mean_se), fmt(r.g), fmt(r.p_upper_crossed),
                      fmt(r.p_good_nonempty), fmt(r.mean_good), fmt(r.mean_good_se), fmt(r.valid)});
  }
  return t;
}

std::vector<SummaryRow> summary_rows(const CsvTable& t) {
  std::vector<SummaryRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    SummaryRow r;
    r.T = t.number(i, "T");
    r.mode = t.rows[i][t.column("mode")];
    r.n_replicates = static_cast<std::uint64_t>(t.number(i, "n_replicates"));
    r.n_effective = static_cast<std::uint64_t>(t.number(i, "n_effective"));
    r.med = t.number(i, "med");
    r.med_lo = t.number(i, "med_lo");
    r.med_hi = t.number(i, "med_hi");
    r.mean = t.number(i, "mean");
    r.mean_se = t.number(i, "mean_se");
    r.g = t.number(i, "g");
    r.p_upper_crossed = t.number(i, "p_upper_crossed");
    r.p_good_nonempty = t.number(i, "p_good_nonempty");
    r.mean_good = t.number(i, "mean_good");
    r.mean_good_se = t.number(i, "mean_good_se");
    r.valid = parse_bool(t.rows[i][t.column("valid")]);
    out.push_back(r);
  }
  return out;
}

json fit_to_json(const FitResult& f) {
  json j;
  j["model"] = to_string(f.model);
  j["params"] = json::array();
  for (const auto& p : f.params) j["params"].push_back({{"name", p.name}, {"value", p.value}, {"lo", p.lo}, {"hi", p.hi}});
  j["r_squared"] = f.r_squared;
  j["t"] = f.t;
  j["g"] = f.g;
  j["residuals"] = f.residuals;
  j["dropped_t"] = f.dropped_t;
  j["bootstrap_n"] = f.bootstrap_n;
  return j;
}

json fits_document(const Series& series, std::uint64_t bootstrap_n, std::uint64_t seed) {
  json j;
  j["schema"] = "fits/1";
  j["seed"] = seed;
  j["version"] = version_string();
  j["bootstrap_n"] = bootstrap_n;
  for (auto [name, fn] : {std::pair{"power", &fit_power}, std::pair{"log", &fit_log}}) {
    try {
      j[name] = fit_to_json(fn(series, bootstrap_n, seed));
    } catch (const std::invalid_argument& e) {
      j[name] = {{"error", e.what()}};
    }
  }
  return j;
}

json profile_to_json(const SigmaProfile& p) {
  json j{{"kind", to_string(p.kind())}};
  if (p.kind() == ProfileKind::tabulated) {
    j["knots"] = json::array();
    for (const auto& [u, s] : p.knots()) j["knots"].push_back({u, s});
  } else {
    j["params"] = p.params();
  }
  return j;
}

json plan_to_json(const ExperimentPlan& plan) {
  const auto& s = plan.sim;
  return {{"profile", profile_to_json(plan.profile)},
          {"t_grid", plan.t_grid},
          {"replicates_per_t", plan.replicates_per_t},
          {"estimator", to_string(plan.estimator)},
          {"bootstrap_n", plan.bootstrap_n},
          {"prune_above", std::isfinite(plan.prune_above) ? json(plan.prune_above) : json("inf")},
          {"barrier_C_grid", plan.barrier_C_grid},
          {"seed", plan.seed},
          {"sim",
           {{"prune_beta", std::isfinite(s.prune_beta) ? json(s.prune_beta) : json("inf")},
            {"barrier_C", s.barrier_C},
            {"extra_barrier_C", s.extra_barrier_C},
            {"substep_h", s.substep_h},
            {"max_particles", s.max_particles},
            {"min_time_A", s.min_time_A},
            {"good_offset", s.good_offset},
            {"bridge", s.bridge},
            {"branching_rate", s.branching_rate}}}};
}

// ---------------------------------------------------------------- entry point

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Branching Brownian motion with time-inhomogeneous variance: solver, oracles, simulator", "tibbm"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  ValidateArgs va;
  auto* v = app.add_subcommand("validate-profile", "check a sigma profile");
  add_common(v, va.c);
  va.n_opt = v->add_option("--n-grid", va.n_grid, "grid points for the checks");

  VariationalArgs vr;
  auto* var = app.add_subcommand("variational", "solve the constrained path problem");
  add_common(var, vr.c);
  vr.n_opt = var->add_option("--n-grid", vr.n_grid, "solver grid points");

  CorridorArgs ca;
  auto* cor = app.add_subcommand("corridor", "strip and corridor survival probabilities");
  add_common(cor, ca.c);
  cor->add_option("--method", ca.method, "spectral|mc|both|good|tilted|direct|oracle|soft");
  cor->add_option("--lower", ca.lower);
  cor->add_option("--upper", ca.upper);
  cor->add_option("--start", ca.start);
  cor->add_option("--horizon", ca.horizon);
  cor->add_option("--clock", ca.clock, "variance clock total (defaults to horizon)");
  cor->add_option("--T", ca.T, "horizon for profile-based methods");
  cor->add_option("--band-lower", ca.band_lower, "band lower width");
  cor->add_option("--band-upper", ca.band_upper, "band upper offset");
  cor->add_option("--good-offset", ca.good_offset);
  cor->add_option("--c3", ca.c3);
  cor->add_option("--halfwidth", ca.halfwidth, "soft corridor endpoint halfwidth");
  cor->add_option("--c5", ca.c5);
  cor->add_option("--paths", ca.paths, "Monte Carlo paths");
  cor->add_option("--dt", ca.dt, "Monte Carlo step");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "simulate BBM replicates");
  add_common(sim, sa.c);
  sim->add_option("--T", sa.T, "horizon");
  sim->add_option("--mode", sa.mode)->check(CLI::IsMember({"full", "pruned"}));
  sim->add_option("--beta", sa.beta, "pruning beta");
  sim->add_option("--barrier-C", sa.barrier_C, "upper barrier C");
  sa.rep_opt = sim->add_option("--replicates", sa.replicates, "number of replicates");
  sa.first_opt = sim->add_option("--first", sa.first, "first replicate index");

  ExperimentArgs ea;
  auto* exp = app.add_subcommand("experiment", "run an experiment plan");
  add_common(exp, ea.c);
  exp->add_option("--plan", ea.plan, "plan JSON");
  ea.pz_opt = exp->add_option("--pz-paths", ea.pz_paths, "paths for the first-moment prediction, 0 skips it");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "refit a summary.csv");
  add_common(fit, fa.c);
  fit->add_option("summary,--summary", fa.summary, "summary.csv from an experiment")->required();
  fit->add_option("--bootstrap-n", fa.bootstrap_n, "override the bootstrap size recorded in the file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (v->parsed()) return cmd_validate(va, out, err);
    if (var->parsed()) return cmd_variational(vr, out, err);
    if (cor->parsed()) return cmd_corridor(ca, out, err);
    if (sim->parsed()) return cmd_simulate(sa, out, err);
    if (exp->parsed()) return cmd_experiment(ea, out, err);
    if (fit->parsed()) return cmd_fit(fa, out, err);
  } catch (const ConfigError& e) {
    err << "tibbm: config error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    err << "tibbm: input error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "tibbm: invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    err << "tibbm: invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "tibbm: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace tibbm
