#include "tibbm/config.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include "tibbm/csv.hpp"
#include "tibbm/errors.hpp"

namespace tibbm {

using nlohmann::json;

namespace {

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Records the line at which each member and element starts. Runs only on text
// nlohmann already accepted, so it can afford to be forgiving.
std::map<std::string, int> index_lines(const std::string& text) {
  struct Frame {
    bool object;
    std::string ptr;
    std::size_t index = 0;
    std::string key;
    bool want_key = true;
  };
  std::map<std::string, int> lines;
  std::vector<Frame> stack;
  int line = 1;
  lines[""] = 1;

  auto value_start = [&]() -> std::string {
    if (stack.empty()) return "";
    Frame& f = stack.back();
    std::string child =
        f.ptr + "/" + (f.object ? escape_token(f.key) : std::to_string(f.index));
    if (!f.object) lines.emplace(child, line);
    return child;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == ':') continue;
    if (c == '"') {
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) {
          ++i;
          switch (text[i]) {
            case 'n': s += '\n'; break;
            case 't': s += '\t'; break;
            default: s += text[i];
          }
        } else {
          s += text[i];
        }
      }
      if (!stack.empty() && stack.back().object && stack.back().want_key) {
        Frame& f = stack.back();
        f.key = s;
        f.want_key = false;
        lines[f.ptr + "/" + escape_token(s)] = line;
      } else {
        value_start();
      }
      continue;
    }
    if (c == '{' || c == '[') {
      const std::string child = value_start();
      stack.push_back(Frame{c == '{', child, 0, {}, true});
      continue;
    }
    if (c == '}' || c == ']') {
      if (!stack.empty()) stack.pop_back();
      continue;
    }
    if (c == ',') {
      if (!stack.empty()) {
        if (stack.back().object) stack.back().want_key = true;
        else ++stack.back().index;
      }
      continue;
    }
    // number or literal
    value_start();
    while (i + 1 < text.size() && std::string_view(",]} \t\r\n").find(text[i + 1]) == std::string_view::npos) ++i;
  }
  return lines;
}

std::string type_name(const json& j) { return j.type_name(); }

}  // namespace

JsonDoc JsonDoc::parse(const std::string& text) {
  JsonDoc doc;
  try {
    doc.root_ = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
    std::string msg = e.what();
    if (auto p = msg.find("parse error"); p != std::string::npos) msg = msg.substr(p);
    throw ConfigError("malformed JSON: " + msg, line);
  }
  doc.lines_ = index_lines(text);
  return doc;
}

JsonDoc JsonDoc::load(const std::string& path) {
  std::string text;
  if (path == "-") {
    text.assign(std::istreambuf_iterator<char>(std::cin), {});
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  return parse(text);
}

const json& JsonDoc::at(const std::string& pointer) const { return root_.at(json::json_pointer(pointer)); }

int JsonDoc::line(const std::string& pointer) const {
  std::string p = pointer;
  for (;;) {
    if (auto it = lines_.find(p); it != lines_.end()) return it->second;
    const auto slash = p.rfind('/');
    if (slash == std::string::npos) return 0;
    p.resize(slash);
  }
}

void JsonDoc::fail(const std::string& pointer, const std::string& message) const {
  throw ConfigError(message, line(pointer));
}

ObjectReader::ObjectReader(const JsonDoc& doc, std::string pointer)
    : doc_(&doc), ptr_(std::move(pointer)), obj_(&doc.at(ptr_)) {
  if (!obj_->is_object())
    doc.fail(ptr_, (ptr_.empty() ? std::string("config") : "'" + ptr_ + "'") + " must be an object, got " +
                       type_name(*obj_));
}

void ObjectReader::allow(std::initializer_list<std::string_view> keys) const {
  for (const auto& [k, v] : obj_->items()) {
    bool known = false;
    for (auto a : keys) known = known || a == k;
    if (!known) doc_->fail(pointer(k), "unknown key '" + k + "'" + (ptr_.empty() ? "" : " in '" + ptr_ + "'"));
  }
}

bool ObjectReader::has(const std::string& key) const { return obj_->contains(key); }

std::string ObjectReader::pointer(const std::string& key) const { return ptr_ + "/" + escape_token(key); }

void ObjectReader::fail(const std::string& key, const std::string& message) const {
  doc_->fail(key.empty() ? ptr_ : pointer(key), message);
}

const json& ObjectReader::get(const std::string& key) const { return obj_->at(key); }

double ObjectReader::number(const std::string& key, std::optional<double> fallback) const {
  if (!has(key)) {
    if (fallback) return *fallback;
    fail("", "missing required key '" + key + "'");
  }
  const json& v = get(key);
  if (!v.is_number()) fail(key, "'" + key + "' must be a number, got " + type_name(v));
  return v.get<double>();
}

double ObjectReader::extended(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const json& v = get(key);
  if (v.is_null() || (v.is_string() && v.get<std::string>() == "inf")) return std::numeric_limits<double>::infinity();
  return number(key);
}

std::uint64_t ObjectReader::integer(const std::string& key, std::optional<std::uint64_t> fallback) const {
  if (!has(key)) {
    if (fallback) return *fallback;
    fail("", "missing required key '" + key + "'");
  }
  const json& v = get(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && d < 1.8e19 && std::floor(d) == d) return static_cast<std::uint64_t>(d);
  }
  fail(key, "'" + key + "' must be a non-negative integer");
}

bool ObjectReader::boolean(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const json& v = get(key);
  if (!v.is_boolean()) fail(key, "'" + key + "' must be true or false, got " + type_name(v));
  return v.get<bool>();
}

std::string ObjectReader::string(const std::string& key, std::optional<std::string> fallback) const {
  if (!has(key)) {
    if (fallback) return *fallback;
    fail("", "missing required key '" + key + "'");
  }
  const json& v = get(key);
  if (!v.is_string()) fail(key, "'" + key + "' must be a string, got " + type_name(v));
  return v.get<std::string>();
}

std::vector<double> ObjectReader::numbers(const std::string& key, std::optional<std::vector<double>> fallback) const {
  if (!has(key)) {
    if (fallback) return *fallback;
    fail("", "missing required key '" + key + "'");
  }
  const json& v = get(key);
  if (!v.is_array()) fail(key, "'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) doc_->fail(pointer(key) + "/" + std::to_string(i), "'" + key + "' entries must be numbers");
    out.push_back(v[i].get<double>());
  }
  return out;
}

ObjectReader ObjectReader::object(const std::string& key) const {
  if (!has(key)) fail("", "missing required key '" + key + "'");
  return ObjectReader(*doc_, pointer(key));
}

SigmaProfile parse_profile(const JsonDoc& doc, const std::string& pointer) {
  const ObjectReader obj(doc, pointer);
  const std::string kind = obj.string("kind");
  try {
    if (kind == "tabulated") {
      obj.allow({"kind", "knots"});
      if (!obj.has("knots")) obj.fail("", "tabulated profile needs 'knots'");
      const json& k = doc.at(obj.pointer("knots"));
      if (!k.is_array()) obj.fail("knots", "'knots' must be an array of [u, sigma] pairs");
      std::vector<std::pair<double, double>> knots;
      for (std::size_t i = 0; i < k.size(); ++i) {
        const std::string kp = obj.pointer("knots") + "/" + std::to_string(i);
        if (!k[i].is_array() || k[i].size() != 2 || !k[i][0].is_number() || !k[i][1].is_number())
          doc.fail(kp, "knot " + std::to_string(i) + " must be a [u, sigma] pair of numbers");
        const double s = k[i][1].get<double>();
        if (!(s > 0.0)) doc.fail(kp, "knot " + std::to_string(i) + " has non-positive sigma " + format_double(s));
        knots.emplace_back(k[i][0].get<double>(), s);
      }
      return SigmaProfile::tabulated(std::move(knots));
    }
    obj.allow({"kind", "params"});
    const auto p = obj.numbers("params");
    auto need = [&](std::size_t n) {
      if (p.size() != n)
        obj.fail("params", "'" + kind + "' profile takes " + std::to_string(n) + " params, got " +
                               std::to_string(p.size()));
    };
    if (kind == "constant") {
      need(1);
      return SigmaProfile::constant(p[0]);
    }
    if (kind == "affine") {
      need(2);
      return SigmaProfile::affine(p[0], p[1]);
    }
    if (kind == "exponential-decay") {
      need(2);
      return SigmaProfile::exponential_decay(p[0], p[1]);
    }
    obj.fail("kind", "unknown profile kind '" + kind + "' (constant, affine, exponential-decay, tabulated)");
  } catch (const std::invalid_argument& e) {
    doc.fail(pointer, std::string("invalid profile: ") + e.what());
  } catch (const DomainError& e) {
    doc.fail(pointer, std::string("invalid profile: ") + e.what());
  }
}

SimConfig parse_sim_config(const ObjectReader& obj, SimConfig c, std::initializer_list<std::string_view> extra_allowed) {
  static const std::vector<std::string_view> own{"T", "mode", "prune_beta", "barrier_C", "extra_barrier_C",
                                                 "substep_h", "max_particles", "min_time_A", "good_offset",
                                                 "bridge", "branching_rate"};
  for (const auto& [k, v] : obj.value().items()) {
    bool known = false;
    for (auto a : own) known = known || a == k;
    for (auto a : extra_allowed) known = known || a == k;
    if (!known) obj.fail(k, "unknown key '" + k + "'");
  }
  c.T = obj.number("T", c.T);
  if (obj.has("mode")) {
    try {
      c.mode = sim_mode_from_string(obj.string("mode"));
    } catch (const std::invalid_argument&) {
      obj.fail("mode", "'mode' must be \"full\" or \"pruned\"");
    }
  }
  c.prune_beta = obj.extended("prune_beta", c.prune_beta);
  c.barrier_C = obj.number("barrier_C", c.barrier_C);
  c.extra_barrier_C = obj.numbers("extra_barrier_C", c.extra_barrier_C);
  c.substep_h = obj.number("substep_h", c.substep_h);
  c.max_particles = obj.integer("max_particles", c.max_particles);
  c.min_time_A = obj.number("min_time_A", c.min_time_A);
  c.good_offset = obj.number("good_offset", c.good_offset);
  c.bridge = obj.boolean("bridge", c.bridge);
  c.branching_rate = obj.number("branching_rate", c.branching_rate);
  try {
    c.check();
  } catch (const std::invalid_argument& e) {
    obj.fail("", std::string("invalid simulation settings: ") + e.what());
  } catch (const DomainError& e) {
    obj.fail("", std::string("invalid simulation settings: ") + e.what());
  }
  return c;
}

ExperimentPlan parse_plan(const JsonDoc& doc) {
  const ObjectReader obj(doc, "");
  obj.allow({"profile", "t_grid", "replicates_per_t", "sim", "estimator", "bootstrap_n", "prune_above", "prune_beta",
             "barrier_C_grid", "seed", "workers", "pz_paths"});
  ExperimentPlan plan =
      default_plan(obj.has("profile") ? parse_profile(doc, "/profile") : SigmaProfile::constant(1.0));
  plan.t_grid = obj.numbers("t_grid", plan.t_grid);
  plan.replicates_per_t = obj.integer("replicates_per_t", plan.replicates_per_t);
  if (obj.has("sim")) plan.sim = parse_sim_config(obj.object("sim"), plan.sim, {});
  if (obj.has("estimator")) {
    try {
      plan.estimator = estimator_from_string(obj.string("estimator"));
    } catch (const std::invalid_argument&) {
      obj.fail("estimator", "'estimator' must be \"median\" or \"mean\"");
    }
  }
  plan.bootstrap_n = obj.integer("bootstrap_n", plan.bootstrap_n);
  plan.prune_above = obj.extended("prune_above", plan.prune_above);
  plan.sim.prune_beta = obj.extended("prune_beta", plan.sim.prune_beta);
  plan.barrier_C_grid = obj.numbers("barrier_C_grid", plan.barrier_C_grid);
  plan.seed = obj.integer("seed", plan.seed);
  plan.workers = obj.integer("workers", plan.workers);
  try {
    plan.check();
  } catch (const std::invalid_argument& e) {
    obj.fail("", std::string("invalid plan: ") + e.what());
  }
  return plan;
}

std::string config_digest(const json& value) {
  const std::string text = value.dump();  // object keys are stored sorted
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

}  // namespace tibbm
