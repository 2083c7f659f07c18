#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tibbm/experiments.hpp"
#include "tibbm/profile.hpp"
#include "tibbm/simulator.hpp"

namespace tibbm {

/// Parsed JSON plus the source line of every object member and array element,
/// keyed by JSON pointer, so validation errors can name a line.
class JsonDoc {
 public:
  /// Throws ConfigError (with line) on malformed JSON.
  static JsonDoc parse(const std::string& text);
  /// "-" reads stdin. Throws ConfigError if the file cannot be read.
  static JsonDoc load(const std::string& path);

  [[nodiscard]] const nlohmann::json& root() const noexcept { return root_; }
  [[nodiscard]] const nlohmann::json& at(const std::string& pointer) const;
  /// Line of the pointer, or of its nearest located ancestor.
  [[nodiscard]] int line(const std::string& pointer) const;
  [[noreturn]] void fail(const std::string& pointer, const std::string& message) const;

 private:
  nlohmann::json root_;
  std::map<std::string, int> lines_;
};

/// Typed, strict access to one JSON object: unknown keys and wrong types are
/// reported as ConfigError at the offending line.
class ObjectReader {
 public:
  ObjectReader(const JsonDoc& doc, std::string pointer);

  void allow(std::initializer_list<std::string_view> keys) const;
  [[nodiscard]] bool has(const std::string& key) const;
  [[nodiscard]] std::string pointer(const std::string& key) const;

  [[nodiscard]] double number(const std::string& key, std::optional<double> fallback = std::nullopt) const;
  /// Like number, but also accepts null or "inf" for +infinity.
  [[nodiscard]] double extended(const std::string& key, double fallback) const;
  [[nodiscard]] std::uint64_t integer(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) const;
  [[nodiscard]] bool boolean(const std::string& key, bool fallback) const;
  [[nodiscard]] std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) const;
  [[nodiscard]] std::vector<double> numbers(const std::string& key,
                                            std::optional<std::vector<double>> fallback = std::nullopt) const;
  [[nodiscard]] ObjectReader object(const std::string& key) const;
  [[nodiscard]] const JsonDoc& doc() const noexcept { return *doc_; }
  [[nodiscard]] const nlohmann::json& value() const noexcept { return *obj_; }
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

 private:
  [[nodiscard]] const nlohmann::json& get(const std::string& key) const;
  const JsonDoc* doc_;
  std::string ptr_;
  const nlohmann::json* obj_;
};

/// {"kind": "constant"|"affine"|"exponential-decay", "params": [...]} or
/// {"kind": "tabulated", "knots": [[u, sigma], ...]}.
SigmaProfile parse_profile(const JsonDoc& doc, const std::string& pointer = "");

/// Reads simulation fields (T, mode, prune_beta, ...) on top of `base`.
/// `extra_allowed` lists further keys the caller handles itself.
SimConfig parse_sim_config(const ObjectReader& obj, SimConfig base, std::initializer_list<std::string_view> extra_allowed);

ExperimentPlan parse_plan(const JsonDoc& doc);

/// SHA-256 of the canonical (sorted-key, compact) dump, as lowercase hex.
std::string config_digest(const nlohmann::json& value);

}  // namespace tibbm
