#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tibbm/csv.hpp"
#include "tibbm/experiments.hpp"

namespace tibbm {

/// Version baked in at configure time (project version plus git describe).
std::string version_string();

/// Entry point of the tibbm executable. Exit codes: 0 success, 1 runtime
/// failure, 2 configuration or usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Output layouts shared by the executable and the tests.

extern const std::vector<std::string> kSummaryHeader;
extern const std::vector<std::string> kReplicateHeader;

CsvTable summary_table(const std::vector<SummaryRow>& rows, std::uint64_t seed, std::uint64_t bootstrap_n, double speed);
/// Inverse of summary_table for the fields the fitter needs (T, g, valid, ...).
std::vector<SummaryRow> summary_rows(const CsvTable& table);

nlohmann::json fit_to_json(const FitResult& f);
/// Both fits of the valid rows' (T, g) series. A fit that cannot run records
/// {"error": message} instead.
nlohmann::json fits_document(const Series& series, std::uint64_t bootstrap_n, std::uint64_t seed);

nlohmann::json plan_to_json(const ExperimentPlan& plan);
nlohmann::json profile_to_json(const SigmaProfile& profile);

}  // namespace tibbm
