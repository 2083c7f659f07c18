#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tibbm/profile.hpp"
#include "tibbm/rng.hpp"

namespace tibbm {

enum class SimMode { full, pruned };

std::string to_string(SimMode mode);
SimMode sim_mode_from_string(const std::string& s);

struct SimConfig {
  SigmaProfile profile = SigmaProfile::constant(1.0);
  double T = 10.0;
  SimMode mode = SimMode::full;
  double prune_beta = std::numeric_limits<double>::infinity();
  double barrier_C = 0.0;
  double substep_h = 0.05;
  std::uint64_t seed = 1;
  std::uint64_t max_particles = 100'000'000;
  double min_time_A = 1.0;    // min_position is taken at min(A T^{1/3}, T)
  double good_offset = -1.0;  // start depth below the good corridor's top; < 0 selects min(1, T^{1/3}/2)
  bool bridge = true;         // Brownian-bridge crossing checks between checkpoints
  double branching_rate = 1.0;  // test hook; 0 disables branching
  // Further barrier coefficients checked on the same paths; results land in
  // SimOutcome::extra_crossed, index for index.
  std::vector<double> extra_barrier_C;

  /// Throws std::invalid_argument on an invalid configuration.
  void check() const;
};

struct SimOutcome {
  double m_max = 0.0;  // -inf when pruning removed every particle
  std::uint64_t n_final = 0;
  bool upper_crossed = false;
  double theta = std::numeric_limits<double>::quiet_NaN();  // NaN when no crossing
  std::uint64_t good_count = 0;
  double min_position = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t pruned_count = 0;
  bool truncated = false;
  double first_split_time = 0.0;  // lifetime of the initial particle (may exceed T)
  std::vector<char> extra_crossed;
};

/// T f-bar(t/T) + C log T; the log term is dropped for T <= 1.
double upper_barrier(const SigmaProfile& profile, double T, double C, double t);

/// x in [T f-bar(t/T) - T^{1/3} + offset, T f-bar(t/T) + offset]. offset 0 is
/// the literal good corridor.
bool good_corridor_test(const SigmaProfile& profile, double T, double t, double x, double offset = 0.0);

/// true = keep. Kill iff x < T f-bar(t/T) - beta T^{1/3} - 10.
bool prune_rule(const SigmaProfile& profile, double T, double beta, double t, double x);

/// Precomputed tables for one configuration; `run` simulates one replicate.
///
/// Particles are processed depth first. Each particle draws its lifetime and
/// its end position from its own stream, keyed by its lineage, so a subtree
/// never shifts the randomness of another and pruned runs stay coupled to
/// full runs with the same seed. Intermediate checkpoints are filled in by
/// Brownian-bridge sampling only for particles that can still matter for the
/// barrier or the good corridor.
class Simulator {
 public:
  explicit Simulator(SimConfig config);

  [[nodiscard]] SimOutcome run(StreamKey replicate_key) const;
  [[nodiscard]] const SimConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] double good_offset() const noexcept { return offset_; }
  [[nodiscard]] double min_time() const noexcept { return t_star_; }

  [[nodiscard]] double clock(double t) const noexcept;
  [[nodiscard]] double front(double t) const noexcept;  // T f-bar(t/T)

 private:
  [[nodiscard]] double hermite(const std::vector<double>& val, const std::vector<double>& der, double t) const noexcept;

  SimConfig cfg_;
  double width_ = 0.0;
  double offset_ = 0.0;
  std::vector<double> log_terms_;  // barrier_C first, then extra_barrier_C
  double min_log_term_ = 0.0;
  double t_star_ = 0.0;
  double h_ = 0.0;
  std::size_t n_checkpoints_ = 0;
  // Hermite tables on a fine uniform grid.
  double fine_dt_ = 0.0;
  std::vector<double> clock_, clock_d_, front_, front_d_;
  // Values at checkpoint k * h_.
  std::vector<double> cp_clock_, cp_front_;
};

/// Replicate i of seed s uses StreamKey(s).child(i).
SimOutcome simulate(const SimConfig& config, std::uint64_t replicate);

/// Replicates first..first+n-1, computed on `workers` threads; ordered by index.
std::vector<SimOutcome> run_replicates(const SimConfig& config, std::uint64_t n, std::size_t workers = 1,
                                       std::uint64_t first = 0);

}  // namespace tibbm
