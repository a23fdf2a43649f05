#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "shipid/datagen.hpp"
#include "shipid/netmodel.hpp"
#include "shipid/refmodel.hpp"
#include "shipid/training.hpp"
#include "shipid/trajectory.hpp"

namespace shipid {

// Anything that maps (state history, controls, wind) to accelerations.
using Model = std::variant<NetParams, RefModelCoeffs>;

enum class DivergencePolicy { Throw, Truncate };

inline constexpr double kNoRestart = std::numeric_limits<double>::infinity();

struct RolloutOptions {
  double restart_period = kNoRestart;  // [s]
  // Frames copied from the measurement at the start of every segment. -1
  // picks the model's need: `memory` for networks, 1 for the reference model.
  int seed_frames = -1;
  DivergencePolicy policy = DivergencePolicy::Throw;
  // Limit on |x_j| / sigma_j; needs `stats`. Non-finite states always count.
  double divergence_limit = 1e6;
  std::optional<StandardizationStats> stats;
};

struct RolloutResult {
  // Same length as the measurement unless truncated by divergence. Frame i
  // of `pred.accels` is the model's acceleration at frame i; where a
  // finite-memory network lacks history it holds the measured value (or zero).
  Trajectory pred;
  bool diverged = false;
  std::size_t diverged_step = 0;
  std::vector<std::size_t> segment_starts;
};

// Euler rollout driven by the measured controls and apparent wind. At every
// segment start (each restart_period) the state is reset to the measurement;
// a full-memory network keeps its hidden state across resets.
RolloutResult rollout(const Model& model, const Trajectory& meas, const RolloutOptions& options);

// (1/N) sum_i sum_j ((x_j - x^_j) / sigma_j)^2 over the six state channels.
// Heading is compared unwrapped. Throws UsageError on a length mismatch.
double mse(const Trajectory& pred, const Trajectory& meas, const StandardizationStats& stats);

// Same metric over predicted frames only, across non-overlapping windows of
// `memory + horizon` frames, each rolled out independently from a measured
// seed span of `memory` frames. Trajectories shorter than a window are
// skipped; returns NaN if nothing was scored.
double horizon_mse(const Model& model, std::span<const Trajectory> trajectories,
                   const StandardizationStats& stats, WindowShape shape);

// Restart period used for a maneuver class unless overridden: 100 s for
// random and turning tests, none for the short zigzag and berthing tests.
double default_restart_period(ManeuverLabel label);

struct TrajectoryScore {
  std::string name;
  ManeuverLabel label = ManeuverLabel::Turning;
  double mse = 0.0;
  bool diverged = false;
  std::size_t diverged_step = 0;
};

struct EvalOptions {
  // Overrides the per-class default when set.
  std::optional<double> restart_period;
  double divergence_limit = 1e6;
};

// Rolls `model` over every test trajectory (truncating on divergence) and
// scores it with the test-set statistics. Predictions are appended to
// `predictions` when given.
std::vector<TrajectoryScore> score_model(const Model& model, const Dataset& test,
                                         const StandardizationStats& test_stats,
                                         const EvalOptions& options,
                                         std::vector<Trajectory>* predictions = nullptr);

struct ExperimentConfig {
  std::string name;
  Architecture arch = Architecture::FiniteMemory;
  LossKind loss = LossKind::State;
  Recipe recipe;
};

struct CellResult {
  std::string config;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<TrajectoryScore> scores;
  std::vector<EpochRecord> log;
  std::optional<NetParams> params;
};

struct ClassStat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over runs; 0 for one run
  std::size_t runs = 0;
  std::size_t diverged = 0;
  std::size_t failed = 0;
};

struct RolloutReport {
  std::vector<std::string> configs;
  std::vector<std::uint64_t> seeds;
  std::vector<ManeuverLabel> classes;  // classes present in the test set
  StandardizationStats test_stats;
  std::vector<CellResult> cells;       // config-major, then seed
  std::optional<std::vector<TrajectoryScore>> baseline;

  ClassStat stat(const std::string& config, ManeuverLabel label) const;
  std::optional<double> baseline_mean(ManeuverLabel label) const;
};

struct ExperimentSetup {
  TrainConfig train;
  RefModelCoeffs truth;                   // generates training data
  std::optional<RefModelCoeffs> baseline; // reference-model column
  EvalOptions eval;
  std::uint64_t data_seed = 1;
  int jobs = 1;                           // concurrent cells
};

// Trains every (config, seed) cell on data composed from the config's
// recipe, then scores it on `test`. Failures are recorded per cell.
RolloutReport experiment_matrix(const std::vector<ExperimentConfig>& configs,
                                const std::vector<std::uint64_t>& seeds, const Dataset& test,
                                const ExperimentSetup& setup);

// Rows are maneuver classes; columns are the baseline (if any) and the
// mean, std and diverged count of every config.
void write_report_csv(const RolloutReport& report, std::ostream& out);

// Per-trajectory score listing: config,seed,trajectory,label,mse,diverged,step.
void write_scores_csv(const RolloutReport& report, std::ostream& out);

struct PlotItem {
  std::string name;
  Trajectory meas;
  Trajectory pred;
};

// Writes <name>_track.csv (X-Y overlay) and <name>_series.csv (velocity,
// heading and, when both sides carry them, acceleration overlays) per item.
// Returns the files written.
std::vector<std::filesystem::path> emit_plots(const std::vector<PlotItem>& items,
                                              const std::filesystem::path& dir);

}  // namespace shipid
