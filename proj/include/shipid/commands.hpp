#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shipid/error.hpp"
#include "shipid/netmodel.hpp"
#include "shipid/training.hpp"

namespace shipid {

// Process exit status for each failure class.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitSchema = 5;

int exit_code(ErrorKind kind);

// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct GenerateArgs {
  std::filesystem::path recipe;
  std::filesystem::path out;
  std::uint64_t seed = 1;
  std::optional<double> dt;
  std::optional<std::filesystem::path> coeffs;  // reference-model coefficients
};

// Writes the dataset to `out` and `<out>.manifest.json`.
void cmd_generate(const GenerateArgs& args);

struct TrainArgs {
  std::filesystem::path data;
  std::optional<std::filesystem::path> config;
  Architecture arch = Architecture::FiniteMemory;
  LossKind loss = LossKind::State;
  std::filesystem::path out;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool timing = false;  // record wall time in the log (makes it non-reproducible)
};

// Writes the checkpoint to `out`, the epoch log to `<out>.log.csv` and
// `<out>.manifest.json`.
void cmd_train(const TrainArgs& args);

struct EvaluateArgs {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path test;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> baseline;
  std::optional<double> restart_period;
  bool plots = true;
};

// Writes report.csv, scores.csv, plots/<checkpoint>/... and manifest.json.
void cmd_evaluate(const EvaluateArgs& args);

enum class Study { LossComparison, ArchComparison, DataComparison };

Study parse_study(const std::string& text);
std::string study_name(Study study);

struct ReplicateArgs {
  Study study = Study::LossComparison;
  std::filesystem::path out_dir;
  std::uint64_t seed = 1;
  int seeds = 3;
  int jobs = 1;
  // Desk scale unless paper_scale is set: ~600 s per recipe, H=32.
  bool paper_scale = false;
  std::optional<std::filesystem::path> config;  // overrides the training config
  double data_duration = 600.0;
};

// Training config used by `replicate` at desk scale.
TrainConfig desk_train_config();

// Generates data, trains every configuration of the study for each seed and
// writes report.csv, scores.csv, logs, checkpoints, plots and manifest.json.
void cmd_replicate(const ReplicateArgs& args);

}  // namespace shipid
