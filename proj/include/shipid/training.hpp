#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shipid/netmodel.hpp"
#include "shipid/trajectory.hpp"

namespace shipid {

enum class LossKind {
  Acceleration,  // standardized error of predicted vs. measured accelerations
  State,         // standardized error of an Euler rollout driven by the network
};

std::string loss_name(LossKind kind);
LossKind parse_loss(const std::string& text);

// Per-channel standard deviations used to standardize losses and the MSE
// metric. sigma_x is in flattened state order (X, u, Y, vm, psi, r).
struct StandardizationStats {
  std::array<double, 3> sigma_a{1.0, 1.0, 1.0};
  std::array<double, 6> sigma_x{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

  // Population standard deviation over every sample of every trajectory.
  // Throws NumericError for a degenerate (zero-spread) channel. Acceleration
  // channels are only computed when `with_accels` is set.
  static StandardizationStats compute(std::span<const Trajectory> trajectories,
                                      bool with_accels);
};

// A window is `memory + horizon` consecutive frames starting at `start`.
// The first `memory` frames are taken from the data; the remaining `horizon`
// frames are predicted and scored.
struct Window {
  std::size_t traj = 0;
  std::size_t start = 0;
};

struct WindowShape {
  int memory = 10;
  int horizon = 60;

  std::size_t length() const { return static_cast<std::size_t>(memory + horizon); }
};

// Sliding windows over every trajectory. Trajectories shorter than one window
// contribute nothing and produce a warning. Throws NumericError when the
// acceleration loss is requested on data without accelerations.
std::vector<Window> make_windows(const Dataset& data, WindowShape shape, LossKind kind,
                                 std::size_t stride = 1);

// Loss value plus the gradient with respect to every trainable tensor.
struct GradientBundle {
  double loss = 0.0;
  NetParams grad;
};

struct LossSetup {
  WindowShape shape;
  double dt = 0.1;
  // Windows per tape; bounds memory use. Result does not depend on it.
  int chunk = 64;
  int jobs = 1;
};

// Mean over windows and scored frames of the channel-summed standardized
// squared acceleration error.
double acc_loss(const NetParams& params, const Dataset& data, std::span<const Window> batch,
                const StandardizationStats& stats, const LossSetup& setup);

// Same reduction over all six state channels of the network-driven rollout.
// Throws DivergenceError naming the window if the rollout goes non-finite.
double rollout_loss(const NetParams& params, const Dataset& data, std::span<const Window> batch,
                    const StandardizationStats& stats, const LossSetup& setup);

double loss(const NetParams& params, const Dataset& data, std::span<const Window> batch,
            LossKind kind, const StandardizationStats& stats, const LossSetup& setup);

GradientBundle grad(const NetParams& params, const Dataset& data, std::span<const Window> batch,
                    LossKind kind, const StandardizationStats& stats, const LossSetup& setup);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update in place. Initializes `state` on first use.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& config);
void adam_step(NetParams& params, const NetParams& grad, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  int batch_size = 512;
  // <= 0 selects the default for the loss kind (2e-5 state, 1e-4 acceleration).
  double learning_rate = 0.0;
  int horizon = 60;
  int memory = 10;
  int hidden = 200;
  int max_epochs = 2000;
  int patience = 100;
  std::size_t stride = 1;
  double val_fraction = 0.2;
  // Standardize network inputs/outputs with fixed per-channel scales derived
  // from the training split. Off means raw physical units.
  bool scale_io = false;
  int chunk = 64;
  int jobs = 1;
  bool record_wall_time = false;

  double effective_lr(LossKind kind) const;
};

TrainConfig read_train_config(const std::filesystem::path& path);
void write_train_config(const TrainConfig& config, std::ostream& out);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  NetParams params;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  StandardizationStats stats;
  std::vector<std::size_t> train_trajectories;
  std::vector<std::size_t> val_trajectories;
};

// Whole-trajectory train/validation split with a seeded shuffle.
// Throws UsageError if either side would be empty.
void split_trajectories(std::size_t count, double val_fraction, std::uint64_t seed,
                        std::vector<std::size_t>& train, std::vector<std::size_t>& val);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam with best-validation snapshot selection and patience-based
// early stopping. Deterministic for a given seed.
TrainResult train(const Dataset& data, const TrainConfig& config, LossKind kind,
                  Architecture arch, std::uint64_t seed, const EpochCallback& on_epoch = {});

void write_training_log(const std::vector<EpochRecord>& log, std::ostream& out);

}  // namespace shipid
