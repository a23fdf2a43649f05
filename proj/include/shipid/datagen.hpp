#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "shipid/kinematics.hpp"
#include "shipid/refmodel.hpp"
#include "shipid/trajectory.hpp"

namespace shipid {

struct TurningParams {
  double delta = deg2rad(35.0);
  double n = 10.0;
};

// delta is applied with sign `first_sign` until the heading has changed by
// psi_switch, then reversed, and so on.
struct ZigzagParams {
  double delta = deg2rad(10.0);
  double psi_switch = deg2rad(10.0);
  double n = 10.0;
  double first_sign = 1.0;
};

// Piecewise-constant commands with exponentially distributed dwell times.
struct RandomParams {
  double mean_dwell = 5.0;
  double n_min = -20.0;
  double n_max = 20.0;
  double delta_max = deg2rad(35.0);
};

// Scripted berthing: approach, coast with rudder, reverse thrust until the
// ship stops, then settle with the propeller stopped and alternating rudder.
struct BerthingParams {
  double n_approach = 8.0;
  double delta_approach = 0.0;
  double t_approach = 20.0;
  double delta_coast = deg2rad(20.0);
  double t_coast = 10.0;
  double n_reverse = -15.0;
  double stop_speed = 0.0;  // reverse ends once u <= stop_speed
  double delta_settle = deg2rad(20.0);
  double settle_period = 10.0;
};

struct ManeuverSpec {
  ManeuverLabel kind = ManeuverLabel::Turning;
  double duration = 60.0;
  TurningParams turning;
  ZigzagParams zigzag;
  RandomParams random;
  BerthingParams berthing;
  // Initial surge speed is the steady straight-ahead speed at this n.
  double initial_n = 10.0;
  double initial_psi = 0.0;

  // Throws UsageError for a non-positive duration or out-of-range commands.
  void validate(const ControlLimits& limits = {}) const;
};

// Constant mean true wind plus Ornstein-Uhlenbeck perturbations of its speed
// and direction. gust_* are stationary standard deviations.
struct WindScenario {
  double mean_speed = 0.0;       // [m/s]
  double mean_direction = 0.0;   // direction the wind blows toward [rad]
  double gust_speed_sigma = 0.0; // [m/s]
  double gust_dir_sigma = 0.0;   // [rad]
  double gust_tau = 10.0;        // correlation time [s]
};

struct NoiseSpec {
  double pos_sigma = 0.0;  // GNSS position noise [m]
  double r_sigma = 0.0;    // yaw-rate sensor noise [1/s]
  // Differentiate the noisy velocities to obtain accelerations. When off,
  // accelerations get independent noise of std accel_sigma instead.
  bool accel_from_differencing = true;
  double accel_sigma = 0.0;

  bool is_zero() const {
    return pos_sigma == 0.0 && r_sigma == 0.0 && (accel_from_differencing || accel_sigma == 0.0);
  }
  void validate() const;
};

// Steady straight-ahead surge speed at propeller speed n (bisection).
double steady_speed(double n, const RefModelCoeffs& coeffs);

// Open-loop command series; only defined for Turning and Random. Zigzag and
// berthing need state feedback and throw UsageError.
std::vector<Control> gen_controls(const ManeuverSpec& spec, double dt, std::uint64_t seed);

// Noise-free trajectory with ground-truth accelerations. Feedback maneuvers
// are closed-loop. `pond_half_size` > 0 truncates the trajectory once
// |X| or |Y| exceeds it.
Trajectory gen_trajectory(const ManeuverSpec& spec, const RefModelCoeffs& coeffs,
                          const WindScenario& wind, double dt, std::uint64_t seed,
                          double pond_half_size = 0.0);

// Position noise is propagated to velocities (and optionally accelerations)
// by forward differencing, as if they had been derived from GNSS fixes.
Trajectory add_noise(const Trajectory& traj, const NoiseSpec& noise, std::uint64_t seed);

// Draws a maneuver of the given class with randomized parameters.
ManeuverSpec sample_spec(ManeuverLabel kind, double duration, std::mt19937_64& rng);

struct Recipe {
  std::string name = "custom";
  // Total seconds per class, indexed by ManeuverLabel.
  std::array<double, 4> duration{};
  // Nominal seconds per trajectory; the last one of a class takes the remainder.
  std::array<double, 4> length{100.0, 80.0, 120.0, 150.0};
  double dt = 0.1;
  WindScenario wind{0.8, 0.0, 0.3, deg2rad(20.0), 10.0};
  NoiseSpec noise;
  double pond_half_size = 0.0;

  double total_duration() const;
  void validate() const;
};

// Named mixes TZB, TZRB, TZRB+ and TEST, each with fixed class durations.
Recipe preset_recipe(const std::string& name);

// key = value recipe file. `preset` selects the base mix, `total_duration`
// rescales it, `duration.T` etc. override single classes.
Recipe read_recipe(const std::filesystem::path& path);
Recipe parse_recipe(std::istream& in, const std::string& source);
void write_recipe(const Recipe& recipe, std::ostream& out);

struct CompositionSummary {
  std::array<double, 4> duration{};
  std::array<std::size_t, 4> count{};
};

CompositionSummary summarize(const Dataset& data);

// Deterministic for (recipe, coeffs, seed). Trajectory k of class c draws
// from its own stream seeded by (seed, c, k), so classes are independent.
Dataset compose_dataset(const Recipe& recipe, const RefModelCoeffs& coeffs, std::uint64_t seed);

}  // namespace shipid
