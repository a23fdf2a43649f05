#pragma once

#include <array>
#include <numbers>

namespace shipid {

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Earth-fixed pose. X points north, Y east, psi clockwise from north.
// Heading is kept unwrapped so integration stays continuous.
struct Pose {
  double X = 0.0;
  double Y = 0.0;
  double psi = 0.0;

  bool operator==(const Pose&) const = default;
};

// Ship-fixed velocities; vm is the sway velocity at midship.
struct Velocity {
  double u = 0.0;
  double vm = 0.0;
  double r = 0.0;

  bool operator==(const Velocity&) const = default;
};

// Propeller revolutions [1/s] and rudder angle [rad].
struct Control {
  double n = 0.0;
  double delta = 0.0;

  bool operator==(const Control&) const = default;
};

struct ControlLimits {
  double n_min = -20.0;
  double n_max = 20.0;
  double delta_max = deg2rad(35.0);

  bool contains(const Control& c) const {
    return c.n >= n_min && c.n <= n_max && c.delta >= -delta_max && c.delta <= delta_max;
  }
  Control clamp(Control c) const;
};

// Apparent wind: speed and the direction the relative air flow points to,
// measured from the bow in [0, 2pi).
struct WindObs {
  double U_A = 0.0;
  double gamma_a = 0.0;

  bool operator==(const WindObs&) const = default;
};

// Apparent wind velocity in ship-fixed coordinates.
struct WindVector {
  double wx = 0.0;
  double wy = 0.0;
};

// True wind: speed and the earth-fixed direction it blows toward.
struct TrueWind {
  double U_T = 0.0;
  double xi_w = 0.0;
};

struct Accel {
  double du = 0.0;
  double dvm = 0.0;
  double dr = 0.0;

  bool operator==(const Accel&) const = default;
};

struct StateVector {
  Pose pose;
  Velocity vel;

  // Flattened order (X, u, Y, vm, psi, r).
  std::array<double, 6> flat() const {
    return {pose.X, vel.u, pose.Y, vel.vm, pose.psi, vel.r};
  }
  static StateVector from_flat(const std::array<double, 6>& x) {
    return {{x[0], x[2], x[4]}, {x[1], x[3], x[5]}};
  }

  bool operator==(const StateVector&) const = default;
};

inline constexpr std::array<const char*, 6> kStateChannelNames = {"X", "u", "Y", "vm", "psi", "r"};

struct PoseRate {
  double dX = 0.0;
  double dY = 0.0;
  double dpsi = 0.0;
};

PoseRate pose_rate(const Velocity& vel, double psi);

// One explicit Euler step of the pose kinematics.
Pose euler_pose_step(const Pose& pose, const Velocity& vel, double dt);

WindVector wind_to_vector(const WindObs& w);

// Relative air velocity seen aboard: true wind rotated into the ship frame
// minus the ship's own velocity (u, vm).
WindObs apparent_wind(const TrueWind& true_wind, const Velocity& vel, double psi);

bool is_finite(const StateVector& s);

}  // namespace shipid
