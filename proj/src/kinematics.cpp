#include "shipid/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace shipid {

Control ControlLimits::clamp(Control c) const {
  c.n = std::clamp(c.n, n_min, n_max);
  c.delta = std::clamp(c.delta, -delta_max, delta_max);
  return c;
}

PoseRate pose_rate(const Velocity& vel, double psi) {
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  return {vel.u * c - vel.vm * s, vel.u * s + vel.vm * c, vel.r};
}

Pose euler_pose_step(const Pose& pose, const Velocity& vel, double dt) {
  const PoseRate rate = pose_rate(vel, pose.psi);
  return {pose.X + dt * rate.dX, pose.Y + dt * rate.dY, pose.psi + dt * rate.dpsi};
}

WindVector wind_to_vector(const WindObs& w) {
  return {w.U_A * std::cos(w.gamma_a), w.U_A * std::sin(w.gamma_a)};
}

WindObs apparent_wind(const TrueWind& true_wind, const Velocity& vel, double psi) {
  const double rel = true_wind.xi_w - psi;
  const double ax = true_wind.U_T * std::cos(rel) - vel.u;
  const double ay = true_wind.U_T * std::sin(rel) - vel.vm;
  const double speed = std::hypot(ax, ay);
  if (speed == 0.0) {
    return {0.0, 0.0};
  }
  double gamma = std::atan2(ay, ax);
  if (gamma < 0.0) {
    gamma += 2.0 * kPi;
  }
  // atan2 of a tiny negative ay can round up to exactly 2pi.
  if (gamma >= 2.0 * kPi) {
    gamma = 0.0;
  }
  return {speed, gamma};
}

bool is_finite(const StateVector& s) {
  for (double x : s.flat()) {
    if (!std::isfinite(x)) {
      return false;
    }
  }
  return true;
}

}  // namespace shipid
