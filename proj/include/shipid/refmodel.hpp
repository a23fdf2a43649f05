#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "shipid/kinematics.hpp"
#include "shipid/trajectory.hpp"

namespace shipid {

// Surrogate hull force coefficients. Nondimensional terms are scaled by
// q = rho*L*d/2 (forces) and q*L (moments); see docs/refmodel.md.
struct HullCoeffs {
  double X_uu = 0.007;   // resistance, X = -q X_uu u|u|
  double X_vv = -0.040;
  double X_vr = 0.35;
  double X_rr = 0.011;
  double Y_v = -0.315;   // times U v
  double Y_r = 0.083;    // times U r L
  double N_v = -0.10;    // Munk-type, times u v
  double N_r = -0.07;    // times U r L
  double Cd_v = 0.6;     // sway cross-flow drag, times v|v|
  double Cd_r = 0.02;    // yaw cross-flow drag, times L^2 r|r|
  double lin_u = 0.1;    // low-speed linear damping [N s/m]
  double lin_v = 2.0;    // [N s/m]
  double lin_r = 1.0;    // [N m s]
};

struct PropCoeffs {
  double D_p = 0.084;   // propeller diameter [m]
  double w_P = 0.40;    // wake fraction
  double t_P = 0.20;    // thrust deduction
  double KT0 = 0.45;    // K_T = KT0 + KT1 J for n > 0
  double KT1 = -0.35;
  double KT_rev = 0.30;  // |K_T| for n < 0
  double Y_rev = 0.0;    // lateral force coefficient for n < 0 (breaks mirror symmetry)
  double N_rev = 0.0;    // yaw moment coefficient for n < 0, times L
};

struct RudderCoeffs {
  double A_R = 0.01;     // rudder area [m^2]
  double f_alpha = 2.45;
  double t_R = 0.2;
  double a_H = 0.3;
  double x_H = -0.45;    // fraction of L
  double x_R = -0.5;     // fraction of L
  double gamma_R = 0.4;  // flow straightening
  double eps = 1.0;      // rudder/propeller wake ratio
  double slip = 0.15;    // slipstream speed per n*D_p for n > 0
};

struct WindCoeffs {
  bool enabled = true;
  double rho_air = 1.2;
  double A_F = 0.10;  // frontal projected area [m^2]
  double A_L = 0.40;  // lateral projected area [m^2]
  double C_X = 0.8;
  double C_Y = 0.9;
  double C_N = 0.1;
};

// Mass properties, geometry and force submodel coefficients. Defaults are a
// synthetic 3 m tanker model; they make no claim of matching a real hull.
struct RefModelCoeffs {
  double rho = 1000.0;
  double L_pp = 3.0;
  double B = 0.49;
  double d = 0.20;
  double m_mass = 244.0;
  double m_x = 19.8;
  double m_y = 200.7;
  double I_zz = 137.25;
  double J_zz = 89.1;
  double x_G = 0.1;
  HullCoeffs hull;
  PropCoeffs prop;
  RudderCoeffs rudder;
  WindCoeffs wind;

  // Throws NumericError naming the violated constraint.
  void validate() const;
};

RefModelCoeffs default_coeffs();

// key=value coefficient files; unknown keys are rejected.
RefModelCoeffs read_coeffs(const std::filesystem::path& path);
RefModelCoeffs parse_coeffs(std::istream& in, const std::string& source);
void write_coeffs(const RefModelCoeffs& coeffs, std::ostream& out);

struct ForceTriple {
  double Xf = 0.0;
  double Yf = 0.0;
  double Nf = 0.0;

  ForceTriple& operator+=(const ForceTriple& o) {
    Xf += o.Xf;
    Yf += o.Yf;
    Nf += o.Nf;
    return *this;
  }
};

ForceTriple hull_forces(const Velocity& vel, const RefModelCoeffs& coeffs);
ForceTriple prop_rudder_forces(const Velocity& vel, const Control& ctrl,
                               const RefModelCoeffs& coeffs);
ForceTriple wind_forces(const WindObs& w, const RefModelCoeffs& coeffs);

// Solves the 3x3 equations of motion for given total external forces.
// Throws NumericError when the mass matrix is numerically singular.
Accel accel_from_forces(const Velocity& vel, const ForceTriple& forces,
                        const RefModelCoeffs& coeffs);

Accel accel(const StateVector& state, const Control& ctrl, const WindObs& w,
            const RefModelCoeffs& coeffs);

// One explicit Euler step; returns the next state.
StateVector euler_step(const StateVector& state, const Accel& a, double dt);

// Open-loop Euler rollout driven by recorded controls and apparent winds.
// Throws DivergenceError if the state becomes non-finite.
Trajectory simulate(const StateVector& initial, std::span<const Control> controls,
                    std::span<const WindObs> winds, double dt, const RefModelCoeffs& coeffs);

}  // namespace shipid
