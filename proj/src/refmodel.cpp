#include "shipid/refmodel.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "shipid/error.hpp"
#include "shipid/keyvalue.hpp"

namespace shipid {

namespace {

// Every coefficient-file key bound to its field.
template <typename Coeffs, typename Fn>
void for_each_coeff(Coeffs& c, Fn&& fn) {
  fn("rho", c.rho);
  fn("L_pp", c.L_pp);
  fn("B", c.B);
  fn("d", c.d);
  fn("mass", c.m_mass);
  fn("m_x", c.m_x);
  fn("m_y", c.m_y);
  fn("I_zz", c.I_zz);
  fn("J_zz", c.J_zz);
  fn("x_G", c.x_G);
  fn("hull.X_uu", c.hull.X_uu);
  fn("hull.X_vv", c.hull.X_vv);
  fn("hull.X_vr", c.hull.X_vr);
  fn("hull.X_rr", c.hull.X_rr);
  fn("hull.Y_v", c.hull.Y_v);
  fn("hull.Y_r", c.hull.Y_r);
  fn("hull.N_v", c.hull.N_v);
  fn("hull.N_r", c.hull.N_r);
  fn("hull.Cd_v", c.hull.Cd_v);
  fn("hull.Cd_r", c.hull.Cd_r);
  fn("hull.lin_u", c.hull.lin_u);
  fn("hull.lin_v", c.hull.lin_v);
  fn("hull.lin_r", c.hull.lin_r);
  fn("prop.D_p", c.prop.D_p);
  fn("prop.w_P", c.prop.w_P);
  fn("prop.t_P", c.prop.t_P);
  fn("prop.KT0", c.prop.KT0);
  fn("prop.KT1", c.prop.KT1);
  fn("prop.KT_rev", c.prop.KT_rev);
  fn("prop.Y_rev", c.prop.Y_rev);
  fn("prop.N_rev", c.prop.N_rev);
  fn("rudder.A_R", c.rudder.A_R);
  fn("rudder.f_alpha", c.rudder.f_alpha);
  fn("rudder.t_R", c.rudder.t_R);
  fn("rudder.a_H", c.rudder.a_H);
  fn("rudder.x_H", c.rudder.x_H);
  fn("rudder.x_R", c.rudder.x_R);
  fn("rudder.gamma_R", c.rudder.gamma_R);
  fn("rudder.eps", c.rudder.eps);
  fn("rudder.slip", c.rudder.slip);
  fn("wind.rho_air", c.wind.rho_air);
  fn("wind.A_F", c.wind.A_F);
  fn("wind.A_L", c.wind.A_L);
  fn("wind.C_X", c.wind.C_X);
  fn("wind.C_Y", c.wind.C_Y);
  fn("wind.C_N", c.wind.C_N);
}

}  // namespace

void RefModelCoeffs::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) {
      throw NumericError(std::string("invalid coefficients: ") + what);
    }
  };
  require(m_mass > 0.0, "mass must be positive");
  require(m_x >= 0.0 && m_y >= 0.0, "added masses must be non-negative");
  require(I_zz + J_zz + x_G * x_G * m_mass > 0.0, "yaw inertia must be positive");
  require(L_pp > 0.0 && B > 0.0 && d > 0.0 && rho > 0.0, "geometry and density must be positive");
  bool finite = true;
  for_each_coeff(*this, [&](const char*, double v) { finite = finite && std::isfinite(v); });
  require(finite, "non-finite coefficient");
}

RefModelCoeffs default_coeffs() { return RefModelCoeffs{}; }

RefModelCoeffs parse_coeffs(std::istream& in, const std::string& source) {
  KeyValueReader reader(parse_key_values(in, source), source);
  RefModelCoeffs c;
  for_each_coeff(c, [&](const char* key, double& field) { field = reader.get_double(key, field); });
  c.wind.enabled = reader.get_bool("wind.enabled", c.wind.enabled);
  reader.reject_unknown();
  c.validate();
  return c;
}

RefModelCoeffs read_coeffs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open coefficient file " + path.string());
  }
  return parse_coeffs(in, path.string());
}

void write_coeffs(const RefModelCoeffs& coeffs, std::ostream& out) {
  RefModelCoeffs copy = coeffs;
  for_each_coeff(copy, [&](const char* key, double& v) {
    out << key << " = " << format_double(v) << '\n';
  });
  out << "wind.enabled = " << (coeffs.wind.enabled ? "true" : "false") << '\n';
}

ForceTriple hull_forces(const Velocity& vel, const RefModelCoeffs& c) {
  const HullCoeffs& h = c.hull;
  const double L = c.L_pp;
  const double q = 0.5 * c.rho * L * c.d;
  const double u = vel.u;
  const double v = vel.vm;
  const double r = vel.r;
  const double U = std::hypot(u, v);

  ForceTriple f;
  f.Xf = q * (-h.X_uu * u * std::abs(u) + h.X_vv * v * v + h.X_vr * v * r * L +
              h.X_rr * r * r * L * L) -
         h.lin_u * u;
  f.Yf = q * (h.Y_v * U * v + h.Y_r * U * r * L - h.Cd_v * v * std::abs(v)) - h.lin_v * v;
  f.Nf = q * L * (h.N_v * u * v + h.N_r * U * r * L - h.Cd_r * L * L * r * std::abs(r)) -
         h.lin_r * r;
  return f;
}

ForceTriple prop_rudder_forces(const Velocity& vel, const Control& ctrl,
                               const RefModelCoeffs& c) {
  const PropCoeffs& p = c.prop;
  const RudderCoeffs& rd = c.rudder;
  const double L = c.L_pp;
  const double D = p.D_p;
  const double D4 = D * D * D * D;
  const double n = ctrl.n;
  const double u_p = (1.0 - p.w_P) * vel.u;

  ForceTriple f;
  if (n > 0.0) {
    // rho D^4 n^2 (KT0 + KT1 J) with J = u_p / (n D), written without the division.
    const double thrust = c.rho * (p.KT0 * n * n * D4 + p.KT1 * n * D * D * D * u_p);
    f.Xf = (1.0 - p.t_P) * thrust;
  } else if (n < 0.0) {
    const double thrust = -c.rho * p.KT_rev * n * n * D4;
    f.Xf = (1.0 - p.t_P) * thrust;
    f.Yf = c.rho * p.Y_rev * n * n * D4;
    f.Nf = c.rho * p.N_rev * n * n * D4 * L;
  }

  const double u_R = rd.eps * u_p + (n > 0.0 ? rd.slip * n * D : 0.0);
  const double v_R = rd.gamma_R * (vel.vm + rd.x_R * L * vel.r);
  const double U_R = std::hypot(u_R, v_R);
  // U_R * (flow component normal to the blade) == U_R^2 sin(effective angle).
  const double normal_flow = u_R * std::sin(ctrl.delta) - v_R * std::cos(ctrl.delta);
  const double F_N = 0.5 * c.rho * rd.A_R * rd.f_alpha * U_R * normal_flow;
  const double cd = std::cos(ctrl.delta);
  f.Xf += -(1.0 - rd.t_R) * F_N * std::sin(ctrl.delta);
  f.Yf += (1.0 + rd.a_H) * F_N * cd;
  f.Nf += (rd.x_R + rd.a_H * rd.x_H) * L * F_N * cd;
  return f;
}

ForceTriple wind_forces(const WindObs& w, const RefModelCoeffs& c) {
  if (!c.wind.enabled) {
    return {};
  }
  const WindCoeffs& wc = c.wind;
  const double q = 0.5 * wc.rho_air * w.U_A * w.U_A;
  const double g = w.gamma_a;
  return {q * wc.A_F * wc.C_X * std::cos(g), q * wc.A_L * wc.C_Y * std::sin(g),
          q * wc.A_L * c.L_pp * wc.C_N * std::sin(2.0 * g)};
}

Accel accel_from_forces(const Velocity& vel, const ForceTriple& F, const RefModelCoeffs& c) {
  const double m = c.m_mass;
  const double u = vel.u;
  const double v = vel.vm;
  const double r = vel.r;

  const double m11 = m + c.m_x;
  const double m22 = m + c.m_y;
  const double m23 = c.x_G * m;
  const double m33 = c.I_zz + c.J_zz + c.x_G * c.x_G * m;
  const double det = m22 * m33 - m23 * m23;
  if (!(m11 > 0.0) || !(std::abs(det) > 1e-12 * std::abs(m22 * m33))) {
    throw NumericError("singular mass matrix");
  }

  const double rhs1 = F.Xf + m22 * v * r + c.x_G * m * r * r;
  const double rhs2 = F.Yf - m11 * u * r;
  const double rhs3 = F.Nf - c.x_G * m * u * r;

  Accel a;
  a.du = rhs1 / m11;
  a.dvm = (m33 * rhs2 - m23 * rhs3) / det;
  a.dr = (m22 * rhs3 - m23 * rhs2) / det;
  return a;
}

Accel accel(const StateVector& state, const Control& ctrl, const WindObs& w,
            const RefModelCoeffs& coeffs) {
  ForceTriple total = hull_forces(state.vel, coeffs);
  total += prop_rudder_forces(state.vel, ctrl, coeffs);
  total += wind_forces(w, coeffs);
  return accel_from_forces(state.vel, total, coeffs);
}

StateVector euler_step(const StateVector& state, const Accel& a, double dt) {
  StateVector next;
  next.pose = euler_pose_step(state.pose, state.vel, dt);
  next.vel = {state.vel.u + dt * a.du, state.vel.vm + dt * a.dvm, state.vel.r + dt * a.dr};
  return next;
}

Trajectory simulate(const StateVector& initial, std::span<const Control> controls,
                    std::span<const WindObs> winds, double dt, const RefModelCoeffs& coeffs) {
  if (controls.size() != winds.size()) {
    throw UsageError("simulate: control and wind series lengths differ");
  }
  if (!(dt > 0.0)) {
    throw UsageError("simulate: dt must be positive");
  }
  Trajectory traj;
  traj.dt = dt;
  const std::size_t n = controls.size();
  traj.t.reserve(n);
  traj.states.reserve(n);
  traj.accels.reserve(n);
  traj.controls.assign(controls.begin(), controls.end());
  traj.winds.assign(winds.begin(), winds.end());

  StateVector x = initial;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(x)) {
      throw DivergenceError("simulate: non-finite state at step " + std::to_string(i), i);
    }
    const Accel a = accel(x, controls[i], winds[i], coeffs);
    traj.t.push_back(dt * static_cast<double>(i));
    traj.states.push_back(x);
    traj.accels.push_back(a);
    x = euler_step(x, a, dt);
  }
  return traj;
}

}  // namespace shipid
