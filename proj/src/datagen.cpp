#include "shipid/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "shipid/error.hpp"
#include "shipid/keyvalue.hpp"
#include "shipid/log.hpp"

namespace shipid {

namespace {

constexpr std::array<ManeuverLabel, 4> kLabels = {ManeuverLabel::Turning, ManeuverLabel::Zigzag,
                                                  ManeuverLabel::Random, ManeuverLabel::Berthing};

std::size_t label_index(ManeuverLabel l) { return static_cast<std::size_t>(l); }

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

void check_control(const Control& c, const ControlLimits& lim, const std::string& what) {
  if (!std::isfinite(c.n) || !std::isfinite(c.delta) || !lim.contains(c)) {
    throw UsageError(what + " command outside the control limits");
  }
}

// Steps needed to cover `duration` seconds at `dt`.
std::size_t steps_for(double duration, double dt) {
  return static_cast<std::size_t>(std::llround(duration / dt));
}

}  // namespace

void ManeuverSpec::validate(const ControlLimits& lim) const {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw UsageError("maneuver duration must be positive");
  }
  if (!std::isfinite(initial_psi)) {
    throw UsageError("initial heading must be finite");
  }
  check_control({initial_n, 0.0}, lim, "initial");
  switch (kind) {
    case ManeuverLabel::Turning:
      check_control({turning.n, turning.delta}, lim, "turning");
      break;
    case ManeuverLabel::Zigzag:
      check_control({zigzag.n, zigzag.delta}, lim, "zigzag");
      if (!(zigzag.psi_switch > 0.0) || std::abs(zigzag.first_sign) != 1.0) {
        throw UsageError("zigzag needs a positive switch angle and first_sign of +-1");
      }
      break;
    case ManeuverLabel::Random:
      if (!(random.mean_dwell > 0.0) || random.n_min > random.n_max ||
          random.n_min < lim.n_min || random.n_max > lim.n_max ||
          !(random.delta_max >= 0.0) || random.delta_max > lim.delta_max) {
        throw UsageError("random maneuver ranges outside the control limits");
      }
      break;
    case ManeuverLabel::Berthing: {
      const BerthingParams& b = berthing;
      check_control({b.n_approach, b.delta_approach}, lim, "berthing approach");
      check_control({0.0, b.delta_coast}, lim, "berthing coast");
      check_control({b.n_reverse, 0.0}, lim, "berthing reverse");
      check_control({0.0, b.delta_settle}, lim, "berthing settle");
      if (!(b.n_reverse < 0.0) || b.t_approach < 0.0 || b.t_coast < 0.0 ||
          !(b.settle_period > 0.0)) {
        throw UsageError("berthing needs reverse thrust and non-negative phase times");
      }
      break;
    }
  }
}

void NoiseSpec::validate() const {
  if (!(pos_sigma >= 0.0) || !(r_sigma >= 0.0) || !(accel_sigma >= 0.0) ||
      !std::isfinite(pos_sigma) || !std::isfinite(r_sigma) || !std::isfinite(accel_sigma)) {
    throw UsageError("noise sigmas must be finite and non-negative");
  }
}

double steady_speed(double n, const RefModelCoeffs& coeffs) {
  auto surge_force = [&](double u) {
    const Velocity v{u, 0.0, 0.0};
    return hull_forces(v, coeffs).Xf + prop_rudder_forces(v, {n, 0.0}, coeffs).Xf;
  };
  double lo = -10.0;
  double hi = 10.0;
  if (surge_force(lo) < 0.0 || surge_force(hi) > 0.0) {
    throw NumericError("steady_speed: no equilibrium in [-10, 10] m/s");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    (surge_force(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<Control> gen_controls(const ManeuverSpec& spec, double dt, std::uint64_t seed) {
  spec.validate();
  if (!(dt > 0.0)) {
    throw UsageError("dt must be positive");
  }
  const std::size_t n = steps_for(spec.duration, dt) + 1;
  std::vector<Control> out;
  out.reserve(n);
  switch (spec.kind) {
    case ManeuverLabel::Turning:
      out.assign(n, Control{spec.turning.n, spec.turning.delta});
      return out;
    case ManeuverLabel::Random: {
      const RandomParams& p = spec.random;
      std::mt19937_64 rng = stream(seed, 1);
      std::exponential_distribution<double> dwell(1.0 / p.mean_dwell);
      std::uniform_real_distribution<double> n_dist(p.n_min, p.n_max);
      std::uniform_real_distribution<double> d_dist(-p.delta_max, p.delta_max);
      double next_switch = 0.0;
      Control current;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = dt * static_cast<double>(i);
        while (t >= next_switch) {
          current = {n_dist(rng), d_dist(rng)};
          next_switch += dwell(rng);
        }
        out.push_back(current);
      }
      return out;
    }
    case ManeuverLabel::Zigzag:
    case ManeuverLabel::Berthing:
      break;
  }
  throw UsageError(label_name(spec.kind) + " commands depend on the state; use gen_trajectory");
}

namespace {

// Ornstein-Uhlenbeck gust process sampled on the simulation grid.
class GustModel {
 public:
  GustModel(const WindScenario& w, double dt, std::uint64_t seed)
      : w_(w), rng_(stream(seed, 2)) {
    if (w.gust_tau > 0.0) {
      decay_ = std::exp(-dt / w.gust_tau);
    }
    const double k = std::sqrt(1.0 - decay_ * decay_);
    speed_step_ = w.gust_speed_sigma * k;
    dir_step_ = w.gust_dir_sigma * k;
    // Start from the stationary distribution.
    speed_ = w.gust_speed_sigma * normal_(rng_);
    dir_ = w.gust_dir_sigma * normal_(rng_);
  }

  TrueWind current() const {
    return {std::max(0.0, w_.mean_speed + speed_), w_.mean_direction + dir_};
  }

  void advance() {
    speed_ = decay_ * speed_ + speed_step_ * normal_(rng_);
    dir_ = decay_ * dir_ + dir_step_ * normal_(rng_);
  }

 private:
  WindScenario w_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  double decay_ = 0.0;
  double speed_step_ = 0.0;
  double dir_step_ = 0.0;
  double speed_ = 0.0;
  double dir_ = 0.0;
};

// Command policy for the closed-loop maneuvers.
class Controller {
 public:
  Controller(const ManeuverSpec& spec, double dt, std::uint64_t seed) : spec_(spec) {
    if (spec.kind == ManeuverLabel::Turning || spec.kind == ManeuverLabel::Random) {
      open_loop_ = gen_controls(spec, dt, seed);
    }
    sign_ = spec.zigzag.first_sign;
  }

  Control command(std::size_t i, double t, const StateVector& x) {
    switch (spec_.kind) {
      case ManeuverLabel::Turning:
      case ManeuverLabel::Random:
        return open_loop_[i];
      case ManeuverLabel::Zigzag:
        return zigzag(x);
      case ManeuverLabel::Berthing:
        return berthing(t, x);
    }
    return {};
  }

 private:
  Control zigzag(const StateVector& x) {
    const ZigzagParams& z = spec_.zigzag;
    // Positive rudder turns the ship to port, i.e. towards negative heading.
    const double dpsi = x.pose.psi - spec_.initial_psi;
    if (sign_ > 0.0 && dpsi <= -z.psi_switch) {
      sign_ = -1.0;
    } else if (sign_ < 0.0 && dpsi >= z.psi_switch) {
      sign_ = 1.0;
    }
    return {z.n, sign_ * z.delta};
  }

  Control berthing(double t, const StateVector& x) {
    const BerthingParams& b = spec_.berthing;
    if (phase_ == 0 && t >= b.t_approach) {
      phase_ = 1;
    }
    if (phase_ == 1 && t >= b.t_approach + b.t_coast) {
      phase_ = 2;
    }
    if (phase_ == 2 && x.vel.u <= b.stop_speed) {
      phase_ = 3;
      settle_start_ = t;
    }
    switch (phase_) {
      case 0:
        return {b.n_approach, b.delta_approach};
      case 1:
        return {0.0, b.delta_coast};
      case 2:
        return {b.n_reverse, 0.0};
      default: {
        const double cycles = (t - settle_start_) / b.settle_period;
        const double frac = cycles - std::floor(cycles);
        return {0.0, frac < 0.5 ? b.delta_settle : -b.delta_settle};
      }
    }
  }

  ManeuverSpec spec_;
  std::vector<Control> open_loop_;
  double sign_ = 1.0;
  int phase_ = 0;
  double settle_start_ = 0.0;
};

}  // namespace

Trajectory gen_trajectory(const ManeuverSpec& spec, const RefModelCoeffs& coeffs,
                          const WindScenario& wind, double dt, std::uint64_t seed,
                          double pond_half_size) {
  spec.validate();
  coeffs.validate();
  if (!(dt > 0.0)) {
    throw UsageError("dt must be positive");
  }
  const std::size_t n = steps_for(spec.duration, dt) + 1;
  Controller controller(spec, dt, seed);
  GustModel gusts(wind, dt, seed);
  const ControlLimits limits;

  Trajectory tr;
  tr.label = spec.kind;
  tr.dt = dt;
  tr.t.reserve(n);
  tr.states.reserve(n);
  tr.controls.reserve(n);
  tr.winds.reserve(n);
  tr.accels.reserve(n);

  StateVector x;
  x.pose.psi = spec.initial_psi;
  x.vel.u = steady_speed(spec.initial_n, coeffs);
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(x)) {
      throw DivergenceError("gen_trajectory: non-finite state at step " + std::to_string(i), i);
    }
    if (pond_half_size > 0.0 &&
        (std::abs(x.pose.X) > pond_half_size || std::abs(x.pose.Y) > pond_half_size)) {
      break;
    }
    const double t = dt * static_cast<double>(i);
    const Control c = limits.clamp(controller.command(i, t, x));
    const WindObs w = apparent_wind(gusts.current(), x.vel, x.pose.psi);
    const Accel a = accel(x, c, w, coeffs);
    tr.t.push_back(t);
    tr.states.push_back(x);
    tr.controls.push_back(c);
    tr.winds.push_back(w);
    tr.accels.push_back(a);
    x = euler_step(x, a, dt);
    gusts.advance();
  }
  return tr;
}

Trajectory add_noise(const Trajectory& traj, const NoiseSpec& noise, std::uint64_t seed) {
  noise.validate();
  if (noise.is_zero()) {
    return traj;
  }
  const std::size_t n = traj.size();
  const double dt = traj.dt;
  std::mt19937_64 rng = stream(seed, 3);
  std::normal_distribution<double> normal;

  // Position noise on n+2 fixes so every sample has a forward difference,
  // and every velocity sample a forward difference of its own.
  std::vector<double> ex(n + 2), ey(n + 2);
  for (std::size_t i = 0; i < n + 2; ++i) {
    ex[i] = noise.pos_sigma * normal(rng);
    ey[i] = noise.pos_sigma * normal(rng);
  }
  auto vel_noise = [&](std::size_t i, double psi) {
    const double dX = (ex[i + 1] - ex[i]) / dt;
    const double dY = (ey[i + 1] - ey[i]) / dt;
    const double c = std::cos(psi);
    const double s = std::sin(psi);
    return std::array<double, 2>{c * dX + s * dY, -s * dX + c * dY};
  };
  std::vector<double> er(n + 1);
  for (auto& e : er) {
    e = noise.r_sigma * normal(rng);
  }

  Trajectory out = traj;
  for (std::size_t i = 0; i < n; ++i) {
    const double psi = traj.states[i].pose.psi;
    const auto nv = vel_noise(i, psi);
    StateVector& x = out.states[i];
    x.pose.X += ex[i];
    x.pose.Y += ey[i];
    x.vel.u += nv[0];
    x.vel.vm += nv[1];
    x.vel.r += er[i];
    if (!out.has_accels()) {
      continue;
    }
    Accel& a = out.accels[i];
    if (noise.accel_from_differencing) {
      // Difference of consecutive velocity errors, both taken in frame i.
      const auto nv1 = vel_noise(i + 1, psi);
      a.du += (nv1[0] - nv[0]) / dt;
      a.dvm += (nv1[1] - nv[1]) / dt;
      a.dr += (er[i + 1] - er[i]) / dt;
    } else {
      a.du += noise.accel_sigma * normal(rng);
      a.dvm += noise.accel_sigma * normal(rng);
      a.dr += noise.accel_sigma * normal(rng);
    }
  }
  return out;
}

ManeuverSpec sample_spec(ManeuverLabel kind, double duration, std::mt19937_64& rng) {
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto sign = [&] { return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0; };
  ManeuverSpec s;
  s.kind = kind;
  s.duration = duration;
  s.initial_psi = uni(-kPi, kPi);
  switch (kind) {
    case ManeuverLabel::Turning:
      s.turning.n = uni(6.0, 20.0);
      s.turning.delta = sign() * deg2rad(uni(10.0, 35.0));
      s.initial_n = s.turning.n;
      break;
    case ManeuverLabel::Zigzag: {
      const double angle = std::bernoulli_distribution(0.5)(rng) ? 10.0 : 20.0;
      s.zigzag.delta = deg2rad(angle);
      s.zigzag.psi_switch = deg2rad(angle);
      s.zigzag.n = uni(6.0, 20.0);
      s.zigzag.first_sign = sign();
      s.initial_n = s.zigzag.n;
      break;
    }
    case ManeuverLabel::Random:
      s.initial_n = uni(0.0, 20.0);
      break;
    case ManeuverLabel::Berthing: {
      BerthingParams& b = s.berthing;
      b.n_approach = uni(4.0, 8.0);
      b.delta_approach = deg2rad(uni(-5.0, 5.0));
      b.t_approach = uni(10.0, 20.0);
      b.delta_coast = sign() * deg2rad(uni(10.0, 35.0));
      b.t_coast = uni(5.0, 10.0);
      b.n_reverse = -uni(14.0, 20.0);
      b.delta_settle = deg2rad(uni(10.0, 35.0));
      b.settle_period = uni(6.0, 14.0);
      s.initial_n = b.n_approach;
      break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Recipes

double Recipe::total_duration() const {
  return duration[0] + duration[1] + duration[2] + duration[3];
}

void Recipe::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw UsageError("recipe '" + name + "': dt must be positive");
  }
  for (std::size_t k = 0; k < 4; ++k) {
    if (!(duration[k] >= 0.0) || !std::isfinite(duration[k])) {
      throw UsageError("recipe '" + name + "': class durations must be non-negative");
    }
    if (!(length[k] > dt)) {
      throw UsageError("recipe '" + name + "': trajectory lengths must exceed dt");
    }
  }
  if (!(total_duration() > 0.0)) {
    throw UsageError("recipe '" + name + "': total duration is zero");
  }
  if (!(pond_half_size >= 0.0)) {
    throw UsageError("recipe '" + name + "': pond.half_size must be >= 0");
  }
  noise.validate();
}

Recipe preset_recipe(const std::string& name) {
  Recipe r;
  r.name = name;
  // Seconds of T, Z, R, B per preset.
  if (name == "TZB") {
    r.duration = {1490.0, 737.1, 0.0, 335.8};
  } else if (name == "TZRB") {
    r.duration = {556.4, 342.9, 1301.2, 335.8};
  } else if (name == "TZRB+") {
    r.duration = {5674.7, 1151.0, 5861.2, 788.9};
  } else if (name == "TEST") {
    r.duration = {424.6, 193.8, 717.9, 380.6};
  } else {
    throw UsageError("unknown recipe preset '" + name + "' (expected TZB|TZRB|TZRB+|TEST)");
  }
  return r;
}

Recipe parse_recipe(std::istream& in, const std::string& source) {
  KeyValueReader kv(parse_key_values(in, source), source);
  Recipe r;
  if (kv.has("preset")) {
    r = preset_recipe(kv.get_string("preset", ""));
  }
  r.name = kv.get_string("name", r.name);
  if (kv.has("total_duration")) {
    const double total = kv.get_double("total_duration", 0.0);
    if (!(total > 0.0) || !(r.total_duration() > 0.0)) {
      throw UsageError(source + ": total_duration needs a positive value and a preset");
    }
    const double f = total / r.total_duration();
    for (double& d : r.duration) {
      d *= f;
    }
  }
  for (ManeuverLabel l : kLabels) {
    const std::string code(1, label_code(l));
    r.duration[label_index(l)] = kv.get_double("duration." + code, r.duration[label_index(l)]);
    r.length[label_index(l)] = kv.get_double("length." + code, r.length[label_index(l)]);
  }
  r.dt = kv.get_double("dt", r.dt);
  r.wind.mean_speed = kv.get_double("wind.mean_speed", r.wind.mean_speed);
  r.wind.mean_direction =
      deg2rad(kv.get_double("wind.mean_direction_deg", rad2deg(r.wind.mean_direction)));
  r.wind.gust_speed_sigma = kv.get_double("wind.gust_speed_sigma", r.wind.gust_speed_sigma);
  r.wind.gust_dir_sigma =
      deg2rad(kv.get_double("wind.gust_dir_sigma_deg", rad2deg(r.wind.gust_dir_sigma)));
  r.wind.gust_tau = kv.get_double("wind.gust_tau", r.wind.gust_tau);
  r.noise.pos_sigma = kv.get_double("noise.pos_sigma", r.noise.pos_sigma);
  r.noise.r_sigma = kv.get_double("noise.r_sigma", r.noise.r_sigma);
  r.noise.accel_from_differencing =
      kv.get_bool("noise.accel_from_differencing", r.noise.accel_from_differencing);
  r.noise.accel_sigma = kv.get_double("noise.accel_sigma", r.noise.accel_sigma);
  r.pond_half_size = kv.get_double("pond.half_size", r.pond_half_size);
  kv.reject_unknown();
  r.validate();
  return r;
}

Recipe read_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open recipe " + path.string());
  }
  return parse_recipe(in, path.string());
}

void write_recipe(const Recipe& r, std::ostream& out) {
  out << "name = " << r.name << '\n';
  for (ManeuverLabel l : kLabels) {
    out << "duration." << label_code(l) << " = " << format_double(r.duration[label_index(l)])
        << '\n';
  }
  for (ManeuverLabel l : kLabels) {
    out << "length." << label_code(l) << " = " << format_double(r.length[label_index(l)])
        << '\n';
  }
  out << "dt = " << format_double(r.dt) << '\n'
      << "wind.mean_speed = " << format_double(r.wind.mean_speed) << '\n'
      << "wind.mean_direction_deg = " << format_double(rad2deg(r.wind.mean_direction)) << '\n'
      << "wind.gust_speed_sigma = " << format_double(r.wind.gust_speed_sigma) << '\n'
      << "wind.gust_dir_sigma_deg = " << format_double(rad2deg(r.wind.gust_dir_sigma)) << '\n'
      << "wind.gust_tau = " << format_double(r.wind.gust_tau) << '\n'
      << "noise.pos_sigma = " << format_double(r.noise.pos_sigma) << '\n'
      << "noise.r_sigma = " << format_double(r.noise.r_sigma) << '\n'
      << "noise.accel_from_differencing = "
      << (r.noise.accel_from_differencing ? "true" : "false") << '\n'
      << "noise.accel_sigma = " << format_double(r.noise.accel_sigma) << '\n'
      << "pond.half_size = " << format_double(r.pond_half_size) << '\n';
}

CompositionSummary summarize(const Dataset& data) {
  CompositionSummary s;
  for (const auto& tr : data.trajectories) {
    s.duration[label_index(tr.label)] += tr.duration();
    ++s.count[label_index(tr.label)];
  }
  return s;
}

Dataset compose_dataset(const Recipe& recipe, const RefModelCoeffs& coeffs, std::uint64_t seed) {
  recipe.validate();
  Dataset out;
  for (ManeuverLabel label : kLabels) {
    const std::size_t c = label_index(label);
    std::size_t remaining = steps_for(recipe.duration[c], recipe.dt);
    if (remaining == 0) {
      continue;
    }
    // Split the class into trajectories of roughly the nominal length.
    const std::size_t nominal = std::max<std::size_t>(1, steps_for(recipe.length[c], recipe.dt));
    std::size_t pieces = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(remaining) /
                                                 static_cast<double>(nominal))));
    std::size_t index = 0;
    // Truncation by the pond can leave a deficit; refill with more pieces.
    for (int guard = 0; remaining > 0 && guard < 10000; ++guard) {
      const std::size_t steps = std::max<std::size_t>(1, remaining / pieces);
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(index)};
      std::mt19937_64 rng(seq);
      const ManeuverSpec spec =
          sample_spec(label, static_cast<double>(steps) * recipe.dt, rng);
      const std::uint64_t traj_seed = rng();
      Trajectory tr = gen_trajectory(spec, coeffs, recipe.wind, recipe.dt, traj_seed,
                                     label == ManeuverLabel::Random ? recipe.pond_half_size : 0.0);
      tr = add_noise(tr, recipe.noise, rng());
      tr.name = std::string(1, label_code(label)) + std::to_string(index);
      ++index;
      if (pieces > 1) {
        --pieces;
      }
      if (tr.size() < 2) {
        continue;
      }
      remaining -= std::min(remaining, tr.size() - 1);
      out.trajectories.push_back(std::move(tr));
    }
    if (remaining > 0) {
      warn("recipe '" + recipe.name + "': class " + label_name(label) + " is " +
           format_double(static_cast<double>(remaining) * recipe.dt) + " s short");
    }
  }
  return out;
}

}  // namespace shipid
