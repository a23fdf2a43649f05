#include "shipid/trajectory.hpp"

#include <cmath>

#include "shipid/error.hpp"

namespace shipid {

char label_code(ManeuverLabel label) {
  switch (label) {
    case ManeuverLabel::Turning:
      return 'T';
    case ManeuverLabel::Zigzag:
      return 'Z';
    case ManeuverLabel::Random:
      return 'R';
    case ManeuverLabel::Berthing:
      return 'B';
  }
  return '?';
}

std::string label_name(ManeuverLabel label) {
  switch (label) {
    case ManeuverLabel::Turning:
      return "Turning";
    case ManeuverLabel::Zigzag:
      return "Zigzag";
    case ManeuverLabel::Random:
      return "Random";
    case ManeuverLabel::Berthing:
      return "Berthing";
  }
  return "?";
}

std::optional<ManeuverLabel> label_from_code(char code) {
  switch (code) {
    case 'T':
      return ManeuverLabel::Turning;
    case 'Z':
      return ManeuverLabel::Zigzag;
    case 'R':
      return ManeuverLabel::Random;
    case 'B':
      return ManeuverLabel::Berthing;
    default:
      return std::nullopt;
  }
}

void Trajectory::validate() const {
  const std::size_t n = states.size();
  if (t.size() != n || controls.size() != n || winds.size() != n ||
      (!accels.empty() && accels.size() != n)) {
    throw NumericError("trajectory '" + name + "': channel lengths disagree");
  }
  if (!(dt > 0.0)) {
    throw NumericError("trajectory '" + name + "': dt must be positive");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = std::isfinite(t[i]) && is_finite(states[i]) && std::isfinite(controls[i].n) &&
                    std::isfinite(controls[i].delta) && std::isfinite(winds[i].U_A) &&
                    std::isfinite(winds[i].gamma_a) &&
                    (accels.empty() || (std::isfinite(accels[i].du) &&
                                        std::isfinite(accels[i].dvm) &&
                                        std::isfinite(accels[i].dr)));
    if (!ok) {
      throw NumericError("trajectory '" + name + "': non-finite value at row " +
                         std::to_string(i));
    }
  }
}

Trajectory Trajectory::slice(std::size_t begin, std::size_t count) const {
  Trajectory out;
  out.name = name;
  out.label = label;
  out.dt = dt;
  const auto first = static_cast<std::ptrdiff_t>(begin);
  const auto last = static_cast<std::ptrdiff_t>(begin + count);
  out.t.assign(t.begin() + first, t.begin() + last);
  out.states.assign(states.begin() + first, states.begin() + last);
  out.controls.assign(controls.begin() + first, controls.begin() + last);
  out.winds.assign(winds.begin() + first, winds.begin() + last);
  if (has_accels()) {
    out.accels.assign(accels.begin() + first, accels.begin() + last);
  }
  return out;
}

double Dataset::total_duration() const {
  double total = 0.0;
  for (const auto& tr : trajectories) {
    total += tr.duration();
  }
  return total;
}

bool Dataset::has_accels() const {
  for (const auto& tr : trajectories) {
    if (!tr.has_accels()) {
      return false;
    }
  }
  return !trajectories.empty();
}

}  // namespace shipid
