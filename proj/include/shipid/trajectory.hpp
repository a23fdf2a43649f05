#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "shipid/kinematics.hpp"

namespace shipid {

enum class ManeuverLabel { Turning, Zigzag, Random, Berthing };

char label_code(ManeuverLabel label);
std::string label_name(ManeuverLabel label);
std::optional<ManeuverLabel> label_from_code(char code);

// Uniformly sampled record of one maneuver. `accels` is either empty or the
// same length as `states`.
struct Trajectory {
  std::string name;
  ManeuverLabel label = ManeuverLabel::Turning;
  double dt = 0.1;
  std::vector<double> t;
  std::vector<StateVector> states;
  std::vector<Control> controls;
  std::vector<WindObs> winds;
  std::vector<Accel> accels;

  std::size_t size() const { return states.size(); }
  bool has_accels() const { return !accels.empty(); }
  double duration() const { return size() > 1 ? dt * static_cast<double>(size() - 1) : 0.0; }

  // Throws NumericError if channel lengths disagree or any value is non-finite.
  void validate() const;

  Trajectory slice(std::size_t begin, std::size_t count) const;

  bool operator==(const Trajectory&) const = default;
};

struct Dataset {
  std::vector<Trajectory> trajectories;

  double total_duration() const;
  bool has_accels() const;
  bool operator==(const Dataset&) const = default;
};

}  // namespace shipid
