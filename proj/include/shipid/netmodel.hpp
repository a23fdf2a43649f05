#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "shipid/kinematics.hpp"

namespace shipid {

enum class Architecture {
  FullMemory,    // hidden state threads through the whole sequence
  FiniteMemory,  // recomputed from the last m frames at every step
};

std::string arch_name(Architecture arch);
Architecture parse_arch(const std::string& text);

// Network input channels in fixed order (u, vm, r | n, delta | wx, wy).
inline constexpr int kInputChannels = 7;
inline constexpr std::array<const char*, kInputChannels> kInputChannelNames = {
    "u", "vm", "r", "n", "delta", "wx", "wy"};

struct NetInputFrame {
  Velocity vel;
  Control ctrl;
  WindVector wind;

  Eigen::Matrix<double, kInputChannels, 1> to_vector() const;
};

NetInputFrame make_frame(const Velocity& vel, const Control& ctrl, const WindObs& w);

// All weights of the recurrent acceleration model. Matrices are stored as
// (fan-in x fan-out) and applied transposed, so W_x0 is 3 x H.
//
// The scalers are fixed per-channel multipliers (not trained). They default
// to one, i.e. the network sees raw physical units.
struct NetParams {
  Architecture arch = Architecture::FiniteMemory;
  int hidden = 200;
  int memory = 10;

  Eigen::MatrixXd W_x0;
  Eigen::MatrixXd W_u0;
  Eigen::MatrixXd W_w0;
  Eigen::MatrixXd W_r0;
  Eigen::MatrixXd W_1;
  Eigen::MatrixXd W_2;
  Eigen::MatrixXd W_3;
  Eigen::VectorXd b_0;
  Eigen::VectorXd b_1;
  Eigen::VectorXd b_2;

  Eigen::Matrix<double, kInputChannels, 1> in_scale = decltype(in_scale)::Ones();
  Eigen::Vector3d out_scale = Eigen::Vector3d::Ones();

  static NetParams zeros(Architecture arch, int hidden, int memory);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, Uniform(-0.1, 0.1) biases.
  static NetParams random(Architecture arch, int hidden, int memory, std::uint64_t seed);

  // Trainable entries in a fixed order (the order of `for_each_tensor`).
  Eigen::Index num_trainable() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);

  // Visits each trainable tensor as (name, matrix-or-vector).
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    visit_tensors(*this, fn);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    visit_tensors(*this, fn);
  }

  // Throws NumericError on shape or finiteness violations.
  void validate() const;

  bool operator==(const NetParams& o) const;

 private:
  template <typename Self, typename Fn>
  static void visit_tensors(Self& self, Fn& fn) {
    fn("W_x0", self.W_x0);
    fn("W_u0", self.W_u0);
    fn("W_w0", self.W_w0);
    fn("W_r0", self.W_r0);
    fn("W_1", self.W_1);
    fn("W_2", self.W_2);
    fn("W_3", self.W_3);
    fn("b_0", self.b_0);
    fn("b_1", self.b_1);
    fn("b_2", self.b_2);
  }
};

struct HiddenState {
  Eigen::VectorXd z1;

  static HiddenState zero(int hidden) { return {Eigen::VectorXd::Zero(hidden)}; }
};

// tanh(W^T x + b) - tanh(b); zero whenever x is zero.
Eigen::VectorXd layer(const Eigen::VectorXd& input, const Eigen::MatrixXd& W,
                      const Eigen::VectorXd& b);

// One step of the full-memory network.
std::pair<Accel, HiddenState> step_full(const NetInputFrame& frame, const HiddenState& h,
                                        const NetParams& params);

// Finite-memory network on exactly `params.memory` frames, oldest first.
Accel forward_finite(std::span<const NetInputFrame> frames, const NetParams& params);

// Output of the three-layer head given z1.
Accel head(const Eigen::VectorXd& z1, const NetParams& params);

// Checkpoint container: versioned text with architecture metadata, channel
// order and every matrix, written with round-trip exact decimals.
inline constexpr int kCheckpointVersion = 1;
void write_checkpoint(const NetParams& params, std::ostream& out);
void write_checkpoint(const NetParams& params, const std::filesystem::path& path);
NetParams read_checkpoint(std::istream& in, const std::string& source);
NetParams read_checkpoint(const std::filesystem::path& path);

}  // namespace shipid
