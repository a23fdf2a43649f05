#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "shipid/datagen.hpp"
#include "shipid/netmodel.hpp"
#include "shipid/refmodel.hpp"
#include "shipid/training.hpp"

namespace testutil {

using namespace shipid;

// Short noise-free random maneuvers with a light breeze.
inline Dataset small_dataset(int count, double duration, std::uint64_t seed) {
  Dataset d;
  std::mt19937_64 rng(seed);
  for (int k = 0; k < count; ++k) {
    ManeuverSpec spec = sample_spec(ManeuverLabel::Random, duration, rng);
    WindScenario w{0.8, 0.3, 0.2, 0.2, 10.0};
    Trajectory t = gen_trajectory(spec, default_coeffs(), w, 0.1, seed * 100 + k);
    t.name = "R" + std::to_string(k);
    d.trajectories.push_back(std::move(t));
  }
  return d;
}

// Network with input and output scales that keep activations O(1) on `d`.
inline NetParams scaled_net(Architecture arch, int hidden, int memory, std::uint64_t seed,
                            const Dataset& d, const StandardizationStats& s) {
  NetParams p = NetParams::random(arch, hidden, memory, seed);
  Eigen::Matrix<double, kInputChannels, 1> sq = decltype(sq)::Zero();
  double n = 0;
  for (const auto& t : d.trajectories) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      sq += make_frame(t.states[i].vel, t.controls[i], t.winds[i]).to_vector().cwiseAbs2();
      n += 1;
    }
  }
  for (int c = 0; c < kInputChannels; ++c) p.in_scale[c] = 1.0 / std::sqrt(sq[c] / n + 1e-12);
  p.out_scale = Eigen::Vector3d(s.sigma_a[0], s.sigma_a[1], s.sigma_a[2]);
  return p;
}

// Elementwise relative error, with entries far below the largest gradient
// entry measured against that floor instead.
inline double grad_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor_frac) {
  const double floor = floor_frac * std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a[i]), std::abs(b[i]), floor, 1e-300});
    worst = std::max(worst, std::abs(a[i] - b[i]) / den);
  }
  return worst;
}

template <typename Fn>
Eigen::VectorXd central_diff(const NetParams& p, Fn&& f, double eps) {
  const Eigen::VectorXd x = p.flatten();
  Eigen::VectorXd g(x.size());
  NetParams q = p;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = eps * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    q.unflatten(xp);
    const double fp = f(q);
    q.unflatten(xm);
    const double fm = f(q);
    g[i] = (fp - fm) / (xp[i] - xm[i]);
  }
  return g;
}

inline std::array<double, 6> flat_err(const StateVector& a, const StateVector& b) {
  const auto x = a.flat(), y = b.flat();
  std::array<double, 6> e{};
  for (int j = 0; j < 6; ++j) e[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - y[static_cast<std::size_t>(j)];
  return e;
}

// Direct transcription of the acceleration loss, one window at a time.
inline double naive_acc_loss(const NetParams& p, const Dataset& d, const std::vector<Window>& ws,
                             const StandardizationStats& s, WindowShape sh) {
  double total = 0.0;
  const int len = static_cast<int>(sh.length());
  for (const auto& w : ws) {
    const Trajectory& t = d.trajectories[w.traj];
    auto frame = [&](int k) {
      const std::size_t i = w.start + static_cast<std::size_t>(k);
      return make_frame(t.states[i].vel, t.controls[i], t.winds[i]);
    };
    HiddenState h = HiddenState::zero(p.hidden);
    for (int k = 0; k < len; ++k) {
      Accel a;
      if (p.arch == Architecture::FullMemory) {
        std::tie(a, h) = step_full(frame(k), h, p);
      } else if (k >= sh.memory) {
        std::vector<NetInputFrame> f;
        for (int j = k - sh.memory + 1; j <= k; ++j) f.push_back(frame(j));
        a = forward_finite(f, p);
      }
      if (k < sh.memory) continue;
      const Accel& m = t.accels[w.start + static_cast<std::size_t>(k)];
      total += std::pow((a.du - m.du) / s.sigma_a[0], 2) + std::pow((a.dvm - m.dvm) / s.sigma_a[1], 2) +
               std::pow((a.dr - m.dr) / s.sigma_a[2], 2);
    }
  }
  return total / (static_cast<double>(ws.size()) * sh.horizon);
}

// Direct transcription of the rollout loss with the scalar Euler step.
inline double naive_rollout_loss(const NetParams& p, const Dataset& d, const std::vector<Window>& ws,
                                 const StandardizationStats& s, WindowShape sh, double dt) {
  double total = 0.0;
  const int len = static_cast<int>(sh.length());
  const int m = sh.memory;
  for (const auto& w : ws) {
    const Trajectory& t = d.trajectories[w.traj];
    std::vector<StateVector> x(static_cast<std::size_t>(len));
    for (int k = 0; k < m; ++k) x[static_cast<std::size_t>(k)] = t.states[w.start + static_cast<std::size_t>(k)];
    auto frame = [&](int k) {
      const std::size_t i = w.start + static_cast<std::size_t>(k);
      return make_frame(x[static_cast<std::size_t>(k)].vel, t.controls[i], t.winds[i]);
    };
    HiddenState h = HiddenState::zero(p.hidden);
    const bool full = p.arch == Architecture::FullMemory;
    for (int k = full ? 0 : m - 1; k + 1 < len; ++k) {
      Accel a;
      if (full) {
        std::tie(a, h) = step_full(frame(k), h, p);
        if (k < m - 1) continue;
      } else {
        std::vector<NetInputFrame> f;
        for (int j = k - m + 1; j <= k; ++j) f.push_back(frame(j));
        a = forward_finite(f, p);
      }
      x[static_cast<std::size_t>(k + 1)] = euler_step(x[static_cast<std::size_t>(k)], a, dt);
      const auto e = flat_err(x[static_cast<std::size_t>(k + 1)], t.states[w.start + static_cast<std::size_t>(k + 1)]);
      for (int j = 0; j < 6; ++j) total += std::pow(e[static_cast<std::size_t>(j)] / s.sigma_x[static_cast<std::size_t>(j)], 2);
    }
  }
  return total / (static_cast<double>(ws.size()) * sh.horizon);
}

}  // namespace testutil
