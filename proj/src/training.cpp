#include "shipid/training.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <ostream>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "shipid/error.hpp"
#include "shipid/keyvalue.hpp"
#include "shipid/log.hpp"
#include "shipid/tape.hpp"

namespace shipid {

std::string loss_name(LossKind kind) { return kind == LossKind::State ? "state" : "acc"; }

LossKind parse_loss(const std::string& text) {
  if (text == "state") {
    return LossKind::State;
  }
  if (text == "acc") {
    return LossKind::Acceleration;
  }
  throw UsageError("unknown loss '" + text + "' (expected acc|state)");
}

StandardizationStats StandardizationStats::compute(std::span<const Trajectory> trajectories,
                                                   bool with_accels) {
  std::array<double, 6> sx{}, sxx{};
  std::array<double, 3> sa{}, saa{};
  double count = 0.0;
  for (const auto& tr : trajectories) {
    if (with_accels && !tr.has_accels()) {
      throw NumericError("trajectory '" + tr.name + "' has no accelerations");
    }
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto x = tr.states[i].flat();
      for (std::size_t j = 0; j < 6; ++j) {
        sx[j] += x[j];
      }
      if (with_accels) {
        const Accel& a = tr.accels[i];
        sa[0] += a.du;
        sa[1] += a.dvm;
        sa[2] += a.dr;
      }
      count += 1.0;
    }
  }
  if (count < 2.0) {
    throw NumericError("standardization needs at least two samples");
  }
  std::array<double, 6> mx{};
  std::array<double, 3> ma{};
  for (std::size_t j = 0; j < 6; ++j) {
    mx[j] = sx[j] / count;
  }
  for (std::size_t j = 0; j < 3; ++j) {
    ma[j] = sa[j] / count;
  }
  // Second pass about the mean.
  for (const auto& tr : trajectories) {
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto x = tr.states[i].flat();
      for (std::size_t j = 0; j < 6; ++j) {
        sxx[j] += (x[j] - mx[j]) * (x[j] - mx[j]);
      }
      if (with_accels) {
        const Accel& a = tr.accels[i];
        const std::array<double, 3> av{a.du, a.dvm, a.dr};
        for (std::size_t j = 0; j < 3; ++j) {
          saa[j] += (av[j] - ma[j]) * (av[j] - ma[j]);
        }
      }
    }
  }
  StandardizationStats s;
  for (std::size_t j = 0; j < 6; ++j) {
    s.sigma_x[j] = std::sqrt(sxx[j] / count);
    if (!(s.sigma_x[j] > 0.0)) {
      throw NumericError(std::string("degenerate state channel ") + kStateChannelNames[j]);
    }
  }
  if (with_accels) {
    for (std::size_t j = 0; j < 3; ++j) {
      s.sigma_a[j] = std::sqrt(saa[j] / count);
      if (!(s.sigma_a[j] > 0.0)) {
        throw NumericError("degenerate acceleration channel " + std::to_string(j));
      }
    }
  }
  return s;
}

std::vector<Window> make_windows(const Dataset& data, WindowShape shape, LossKind kind,
                                 std::size_t stride) {
  if (shape.horizon < 1 || shape.memory < 1) {
    throw UsageError("window horizon and memory must be >= 1");
  }
  if (stride < 1) {
    throw UsageError("window stride must be >= 1");
  }
  const std::size_t len = shape.length();
  std::vector<Window> out;
  for (std::size_t k = 0; k < data.trajectories.size(); ++k) {
    const Trajectory& tr = data.trajectories[k];
    if (kind == LossKind::Acceleration && !tr.has_accels()) {
      throw NumericError("acceleration loss needs measured accelerations; trajectory '" +
                         tr.name + "' has none");
    }
    if (tr.size() < len) {
      warn("trajectory '" + tr.name + "' has " + std::to_string(tr.size()) +
           " samples, fewer than one window of " + std::to_string(len) + "; skipped");
      continue;
    }
    for (std::size_t s = 0; s + len <= tr.size(); s += stride) {
      out.push_back({k, s});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batched forward graph

namespace {

using ad::Matrix;
using ad::Tape;
using ad::Var;

struct ParamVars {
  Var W_in;  // 7 x H, rows (W_x0; W_u0; W_w0)
  Var W_x0, W_u0, W_w0, W_r0, W_1, W_2, W_3, b_0, b_1, b_2;
};

ParamVars bind_params(Tape& tape, const NetParams& p) {
  ParamVars v;
  v.W_x0 = tape.parameter(p.W_x0);
  v.W_u0 = tape.parameter(p.W_u0);
  v.W_w0 = tape.parameter(p.W_w0);
  v.W_r0 = tape.parameter(p.W_r0);
  v.W_1 = tape.parameter(p.W_1);
  v.W_2 = tape.parameter(p.W_2);
  v.W_3 = tape.parameter(p.W_3);
  v.b_0 = tape.parameter(p.b_0);
  v.b_1 = tape.parameter(p.b_1);
  v.b_2 = tape.parameter(p.b_2);
  v.W_in = tape.vstack({v.W_x0, v.W_u0, v.W_w0});
  return v;
}

void read_grads(const Tape& tape, const ParamVars& v, NetParams& g) {
  auto take = [&](Var var, auto& dst) {
    const Matrix& gr = tape.grad(var);
    if (gr.size() == 0) {
      dst.setZero();
    } else {
      dst = gr;
    }
  };
  take(v.W_x0, g.W_x0);
  take(v.W_u0, g.W_u0);
  take(v.W_w0, g.W_w0);
  take(v.W_r0, g.W_r0);
  take(v.W_1, g.W_1);
  take(v.W_2, g.W_2);
  take(v.W_3, g.W_3);
  take(v.b_0, g.b_0);
  take(v.b_1, g.b_1);
  take(v.b_2, g.b_2);
}

// Measured channels of a chunk of windows, one matrix per frame, columns are
// windows.
struct ChunkData {
  std::vector<Matrix> pose;    // 3 x B (X, Y, psi)
  std::vector<Matrix> vel;     // 3 x B (u, vm, r)
  std::vector<Matrix> exo;     // 4 x B (n, delta, wx, wy)
  std::vector<Matrix> accel;   // 3 x B
};

ChunkData gather(const Dataset& data, std::span<const Window> windows, std::size_t frames,
                 bool with_accels) {
  const auto B = static_cast<Eigen::Index>(windows.size());
  ChunkData c;
  c.pose.assign(frames, Matrix(3, B));
  c.vel.assign(frames, Matrix(3, B));
  c.exo.assign(frames, Matrix(4, B));
  if (with_accels) {
    c.accel.assign(frames, Matrix(3, B));
  }
  for (Eigen::Index b = 0; b < B; ++b) {
    const Window& w = windows[static_cast<std::size_t>(b)];
    const Trajectory& tr = data.trajectories.at(w.traj);
    if (w.start + frames > tr.size()) {
      throw UsageError("window exceeds trajectory '" + tr.name + "'");
    }
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t i = w.start + f;
      const StateVector& x = tr.states[i];
      const WindVector wv = wind_to_vector(tr.winds[i]);
      c.pose[f].col(b) << x.pose.X, x.pose.Y, x.pose.psi;
      c.vel[f].col(b) << x.vel.u, x.vel.vm, x.vel.r;
      c.exo[f].col(b) << tr.controls[i].n, tr.controls[i].delta, wv.wx, wv.wy;
      if (with_accels) {
        const Accel& a = tr.accels.at(i);
        c.accel[f].col(b) << a.du, a.dvm, a.dr;
      }
    }
  }
  return c;
}

struct GraphBuilder {
  Tape& tape;
  const NetParams& params;
  const ParamVars& pv;
  Eigen::VectorXd in_scale;
  bool scale_in = false;
  bool scale_out = false;

  GraphBuilder(Tape& t, const NetParams& p, const ParamVars& v)
      : tape(t), params(p), pv(v), in_scale(p.in_scale) {
    scale_in = !p.in_scale.isOnes();
    scale_out = !p.out_scale.isOnes();
  }

  Var projection(Var vel, const Matrix& exo) {
    Var input = tape.vstack({vel, tape.constant(exo)});
    if (scale_in) {
      input = tape.row_scale(input, in_scale);
    }
    return tape.matmul_tn(pv.W_in, input);
  }

  Var cell(Var proj, Var z_prev) {
    if (!z_prev.valid()) {
      return tape.centered_tanh(proj, pv.b_0);
    }
    return tape.centered_tanh(proj, pv.b_0, tape.matmul_tn(pv.W_r0, z_prev));
  }

  Var head(Var z1) {
    Var z2 = tape.centered_tanh(tape.matmul_tn(pv.W_1, z1), pv.b_1);
    Var z3 = tape.centered_tanh(tape.matmul_tn(pv.W_2, z2), pv.b_2);
    Var a = tape.matmul_tn(pv.W_3, z3);
    if (scale_out) {
      a = tape.row_scale(a, params.out_scale);
    }
    return a;
  }
};

Var accumulate_sum(Tape& tape, Var total, Var term) {
  return total.valid() ? tape.add(total, term) : term;
}

// Builds the scalar loss for one chunk; `norm` divides the channel-summed
// squared errors (windows * horizon over the whole batch).
Var build_loss(Tape& tape, const NetParams& params, const ParamVars& pv, const ChunkData& c,
               LossKind kind, const StandardizationStats& stats, const LossSetup& setup,
               double norm) {
  GraphBuilder g(tape, params, pv);
  const int m = setup.shape.memory;
  const auto frames = static_cast<int>(setup.shape.length());
  const bool finite = params.arch == Architecture::FiniteMemory;
  if (finite && params.memory != m) {
    throw UsageError("window memory does not match the network's memory steps");
  }
  Var total;

  if (kind == LossKind::Acceleration) {
    Eigen::VectorXd w(3);
    for (int j = 0; j < 3; ++j) {
      w[j] = 1.0 / (stats.sigma_a[static_cast<std::size_t>(j)] *
                    stats.sigma_a[static_cast<std::size_t>(j)] * norm);
    }
    std::vector<Var> proj(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
      proj[static_cast<std::size_t>(f)] =
          g.projection(tape.constant(c.vel[static_cast<std::size_t>(f)]),
                       c.exo[static_cast<std::size_t>(f)]);
    }
    if (finite) {
      for (int k = m; k < frames; ++k) {
        Var z;
        for (int j = k - m + 1; j <= k; ++j) {
          z = g.cell(proj[static_cast<std::size_t>(j)], z);
        }
        Var a = g.head(z);
        total = accumulate_sum(
            tape, total, tape.weighted_sq_error(a, c.accel[static_cast<std::size_t>(k)], w));
      }
    } else {
      Var z;
      for (int k = 0; k < frames; ++k) {
        z = g.cell(proj[static_cast<std::size_t>(k)], z);
        if (k >= m) {
          Var a = g.head(z);
          total = accumulate_sum(
              tape, total, tape.weighted_sq_error(a, c.accel[static_cast<std::size_t>(k)], w));
        }
      }
    }
    return total;
  }

  // Rollout loss. Pose rows (X, Y, psi) and velocity rows (u, vm, r).
  Eigen::VectorXd wp(3), wv(3);
  const auto& sx = stats.sigma_x;
  wp << 1.0 / (sx[0] * sx[0] * norm), 1.0 / (sx[2] * sx[2] * norm), 1.0 / (sx[4] * sx[4] * norm);
  wv << 1.0 / (sx[1] * sx[1] * norm), 1.0 / (sx[3] * sx[3] * norm), 1.0 / (sx[5] * sx[5] * norm);

  std::vector<Var> pose(static_cast<std::size_t>(frames));
  std::vector<Var> vel(static_cast<std::size_t>(frames));
  std::vector<Var> proj(static_cast<std::size_t>(frames));
  for (int f = 0; f < m; ++f) {
    pose[static_cast<std::size_t>(f)] = tape.constant(c.pose[static_cast<std::size_t>(f)]);
    vel[static_cast<std::size_t>(f)] = tape.constant(c.vel[static_cast<std::size_t>(f)]);
  }
  auto projection_at = [&](int f) {
    auto& p = proj[static_cast<std::size_t>(f)];
    if (!p.valid()) {
      p = g.projection(vel[static_cast<std::size_t>(f)], c.exo[static_cast<std::size_t>(f)]);
    }
    return p;
  };

  Var z;
  for (int k = finite ? m - 1 : 0; k + 1 < frames; ++k) {
    Var z1;
    if (finite) {
      for (int j = k - m + 1; j <= k; ++j) {
        z1 = g.cell(projection_at(j), z1);
      }
    } else {
      z = g.cell(projection_at(k), z);
      z1 = z;
      if (k < m - 1) {
        continue;  // seed span: next frame comes from the data
      }
    }
    Var a = g.head(z1);
    const auto ks = static_cast<std::size_t>(k);
    pose[ks + 1] = tape.euler_pose(pose[ks], vel[ks], setup.dt);
    vel[ks + 1] = tape.axpy(vel[ks], setup.dt, a);
    total = accumulate_sum(tape, total, tape.weighted_sq_error(pose[ks + 1], c.pose[ks + 1], wp));
    total = accumulate_sum(tape, total, tape.weighted_sq_error(vel[ks + 1], c.vel[ks + 1], wv));
  }
  return total;
}

struct ChunkResult {
  double loss = 0.0;
  NetParams grad;
};

ChunkResult run_chunk(const NetParams& params, const Dataset& data,
                      std::span<const Window> windows, std::size_t first_index, LossKind kind,
                      const StandardizationStats& stats, const LossSetup& setup, double norm,
                      bool want_grad) {
  Tape tape;
  const ParamVars pv = bind_params(tape, params);
  const ChunkData c = gather(data, windows, setup.shape.length(), kind == LossKind::Acceleration);
  const Var root = build_loss(tape, params, pv, c, kind, stats, setup, norm);
  ChunkResult r;
  r.loss = tape.value(root)(0, 0);
  if (!std::isfinite(r.loss)) {
    std::size_t bad = 0;
    // Re-run the chunk one window at a time to name the culprit.
    for (std::size_t b = 0; b < windows.size(); ++b) {
      Tape t1;
      const ParamVars pv1 = bind_params(t1, params);
      const ChunkData c1 = gather(data, windows.subspan(b, 1), setup.shape.length(),
                                  kind == LossKind::Acceleration);
      const Var root1 = build_loss(t1, params, pv1, c1, kind, stats, setup, norm);
      if (!std::isfinite(t1.value(root1)(0, 0))) {
        bad = b;
        break;
      }
    }
    throw DivergenceError("rollout diverged in window " + std::to_string(first_index + bad),
                          setup.shape.length(), first_index + bad);
  }
  if (want_grad) {
    tape.backward(root);
    r.grad = NetParams::zeros(params.arch, params.hidden, params.memory);
    read_grads(tape, pv, r.grad);
  }
  return r;
}

GradientBundle evaluate_batch(const NetParams& params, const Dataset& data,
                              std::span<const Window> batch, LossKind kind,
                              const StandardizationStats& stats, const LossSetup& setup,
                              bool want_grad) {
  if (batch.empty()) {
    throw UsageError("empty batch");
  }
  params.validate();
  const double norm = static_cast<double>(batch.size()) * setup.shape.horizon;
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, setup.chunk));
  const std::size_t n_chunks = (batch.size() + chunk - 1) / chunk;
  std::vector<ChunkResult> results(n_chunks);
  std::vector<std::exception_ptr> errors(n_chunks);

  auto work = [&](std::size_t k) {
    try {
      const std::size_t first = k * chunk;
      const std::size_t count = std::min(chunk, batch.size() - first);
      results[k] = run_chunk(params, data, batch.subspan(first, count), first, kind, stats,
                             setup, norm, want_grad);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  const std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, setup.jobs)),
                                                 n_chunks);
  if (jobs <= 1) {
    for (std::size_t k = 0; k < n_chunks; ++k) {
      work(k);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n_chunks; k = next++) {
          work(k);
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }

  // Fixed-order reduction keeps results independent of `jobs`.
  GradientBundle out;
  if (want_grad) {
    out.grad = NetParams::zeros(params.arch, params.hidden, params.memory);
    out.grad.in_scale = params.in_scale;
    out.grad.out_scale = params.out_scale;
  }
  for (auto& r : results) {
    out.loss += r.loss;
    if (want_grad) {
      Eigen::VectorXd acc = out.grad.flatten();
      acc += r.grad.flatten();
      out.grad.unflatten(acc);
    }
  }
  return out;
}

}  // namespace

double acc_loss(const NetParams& params, const Dataset& data, std::span<const Window> batch,
                const StandardizationStats& stats, const LossSetup& setup) {
  return evaluate_batch(params, data, batch, LossKind::Acceleration, stats, setup, false).loss;
}

double rollout_loss(const NetParams& params, const Dataset& data, std::span<const Window> batch,
                    const StandardizationStats& stats, const LossSetup& setup) {
  return evaluate_batch(params, data, batch, LossKind::State, stats, setup, false).loss;
}

double loss(const NetParams& params, const Dataset& data, std::span<const Window> batch,
            LossKind kind, const StandardizationStats& stats, const LossSetup& setup) {
  return evaluate_batch(params, data, batch, kind, stats, setup, false).loss;
}

GradientBundle grad(const NetParams& params, const Dataset& data, std::span<const Window> batch,
                    LossKind kind, const StandardizationStats& stats, const LossSetup& setup) {
  return evaluate_batch(params, data, batch, kind, stats, setup, true);
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& g, AdamState& st,
               const AdamConfig& cfg) {
  if (g.size() != params.size()) {
    throw NumericError("adam_step: gradient and parameter sizes differ");
  }
  if (st.m.size() == 0) {
    st.m = Eigen::VectorXd::Zero(params.size());
    st.v = Eigen::VectorXd::Zero(params.size());
    st.step = 0;
  }
  if (st.m.size() != params.size() || st.v.size() != params.size() || st.step < 0) {
    throw NumericError("adam_step: optimizer state does not match parameters");
  }
  ++st.step;
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * g;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  params.array() -=
      cfg.lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + cfg.eps);
}

void adam_step(NetParams& params, const NetParams& g, AdamState& st, const AdamConfig& cfg) {
  Eigen::VectorXd flat = params.flatten();
  adam_step(flat, g.flatten(), st, cfg);
  params.unflatten(flat);
}

// ---------------------------------------------------------------------------
// Configuration

double TrainConfig::effective_lr(LossKind kind) const {
  if (learning_rate > 0.0) {
    return learning_rate;
  }
  return kind == LossKind::State ? 2e-5 : 1e-4;
}

TrainConfig read_train_config(const std::filesystem::path& path) {
  KeyValueReader r(read_key_value_file(path), path.string());
  TrainConfig c;
  c.batch_size = static_cast<int>(r.get_int("batch_size", c.batch_size));
  c.learning_rate = r.get_double("learning_rate", c.learning_rate);
  c.horizon = static_cast<int>(r.get_int("horizon", c.horizon));
  c.memory = static_cast<int>(r.get_int("memory", c.memory));
  c.hidden = static_cast<int>(r.get_int("hidden", c.hidden));
  c.max_epochs = static_cast<int>(r.get_int("max_epochs", c.max_epochs));
  c.patience = static_cast<int>(r.get_int("patience", c.patience));
  c.stride = static_cast<std::size_t>(r.get_int("stride", static_cast<long>(c.stride)));
  c.val_fraction = r.get_double("val_fraction", c.val_fraction);
  c.scale_io = r.get_bool("scale_io", c.scale_io);
  c.chunk = static_cast<int>(r.get_int("chunk", c.chunk));
  r.reject_unknown();
  if (c.batch_size < 1 || c.horizon < 1 || c.memory < 1 || c.hidden < 1 || c.max_epochs < 1 ||
      c.patience < 1 || c.stride < 1 || c.chunk < 1 || !(c.val_fraction > 0.0) ||
      !(c.val_fraction < 1.0) || c.learning_rate < 0.0) {
    throw UsageError(path.string() + ": training configuration out of range");
  }
  return c;
}

void write_train_config(const TrainConfig& c, std::ostream& out) {
  out << "batch_size = " << c.batch_size << '\n'
      << "learning_rate = " << format_double(c.learning_rate) << '\n'
      << "horizon = " << c.horizon << '\n'
      << "memory = " << c.memory << '\n'
      << "hidden = " << c.hidden << '\n'
      << "max_epochs = " << c.max_epochs << '\n'
      << "patience = " << c.patience << '\n'
      << "stride = " << c.stride << '\n'
      << "val_fraction = " << format_double(c.val_fraction) << '\n'
      << "scale_io = " << (c.scale_io ? "true" : "false") << '\n'
      << "chunk = " << c.chunk << '\n';
}

// ---------------------------------------------------------------------------
// Training loop

void split_trajectories(std::size_t count, double val_fraction, std::uint64_t seed,
                        std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5eed5b1175ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(count)));
  const std::size_t nv = std::max<std::size_t>(n_val, count > 1 ? 1 : 0);
  if (count < 2 || nv >= count) {
    throw UsageError("cannot split " + std::to_string(count) +
                     " trajectories into non-empty training and validation sets");
  }
  val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nv));
  train.assign(order.begin() + static_cast<std::ptrdiff_t>(nv), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
}

namespace {

Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx) {
  Dataset out;
  for (std::size_t i : idx) {
    out.trajectories.push_back(data.trajectories[i]);
  }
  return out;
}

// Fixed multiplicative channel scales; keeps the network zero at the origin.
void derive_io_scales(NetParams& p, const Dataset& train_data, const StandardizationStats& st) {
  Eigen::Matrix<double, kInputChannels, 1> sum2 = decltype(sum2)::Zero();
  double count = 0.0;
  for (const auto& tr : train_data.trajectories) {
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const NetInputFrame f = make_frame(tr.states[i].vel, tr.controls[i], tr.winds[i]);
      sum2 += f.to_vector().cwiseAbs2();
      count += 1.0;
    }
  }
  for (int j = 0; j < kInputChannels; ++j) {
    const double rms = std::sqrt(sum2[j] / count);
    p.in_scale[j] = rms > 0.0 ? 1.0 / rms : 1.0;
  }
  // Accelerations are of order (velocity spread) / (10 s).
  p.out_scale << 0.1 * st.sigma_x[1], 0.1 * st.sigma_x[3], 0.1 * st.sigma_x[5];
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, LossKind kind,
                  Architecture arch, std::uint64_t seed, const EpochCallback& on_epoch) {
  if (data.trajectories.empty()) {
    throw UsageError("training dataset is empty");
  }
  TrainResult result;
  split_trajectories(data.trajectories.size(), config.val_fraction, seed, result.train_trajectories,
                     result.val_trajectories);
  const Dataset train_data = subset(data, result.train_trajectories);
  const Dataset val_data = subset(data, result.val_trajectories);

  result.stats = StandardizationStats::compute(train_data.trajectories,
                                               kind == LossKind::Acceleration);

  const WindowShape shape{config.memory, config.horizon};
  const std::vector<Window> train_windows = make_windows(train_data, shape, kind, config.stride);
  const std::vector<Window> val_windows = make_windows(val_data, shape, kind, config.stride);
  if (train_windows.empty() || val_windows.empty()) {
    throw UsageError("training or validation split yields no windows");
  }

  NetParams params = NetParams::random(arch, config.hidden, config.memory, seed);
  if (config.scale_io) {
    derive_io_scales(params, train_data, result.stats);
  }

  const LossSetup setup{shape, train_data.trajectories.front().dt, config.chunk, config.jobs};
  const AdamConfig adam{config.effective_lr(kind)};
  AdamState opt;
  std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL);
  std::vector<Window> order = train_windows;

  result.params = params;
  result.best_val_loss = loss(params, val_data, val_windows, kind, result.stats, setup);
  result.best_epoch = 0;
  int since_best = 0;
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t first = 0; first < order.size(); first += bs) {
      const std::size_t count = std::min(bs, order.size() - first);
      const std::span<const Window> batch(order.data() + first, count);
      const GradientBundle gb = grad(params, train_data, batch, kind, result.stats, setup);
      weighted += gb.loss * static_cast<double>(count);
      adam_step(params, gb.grad, opt, adam);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = weighted / static_cast<double>(order.size());
    double val = 0.0;
    try {
      val = loss(params, val_data, val_windows, kind, result.stats, setup);
    } catch (const DivergenceError&) {
      val = std::numeric_limits<double>::infinity();
    }
    rec.val_loss = val;
    if (config.record_wall_time) {
      rec.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    result.log.push_back(rec);
    if (on_epoch) {
      on_epoch(rec);
    }
    if (val < result.best_val_loss) {
      result.best_val_loss = val;
      result.best_epoch = epoch;
      result.params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

void write_training_log(const std::vector<EpochRecord>& log, std::ostream& out) {
  out << "epoch,train_loss,val_loss,wall_time\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss)
        << ',' << format_double(r.wall_time) << '\n';
  }
}

}  // namespace shipid
