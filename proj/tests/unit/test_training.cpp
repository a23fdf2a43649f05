#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "shipid/error.hpp"
#include "shipid/log.hpp"
#include "shipid/training.hpp"

using namespace shipid;
using namespace testutil;

namespace {

struct WarningCapture {
  std::vector<std::string> messages;
  WarningCapture() {
    set_warning_sink([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { set_warning_sink({}); }
};

std::vector<Window> pick(const std::vector<Window>& all, std::size_t count, std::uint64_t seed) {
  std::vector<Window> w = all;
  std::mt19937_64 rng(seed);
  std::shuffle(w.begin(), w.end(), rng);
  w.resize(std::min(count, w.size()));
  return w;
}

}  // namespace

TEST_CASE("standardization stats are population standard deviations") {
  const Dataset d = small_dataset(3, 8.0, 1);
  const auto s = StandardizationStats::compute(d.trajectories, true);
  std::array<double, 6> sum{}, sq{};
  std::array<double, 3> asum{}, asq{};
  double n = 0;
  for (const auto& t : d.trajectories) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto x = t.states[i].flat();
      for (int j = 0; j < 6; ++j) sum[j] += x[j];
      const double a[3] = {t.accels[i].du, t.accels[i].dvm, t.accels[i].dr};
      for (int j = 0; j < 3; ++j) asum[j] += a[j];
      n += 1;
    }
  }
  for (const auto& t : d.trajectories) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto x = t.states[i].flat();
      for (int j = 0; j < 6; ++j) sq[j] += std::pow(x[j] - sum[j] / n, 2);
      const double a[3] = {t.accels[i].du, t.accels[i].dvm, t.accels[i].dr};
      for (int j = 0; j < 3; ++j) asq[j] += std::pow(a[j] - asum[j] / n, 2);
    }
  }
  for (int j = 0; j < 6; ++j) CHECK(s.sigma_x[j] == doctest::Approx(std::sqrt(sq[j] / n)).epsilon(1e-12));
  for (int j = 0; j < 3; ++j) CHECK(s.sigma_a[j] == doctest::Approx(std::sqrt(asq[j] / n)).epsilon(1e-12));

  Trajectory flat = d.trajectories[0];
  for (auto& st : flat.states) st.pose.X = 1.0;
  const std::vector<Trajectory> one{flat};
  CHECK_THROWS_AS(StandardizationStats::compute(one, false), NumericError);
}

TEST_CASE("make_windows") {
  Dataset d = small_dataset(1, 9.9, 2);  // 100 frames
  REQUIRE(d.trajectories[0].size() == 100);
  WindowShape sh{10, 60};
  CHECK(make_windows(d, sh, LossKind::State).size() == 31);

  Dataset longer = small_dataset(1, 24.9, 3);  // 250 frames
  const auto cover = make_windows(longer, sh, LossKind::State, 60);
  REQUIRE(cover.size() == 4);
  for (std::size_t k = 0; k < cover.size(); ++k) CHECK(cover[k].start == 60 * k);

  WarningCapture cap;
  Dataset shorty = small_dataset(1, 5.0, 4);
  CHECK(make_windows(shorty, sh, LossKind::State).empty());
  CHECK(cap.messages.size() == 1);

  Dataset no_acc = d;
  no_acc.trajectories[0].accels.clear();
  CHECK_THROWS_AS(make_windows(no_acc, sh, LossKind::Acceleration), NumericError);
  CHECK(make_windows(no_acc, sh, LossKind::State).size() == 31);

  for (const auto& w : make_windows(d, {3, 5}, LossKind::State, 7)) {
    CHECK(w.start + 8 <= d.trajectories[w.traj].size());
  }
}

TEST_CASE("acceleration loss formula") {
  const Dataset base = small_dataset(2, 6.0, 5);
  WindowShape sh{3, 4};
  const auto windows = make_windows(base, sh, LossKind::Acceleration, 5);
  LossSetup setup{sh, 0.1};

  SUBCASE("single channel offset") {
    Dataset d = base;
    for (auto& t : d.trajectories)
      for (auto& a : t.accels) a = {1.0, 0.0, 0.0};
    StandardizationStats s;
    s.sigma_a = {2.0, 1.0, 1.0};
    const NetParams zero = NetParams::zeros(Architecture::FiniteMemory, 4, 3);
    CHECK(acc_loss(zero, d, windows, s, setup) == doctest::Approx(0.25).epsilon(1e-15));
  }

  SUBCASE("matches the naive evaluation for both architectures") {
    const auto s = StandardizationStats::compute(base.trajectories, true);
    for (auto arch : {Architecture::FiniteMemory, Architecture::FullMemory}) {
      for (int trial = 0; trial < 5; ++trial) {
        const NetParams p = scaled_net(arch, 5, 3, 10 + trial, base, s);
        const double got = acc_loss(p, base, windows, s, setup);
        const double want = naive_acc_loss(p, base, windows, s, sh);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }

  SUBCASE("zero when predictions equal targets") {
    const auto s = StandardizationStats::compute(base.trajectories, true);
    const NetParams p = scaled_net(Architecture::FiniteMemory, 5, 3, 3, base, s);
    Dataset d = base;
    for (auto& t : d.trajectories) {
      for (std::size_t i = 2; i < t.size(); ++i) {
        std::vector<NetInputFrame> f;
        for (std::size_t j = i - 2; j <= i; ++j) f.push_back(make_frame(t.states[j].vel, t.controls[j], t.winds[j]));
        t.accels[i] = forward_finite(f, p);
      }
    }
    CHECK(acc_loss(p, d, windows, s, setup) < 1e-28);
  }
}

TEST_CASE("rollout loss formula") {
  const Dataset d = small_dataset(2, 6.0, 6);
  const auto s = StandardizationStats::compute(d.trajectories, true);
  WindowShape sh{3, 5};
  const auto windows = make_windows(d, sh, LossKind::State, 4);
  LossSetup setup{sh, 0.1};

  SUBCASE("matches the naive evaluation") {
    for (auto arch : {Architecture::FiniteMemory, Architecture::FullMemory}) {
      for (int trial = 0; trial < 5; ++trial) {
        const NetParams p = scaled_net(arch, 5, 3, 20 + trial, d, s);
        const double got = rollout_loss(p, d, windows, s, setup);
        const double want = naive_rollout_loss(p, d, windows, s, sh, 0.1);
        CHECK(got == doctest::Approx(want).epsilon(1e-11));
      }
    }
  }

  SUBCASE("zero network extrapolates constant velocity") {
    const NetParams zero = NetParams::zeros(Architecture::FiniteMemory, 4, 3);
    double total = 0.0;
    for (const auto& w : windows) {
      const Trajectory& t = d.trajectories[w.traj];
      const StateVector s0 = t.states[w.start + 2];
      for (int k = 1; k <= sh.horizon; ++k) {
        // Closed form: heading grows linearly; position sums the rotated velocity.
        Pose p = s0.pose;
        for (int i = 0; i < k; ++i) {
          const double psi = s0.pose.psi + i * 0.1 * s0.vel.r;
          p.X += 0.1 * (s0.vel.u * std::cos(psi) - s0.vel.vm * std::sin(psi));
          p.Y += 0.1 * (s0.vel.u * std::sin(psi) + s0.vel.vm * std::cos(psi));
        }
        p.psi = s0.pose.psi + k * 0.1 * s0.vel.r;
        const StateVector pred{p, s0.vel};
        const auto e = flat_err(pred, t.states[w.start + 2 + static_cast<std::size_t>(k)]);
        for (int j = 0; j < 6; ++j) total += std::pow(e[j] / s.sigma_x[j], 2);
      }
    }
    total /= static_cast<double>(windows.size()) * sh.horizon;
    CHECK(rollout_loss(zero, d, windows, s, setup) == doctest::Approx(total).epsilon(1e-10));
  }

  SUBCASE("diverging rollouts are reported") {
    NetParams p = scaled_net(Architecture::FiniteMemory, 5, 3, 1, d, s);
    p.W_3.setConstant(1e308);
    p.out_scale.setConstant(1e10);
    CHECK_THROWS_AS(rollout_loss(p, d, windows, s, setup), DivergenceError);
  }
}

TEST_CASE("chunking and threads do not change the loss") {
  const Dataset d = small_dataset(3, 8.0, 7);
  const auto s = StandardizationStats::compute(d.trajectories, true);
  WindowShape sh{3, 5};
  const auto windows = make_windows(d, sh, LossKind::State, 3);
  const NetParams p = scaled_net(Architecture::FiniteMemory, 6, 3, 2, d, s);
  for (auto kind : {LossKind::State, LossKind::Acceleration}) {
    LossSetup one{sh, 0.1, 1, 1};
    LossSetup big{sh, 0.1, 64, 1};
    LossSetup par{sh, 0.1, 5, 3};
    LossSetup seq{sh, 0.1, 5, 1};
    const double a = loss(p, d, windows, kind, s, one);
    CHECK(loss(p, d, windows, kind, s, big) == doctest::Approx(a).epsilon(1e-13));
    CHECK(loss(p, d, windows, kind, s, par) == loss(p, d, windows, kind, s, seq));
    const auto g1 = grad(p, d, windows, kind, s, par).grad.flatten();
    const auto g2 = grad(p, d, windows, kind, s, seq).grad.flatten();
    CHECK(g1 == g2);
  }
}

TEST_CASE("gradients match central differences") {
  const Dataset d = small_dataset(2, 6.0, 8);
  const auto s = StandardizationStats::compute(d.trajectories, true);
  for (auto kind : {LossKind::State, LossKind::Acceleration}) {
    for (auto arch : {Architecture::FiniteMemory, Architecture::FullMemory}) {
      for (int horizon : {1, 5}) {
        CAPTURE(loss_name(kind));
        CAPTURE(arch_name(arch));
        CAPTURE(horizon);
        WindowShape sh{2, horizon};
        const auto windows = pick(make_windows(d, sh, kind, 1), 6, 3);
        LossSetup setup{sh, 0.1};
        const NetParams p = scaled_net(arch, 4, 2, 30 + horizon, d, s);
        const auto g = grad(p, d, windows, kind, s, setup);
        CHECK(g.loss == loss(p, d, windows, kind, s, setup));
        const auto fd = central_diff(
            p, [&](const NetParams& q) { return loss(q, d, windows, kind, s, setup); }, 1e-5);
        CHECK(grad_rel_error(g.grad.flatten(), fd, 1e-3) < (horizon == 1 ? 1e-6 : 1e-4));
      }
    }
  }
}

TEST_CASE("uniform sigma scaling scales the loss and keeps the gradient direction") {
  const Dataset d = small_dataset(2, 6.0, 9);
  const auto s = StandardizationStats::compute(d.trajectories, true);
  StandardizationStats s3 = s;
  for (auto& v : s3.sigma_a) v *= 3.0;
  for (auto& v : s3.sigma_x) v *= 3.0;
  WindowShape sh{2, 4};
  LossSetup setup{sh, 0.1};
  for (auto kind : {LossKind::State, LossKind::Acceleration}) {
    const auto windows = make_windows(d, sh, kind, 5);
    const NetParams p = scaled_net(Architecture::FiniteMemory, 5, 2, 4, d, s);
    const auto g1 = grad(p, d, windows, kind, s, setup);
    const auto g3 = grad(p, d, windows, kind, s3, setup);
    CHECK(g3.loss == doctest::Approx(g1.loss / 9.0).epsilon(1e-12));
    const auto a = g1.grad.flatten(), b = g3.grad.flatten();
    CHECK(a.dot(b) / (a.norm() * b.norm()) >= 1.0 - 1e-10);
  }
}

TEST_CASE("adam") {
  SUBCASE("first step moves by about lr") {
    Eigen::VectorXd x(1), g(1);
    x << 1.0;
    g << 1.0;
    AdamState st;
    adam_step(x, g, st, {0.1});
    CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-6));
  }
  SUBCASE("zero gradient leaves parameters and decays moments") {
    Eigen::VectorXd x(2), g(2);
    x << 1.0, -2.0;
    g << 0.5, 0.5;
    AdamState st;
    adam_step(x, g, st, {0.1});
    const Eigen::VectorXd after = x;
    const Eigen::VectorXd m = st.m, v = st.v;
    adam_step(x, Eigen::VectorXd::Zero(2), st, {0.1});
    CHECK(st.m.isApprox(0.9 * m));
    CHECK(st.v.isApprox(0.999 * v));
    // Parameters still move on momentum, but a fresh state with zero gradient does not.
    AdamState fresh;
    Eigen::VectorXd y = after;
    adam_step(y, Eigen::VectorXd::Zero(2), fresh, {0.1});
    CHECK(y == after);
  }
  SUBCASE("three steps against the recurrences") {
    Eigen::VectorXd x(1);
    x << 0.5;
    AdamState st;
    const double gs[3] = {0.3, -0.2, 0.7};
    double p = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      Eigen::VectorXd g(1);
      g << gs[t - 1];
      adam_step(x, g, st, {0.01});
      m = 0.9 * m + 0.1 * gs[t - 1];
      v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      p -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(x[0] == doctest::Approx(p).epsilon(1e-14));
    }
    CHECK(st.step == 3);
  }
}

TEST_CASE("a small Adam step does not increase the batch loss") {
  const Dataset d = small_dataset(3, 8.0, 10);
  const auto s = StandardizationStats::compute(d.trajectories, true);
  WindowShape sh{2, 4};
  LossSetup setup{sh, 0.1};
  const auto all = make_windows(d, sh, LossKind::State, 1);
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto batch = pick(all, 8, 1000 + trial);
    NetParams p = scaled_net(Architecture::FiniteMemory, 4, 2, 500 + trial, d, s);
    const auto g = grad(p, d, batch, LossKind::State, s, setup);
    AdamState st;
    adam_step(p, g.grad, st, {1e-6});
    ok += loss(p, d, batch, LossKind::State, s, setup) <= g.loss;
  }
  CHECK(ok >= 95);
}

TEST_CASE("split_trajectories") {
  std::vector<std::size_t> tr, va, tr2, va2;
  split_trajectories(10, 0.2, 4, tr, va);
  CHECK(tr.size() == 8);
  CHECK(va.size() == 2);
  split_trajectories(10, 0.2, 4, tr2, va2);
  CHECK(tr == tr2);
  CHECK(va == va2);
  std::vector<std::size_t> all = tr;
  all.insert(all.end(), va.begin(), va.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
  CHECK_THROWS_AS(split_trajectories(1, 0.2, 1, tr, va), UsageError);
  split_trajectories(5, 0.0, 1, tr, va);
  CHECK(va.size() == 1);
}

TEST_CASE("train config files") {
  TrainConfig c;
  c.hidden = 17;
  c.learning_rate = 3e-4;
  c.scale_io = true;
  c.stride = 3;
  std::stringstream ss;
  write_train_config(c, ss);
  const auto path = std::filesystem::temp_directory_path() / "shipid_train_cfg.txt";
  {
    std::ofstream f(path);
    f << ss.str();
  }
  const TrainConfig back = read_train_config(path);
  CHECK(back.hidden == 17);
  CHECK(back.learning_rate == 3e-4);
  CHECK(back.scale_io);
  CHECK(back.stride == 3);
  {
    std::ofstream f(path);
    f << "hidden = 4\nlearning_rat = 1\n";
  }
  CHECK_THROWS_AS(read_train_config(path), UsageError);
  std::filesystem::remove(path);

  TrainConfig defaults;
  CHECK(defaults.batch_size == 512);
  CHECK(defaults.horizon == 60);
  CHECK(defaults.memory == 10);
  CHECK(defaults.effective_lr(LossKind::State) == 2e-5);
  CHECK(defaults.effective_lr(LossKind::Acceleration) == 1e-4);
}

TEST_CASE("training fits a small noise-free set and is reproducible") {
  // Same zigzag under different gusts and initial headings, so the
  // validation trajectory is drawn from the training distribution.
  Dataset d;
  for (int k = 0; k < 5; ++k) {
    ManeuverSpec spec;
    spec.kind = ManeuverLabel::Zigzag;
    spec.duration = 12.0;
    spec.initial_psi = 0.5 * k;
    d.trajectories.push_back(
        gen_trajectory(spec, default_coeffs(), {0.8, 0.3, 0.2, 0.2, 10.0}, 0.1, 1100 + k));
  }
  TrainConfig c;
  c.hidden = 8;
  c.memory = 2;
  c.horizon = 10;
  c.batch_size = 16;
  c.learning_rate = 3e-3;
  c.max_epochs = 40;
  c.patience = 40;
  c.stride = 2;
  c.scale_io = true;
  const auto r1 = train(d, c, LossKind::State, Architecture::FiniteMemory, 5);
  const auto r2 = train(d, c, LossKind::State, Architecture::FiniteMemory, 5);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
    CHECK(r1.log[i].val_loss == r2.log[i].val_loss);
    CHECK(r1.log[i].wall_time == 0.0);
  }
  CHECK(r1.params == r2.params);

  // Validation windows against the zero network.
  Dataset val;
  for (auto i : r1.val_trajectories) val.trajectories.push_back(d.trajectories[i]);
  WindowShape sh{2, 10};
  const auto vw = make_windows(val, sh, LossKind::State, 2);
  LossSetup setup{sh, 0.1};
  NetParams zero = NetParams::zeros(Architecture::FiniteMemory, 8, 2);
  const double base = rollout_loss(zero, val, vw, r1.stats, setup);
  CHECK(r1.best_val_loss < 0.1 * base);
  CHECK(r1.best_val_loss == doctest::Approx(rollout_loss(r1.params, val, vw, r1.stats, setup)).epsilon(1e-12));

  const auto r3 = train(d, c, LossKind::State, Architecture::FiniteMemory, 6);
  CHECK(!(r3.params == r1.params));
}

TEST_CASE("training log format") {
  std::vector<EpochRecord> log{{1, 0.5, 0.25, 0.0}, {2, 0.125, 0.0625, 0.0}};
  std::ostringstream out;
  write_training_log(log, out);
  CHECK(out.str() == "epoch,train_loss,val_loss,wall_time\n1,0.5,0.25,0\n2,0.125,0.0625,0\n");
}
