#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "shipid/error.hpp"
#include "shipid/fastmath.hpp"
#include "shipid/netmodel.hpp"

using namespace shipid;

namespace {

using Vec = std::vector<double>;

// Straightforward scalar evaluator: out_k = tanh(sum_i W(i,k) x_i + b_k) - tanh(b_k).
Vec naive_layer(const Vec& x, const Eigen::MatrixXd& W, const Eigen::VectorXd& b) {
  Vec out(static_cast<std::size_t>(W.cols()));
  for (Eigen::Index k = 0; k < W.cols(); ++k) {
    double s = b[k];
    for (Eigen::Index i = 0; i < W.rows(); ++i) s += W(i, k) * x[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(k)] = std::tanh(s) - std::tanh(b[k]);
  }
  return out;
}

Vec naive_z1(const NetInputFrame& f, const Vec* prev, const NetParams& p) {
  const double in[7] = {f.vel.u, f.vel.vm, f.vel.r, f.ctrl.n, f.ctrl.delta, f.wind.wx, f.wind.wy};
  Vec z(static_cast<std::size_t>(p.hidden));
  for (int k = 0; k < p.hidden; ++k) {
    double s = p.b_0[k];
    for (int i = 0; i < 3; ++i) s += p.W_x0(i, k) * in[i];
    for (int i = 0; i < 2; ++i) s += p.W_u0(i, k) * in[3 + i];
    for (int i = 0; i < 2; ++i) s += p.W_w0(i, k) * in[5 + i];
    if (prev) {
      for (int i = 0; i < p.hidden; ++i) s += p.W_r0(i, k) * (*prev)[static_cast<std::size_t>(i)];
    }
    z[static_cast<std::size_t>(k)] = std::tanh(s) - std::tanh(p.b_0[k]);
  }
  return z;
}

Accel naive_head(const Vec& z1, const NetParams& p) {
  const Vec z3 = naive_layer(naive_layer(z1, p.W_1, p.b_1), p.W_2, p.b_2);
  double a[3] = {0, 0, 0};
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < p.hidden; ++k) a[j] += p.W_3(k, j) * z3[static_cast<std::size_t>(k)];
  return {a[0], a[1], a[2]};
}

NetInputFrame random_frame(std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  return {{N(rng), N(rng), N(rng)}, {N(rng), N(rng)}, {N(rng), N(rng)}};
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); }

void check_close(const Accel& a, const Accel& b, double tol) {
  CHECK((rel(a.du, b.du) < tol || std::abs(a.du - b.du) < 1e-15));
  CHECK((rel(a.dvm, b.dvm) < tol || std::abs(a.dvm - b.dvm) < 1e-15));
  CHECK((rel(a.dr, b.dr) < tol || std::abs(a.dr - b.dr) < 1e-15));
}

}  // namespace

TEST_CASE("layer") {
  Eigen::MatrixXd W(1, 1);
  W << 2.0;
  Eigen::VectorXd b(1), x(1);
  b << 0.5;
  x << 0.3;
  CHECK(layer(x, W, b)[0] == doctest::Approx(0.33838186450061997).epsilon(1e-14));
  CHECK(layer(x, W, b)[0] == doctest::Approx(std::tanh(1.1) - std::tanh(0.5)).epsilon(1e-14));

  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const Eigen::MatrixXd Wr = Eigen::MatrixXd::Random(5, 4) * 3.0;
    const Eigen::VectorXd br = Eigen::VectorXd::Random(4);
    CHECK(layer(Eigen::VectorXd::Zero(5), Wr, br).isZero(0.0));
    const Eigen::VectorXd xr = Eigen::VectorXd::Random(5);
    const Eigen::VectorXd y0 = layer(xr, Wr, Eigen::VectorXd::Zero(4));
    for (int j = 0; j < 4; ++j) {
      CHECK(y0[j] == doctest::Approx(std::tanh((Wr.transpose() * xr)[j])).epsilon(1e-14));
    }
  }
  CHECK_THROWS(layer(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(5, 4), Eigen::VectorXd::Zero(4)));
}

TEST_CASE("step_full matches a naive evaluator") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const NetParams p = NetParams::random(Architecture::FullMemory, 6, 1, 100 + trial);
    HiddenState h = HiddenState::zero(6);
    Vec hz(6, 0.0);
    for (int t = 0; t < 5; ++t) {
      const auto f = random_frame(rng);
      auto [a, next] = step_full(f, h, p);
      hz = naive_z1(f, t == 0 ? nullptr : &hz, p);
      for (int k = 0; k < 6; ++k) CHECK(next.z1[k] == doctest::Approx(hz[static_cast<std::size_t>(k)]).epsilon(1e-13));
      check_close(a, naive_head(hz, p), 1e-12);
      h = next;
    }
  }
}

TEST_CASE("zero input from zero memory gives zero output") {
  for (int trial = 0; trial < 50; ++trial) {
    const NetParams full = NetParams::random(Architecture::FullMemory, 16, 1, trial);
    auto [a, h] = step_full({}, HiddenState::zero(16), full);
    CHECK(a == Accel{});
    CHECK(h.z1.isZero(0.0));
    const NetParams fin = NetParams::random(Architecture::FiniteMemory, 16, 4, trial);
    const std::vector<NetInputFrame> zeros(4);
    CHECK(forward_finite(zeros, fin) == Accel{});
  }
}

TEST_CASE("nonzero memory gives nonzero output") {
  const NetParams p = NetParams::random(Architecture::FullMemory, 8, 1, 3);
  HiddenState h{Eigen::VectorXd::Constant(8, 0.3)};
  auto [a, next] = step_full({}, h, p);
  CHECK(std::abs(a.du) + std::abs(a.dvm) + std::abs(a.dr) > 0.0);
}

TEST_CASE("forward_finite") {
  std::mt19937_64 rng(5);
  SUBCASE("m = 1 is a feed-forward net") {
    const NetParams p = NetParams::random(Architecture::FiniteMemory, 5, 1, 9);
    const std::vector<NetInputFrame> f{random_frame(rng)};
    check_close(forward_finite(f, p), naive_head(naive_z1(f[0], nullptr, p), p), 1e-12);
  }
  SUBCASE("equals the full-memory unroll") {
    for (int L = 1; L <= 12; ++L) {
      NetParams p = NetParams::random(Architecture::FiniteMemory, 7, L, 50 + L);
      std::vector<NetInputFrame> f;
      for (int i = 0; i < L; ++i) f.push_back(random_frame(rng));
      HiddenState h = HiddenState::zero(7);
      Accel a;
      for (const auto& fr : f) std::tie(a, h) = step_full(fr, h, p);
      check_close(forward_finite(f, p), a, 1e-12);
    }
  }
  SUBCASE("wrong frame count") {
    const NetParams p = NetParams::random(Architecture::FiniteMemory, 5, 3, 9);
    const std::vector<NetInputFrame> f(2);
    CHECK_THROWS_AS(forward_finite(f, p), NumericError);
  }
}

TEST_CASE("outputs are bounded by the head weights") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> N(0.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    NetParams p = NetParams::random(Architecture::FiniteMemory, 6, 3, trial);
    p.W_3 *= 10.0;
    std::vector<NetInputFrame> f(3);
    for (auto& fr : f) fr = {{N(rng), N(rng), N(rng)}, {N(rng), N(rng)}, {N(rng), N(rng)}};
    const Accel a = forward_finite(f, p);
    const double out[3] = {a.du, a.dvm, a.dr};
    for (int j = 0; j < 3; ++j) {
      CHECK(std::abs(out[j]) <= 2.0 * p.W_3.col(j).cwiseAbs().sum());
    }
  }
}

TEST_CASE("forward passes are deterministic") {
  std::mt19937_64 rng(2);
  const NetParams p = NetParams::random(Architecture::FiniteMemory, 9, 4, 1);
  std::vector<NetInputFrame> f;
  for (int i = 0; i < 4; ++i) f.push_back(random_frame(rng));
  CHECK(forward_finite(f, p) == forward_finite(f, p));
  CHECK(NetParams::random(Architecture::FiniteMemory, 9, 4, 1) == p);
  CHECK(!(NetParams::random(Architecture::FiniteMemory, 9, 4, 2) == p));
}

TEST_CASE("random init ranges") {
  const NetParams p = NetParams::random(Architecture::FullMemory, 20, 1, 4);
  CHECK(p.W_x0.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  CHECK(p.W_r0.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(20.0));
  CHECK(p.b_0.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(p.W_3.rows() == 20);
  CHECK(p.W_3.cols() == 3);
}

TEST_CASE("flatten and unflatten") {
  NetParams p = NetParams::random(Architecture::FiniteMemory, 5, 2, 8);
  const Eigen::VectorXd flat = p.flatten();
  CHECK(flat.size() == p.num_trainable());
  CHECK(flat.size() == 7 * 5 + 3 * 5 * 5 + 5 * 3 + 3 * 5);
  NetParams q = NetParams::zeros(Architecture::FiniteMemory, 5, 2);
  q.unflatten(flat);
  CHECK(q == p);
}

TEST_CASE("checkpoint round trip") {
  NetParams p = NetParams::random(Architecture::FullMemory, 6, 3, 21);
  p.in_scale[2] = 3.25;
  p.out_scale[1] = 0.0123456789;
  std::stringstream ss;
  write_checkpoint(p, ss);
  const NetParams back = read_checkpoint(ss, "mem");
  CHECK(back == p);
  CHECK(back.in_scale == p.in_scale);
  CHECK(back.out_scale == p.out_scale);

  std::string text;
  {
    std::stringstream s2;
    write_checkpoint(p, s2);
    text = s2.str();
  }
  std::istringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(truncated, "cut"), MalformedFileError);

  std::string wrong = text;
  const auto pos = wrong.find("shipid-checkpoint 1");
  REQUIRE(pos != std::string::npos);
  wrong.replace(pos, 19, "shipid-checkpoint 7");
  std::istringstream bad(wrong);
  CHECK_THROWS_AS(read_checkpoint(bad, "ver"), SchemaError);
}

TEST_CASE("vectorized tanh agrees with std::tanh") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> wide(-25.0, 25.0);
  std::uniform_real_distribution<double> narrow(-0.2, 0.2);
  Eigen::ArrayXd x(20006);
  for (Eigen::Index i = 0; i < 10000; ++i) x[i] = wide(rng);
  for (Eigen::Index i = 10000; i < 20000; ++i) x[i] = narrow(rng);
  const double edges[] = {0.0, -0.0, 0.1, -0.1, 1e-310, 1e300};
  for (int i = 0; i < 6; ++i) x[20000 + i] = edges[i];
  const Eigen::ArrayXXd y = tanh_array(x);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double ref = std::tanh(x[i]);
    const double err = std::abs(y(i, 0) - ref) / std::max(std::abs(ref), 1e-300);
    worst = std::max(worst, err);
    CHECK(std::signbit(y(i, 0)) == std::signbit(ref));
  }
  CHECK(worst < 2e-15);
  // Odd symmetry makes tanh(b) - tanh(b) cancel exactly in every layer.
  CHECK((tanh_array(-x) + tanh_array(x)).abs().maxCoeff() == 0.0);
}
