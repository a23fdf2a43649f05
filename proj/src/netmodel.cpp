#include "shipid/netmodel.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "shipid/error.hpp"
#include "shipid/fastmath.hpp"
#include "shipid/keyvalue.hpp"

namespace shipid {

std::string arch_name(Architecture arch) {
  return arch == Architecture::FullMemory ? "full" : "finite";
}

Architecture parse_arch(const std::string& text) {
  if (text == "full") {
    return Architecture::FullMemory;
  }
  if (text == "finite") {
    return Architecture::FiniteMemory;
  }
  throw UsageError("unknown architecture '" + text + "' (expected full|finite)");
}

Eigen::Matrix<double, kInputChannels, 1> NetInputFrame::to_vector() const {
  Eigen::Matrix<double, kInputChannels, 1> v;
  v << vel.u, vel.vm, vel.r, ctrl.n, ctrl.delta, wind.wx, wind.wy;
  return v;
}

NetInputFrame make_frame(const Velocity& vel, const Control& ctrl, const WindObs& w) {
  return {vel, ctrl, wind_to_vector(w)};
}

NetParams NetParams::zeros(Architecture arch, int hidden, int memory) {
  if (hidden < 1) {
    throw UsageError("hidden width must be >= 1");
  }
  if (arch == Architecture::FiniteMemory && memory < 1) {
    throw UsageError("memory steps must be >= 1");
  }
  NetParams p;
  p.arch = arch;
  p.hidden = hidden;
  p.memory = memory;
  p.W_x0 = Eigen::MatrixXd::Zero(3, hidden);
  p.W_u0 = Eigen::MatrixXd::Zero(2, hidden);
  p.W_w0 = Eigen::MatrixXd::Zero(2, hidden);
  p.W_r0 = Eigen::MatrixXd::Zero(hidden, hidden);
  p.W_1 = Eigen::MatrixXd::Zero(hidden, hidden);
  p.W_2 = Eigen::MatrixXd::Zero(hidden, hidden);
  p.W_3 = Eigen::MatrixXd::Zero(hidden, 3);
  p.b_0 = Eigen::VectorXd::Zero(hidden);
  p.b_1 = Eigen::VectorXd::Zero(hidden);
  p.b_2 = Eigen::VectorXd::Zero(hidden);
  return p;
}

NetParams NetParams::random(Architecture arch, int hidden, int memory, std::uint64_t seed) {
  NetParams p = zeros(arch, hidden, memory);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](auto& t, double s) {
    std::uniform_real_distribution<double> dist(-s, s);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = dist(rng);
    }
  };
  p.for_each_tensor([&](const char*, auto& t) {
    if (t.cols() == 1) {
      fill(t, 0.1);
    } else {
      fill(t, 1.0 / std::sqrt(static_cast<double>(t.rows())));
    }
  });
  return p;
}

Eigen::Index NetParams::num_trainable() const {
  Eigen::Index n = 0;
  for_each_tensor([&](const char*, const auto& t) { n += t.size(); });
  return n;
}

Eigen::VectorXd NetParams::flatten() const {
  Eigen::VectorXd flat(num_trainable());
  Eigen::Index off = 0;
  for_each_tensor([&](const char*, const auto& t) {
    flat.segment(off, t.size()) = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
    off += t.size();
  });
  return flat;
}

void NetParams::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != num_trainable()) {
    throw NumericError("parameter vector has wrong length");
  }
  Eigen::Index off = 0;
  for_each_tensor([&](const char*, auto& t) {
    Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) = flat.segment(off, t.size());
    off += t.size();
  });
}

void NetParams::validate() const {
  const Eigen::Index H = hidden;
  auto shape = [](const auto& t, Eigen::Index r, Eigen::Index c) {
    return t.rows() == r && t.cols() == c;
  };
  const bool ok = H >= 1 && shape(W_x0, 3, H) && shape(W_u0, 2, H) && shape(W_w0, 2, H) &&
                  shape(W_r0, H, H) && shape(W_1, H, H) && shape(W_2, H, H) &&
                  shape(W_3, H, 3) && b_0.size() == H && b_1.size() == H && b_2.size() == H;
  if (!ok) {
    throw NumericError("network parameters have inconsistent shapes");
  }
  if (arch == Architecture::FiniteMemory && memory < 1) {
    throw NumericError("finite-memory network needs memory >= 1");
  }
  bool finite = in_scale.allFinite() && out_scale.allFinite();
  for_each_tensor([&](const char*, const auto& t) { finite = finite && t.allFinite(); });
  if (!finite) {
    throw NumericError("network parameters contain non-finite entries");
  }
}

bool NetParams::operator==(const NetParams& o) const {
  if (arch != o.arch || hidden != o.hidden || memory != o.memory || in_scale != o.in_scale ||
      out_scale != o.out_scale) {
    return false;
  }
  return W_x0 == o.W_x0 && W_u0 == o.W_u0 && W_w0 == o.W_w0 && W_r0 == o.W_r0 &&
         W_1 == o.W_1 && W_2 == o.W_2 && W_3 == o.W_3 && b_0 == o.b_0 && b_1 == o.b_1 &&
         b_2 == o.b_2;
}

Eigen::VectorXd layer(const Eigen::VectorXd& input, const Eigen::MatrixXd& W,
                      const Eigen::VectorXd& b) {
  if (W.rows() != input.size() || W.cols() != b.size()) {
    throw NumericError("layer: shape mismatch");
  }
  const Eigen::VectorXd pre = W.transpose() * input + b;
  return tanh_array(pre.array()).matrix() - tanh_array(b.array()).matrix();
}

namespace {

// Input-side pre-activation of the first layer for one frame (no bias).
Eigen::VectorXd input_projection(const NetInputFrame& frame, const NetParams& p) {
  const Eigen::Matrix<double, kInputChannels, 1> x = frame.to_vector().cwiseProduct(p.in_scale);
  return p.W_x0.transpose() * x.segment<3>(0) + p.W_u0.transpose() * x.segment<2>(3) +
         p.W_w0.transpose() * x.segment<2>(5);
}

Eigen::VectorXd centered_tanh(const Eigen::VectorXd& pre, const Eigen::VectorXd& b) {
  return tanh_array((pre + b).array()).matrix() - tanh_array(b.array()).matrix();
}

}  // namespace

Accel head(const Eigen::VectorXd& z1, const NetParams& p) {
  const Eigen::VectorXd z2 = layer(z1, p.W_1, p.b_1);
  const Eigen::VectorXd z3 = layer(z2, p.W_2, p.b_2);
  const Eigen::Vector3d a = (p.W_3.transpose() * z3).cwiseProduct(p.out_scale);
  return {a[0], a[1], a[2]};
}

std::pair<Accel, HiddenState> step_full(const NetInputFrame& frame, const HiddenState& h,
                                        const NetParams& p) {
  if (h.z1.size() != p.hidden) {
    throw NumericError("step_full: hidden state has wrong size");
  }
  HiddenState next{
      centered_tanh(input_projection(frame, p) + p.W_r0.transpose() * h.z1, p.b_0)};
  return {head(next.z1, p), std::move(next)};
}

Accel forward_finite(std::span<const NetInputFrame> frames, const NetParams& p) {
  if (frames.size() != static_cast<std::size_t>(p.memory)) {
    throw NumericError("forward_finite: expected " + std::to_string(p.memory) + " frames, got " +
                       std::to_string(frames.size()));
  }
  Eigen::VectorXd z = centered_tanh(input_projection(frames[0], p), p.b_0);
  for (std::size_t j = 1; j < frames.size(); ++j) {
    z = centered_tanh(input_projection(frames[j], p) + p.W_r0.transpose() * z, p.b_0);
  }
  return head(z, p);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_tensor(std::ostream& out, const char* name, const Eigen::MatrixXd& t) {
  out << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      out << (j ? " " : "") << format_double(t(i, j));
    }
    out << '\n';
  }
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::vector<std::string> next() {
    std::string line;
    if (!std::getline(in_, line)) {
      fail("unexpected end of file");
    }
    ++line_no_;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) {
      tokens.push_back(std::move(tok));
    }
    return tokens;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw MalformedFileError(source_ + ":" + std::to_string(line_no_) + ": " + what, line_no_);
  }

  double number(const std::string& tok) const {
    double v = 0.0;
    try {
      v = parse_double(tok, "value");
    } catch (const UsageError&) {
      fail("not a number: '" + tok + "'");
    }
    if (!std::isfinite(v)) {
      fail("non-finite value");
    }
    return v;
  }

  long integer(const std::string& tok) const {
    try {
      return parse_int(tok, "value");
    } catch (const UsageError&) {
      fail("not an integer: '" + tok + "'");
    }
  }

  // Expects `key value...`; returns the values.
  std::vector<std::string> expect(const std::string& key, std::size_t count) {
    auto tokens = next();
    if (tokens.empty() || tokens[0] != key || tokens.size() != count + 1) {
      fail("expected '" + key + "' with " + std::to_string(count) + " value(s)");
    }
    tokens.erase(tokens.begin());
    return tokens;
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

std::string channel_list() {
  std::string s;
  for (std::size_t i = 0; i < kInputChannelNames.size(); ++i) {
    s += (i ? "," : "");
    s += kInputChannelNames[i];
  }
  return s;
}

}  // namespace

void write_checkpoint(const NetParams& params, std::ostream& out) {
  params.validate();
  out << "shipid-checkpoint " << kCheckpointVersion << '\n';
  out << "arch " << arch_name(params.arch) << '\n';
  out << "hidden " << params.hidden << '\n';
  out << "memory " << params.memory << '\n';
  out << "channels " << channel_list() << '\n';
  out << "in_scale";
  for (Eigen::Index i = 0; i < params.in_scale.size(); ++i) {
    out << ' ' << format_double(params.in_scale[i]);
  }
  out << "\nout_scale";
  for (Eigen::Index i = 0; i < 3; ++i) {
    out << ' ' << format_double(params.out_scale[i]);
  }
  out << '\n';
  params.for_each_tensor(
      [&](const char* name, const auto& t) { write_tensor(out, name, Eigen::MatrixXd(t)); });
}

void write_checkpoint(const NetParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write checkpoint " + path.string());
  }
  write_checkpoint(params, out);
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

NetParams read_checkpoint(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  auto magic = reader.next();
  if (magic.size() != 2 || magic[0] != "shipid-checkpoint") {
    reader.fail("not a shipid checkpoint");
  }
  if (reader.integer(magic[1]) != kCheckpointVersion) {
    throw SchemaError(source + ": checkpoint schema version " + magic[1] +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Architecture arch{};
  try {
    arch = parse_arch(reader.expect("arch", 1)[0]);
  } catch (const UsageError& e) {
    reader.fail(e.what());
  }
  const long hidden = reader.integer(reader.expect("hidden", 1)[0]);
  const long memory = reader.integer(reader.expect("memory", 1)[0]);
  if (hidden < 1 || hidden > 100000 || memory < 1 || memory > 100000) {
    reader.fail("hidden/memory out of range");
  }
  if (reader.expect("channels", 1)[0] != channel_list()) {
    throw SchemaError(source + ": checkpoint channel order differs from " + channel_list());
  }
  NetParams p = NetParams::zeros(arch, static_cast<int>(hidden), static_cast<int>(memory));
  const auto in_scale = reader.expect("in_scale", kInputChannels);
  for (int i = 0; i < kInputChannels; ++i) {
    p.in_scale[i] = reader.number(in_scale[static_cast<std::size_t>(i)]);
  }
  const auto out_scale = reader.expect("out_scale", 3);
  for (int i = 0; i < 3; ++i) {
    p.out_scale[i] = reader.number(out_scale[static_cast<std::size_t>(i)]);
  }
  p.for_each_tensor([&](const char* name, auto& t) {
    const auto dims = reader.expect(name, 2);
    if (reader.integer(dims[0]) != t.rows() || reader.integer(dims[1]) != t.cols()) {
      reader.fail(std::string("tensor ") + name + " has unexpected shape");
    }
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      const auto row = reader.next();
      if (static_cast<Eigen::Index>(row.size()) != t.cols()) {
        reader.fail(std::string("tensor ") + name + " row has wrong length");
      }
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        t(i, j) = reader.number(row[static_cast<std::size_t>(j)]);
      }
    }
  });
  p.validate();
  return p;
}

NetParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  return read_checkpoint(in, path.string());
}

}  // namespace shipid
