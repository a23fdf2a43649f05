#include "shipid/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "shipid/error.hpp"
#include "shipid/keyvalue.hpp"

namespace shipid {

namespace {

constexpr const char* kMagic = "# shipid-dataset";
constexpr const char* kTrajTag = "# trajectory";
constexpr const char* kHeader = "t,X,Y,psi,u,vm,r,n,delta,U_A,gamma_a";
constexpr const char* kAccelHeader = ",du,dvm,dr";
constexpr std::array<const char*, 14> kColumns = {"t", "X",     "Y",   "psi",     "u",
                                                  "vm", "r",    "n",   "delta",   "U_A",
                                                  "gamma_a", "du", "dvm", "dr"};

bool valid_name(const std::string& s) {
  if (s.empty()) {
    return false;
  }
  for (char c : s) {
    if (c == ' ' || c == '=' || c == ',' || c == '\n' || c == '\r' || c == '\t') {
      return false;
    }
  }
  return true;
}

class LineSource {
 public:
  LineSource(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) {
      return false;
    }
    ++line_;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    return true;
  }

  std::size_t line() const { return line_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw MalformedFileError(source_ + ":" + std::to_string(line_) + ": " + what, line_);
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
};

// Splits "k1=v1 k2=v2" after a tag.
std::vector<std::pair<std::string, std::string>> fields_after(const std::string& line,
                                                             std::size_t offset,
                                                             const LineSource& src) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream ss(line.substr(offset));
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) {
      src.fail("expected key=value, got '" + tok + "'");
    }
    out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return out;
}

}  // namespace

void write_dataset(const Dataset& data, std::ostream& out) {
  out << kMagic << " version=" << kDatasetVersion << '\n';
  for (const auto& tr : data.trajectories) {
    tr.validate();
    if (!valid_name(tr.name)) {
      throw UsageError("trajectory name '" + tr.name +
                       "' must be non-empty without spaces, commas or '='");
    }
    out << kTrajTag << " name=" << tr.name << " label=" << label_code(tr.label)
        << " dt=" << format_double(tr.dt) << " rows=" << tr.size() << '\n';
    out << kHeader << (tr.has_accels() ? kAccelHeader : "") << '\n';
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const StateVector& x = tr.states[i];
      const std::array<double, 11> base = {tr.t[i],          x.pose.X,          x.pose.Y,
                                           x.pose.psi,       x.vel.u,           x.vel.vm,
                                           x.vel.r,          tr.controls[i].n,  tr.controls[i].delta,
                                           tr.winds[i].U_A,  tr.winds[i].gamma_a};
      for (std::size_t k = 0; k < base.size(); ++k) {
        if (k > 0) {
          out << ',';
        }
        out << format_double(base[k]);
      }
      if (tr.has_accels()) {
        const Accel& a = tr.accels[i];
        out << ',' << format_double(a.du) << ',' << format_double(a.dvm) << ','
            << format_double(a.dr);
      }
      out << '\n';
    }
  }
  if (!out) {
    throw IoError("failed writing dataset");
  }
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write dataset " + path.string());
  }
  write_dataset(data, out);
  out.close();
  if (!out) {
    throw IoError("failed writing dataset " + path.string());
  }
}

Dataset read_dataset(std::istream& in, const std::string& source) {
  LineSource src(in, source);
  std::string line;
  if (!src.next(line) || line.rfind(kMagic, 0) != 0) {
    src.fail("missing '# shipid-dataset' header");
  }
  int version = -1;
  for (const auto& [k, v] : fields_after(line, std::string(kMagic).size(), src)) {
    if (k == "version") {
      try {
        version = static_cast<int>(parse_int(v, "version"));
      } catch (const UsageError&) {
        src.fail("bad version '" + v + "'");
      }
    }
  }
  if (version != kDatasetVersion) {
    throw SchemaError(source + ": dataset schema version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kDatasetVersion) + ")");
  }

  Dataset data;
  while (src.next(line)) {
    if (line.empty()) {
      continue;
    }
    if (line.rfind(kTrajTag, 0) != 0) {
      src.fail("expected '# trajectory' block header");
    }
    Trajectory tr;
    long rows = -1;
    bool have_label = false;
    bool have_dt = false;
    for (const auto& [k, v] : fields_after(line, std::string(kTrajTag).size(), src)) {
      if (k == "name") {
        tr.name = v;
      } else if (k == "label") {
        const auto l = v.size() == 1 ? label_from_code(v[0]) : std::nullopt;
        if (!l) {
          src.fail("unknown label '" + v + "'");
        }
        tr.label = *l;
        have_label = true;
      } else if (k == "dt") {
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), tr.dt);
        if (ec != std::errc() || p != v.data() + v.size() || !(tr.dt > 0.0) ||
            !std::isfinite(tr.dt)) {
          src.fail("bad dt '" + v + "'");
        }
        have_dt = true;
      } else if (k == "rows") {
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), rows);
        if (ec != std::errc() || p != v.data() + v.size() || rows < 0) {
          src.fail("bad rows '" + v + "'");
        }
      } else {
        src.fail("unknown trajectory field '" + k + "'");
      }
    }
    if (tr.name.empty() || !have_label || !have_dt || rows < 0) {
      src.fail("trajectory header needs name, label, dt and rows");
    }
    if (!src.next(line)) {
      src.fail("truncated file: missing column header");
    }
    bool accels = false;
    if (line == std::string(kHeader) + kAccelHeader) {
      accels = true;
    } else if (line != kHeader) {
      src.fail("unexpected column header '" + line + "'");
    }
    const std::size_t cols = accels ? 14 : 11;
    const auto n = static_cast<std::size_t>(rows);
    tr.t.reserve(n);
    tr.states.reserve(n);
    tr.controls.reserve(n);
    tr.winds.reserve(n);
    if (accels) {
      tr.accels.reserve(n);
    }
    std::array<double, 14> v{};
    for (std::size_t r = 0; r < n; ++r) {
      if (!src.next(line)) {
        src.fail("truncated file: trajectory '" + tr.name + "' has " + std::to_string(r) +
                 " of " + std::to_string(n) + " rows");
      }
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (std::size_t c = 0; c < cols; ++c) {
        const char* stop = std::find(p, end, ',');
        const auto [q, ec] = std::from_chars(p, stop, v[c]);
        if (ec != std::errc() || q != stop || p == stop) {
          src.fail("row " + std::to_string(r) + ", channel " + kColumns[c] + ": bad number '" +
                   std::string(p, stop) + "'");
        }
        if (!std::isfinite(v[c])) {
          src.fail("row " + std::to_string(r) + ", channel " + kColumns[c] +
                   ": non-finite value");
        }
        if (c + 1 < cols) {
          if (stop == end) {
            src.fail("row " + std::to_string(r) + ": expected " + std::to_string(cols) +
                     " columns");
          }
          p = stop + 1;
        } else if (stop != end) {
          src.fail("row " + std::to_string(r) + ": more than " + std::to_string(cols) +
                   " columns");
        }
      }
      tr.t.push_back(v[0]);
      StateVector x;
      x.pose = {v[1], v[2], v[3]};
      x.vel = {v[4], v[5], v[6]};
      tr.states.push_back(x);
      tr.controls.push_back({v[7], v[8]});
      tr.winds.push_back({v[9], v[10]});
      if (accels) {
        tr.accels.push_back({v[11], v[12], v[13]});
      }
    }
    data.trajectories.push_back(std::move(tr));
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open dataset " + path.string());
  }
  return read_dataset(in, path.string());
}

}  // namespace shipid
