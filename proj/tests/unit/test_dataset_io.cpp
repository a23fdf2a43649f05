#include <doctest.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "shipid/dataset_io.hpp"
#include "shipid/error.hpp"

using namespace shipid;

namespace {

// Finite doubles spread over the whole exponent range, plus a few awkward ones.
double random_double(std::mt19937_64& rng) {
  static constexpr double special[] = {0.0, -0.0, 1e-310, -5e-324, 1.7976931348623157e308,
                                       0.1, 1.0 / 3.0, -2.5e-17};
  if (rng() % 8 == 0) {
    return special[rng() % std::size(special)];
  }
  for (;;) {
    const double x = std::bit_cast<double>(rng());
    if (std::isfinite(x)) {
      return x;
    }
  }
}

Dataset random_dataset(std::mt19937_64& rng) {
  Dataset d;
  const int count = static_cast<int>(rng() % 4);
  for (int k = 0; k < count; ++k) {
    Trajectory t;
    t.name = "traj" + std::to_string(k) + "_" + std::to_string(rng() % 1000);
    t.label = static_cast<ManeuverLabel>(rng() % 4);
    t.dt = std::ldexp(1.0 + static_cast<double>(rng() % 1000) / 997.0, -static_cast<int>(rng() % 8));
    const std::size_t n = rng() % 20;
    const bool accels = rng() % 2 == 0;
    auto r = [&] { return random_double(rng); };
    for (std::size_t i = 0; i < n; ++i) {
      t.t.push_back(r());
      StateVector x;
      x.pose = {r(), r(), r()};
      x.vel = {r(), r(), r()};
      t.states.push_back(x);
      t.controls.push_back({r(), r()});
      t.winds.push_back({r(), r()});
      if (accels) {
        t.accels.push_back({r(), r(), r()});
      }
    }
    d.trajectories.push_back(std::move(t));
  }
  return d;
}

std::vector<std::uint64_t> bits(const Dataset& d) {
  std::vector<std::uint64_t> out;
  auto put = [&](double x) { out.push_back(std::bit_cast<std::uint64_t>(x)); };
  for (const auto& t : d.trajectories) {
    put(t.dt);
    for (std::size_t i = 0; i < t.size(); ++i) {
      put(t.t[i]);
      for (double v : t.states[i].flat()) put(v);
      put(t.controls[i].n);
      put(t.controls[i].delta);
      put(t.winds[i].U_A);
      put(t.winds[i].gamma_a);
      if (t.has_accels()) {
        put(t.accels[i].du);
        put(t.accels[i].dvm);
        put(t.accels[i].dr);
      }
    }
  }
  return out;
}

std::string serialized(const Dataset& d) {
  std::ostringstream o;
  write_dataset(d, o);
  return o.str();
}

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in, "mem");
}

}  // namespace

TEST_CASE("dataset round trip is bit exact over random datasets") {
  std::mt19937_64 rng(4242);
  for (int k = 0; k < 100; ++k) {
    const Dataset d = random_dataset(rng);
    const Dataset back = parse(serialized(d));
    REQUIRE(back.trajectories.size() == d.trajectories.size());
    for (std::size_t j = 0; j < d.trajectories.size(); ++j) {
      CHECK(back.trajectories[j].name == d.trajectories[j].name);
      CHECK(back.trajectories[j].label == d.trajectories[j].label);
      CHECK(back.trajectories[j].has_accels() == d.trajectories[j].has_accels());
    }
    CHECK(bits(back) == bits(d));
    // Writing again yields the same bytes.
    CHECK(serialized(back) == serialized(d));
  }
}

TEST_CASE("dataset file round trip of generated data") {
  const Dataset d = testutil::small_dataset(2, 5.0, 3);
  const auto path = std::filesystem::temp_directory_path() / "shipid_io_test.csv";
  write_dataset(d, path);
  const Dataset back = read_dataset(path);
  CHECK(bits(back) == bits(d));
  CHECK(back == d);
  std::filesystem::remove(path);
}

TEST_CASE("non-finite cells are rejected with row and channel") {
  Dataset d = testutil::small_dataset(1, 1.0, 5);
  std::string text = serialized(d);
  // Replace the psi cell of the third data row with nan.
  std::istringstream in(text);
  std::string out, line;
  int data_row = -1;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) != 0 && line.rfind("t,", 0) != 0) {
      ++data_row;
      if (data_row == 2) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        cells[3] = "nan";
        line.clear();
        for (std::size_t i = 0; i < cells.size(); ++i) line += (i ? "," : "") + cells[i];
      }
    }
    out += line + "\n";
  }
  try {
    parse(out);
    FAIL("expected MalformedFileError");
  } catch (const MalformedFileError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("psi") != std::string::npos);
    CHECK(e.line() == 6);  // magic, trajectory header, column header, rows 0..2
  }
  for (const char* bad : {"inf", "-inf", "1e999"}) {
    std::string t2 = out;
    t2.replace(t2.find("nan"), 3, bad);
    CHECK_THROWS_AS(parse(t2), MalformedFileError);
  }
}

TEST_CASE("truncated and malformed files") {
  const std::string text = serialized(testutil::small_dataset(1, 2.0, 6));
  // Drop the last rows.
  const std::string cut = text.substr(0, text.size() / 2);
  const auto end = cut.rfind('\n');
  CHECK_THROWS_AS(parse(cut.substr(0, end + 1)), MalformedFileError);
  // A partial final line is a bad number or too few columns.
  CHECK_THROWS_AS(parse(cut), MalformedFileError);
  CHECK_THROWS_AS(parse(""), MalformedFileError);
  CHECK_THROWS_AS(parse("t,X\n"), MalformedFileError);

  std::string extra = text;
  extra.insert(extra.find('\n', extra.find("t,X")) + 1, "# trajectory name=x label=Q dt=0.1 rows=0\n");
  CHECK_THROWS_AS(parse(extra), MalformedFileError);
}

TEST_CASE("schema version is checked") {
  std::string text = serialized(testutil::small_dataset(1, 1.0, 7));
  text.replace(text.find("version=1"), 9, "version=2");
  CHECK_THROWS_AS(parse(text), SchemaError);
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(read_dataset(std::filesystem::path("/nonexistent/shipid/data.csv")), IoError);
}

TEST_CASE("names that would break the format are refused on write") {
  Dataset d = testutil::small_dataset(1, 1.0, 8);
  d.trajectories[0].name = "has space";
  std::ostringstream o;
  CHECK_THROWS_AS(write_dataset(d, o), UsageError);
}

TEST_CASE("empty dataset round trips") {
  const Dataset d;
  CHECK(parse(serialized(d)).trajectories.empty());
}
