#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "shipid/commands.hpp"
#include "shipid/dataset_io.hpp"
#include "shipid/datagen.hpp"
#include "shipid/refmodel.hpp"

using namespace shipid;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream o;
  o << f.rdbuf();
  return o.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path tiny_recipe(const fs::path& dir) {
  Recipe r;
  r.duration = {30.0, 30.0, 0.0, 0.0};
  r.length = {15.0, 15.0, 15.0, 15.0};
  std::ostringstream o;
  write_recipe(r, o);
  put(dir / "recipe.txt", o.str());
  return dir / "recipe.txt";
}

fs::path tiny_config(const fs::path& dir) {
  TrainConfig c;
  c.hidden = 4;
  c.memory = 2;
  c.horizon = 5;
  c.batch_size = 32;
  c.learning_rate = 1e-3;
  c.max_epochs = 2;
  c.stride = 5;
  c.scale_io = true;
  std::ostringstream o;
  write_train_config(c, o);
  put(dir / "train.txt", o.str());
  return dir / "train.txt";
}

}  // namespace

TEST_CASE("sha256 of a known message") {
  TempDir t("shipid_cmd_sha");
  put(t.path / "abc", "abc");
  CHECK(sha256_file(t.path / "abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  put(t.path / "empty", "");
  CHECK(sha256_file(t.path / "empty") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK_THROWS_AS(sha256_file(t.path / "missing"), IoError);
}

TEST_CASE("exit codes per error class") {
  CHECK(exit_code(ErrorKind::Usage) == 2);
  CHECK(exit_code(ErrorKind::Io) == 3);
  CHECK(exit_code(ErrorKind::Malformed) == 3);
  CHECK(exit_code(ErrorKind::Numeric) == 4);
  CHECK(exit_code(ErrorKind::Divergence) == 4);
  CHECK(exit_code(ErrorKind::Schema) == 5);
}

TEST_CASE("study names") {
  for (Study s : {Study::LossComparison, Study::ArchComparison, Study::DataComparison}) {
    CHECK(parse_study(study_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_study("everything"), UsageError);
}

TEST_CASE("generate, train and evaluate chain with identical reruns") {
  TempDir t("shipid_cmd_chain");
  const fs::path recipe = tiny_recipe(t.path);
  GenerateArgs g{recipe, t.path / "a" / "data.csv", 5, std::nullopt, std::nullopt};
  cmd_generate(g);
  const std::string data1 = slurp(g.out);
  const std::string man1 = slurp(t.path / "a" / "data.csv.manifest.json");
  cmd_generate(g);
  CHECK(slurp(g.out) == data1);
  CHECK(slurp(t.path / "a" / "data.csv.manifest.json") == man1);
  CHECK(man1.find(sha256_file(g.out)) != std::string::npos);
  CHECK(read_dataset(g.out).trajectories.size() == 4);

  g.seed = 6;
  g.out = t.path / "other.csv";
  cmd_generate(g);
  CHECK(slurp(g.out) != data1);

  TrainArgs tr;
  tr.data = t.path / "a" / "data.csv";
  tr.config = tiny_config(t.path);
  tr.out = t.path / "net.ckpt";
  tr.seed = 3;
  cmd_train(tr);
  const std::string ckpt = slurp(tr.out);
  const std::string log = slurp(t.path / "net.ckpt.log.csv");
  cmd_train(tr);
  CHECK(slurp(tr.out) == ckpt);
  CHECK(slurp(t.path / "net.ckpt.log.csv") == log);

  std::ostringstream coeffs;
  write_coeffs(default_coeffs(), coeffs);
  put(t.path / "coeffs.txt", coeffs.str());

  EvaluateArgs ev;
  ev.checkpoints = {tr.out, tr.out};
  ev.test = t.path / "other.csv";
  ev.out_dir = t.path / "eval";
  ev.baseline = t.path / "coeffs.txt";
  cmd_evaluate(ev);
  const std::string report = slurp(ev.out_dir / "report.csv");
  // The true coefficients reproduce the noise-free test set exactly.
  CHECK(report.rfind("class,baseline,net_mean,net_std,net_diverged,net_1_mean", 0) == 0);
  CHECK(report.find("\nTurning,0,") != std::string::npos);
  CHECK(fs::exists(ev.out_dir / "plots" / "baseline"));
  CHECK(fs::exists(ev.out_dir / "plots" / "net_1"));
  const std::string man = slurp(ev.out_dir / "manifest.json");
  cmd_evaluate(ev);
  CHECK(slurp(ev.out_dir / "report.csv") == report);
  CHECK(slurp(ev.out_dir / "manifest.json") == man);
}

TEST_CASE("command failures map to the right error classes") {
  TempDir t("shipid_cmd_fail");
  put(t.path / "bad_recipe.txt", "preset = TZRB\nbogus_key = 3\n");
  GenerateArgs g{t.path / "bad_recipe.txt", t.path / "out.csv", 1, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(cmd_generate(g), UsageError);
  g.recipe = t.path / "nope.txt";
  CHECK_THROWS_AS(cmd_generate(g), IoError);

  TrainArgs tr;
  tr.data = t.path / "missing.csv";
  tr.out = t.path / "x.ckpt";
  CHECK_THROWS_AS(cmd_train(tr), IoError);

  put(t.path / "future.csv", "# shipid-dataset version=9\n");
  tr.data = t.path / "future.csv";
  CHECK_THROWS_AS(cmd_train(tr), SchemaError);

  EvaluateArgs ev;
  ev.test = t.path / "future.csv";
  ev.out_dir = t.path / "eval";
  CHECK_THROWS_AS(cmd_evaluate(ev), UsageError);
}
