#include "shipid/commands.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "shipid/datagen.hpp"
#include "shipid/dataset_io.hpp"
#include "shipid/evaluate.hpp"
#include "shipid/keyvalue.hpp"
#include "shipid/log.hpp"
#include "shipid/refmodel.hpp"

namespace shipid {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return kExitUsage;
    case ErrorKind::Io:
    case ErrorKind::Malformed:
      return kExitIo;
    case ErrorKind::Numeric:
    case ErrorKind::Divergence:
      return kExitDivergence;
    case ErrorKind::Schema:
      return kExitSchema;
  }
  return kExitOther;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string() + " for hashing");
  }
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 unavailable");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) {
      EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char two[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(two, sizeof two, "%02x", md[i]);
    hex += two;
  }
  return hex;
}

namespace {

// Opens for writing, creating parent directories.
std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  return out;
}

void close_checked(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

void make_dir(const fs::path& dir) {
  if (dir.empty()) {
    return;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

Json file_entry(const fs::path& path, const fs::path& relative_to = {}) {
  Json j;
  j["path"] = relative_to.empty() ? path.generic_string()
                                  : fs::relative(path, relative_to).generic_string();
  j["sha256"] = sha256_file(path);
  return j;
}

// No timestamps or host details, so reruns produce identical manifests.
Json manifest_head(const std::string& command, std::uint64_t seed) {
  Json j;
  j["command"] = command;
  j["tool_version"] = SHIPID_VERSION;
  j["seed"] = seed;
  return j;
}

void write_json(const Json& j, const fs::path& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  close_checked(out, path);
}

Json recipe_json(const Recipe& r) {
  std::ostringstream s;
  write_recipe(r, s);
  Json j = Json::object();
  std::istringstream in(s.str());
  for (const auto& kv : parse_key_values(in, "recipe")) {
    j[kv.key] = kv.value;
  }
  return j;
}

Json train_config_json(const TrainConfig& c) {
  std::ostringstream s;
  write_train_config(c, s);
  Json j = Json::object();
  std::istringstream in(s.str());
  for (const auto& kv : parse_key_values(in, "config")) {
    j[kv.key] = kv.value;
  }
  return j;
}

// File-system-safe stem for a checkpoint used as a directory name.
std::string stem_of(const fs::path& p) {
  std::string s = p.stem().string();
  return s.empty() ? std::string("model") : s;
}

std::vector<PlotItem> plot_items(const Dataset& test, const std::vector<Trajectory>& preds) {
  std::vector<PlotItem> items;
  for (std::size_t i = 0; i < preds.size() && i < test.trajectories.size(); ++i) {
    items.push_back({test.trajectories[i].name, test.trajectories[i], preds[i]});
  }
  return items;
}

}  // namespace

void cmd_generate(const GenerateArgs& args) {
  Recipe recipe = read_recipe(args.recipe);
  if (args.dt) {
    recipe.dt = *args.dt;
  }
  recipe.validate();
  const RefModelCoeffs coeffs = args.coeffs ? read_coeffs(*args.coeffs) : default_coeffs();
  const Dataset data = compose_dataset(recipe, coeffs, args.seed);
  make_dir(args.out.parent_path());
  write_dataset(data, args.out);

  const CompositionSummary sum = summarize(data);
  Json m = manifest_head("generate", args.seed);
  m["config_path"] = args.recipe.generic_string();
  Json p;
  p["recipe"] = recipe_json(recipe);
  p["coeffs"] = args.coeffs ? args.coeffs->generic_string() : std::string("default");
  m["parameters"] = p;
  Json inputs = Json::array();
  inputs.push_back(file_entry(args.recipe));
  if (args.coeffs) {
    inputs.push_back(file_entry(*args.coeffs));
  }
  m["inputs"] = inputs;
  Json comp = Json::object();
  for (int c = 0; c < 4; ++c) {
    const auto label = static_cast<ManeuverLabel>(c);
    comp[std::string(1, label_code(label))] = {{"trajectories", sum.count[c]},
                                               {"seconds", sum.duration[c]}};
  }
  m["composition"] = comp;
  m["outputs"] = Json::array({file_entry(args.out)});
  write_json(m, fs::path(args.out.string() + ".manifest.json"));
}

void cmd_train(const TrainArgs& args) {
  const Dataset data = read_dataset(args.data);
  TrainConfig config = args.config ? read_train_config(*args.config) : TrainConfig{};
  config.jobs = std::max(1, args.jobs);
  config.record_wall_time = args.timing;

  const TrainResult result = train(data, config, args.loss, args.arch, args.seed);
  make_dir(args.out.parent_path());
  write_checkpoint(result.params, args.out);
  const fs::path log_path(args.out.string() + ".log.csv");
  {
    auto out = open_out(log_path);
    write_training_log(result.log, out);
    close_checked(out, log_path);
  }

  Json m = manifest_head("train", args.seed);
  m["config_path"] = args.config ? args.config->generic_string() : std::string();
  Json p;
  p["arch"] = arch_name(args.arch);
  p["loss"] = loss_name(args.loss);
  p["config"] = train_config_json(config);
  m["parameters"] = p;
  Json inputs = Json::array({file_entry(args.data)});
  if (args.config) {
    inputs.push_back(file_entry(*args.config));
  }
  m["inputs"] = inputs;
  m["best_epoch"] = result.best_epoch;
  m["best_val_loss"] = format_double(result.best_val_loss);
  m["epochs"] = result.log.size();
  Json outputs = Json::array({file_entry(args.out)});
  // With wall times the log differs run to run, so its digest would mislead.
  if (!args.timing) {
    outputs.push_back(file_entry(log_path));
  }
  m["outputs"] = outputs;
  write_json(m, fs::path(args.out.string() + ".manifest.json"));
}

void cmd_evaluate(const EvaluateArgs& args) {
  if (args.checkpoints.empty() && !args.baseline) {
    throw UsageError("evaluate needs at least one checkpoint or a baseline");
  }
  const Dataset test = read_dataset(args.test);
  make_dir(args.out_dir);

  RolloutReport report;
  report.classes.clear();
  for (const auto& tr : test.trajectories) {
    if (std::find(report.classes.begin(), report.classes.end(), tr.label) == report.classes.end()) {
      report.classes.push_back(tr.label);
    }
  }
  std::sort(report.classes.begin(), report.classes.end());
  report.test_stats = StandardizationStats::compute(test.trajectories, false);
  report.seeds = {0};
  EvalOptions eval;
  eval.restart_period = args.restart_period;

  std::vector<fs::path> written;
  if (args.baseline) {
    const RefModelCoeffs coeffs = read_coeffs(*args.baseline);
    std::vector<Trajectory> preds;
    report.baseline = score_model(coeffs, test, report.test_stats, eval, &preds);
    if (args.plots) {
      auto files = emit_plots(plot_items(test, preds), args.out_dir / "plots" / "baseline");
      written.insert(written.end(), files.begin(), files.end());
    }
  }
  std::map<std::string, int> seen;
  for (const auto& ckpt : args.checkpoints) {
    const NetParams params = read_checkpoint(ckpt);
    std::string name = stem_of(ckpt);
    if (int k = seen[name]++; k > 0) {
      name += "_" + std::to_string(k);
    }
    CellResult cell;
    cell.config = name;
    std::vector<Trajectory> preds;
    cell.scores = score_model(params, test, report.test_stats, eval, &preds);
    report.configs.push_back(name);
    report.cells.push_back(std::move(cell));
    if (args.plots) {
      auto files = emit_plots(plot_items(test, preds), args.out_dir / "plots" / name);
      written.insert(written.end(), files.begin(), files.end());
    }
  }

  const fs::path report_path = args.out_dir / "report.csv";
  const fs::path scores_path = args.out_dir / "scores.csv";
  {
    auto out = open_out(report_path);
    write_report_csv(report, out);
    close_checked(out, report_path);
  }
  {
    auto out = open_out(scores_path);
    write_scores_csv(report, out);
    close_checked(out, scores_path);
  }

  Json m = manifest_head("evaluate", 0);
  m["config_path"] = "";
  Json p;
  p["restart_period"] =
      args.restart_period ? format_double(*args.restart_period) : std::string("per-class default");
  p["plots"] = args.plots;
  m["parameters"] = p;
  Json inputs = Json::array({file_entry(args.test)});
  for (const auto& c : args.checkpoints) {
    inputs.push_back(file_entry(c));
  }
  if (args.baseline) {
    inputs.push_back(file_entry(*args.baseline));
  }
  m["inputs"] = inputs;
  Json outputs = Json::array(
      {file_entry(report_path, args.out_dir), file_entry(scores_path, args.out_dir)});
  for (const auto& f : written) {
    outputs.push_back(file_entry(f, args.out_dir));
  }
  m["outputs"] = outputs;
  write_json(m, args.out_dir / "manifest.json");
}

Study parse_study(const std::string& text) {
  if (text == "loss-comparison") return Study::LossComparison;
  if (text == "arch-comparison") return Study::ArchComparison;
  if (text == "data-comparison") return Study::DataComparison;
  throw UsageError("unknown study '" + text +
                   "' (expected loss-comparison, arch-comparison or data-comparison)");
}

std::string study_name(Study study) {
  switch (study) {
    case Study::LossComparison:
      return "loss-comparison";
    case Study::ArchComparison:
      return "arch-comparison";
    case Study::DataComparison:
      return "data-comparison";
  }
  return "unknown";
}

TrainConfig desk_train_config() {
  TrainConfig c;
  c.hidden = 32;
  c.memory = 10;
  c.horizon = 60;
  c.batch_size = 512;
  c.learning_rate = 1e-3;
  c.max_epochs = 40;
  c.patience = 15;
  c.stride = 2;
  c.scale_io = true;
  return c;
}

namespace {

// Baseline for the report: the truth with every hull coefficient off by 15%,
// alternating in sign, the kind of error a captive-test fit leaves behind.
RefModelCoeffs perturbed_baseline(const RefModelCoeffs& truth) {
  RefModelCoeffs b = truth;
  double sign = 1.0;
  for (double* c : {&b.hull.X_uu, &b.hull.X_vv, &b.hull.X_vr, &b.hull.X_rr, &b.hull.Y_v,
                    &b.hull.Y_r, &b.hull.N_v, &b.hull.N_r, &b.hull.Cd_v, &b.hull.Cd_r}) {
    *c *= 1.0 + 0.15 * sign;
    sign = -sign;
  }
  return b;
}

// Preset mix rescaled to `total` seconds.
Recipe scaled(const std::string& preset, double total, const NoiseSpec& noise) {
  Recipe r = preset_recipe(preset);
  const double factor = total / r.total_duration();
  for (double& d : r.duration) {
    d *= factor;
  }
  r.noise = noise;
  return r;
}

}  // namespace

void cmd_replicate(const ReplicateArgs& args) {
  if (args.seeds < 1) {
    throw UsageError("replicate needs at least one seed");
  }
  TrainConfig tc = args.config ? read_train_config(*args.config)
                               : (args.paper_scale ? TrainConfig{} : desk_train_config());
  // TZB and TZRB get the same total; TZRB+ keeps its size relative to TZRB.
  const double base = args.paper_scale ? preset_recipe("TZRB").total_duration()
                                       : args.data_duration;
  const double plus = base * preset_recipe("TZRB+").total_duration() /
                      preset_recipe("TZRB").total_duration();
  NoiseSpec noise;
  noise.pos_sigma = 0.01;
  noise.r_sigma = deg2rad(0.1);

  const ExperimentConfig type1{"Type-1", Architecture::FiniteMemory, LossKind::State,
                               scaled("TZRB+", plus, noise)};
  std::vector<ExperimentConfig> configs;
  switch (args.study) {
    case Study::LossComparison:
      configs = {type1, {"Type-3", Architecture::FiniteMemory, LossKind::Acceleration,
                         scaled("TZRB+", plus, noise)}};
      break;
    case Study::ArchComparison:
      configs = {type1, {"Type-2", Architecture::FullMemory, LossKind::State,
                         scaled("TZRB+", plus, noise)}};
      break;
    case Study::DataComparison:
      configs = {type1,
                 {"Type-4", Architecture::FiniteMemory, LossKind::State, scaled("TZB", base, noise)},
                 {"Type-5", Architecture::FiniteMemory, LossKind::State,
                  scaled("TZRB", base, noise)}};
      break;
  }

  const RefModelCoeffs truth = default_coeffs();
  // Clean test set from its own seed stream.
  const Recipe test_recipe = scaled("TEST", base, NoiseSpec{});
  const Dataset test = compose_dataset(test_recipe, truth, args.seed + 1000);

  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < args.seeds; ++k) {
    seeds.push_back(args.seed + static_cast<std::uint64_t>(k));
  }
  ExperimentSetup setup;
  setup.train = tc;
  setup.truth = truth;
  setup.baseline = perturbed_baseline(truth);
  setup.data_seed = args.seed;
  setup.jobs = std::max(1, args.jobs);

  const RolloutReport report = experiment_matrix(configs, seeds, test, setup);

  const fs::path& dir = args.out_dir;
  make_dir(dir);
  std::vector<fs::path> written;
  auto emit = [&](const fs::path& path, const auto& writer) {
    auto out = open_out(path);
    writer(out);
    close_checked(out, path);
    written.push_back(path);
  };
  emit(dir / "report.csv", [&](std::ostream& o) { write_report_csv(report, o); });
  emit(dir / "scores.csv", [&](std::ostream& o) { write_scores_csv(report, o); });
  emit(dir / "test.csv", [&](std::ostream& o) { write_dataset(test, o); });
  emit(dir / "baseline_coeffs.txt",
       [&](std::ostream& o) { write_coeffs(*setup.baseline, o); });

  Json failures = Json::array();
  for (const auto& cell : report.cells) {
    const std::string tag = cell.config + "_seed" + std::to_string(cell.seed);
    if (cell.failed) {
      failures.push_back({{"cell", tag}, {"error", cell.error}});
      continue;
    }
    emit(dir / "logs" / (tag + ".log.csv"),
         [&](std::ostream& o) { write_training_log(cell.log, o); });
    if (cell.params) {
      emit(dir / "checkpoints" / (tag + ".ckpt"),
           [&](std::ostream& o) { write_checkpoint(*cell.params, o); });
    }
  }
  // Track plots for the first seed of every config.
  for (const auto& cell : report.cells) {
    if (cell.failed || !cell.params || cell.seed != seeds.front()) {
      continue;
    }
    std::vector<Trajectory> preds;
    EvalOptions eval = setup.eval;
    score_model(*cell.params, test, report.test_stats, eval, &preds);
    auto files = emit_plots(plot_items(test, preds), dir / "plots" / cell.config);
    written.insert(written.end(), files.begin(), files.end());
  }

  Json m = manifest_head("replicate", args.seed);
  m["config_path"] = args.config ? args.config->generic_string() : std::string();
  Json p;
  p["study"] = study_name(args.study);
  p["seeds"] = args.seeds;
  p["scale"] = args.paper_scale ? "paper" : "desk";
  p["data_duration"] = format_double(base);
  p["train_config"] = train_config_json(tc);
  Json recipes = Json::object();
  for (const auto& c : configs) {
    recipes[c.name] = {{"arch", arch_name(c.arch)},
                       {"loss", loss_name(c.loss)},
                       {"recipe", recipe_json(c.recipe)}};
  }
  p["configs"] = recipes;
  p["test_recipe"] = recipe_json(test_recipe);
  m["parameters"] = p;
  Json inputs = Json::array();
  if (args.config) {
    inputs.push_back(file_entry(*args.config));
  }
  m["inputs"] = inputs;
  m["failures"] = failures;
  Json outputs = Json::array();
  for (const auto& f : written) {
    outputs.push_back(file_entry(f, dir));
  }
  m["outputs"] = outputs;
  write_json(m, dir / "manifest.json");
}

}  // namespace shipid
