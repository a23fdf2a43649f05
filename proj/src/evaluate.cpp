#include "shipid/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <thread>

#include "shipid/error.hpp"
#include "shipid/keyvalue.hpp"
#include "shipid/log.hpp"

namespace shipid {

namespace {

bool out_of_bounds(const StateVector& x, const RolloutOptions& o) {
  if (!is_finite(x)) {
    return true;
  }
  if (!o.stats) {
    return false;
  }
  const auto f = x.flat();
  for (std::size_t j = 0; j < 6; ++j) {
    if (std::abs(f[j]) > o.divergence_limit * o.stats->sigma_x[j]) {
      return true;
    }
  }
  return false;
}

}  // namespace

RolloutResult rollout(const Model& model, const Trajectory& meas, const RolloutOptions& o) {
  if (!(o.restart_period > 0.0)) {
    throw UsageError("restart period must be positive");
  }
  if (meas.size() == 0) {
    throw UsageError("rollout: empty trajectory");
  }
  const NetParams* net = std::get_if<NetParams>(&model);
  const RefModelCoeffs* ref = std::get_if<RefModelCoeffs>(&model);
  if (net) {
    net->validate();
  } else {
    ref->validate();
  }
  const std::size_t n = meas.size();
  const int need = net && net->arch == Architecture::FiniteMemory ? net->memory : 1;
  const int seed = o.seed_frames < 0 ? (net ? net->memory : 1) : o.seed_frames;
  if (seed < need) {
    throw UsageError("rollout: seed span shorter than the model's memory");
  }
  std::size_t period = std::numeric_limits<std::size_t>::max();
  if (std::isfinite(o.restart_period)) {
    period = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(o.restart_period / meas.dt)));
  }

  RolloutResult res;
  Trajectory& pred = res.pred;
  pred.name = meas.name;
  pred.label = meas.label;
  pred.dt = meas.dt;
  pred.t.reserve(n);
  pred.states.reserve(n);
  pred.controls.reserve(n);
  pred.winds.reserve(n);
  pred.accels.reserve(n);

  std::vector<NetInputFrame> frames;
  frames.reserve(n);
  HiddenState h = HiddenState::zero(net ? net->hidden : 0);
  std::size_t segment = 0;
  StateVector x;
  Accel a;

  for (std::size_t i = 0; i < n; ++i) {
    if (i % period == 0) {
      segment = i;
      res.segment_starts.push_back(i);
    }
    const std::size_t in_segment = i - segment;
    if (in_segment < static_cast<std::size_t>(seed)) {
      x = meas.states[i];
    } else {
      x = euler_step(x, a, meas.dt);
      if (out_of_bounds(x, o)) {
        if (o.policy == DivergencePolicy::Throw) {
          throw DivergenceError("rollout of '" + meas.name + "' diverged at step " +
                                std::to_string(i),
                                i);
        }
        res.diverged = true;
        res.diverged_step = i;
        break;
      }
    }
    pred.t.push_back(meas.t[i]);
    pred.states.push_back(x);
    pred.controls.push_back(meas.controls[i]);
    pred.winds.push_back(meas.winds[i]);

    if (ref) {
      a = accel(x, meas.controls[i], meas.winds[i], *ref);
    } else {
      frames.push_back(make_frame(x.vel, meas.controls[i], meas.winds[i]));
      if (net->arch == Architecture::FullMemory) {
        auto [acc, next] = step_full(frames.back(), h, *net);
        a = acc;
        h = std::move(next);
      } else if (in_segment + 1 >= static_cast<std::size_t>(net->memory)) {
        const std::span<const NetInputFrame> window(
            frames.data() + (i + 1 - static_cast<std::size_t>(net->memory)),
            static_cast<std::size_t>(net->memory));
        a = forward_finite(window, *net);
      } else {
        a = meas.has_accels() ? meas.accels[i] : Accel{};
      }
    }
    pred.accels.push_back(a);
  }
  return res;
}

double mse(const Trajectory& pred, const Trajectory& meas, const StandardizationStats& stats) {
  if (pred.size() != meas.size()) {
    throw UsageError("mse: predicted and measured trajectories differ in length (" +
                     std::to_string(pred.size()) + " vs " + std::to_string(meas.size()) + ")");
  }
  if (pred.size() == 0) {
    throw UsageError("mse: empty trajectory");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = pred.states[i].flat();
    const auto m = meas.states[i].flat();
    for (std::size_t j = 0; j < 6; ++j) {
      const double e = (p[j] - m[j]) / stats.sigma_x[j];
      total += e * e;
    }
  }
  return total / static_cast<double>(pred.size());
}

double horizon_mse(const Model& model, std::span<const Trajectory> trajectories,
                   const StandardizationStats& stats, WindowShape shape) {
  const std::size_t len = shape.length();
  RolloutOptions o;
  o.seed_frames = shape.memory;
  o.policy = DivergencePolicy::Truncate;
  o.stats = stats;
  double total = 0.0;
  std::size_t windows = 0;
  for (const auto& tr : trajectories) {
    for (std::size_t s = 0; s + len <= tr.size(); s += len) {
      const Trajectory meas = tr.slice(s, len);
      const RolloutResult r = rollout(model, meas, o);
      if (r.diverged) {
        return std::numeric_limits<double>::infinity();
      }
      for (std::size_t i = static_cast<std::size_t>(shape.memory); i < len; ++i) {
        const auto p = r.pred.states[i].flat();
        const auto m = meas.states[i].flat();
        for (std::size_t j = 0; j < 6; ++j) {
          const double e = (p[j] - m[j]) / stats.sigma_x[j];
          total += e * e;
        }
      }
      ++windows;
    }
  }
  if (windows == 0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return total / (static_cast<double>(windows) * shape.horizon);
}

double default_restart_period(ManeuverLabel label) {
  switch (label) {
    case ManeuverLabel::Random:
    case ManeuverLabel::Turning:
      return 100.0;
    case ManeuverLabel::Zigzag:
    case ManeuverLabel::Berthing:
      return kNoRestart;
  }
  return kNoRestart;
}

std::vector<TrajectoryScore> score_model(const Model& model, const Dataset& test,
                                         const StandardizationStats& test_stats,
                                         const EvalOptions& options,
                                         std::vector<Trajectory>* predictions) {
  std::vector<TrajectoryScore> out;
  out.reserve(test.trajectories.size());
  for (const auto& tr : test.trajectories) {
    RolloutOptions o;
    o.restart_period = options.restart_period.value_or(default_restart_period(tr.label));
    o.policy = DivergencePolicy::Truncate;
    o.divergence_limit = options.divergence_limit;
    o.stats = test_stats;
    const RolloutResult r = rollout(model, tr, o);
    TrajectoryScore s;
    s.name = tr.name;
    s.label = tr.label;
    s.diverged = r.diverged;
    s.diverged_step = r.diverged_step;
    // A diverged rollout is scored on the frames it reached.
    s.mse = mse(r.pred, tr.slice(0, r.pred.size()), test_stats);
    out.push_back(std::move(s));
    if (predictions) {
      predictions->push_back(r.pred);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment matrix

ClassStat RolloutReport::stat(const std::string& config, ManeuverLabel label) const {
  ClassStat st;
  std::vector<double> values;
  for (const auto& cell : cells) {
    if (cell.config != config) {
      continue;
    }
    if (cell.failed) {
      ++st.failed;
      continue;
    }
    double sum = 0.0;
    std::size_t count = 0;
    bool diverged = false;
    for (const auto& s : cell.scores) {
      if (s.label == label) {
        sum += s.mse;
        ++count;
        diverged = diverged || s.diverged;
      }
    }
    if (count == 0) {
      continue;
    }
    values.push_back(sum / static_cast<double>(count));
    st.diverged += diverged ? 1 : 0;
  }
  st.runs = values.size();
  if (values.empty()) {
    st.mean = std::numeric_limits<double>::quiet_NaN();
    return st;
  }
  for (double v : values) {
    st.mean += v;
  }
  st.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) {
      ss += (v - st.mean) * (v - st.mean);
    }
    st.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return st;
}

std::optional<double> RolloutReport::baseline_mean(ManeuverLabel label) const {
  if (!baseline) {
    return std::nullopt;
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : *baseline) {
    if (s.label == label) {
      sum += s.mse;
      ++count;
    }
  }
  if (count == 0) {
    return std::nullopt;
  }
  return sum / static_cast<double>(count);
}

namespace {

std::vector<ManeuverLabel> classes_of(const Dataset& d) {
  std::vector<ManeuverLabel> out;
  for (ManeuverLabel l : {ManeuverLabel::Turning, ManeuverLabel::Zigzag, ManeuverLabel::Random,
                          ManeuverLabel::Berthing}) {
    for (const auto& tr : d.trajectories) {
      if (tr.label == l) {
        out.push_back(l);
        break;
      }
    }
  }
  return out;
}

}  // namespace

RolloutReport experiment_matrix(const std::vector<ExperimentConfig>& configs,
                                const std::vector<std::uint64_t>& seeds, const Dataset& test,
                                const ExperimentSetup& setup) {
  if (configs.empty() || seeds.empty()) {
    throw UsageError("experiment_matrix needs at least one config and one seed");
  }
  if (test.trajectories.empty()) {
    throw UsageError("experiment_matrix: empty test set");
  }
  RolloutReport report;
  report.seeds = seeds;
  report.classes = classes_of(test);
  report.test_stats = StandardizationStats::compute(test.trajectories, false);
  for (const auto& c : configs) {
    if (std::find(report.configs.begin(), report.configs.end(), c.name) != report.configs.end()) {
      throw UsageError("duplicate experiment config name '" + c.name + "'");
    }
    report.configs.push_back(c.name);
  }
  if (setup.baseline) {
    report.baseline = score_model(*setup.baseline, test, report.test_stats, setup.eval);
  }

  // Training data is shared by every seed of a config.
  std::vector<Dataset> data;
  data.reserve(configs.size());
  for (const auto& c : configs) {
    data.push_back(compose_dataset(c.recipe, setup.truth, setup.data_seed));
  }

  const std::size_t n_cells = configs.size() * seeds.size();
  report.cells.resize(n_cells);
  auto run = [&](std::size_t k) {
    const std::size_t ci = k / seeds.size();
    const ExperimentConfig& cfg = configs[ci];
    CellResult& cell = report.cells[k];
    cell.config = cfg.name;
    cell.seed = seeds[k % seeds.size()];
    try {
      TrainConfig tc = setup.train;
      tc.jobs = 1;
      const TrainResult tr = train(data[ci], tc, cfg.loss, cfg.arch, cell.seed);
      cell.log = tr.log;
      cell.params = tr.params;
      cell.scores = score_model(tr.params, test, report.test_stats, setup.eval);
    } catch (const Error& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  };

  const std::size_t jobs =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, setup.jobs)), n_cells);
  if (jobs <= 1) {
    for (std::size_t k = 0; k < n_cells; ++k) {
      run(k);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n_cells; k = next++) {
          run(k);
        }
      });
    }
  }
  for (const auto& cell : report.cells) {
    if (cell.failed) {
      warn("config '" + cell.config + "' seed " + std::to_string(cell.seed) +
           " failed: " + cell.error);
    }
  }
  return report;
}

void write_report_csv(const RolloutReport& report, std::ostream& out) {
  auto num = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  out << "class";
  if (report.baseline) {
    out << ",baseline";
  }
  for (const auto& c : report.configs) {
    out << ',' << c << "_mean," << c << "_std," << c << "_diverged";
  }
  out << '\n';
  for (ManeuverLabel l : report.classes) {
    out << label_name(l);
    if (report.baseline) {
      const auto b = report.baseline_mean(l);
      out << ',' << (b ? format_double(*b) : std::string());
    }
    for (const auto& c : report.configs) {
      const ClassStat st = report.stat(c, l);
      out << ',' << num(st.mean) << ',' << (st.runs ? format_double(st.std) : std::string())
          << ',' << st.diverged;
    }
    out << '\n';
  }
}

void write_scores_csv(const RolloutReport& report, std::ostream& out) {
  out << "config,seed,trajectory,label,mse,diverged,step\n";
  auto row = [&](const std::string& cfg, const std::string& seed, const TrajectoryScore& s) {
    out << cfg << ',' << seed << ',' << s.name << ',' << label_code(s.label) << ','
        << format_double(s.mse) << ',' << (s.diverged ? 1 : 0) << ',' << s.diverged_step << '\n';
  };
  if (report.baseline) {
    for (const auto& s : *report.baseline) {
      row("baseline", "", s);
    }
  }
  for (const auto& cell : report.cells) {
    for (const auto& s : cell.scores) {
      row(cell.config, std::to_string(cell.seed), s);
    }
  }
}

std::vector<std::filesystem::path> emit_plots(const std::vector<PlotItem>& items,
                                              const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  if (items.empty()) {
    warn("emit_plots: no trajectories, nothing written");
    return written;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create plot directory " + dir.string() + ": " + ec.message());
  }
  auto open = [&](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) {
      throw IoError("cannot write " + p.string());
    }
    return f;
  };
  for (const auto& item : items) {
    const std::size_t n = std::min(item.meas.size(), item.pred.size());
    const auto track = dir / (item.name + "_track.csv");
    {
      std::ofstream f = open(track);
      f << "t,X_meas,Y_meas,X_pred,Y_pred\n";
      for (std::size_t i = 0; i < n; ++i) {
        const auto& m = item.meas.states[i].pose;
        const auto& p = item.pred.states[i].pose;
        f << format_double(item.meas.t[i]) << ',' << format_double(m.X) << ','
          << format_double(m.Y) << ',' << format_double(p.X) << ',' << format_double(p.Y)
          << '\n';
      }
      if (!f) {
        throw IoError("failed writing " + track.string());
      }
    }
    written.push_back(track);

    const bool acc = item.meas.has_accels() && item.pred.has_accels();
    const auto series = dir / (item.name + "_series.csv");
    {
      std::ofstream f = open(series);
      f << "t,u_meas,u_pred,vm_meas,vm_pred,r_meas,r_pred,psi_meas,psi_pred";
      if (acc) {
        f << ",du_meas,du_pred,dvm_meas,dvm_pred,dr_meas,dr_pred";
      }
      f << '\n';
      for (std::size_t i = 0; i < n; ++i) {
        const StateVector& m = item.meas.states[i];
        const StateVector& p = item.pred.states[i];
        f << format_double(item.meas.t[i]) << ',' << format_double(m.vel.u) << ','
          << format_double(p.vel.u) << ',' << format_double(m.vel.vm) << ','
          << format_double(p.vel.vm) << ',' << format_double(m.vel.r) << ','
          << format_double(p.vel.r) << ',' << format_double(m.pose.psi) << ','
          << format_double(p.pose.psi);
        if (acc) {
          const Accel& am = item.meas.accels[i];
          const Accel& ap = item.pred.accels[i];
          f << ',' << format_double(am.du) << ',' << format_double(ap.du) << ','
            << format_double(am.dvm) << ',' << format_double(ap.dvm) << ','
            << format_double(am.dr) << ',' << format_double(ap.dr);
        }
        f << '\n';
      }
      if (!f) {
        throw IoError("failed writing " + series.string());
      }
    }
    written.push_back(series);
  }
  return written;
}

}  // namespace shipid
