#include "okf/experiments.hpp"

#include "okf/json_util.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace okf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Tuning t) {
  switch (t) {
    case Tuning::estimated: return "estimated";
    case Tuning::optimized: return "optimized";
    case Tuning::oracle: return "oracle";
  }
  return "estimated";
}

std::optional<Tuning> parse_tuning(std::string_view s) {
  if (s == "estimated") return Tuning::estimated;
  if (s == "optimized") return Tuning::optimized;
  if (s == "oracle") return Tuning::oracle;
  return std::nullopt;
}

SplitData simulate_benchmark(Benchmark b, int n_train, int n_test, uint64_t seed,
                             const std::function<void(DopplerSimConfig&)>& tweak) {
  DopplerSimConfig cfg = doppler_preset(b);
  if (tweak) tweak(cfg);
  SplitData out;
  out.name = to_string(b);
  out.family = "doppler";
  cfg.n_trajectories = n_train;
  cfg.seed = derive_seed(seed, out.name + "/train");
  cfg.id_prefix = out.name + "-train";
  SimOutput tr = simulate_doppler(cfg);
  cfg.n_trajectories = n_test;
  cfg.seed = derive_seed(seed, out.name + "/test");
  cfg.id_prefix = out.name + "-test";
  SimOutput te = simulate_doppler(cfg);
  out.train = std::move(tr.data);
  out.test = std::move(te.data);
  out.truth = tr.truth;
  return out;
}

SplitData simulate_lidar_split(int n_train, int n_test, uint64_t seed, LidarSimConfig base) {
  SplitData out;
  out.name = "lidar";
  out.family = "lidar";
  base.n_trajectories = n_train;
  base.seed = derive_seed(seed, "lidar/train");
  base.id_prefix = "lidar-train";
  SimOutput tr = simulate_lidar(base);
  base.n_trajectories = n_test;
  base.seed = derive_seed(seed, "lidar/test");
  base.id_prefix = "lidar-test";
  SimOutput te = simulate_lidar(base);
  out.train = std::move(tr.data);
  out.test = std::move(te.data);
  out.truth = tr.truth;
  return out;
}

bool oracle_available(const std::string& scenario, const ModelSpec& model, const std::optional<NoiseTruth>& truth) {
  return scenario != "toy" && truth && truth->r_coords == model.r_coords;
}

Fitted fit(const ModelSpec& model, Tuning tuning, const Dataset& train, const std::optional<NoiseTruth>& truth,
           const TrainConfig& cfg) {
  Fitted f;
  switch (tuning) {
    case Tuning::estimated: {
      const NoiseEstimate est = estimate_noise(train, model);
      f.Q = est.Q;
      f.R = est.R;
      break;
    }
    case Tuning::oracle: {
      if (!truth) throw InvalidArgument("oracle tuning needs the simulator's noise truth");
      const NoiseEstimate est = build_oracle_params(*truth, model, train);
      f.Q = est.Q;
      f.R = est.R;
      break;
    }
    case Tuning::optimized: {
      TrainResult res = okf::train(train, model, cfg);
      f.Q = res.params.Q();
      f.R = res.params.R();
      f.theta = res.params;
      f.trace = std::move(res.trace);
      break;
    }
  }
  return f;
}

json CellResult::to_json() const {
  json j{{"experiment", experiment},
         {"benchmark", benchmark},
         {"test_benchmark", test_benchmark},
         {"baseline", baseline},
         {"tuning", tuning},
         {"seed", seed},
         {"n_train", n_train},
         {"ok", ok},
         {"error", error}};
  if (ok) {
    j["mse"] = report.aggregate_mse;
    j["ci95"] = {report.ci95.first, report.ci95.second};
    j["nll"] = report.aggregate_nll ? json(*report.aggregate_nll) : json(nullptr);
    j["n"] = report.n;
    j["n_failed"] = report.failed_ids.size();
    j["reference"] = reference;
    j["vs_reference"] = vs_reference ? vs_reference->to_json() : json(nullptr);
    j["Q"] = okf::to_json(Q);
    j["R"] = okf::to_json(R);
  }
  return j;
}

namespace {

uint64_t cell_seed(uint64_t seed, uint64_t train_seed, const std::string& scenario, Baseline b) {
  return derive_seed(seed ^ train_seed, scenario + "/" + to_string(b));
}

CellResult run_cell(const std::string& experiment, const SplitData& data, const Dataset& train, const Dataset& test,
                    Baseline baseline, Tuning tuning, TrainConfig cfg, uint64_t seed) {
  CellResult c;
  c.experiment = experiment;
  c.benchmark = data.name;
  c.test_benchmark = data.name;
  c.baseline = to_string(baseline);
  c.tuning = to_string(tuning);
  c.seed = seed;
  c.n_train = static_cast<int>(train.size());
  try {
    const ModelSpec model = model_for_family(data.family, baseline);
    cfg.seed = cell_seed(seed, cfg.seed, data.name, baseline);
    const Fitted f = fit(model, tuning, train, data.truth, cfg);
    c.Q = f.Q;
    c.R = f.R;
    c.report = evaluate(model, f.Q, f.R, test);
  } catch (const Error& e) {
    c.ok = false;
    c.error = e.what();
  }
  return c;
}

void attach_reference(CellResult& cell, const CellResult& ref) {
  if (!cell.ok || !ref.ok) return;
  cell.reference = ref.baseline + "/" + ref.tuning;
  try {
    cell.vs_reference = compare_reports(ref.report, cell.report);
  } catch (const Error&) {
    cell.vs_reference.reset();
  }
}

}  // namespace

std::vector<CellResult> run_scenario(const SplitData& data, const std::vector<Baseline>& baselines,
                                     const std::vector<Tuning>& tunings, const TrainConfig& train, uint64_t seed,
                                     const std::string& experiment) {
  std::vector<CellResult> out;
  for (Baseline b : baselines) {
    std::optional<size_t> est_index;
    for (Tuning t : tunings) {
      if (t == Tuning::oracle) {
        try {
          if (!oracle_available(data.name, model_for_family(data.family, b), data.truth)) continue;
        } catch (const Error&) {
          continue;
        }
      }
      out.push_back(run_cell(experiment, data, data.train, data.test, b, t, train, seed));
      if (t == Tuning::estimated) est_index = out.size() - 1;
    }
    if (est_index) {
      for (size_t i = *est_index + 1; i < out.size(); ++i) attach_reference(out[i], out[*est_index]);
    }
  }
  return out;
}

std::vector<CellResult> run_matrix(const MatrixConfig& cfg) {
  std::vector<CellResult> out;
  for (uint64_t seed : cfg.seeds) {
    for (Benchmark b : cfg.benchmarks) {
      SplitData data;
      try {
        data = simulate_benchmark(b, cfg.n_train, cfg.n_test, seed);
      } catch (const Error& e) {
        CellResult c;
        c.experiment = "table2";
        c.benchmark = to_string(b);
        c.seed = seed;
        c.ok = false;
        c.error = std::string("simulation: ") + e.what();
        out.push_back(std::move(c));
        continue;
      }
      auto cells = run_scenario(data, cfg.baselines, cfg.tunings, cfg.train, seed, "table2");
      out.insert(out.end(), std::make_move_iterator(cells.begin()), std::make_move_iterator(cells.end()));
    }
  }
  return out;
}

std::vector<SweepPoint> train_size_sweep(const SweepConfig& cfg) {
  if (cfg.sizes.empty()) throw InvalidArgument("train_size_sweep: no sizes");
  const int max_size = *std::max_element(cfg.sizes.begin(), cfg.sizes.end());
  const SplitData data = simulate_benchmark(cfg.benchmark, max_size, cfg.n_test, cfg.seed);
  std::vector<SweepPoint> out;
  for (int size : cfg.sizes) {
    if (size < 1 || size > max_size) throw InvalidArgument("train_size_sweep: size out of range");
    const Dataset train = head(data.train, static_cast<size_t>(size));
    TrainConfig tc = cfg.train;
    tc.batch_size = std::min(tc.batch_size, size);
    if (cfg.min_steps > 0) {
      const int per_epoch = (size + tc.batch_size - 1) / tc.batch_size;
      tc.epochs = std::max(tc.epochs, (cfg.min_steps + per_epoch - 1) / per_epoch);
    }
    SweepPoint p;
    p.size = size;
    p.kf = run_cell("train_size", data, train, data.test, cfg.baseline, Tuning::estimated, tc, cfg.seed);
    p.okf = run_cell("train_size", data, train, data.test, cfg.baseline, Tuning::optimized, tc, cfg.seed);
    attach_reference(p.okf, p.kf);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> row_mean_log(const std::vector<std::vector<double>>& log_ratio) {
  std::vector<double> out;
  for (const auto& row : log_ratio) {
    double s = 0.0;
    int n = 0;
    for (double v : row) {
      if (std::isfinite(v)) {
        s += v;
        ++n;
      }
    }
    out.push_back(n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

GeneralizationResult generalization_matrix(const GeneralizationConfig& cfg) {
  GeneralizationResult res;
  std::vector<SplitData> tests;
  for (Benchmark b : cfg.test_benchmarks) {
    tests.push_back(simulate_benchmark(b, 1, cfg.n_test, cfg.seed));
    res.test_names.push_back(to_string(b));
  }
  for (Benchmark tb : cfg.train_benchmarks) {
    res.train_names.push_back(to_string(tb));
    const SplitData train = simulate_benchmark(tb, cfg.n_train, 1, cfg.seed);
    const ModelSpec model = model_for_family("doppler", cfg.baseline);
    std::vector<double> row;
    std::optional<Fitted> kf, okf;
    std::string error;
    try {
      TrainConfig tc = cfg.train;
      tc.seed = cell_seed(cfg.seed, tc.seed, train.name, cfg.baseline);
      kf = fit(model, Tuning::estimated, train.train, train.truth, tc);
      okf = fit(model, Tuning::optimized, train.train, train.truth, tc);
    } catch (const Error& e) {
      error = e.what();
    }
    for (const auto& test : tests) {
      CellResult ck, co;
      for (auto* c : {&ck, &co}) {
        c->experiment = "generalization";
        c->benchmark = train.name;
        c->test_benchmark = test.name;
        c->baseline = to_string(cfg.baseline);
        c->seed = cfg.seed;
        c->n_train = cfg.n_train;
      }
      ck.tuning = "estimated";
      co.tuning = "optimized";
      double lr = std::numeric_limits<double>::quiet_NaN();
      if (kf && okf) {
        try {
          ck.Q = kf->Q;
          ck.R = kf->R;
          ck.report = evaluate(model, kf->Q, kf->R, test.test);
          co.Q = okf->Q;
          co.R = okf->R;
          co.report = evaluate(model, okf->Q, okf->R, test.test);
          attach_reference(co, ck);
          lr = std::log(ck.report.aggregate_mse / co.report.aggregate_mse);
        } catch (const Error& e) {
          ck.ok = co.ok = false;
          ck.error = co.error = e.what();
        }
      } else {
        ck.ok = co.ok = false;
        ck.error = co.error = error;
      }
      row.push_back(lr);
      res.cells.push_back(std::move(ck));
      res.cells.push_back(std::move(co));
    }
    res.log_ratio.push_back(std::move(row));
  }
  res.summary = row_mean_log(res.log_ratio);
  return res;
}

std::vector<AblationRow> diagonal_ablation(const AblationConfig& cfg) {
  std::vector<AblationRow> out;
  for (Benchmark b : cfg.benchmarks) {
    const SplitData data = simulate_benchmark(b, cfg.n_train, cfg.n_test, cfg.seed);
    AblationRow row;
    row.benchmark = data.name;
    row.kf = run_cell("ablation", data, data.train, data.test, cfg.baseline, Tuning::estimated, cfg.train, cfg.seed);
    TrainConfig diag = cfg.train;
    diag.parameterization = Parameterization::diagonal;
    row.dkf = run_cell("ablation", data, data.train, data.test, cfg.baseline, Tuning::optimized, diag, cfg.seed);
    row.dkf.tuning = "optimized-diagonal";
    TrainConfig full = cfg.train;
    full.parameterization = Parameterization::full_cholesky;
    row.okf = run_cell("ablation", data, data.train, data.test, cfg.baseline, Tuning::optimized, full, cfg.seed);
    attach_reference(row.dkf, row.kf);
    attach_reference(row.okf, row.kf);
    out.push_back(std::move(row));
  }
  return out;
}

void write_results_jsonl(const std::vector<CellResult>& cells, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& c : cells) out << c.to_json().dump() << '\n';
}

void write_results_csv(const std::vector<CellResult>& cells, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "experiment,benchmark,test_benchmark,baseline,tuning,seed,n_train,ok,mse,ci_low,ci_high,n,z_vs_reference\n";
  out << std::setprecision(10);
  for (const auto& c : cells) {
    out << c.experiment << ',' << c.benchmark << ',' << c.test_benchmark << ',' << c.baseline << ',' << c.tuning
        << ',' << c.seed << ',' << c.n_train << ',' << (c.ok ? 1 : 0) << ',';
    if (c.ok) {
      out << c.report.aggregate_mse << ',' << c.report.ci95.first << ',' << c.report.ci95.second << ','
          << c.report.n << ',';
      if (c.vs_reference) out << c.vs_reference->z;
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
}

}  // namespace okf
