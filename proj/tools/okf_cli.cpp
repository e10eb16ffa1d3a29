// okf_cli: simulate | tune | train | evaluate | experiment | report
//
// Every verb resolves its configuration as defaults < --config file < flags,
// runs, and writes the resolved configuration next to its outputs. Feeding
// that file back with --config reproduces the run.

#include "okf/data.hpp"
#include "okf/eval.hpp"
#include "okf/experiments.hpp"
#include "okf/models.hpp"
#include "okf/noise_est.hpp"
#include "okf/okf_train.hpp"
#include "okf/parallel.hpp"
#include "okf/params_io.hpp"
#include "okf/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace okf;

namespace {

enum Exit { kOk = 0, kGeneric = 1, kUsage = 2, kData = 3, kNumeric = 4, kPartial = 5 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kPresets = {"toy",   "close",     "const_v",     "const_a", "free",
                                           "lidar", "toy_lidar", "toy_doppler", "video"};

fs::path output_root() {
  const char* env = std::getenv("OKF_OUTPUT_ROOT");
  return (env && *env) ? fs::path(env) : fs::path("okf_runs");
}

// ------------------------------------------------------------------ defaults

json simulate_defaults() {
  return {{"verb", "simulate"},
          {"preset", "toy"},
          {"seed", 0},
          {"n_train", nullptr},  // preset default
          {"n_test", nullptr},
          {"out", (output_root() / "simulate").string()},
          {"toy_lidar", {{"q", 1.0}, {"r0", 100.0}, {"length", 50}}},
          {"video", {{"n_sequences", 4}, {"frames", 400}, {"targets_per_sequence", 60}}}};
}

json model_defaults(const std::string& verb) {
  return {{"verb", verb},
          {"data", nullptr},
          {"variant", "kf"},
          {"family", nullptr},  // read from the dataset metadata
          {"objective", "filter-current"},
          {"p0_scale", 1e4},
          {"warmup_steps", 0},
          {"out", (output_root() / verb).string()}};
}

json tune_defaults() {
  json j = model_defaults("tune");
  j["method"] = "estimated";
  return j;
}

json train_defaults() {
  json j = model_defaults("train");
  j["train"] = TrainConfig{}.to_json();
  j["init_params"] = nullptr;
  return j;
}

json evaluate_defaults() {
  json j = model_defaults("evaluate");
  j["params"] = json::array();
  j["nll"] = true;
  j["bootstrap"] = false;
  j["n_bootstrap"] = 2000;
  j["seed"] = 0;
  return j;
}

json experiment_defaults() {
  return {{"verb", "experiment"},
          {"grid", "table2"},
          {"benchmarks", {"toy", "close", "const_v", "const_a", "free"}},
          {"baselines", {"kf", "kfp", "ekf", "ekfp"}},
          {"tunings", {"estimated", "optimized", "oracle"}},
          {"seeds", {0}},
          {"n_train", nullptr},
          {"n_test", nullptr},
          {"benchmark", "free"},
          {"baseline", "kf"},
          {"sizes", {20, 50, 100, 500, 1500}},
          {"min_steps", 0},
          {"train", TrainConfig{}.to_json()},
          {"out", (output_root() / "experiment").string()}};
}

json report_defaults() {
  return {{"verb", "report"}, {"results", nullptr}, {"out", nullptr}};
}

// ------------------------------------------------------------------ config plumbing

struct Command {
  std::string verb;
  json defaults;
  json patch = json::object();
  std::string config_file;
  int (*run)(const json&) = nullptr;
};

template <class T>
void add_opt(CLI::App* app, const std::string& flags, const std::string& pointer, json& patch, const std::string& help) {
  app->add_option_function<T>(
      flags, [&patch, pointer](const T& v) { patch[json::json_pointer(pointer)] = v; }, help);
}

void bind_flag(CLI::App* app, const std::string& flags, const std::string& pointer, json& patch,
               const std::string& help) {
  app->add_flag_callback(flags, [&patch, pointer]() { patch[json::json_pointer(pointer)] = true; }, help);
}

json resolve(const Command& c) {
  json cfg = c.defaults;
  if (!c.config_file.empty()) {
    json file;
    try {
      file = read_json_file(c.config_file);
    } catch (const Error& e) {
      throw UsageError(std::string("--config: ") + e.what());
    }
    if (!file.is_object()) throw UsageError("--config: top level must be an object");
    if (file.contains("verb") && file["verb"] != c.verb) {
      throw UsageError("--config: file is for '" + file["verb"].get<std::string>() + "', not '" + c.verb + "'");
    }
    for (auto it = file.begin(); it != file.end(); ++it) {
      if (!cfg.contains(it.key())) throw UsageError("--config: unknown key '" + it.key() + "'");
      if (cfg[it.key()].is_object() && it.value().is_object()) {
        cfg[it.key()].merge_patch(it.value());
      } else {
        cfg[it.key()] = it.value();
      }
    }
  }
  const json flat = c.patch.flatten();
  for (const auto& [ptr, value] : flat.items()) cfg[json::json_pointer(ptr)] = value;
  // flatten() turns arrays into indexed entries; restore whole arrays.
  for (auto it = c.patch.begin(); it != c.patch.end(); ++it) {
    if (it.value().is_array()) cfg[it.key()] = it.value();
  }
  return cfg;
}

template <class T>
T get(const json& cfg, const std::string& key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError("config key '" + key + "': " + e.what());
  }
}

fs::path out_dir(const json& cfg) {
  const fs::path dir = get<std::string>(cfg, "out");
  fs::create_directories(dir);
  return dir;
}

void save_resolved(const json& cfg, const fs::path& dir) { write_json_file(cfg, dir / (cfg["verb"].get<std::string>() + ".json")); }

Baseline parse_variant(const std::string& s) {
  const auto b = parse_baseline(s);
  if (!b) throw UsageError("unknown variant '" + s + "' (kf, kfp, ekf, ekfp)");
  return *b;
}

Benchmark parse_bench(const std::string& s) {
  const auto b = parse_benchmark(s);
  if (!b) throw UsageError("unknown benchmark '" + s + "'");
  return *b;
}

Dataset load_data(const json& cfg) {
  if (cfg.at("data").is_null()) throw UsageError("--data is required");
  return read_dataset(get<std::string>(cfg, "data"));
}

std::string family_of(const json& cfg, const Dataset& ds) {
  if (!cfg.at("family").is_null()) return get<std::string>(cfg, "family");
  if (ds.metadata.contains("family")) return ds.metadata["family"].get<std::string>();
  throw UsageError("dataset has no model family in its metadata; pass --family");
}

ModelSpec build_model(const json& cfg, const Dataset& ds) {
  ModelSpec m = model_for_family(family_of(cfg, ds), parse_variant(get<std::string>(cfg, "variant")));
  const std::string obj = get<std::string>(cfg, "objective");
  if (obj == "predict-next") {
    m.objective = Objective::predict_next;
  } else if (obj != "filter-current") {
    throw UsageError("unknown objective '" + obj + "'");
  }
  m.init.p0_scale = get<double>(cfg, "p0_scale");
  m.warmup_steps = get<int>(cfg, "warmup_steps");
  m.validate();
  if (m.dim_x() != ds.dim_x || m.dim_z() != ds.dim_z) {
    throw SchemaError("dataset dimensions (" + std::to_string(ds.dim_x) + ", " + std::to_string(ds.dim_z) +
                      ") do not match model " + m.name);
  }
  return m;
}

std::optional<NoiseTruth> truth_of(const Dataset& ds) {
  if (!ds.metadata.contains("truth")) return std::nullopt;
  return NoiseTruth::from_json(ds.metadata["truth"]);
}

json provenance(const json& cfg, const Dataset& ds) {
  return {{"tool", "okf_cli"}, {"config", cfg}, {"data_trajectories", ds.size()}};
}

// ------------------------------------------------------------------ verbs

int run_simulate(const json& cfg) {
  const std::string preset = get<std::string>(cfg, "preset");
  if (std::find(kPresets.begin(), kPresets.end(), preset) == kPresets.end()) {
    throw UsageError("unknown preset '" + preset + "'");
  }
  const uint64_t seed = get<uint64_t>(cfg, "seed");
  json resolved = cfg;
  auto size = [&](const char* key, int dflt) {
    const int n = cfg.at(key).is_null() ? dflt : get<int>(cfg, key);
    if (n < 1) throw UsageError(std::string(key) + " must be positive");
    resolved[key] = n;
    return n;
  };
  const fs::path dir = out_dir(cfg);
  SplitData split;
  if (preset == "lidar") {
    split = simulate_lidar_split(size("n_train", 1400), size("n_test", 600), seed);
  } else if (preset == "toy_lidar") {
    ToyLidarConfig c;
    c.q = cfg["toy_lidar"].value("q", c.q);
    c.r0 = cfg["toy_lidar"].value("r0", c.r0);
    c.length = cfg["toy_lidar"].value("length", c.length);
    split.name = split.family = "toy_lidar";
    c.n_trajectories = size("n_train", 1000);
    c.seed = derive_seed(seed, "toy_lidar/train");
    c.id_prefix = "toy_lidar-train";
    SimOutput tr = simulate_toy_lidar(c);
    c.n_trajectories = size("n_test", 1000);
    c.seed = derive_seed(seed, "toy_lidar/test");
    c.id_prefix = "toy_lidar-test";
    split.train = std::move(tr.data);
    split.test = simulate_toy_lidar(c).data;
    split.truth = tr.truth;
  } else if (preset == "video") {
    PedestrianSimConfig c;
    c.n_sequences = cfg["video"].value("n_sequences", c.n_sequences);
    c.frames = cfg["video"].value("frames", c.frames);
    c.targets_per_sequence = cfg["video"].value("targets_per_sequence", c.targets_per_sequence);
    c.seed = derive_seed(seed, "video");
    if (c.n_sequences < 2) throw UsageError("video preset needs at least two sequences");
    const auto files = write_pedestrian_mot(c, dir / "mot");
    MotSplit ms;
    ms.train.assign(files.begin(), files.end() - 1);
    ms.test.push_back(files.back());
    auto [train, test] = import_mot_split(ms);
    split.name = split.family = "video";
    split.train = std::move(train);
    split.test = std::move(test);
    resolved["n_train"] = split.train.size();
    resolved["n_test"] = split.test.size();
  } else {
    const Benchmark b = parse_bench(preset == "toy_doppler" ? "toy" : preset);
    split = simulate_benchmark(b, size("n_train", 1500), size("n_test", 1000), seed);
  }
  write_dataset(split.train, dir / "train.okfd");
  write_dataset(split.test, dir / "test.okfd");
  if (split.truth) write_json_file(split.truth->to_json(), dir / "truth.json");
  save_resolved(resolved, dir);
  std::cout << "simulate " << preset << ": " << split.train.size() << " train / " << split.test.size()
            << " test trajectories -> " << dir.string() << "\n";
  return kOk;
}

int run_tune(const json& cfg) {
  const Dataset ds = load_data(cfg);
  const ModelSpec m = build_model(cfg, ds);
  const std::string method = get<std::string>(cfg, "method");
  NoiseEstimate est;
  if (method == "estimated") {
    est = estimate_noise(ds, m);
  } else if (method == "oracle") {
    const auto truth = truth_of(ds);
    if (!truth) throw SchemaError("oracle tuning needs simulator truth in the dataset metadata");
    est = build_oracle_params(*truth, m, ds);
  } else {
    throw UsageError("unknown method '" + method + "' (estimated, oracle)");
  }
  const fs::path dir = out_dir(cfg);
  ParamsFile p = ParamsFile::from_estimate(est.Q, est.R, method, model_fingerprint(m));
  p.provenance = provenance(cfg, ds);
  p.provenance["n_q_residuals"] = est.n_q;
  p.provenance["n_r_residuals"] = est.n_r;
  write_params(p, dir / "params.json");
  save_resolved(cfg, dir);
  std::cout << "tune " << m.name << " (" << method << ")";
  if (method == "estimated") std::cout << ": " << est.n_r << " observation residuals";
  std::cout << " -> " << (dir / "params.json").string() << "\n";
  return kOk;
}

json trace_json(const TrainTrace& t) {
  json v = json::array();
  for (const auto& [step, loss] : t.validation) v.push_back({step, loss});
  return {{"loss", t.loss}, {"grad_norm", t.grad_norm}, {"validation", v}, {"selected_step", t.selected_step}};
}

int run_train(const json& cfg) {
  const Dataset ds = load_data(cfg);
  const ModelSpec m = build_model(cfg, ds);
  TrainConfig tc;
  try {
    tc = TrainConfig::from_json(cfg.at("train"));
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (!cfg.at("init_params").is_null()) {
    const ParamsFile init = read_params(get<std::string>(cfg, "init_params"));
    tc.initial = init.theta ? *init.theta : NoiseParams::from_matrices(init.Q, init.R, tc.parameterization, tc.jitter);
  }
  const fs::path dir = out_dir(cfg);
  save_resolved(cfg, dir);
  TrainResult res;
  try {
    res = train(ds, m, tc);
  } catch (const DivergenceError& e) {
    write_json_file(trace_json(e.trace()), dir / "trace.json");
    throw;
  }
  write_json_file(trace_json(res.trace), dir / "trace.json");
  ParamsFile p = ParamsFile::from_trained(res.params, model_fingerprint(m));
  p.train_config = tc.to_json();
  p.final_losses = {{"first", res.trace.loss.empty() ? json(nullptr) : json(res.trace.loss.front())},
                    {"last", res.trace.loss.empty() ? json(nullptr) : json(res.trace.loss.back())}};
  p.provenance = provenance(cfg, ds);
  write_params(p, dir / "params.json");
  std::cout << "train " << m.name << ": " << res.trace.loss.size() << " steps, loss " << p.final_losses["first"]
            << " -> " << p.final_losses["last"] << " -> " << (dir / "params.json").string() << "\n";
  return kOk;
}

int run_evaluate(const json& cfg) {
  const Dataset ds = load_data(cfg);
  const ModelSpec m = build_model(cfg, ds);
  const auto files = get<std::vector<std::string>>(cfg, "params");
  if (files.empty()) throw UsageError("--params needs at least one file");
  EvalOptions opts;
  opts.compute_nll = get<bool>(cfg, "nll");
  opts.bootstrap = get<bool>(cfg, "bootstrap");
  opts.n_bootstrap = get<int>(cfg, "n_bootstrap");
  opts.seed = get<uint64_t>(cfg, "seed");
  const fs::path dir = out_dir(cfg);
  std::vector<EvalReport> reports;
  json summary = json::array();
  int failed = 0;
  for (size_t k = 0; k < files.size(); ++k) {
    const ParamsFile p = read_params(files[k]);
    if (!p.model_fingerprint.empty() && p.model_fingerprint != model_fingerprint(m)) {
      throw SchemaError(files[k] + ": parameters were fitted for '" + p.model_fingerprint + "', not '" +
                        model_fingerprint(m) + "'");
    }
    if (p.dim_x != m.dim_x() || p.dim_z != m.dim_z()) throw SchemaError(files[k] + ": dimension mismatch");
    EvalReport r = evaluate(m, p.Q, p.R, ds, opts);
    failed += static_cast<int>(r.failed_ids.size());
    const std::string name = "report_" + std::to_string(k) + "_" + fs::path(files[k]).parent_path().filename().string();
    json rj = r.to_json();
    rj["params"] = files[k];
    rj["method"] = p.method;
    write_json_file(rj, dir / (name + ".json"));
    json line = {{"params", files[k]}, {"method", p.method}, {"mse", r.aggregate_mse}, {"ci95", {r.ci95.first, r.ci95.second}}, {"n", r.n}};
    if (k > 0) {
      const ComparisonResult c = compare_reports(reports.front(), r);
      line["vs_first"] = c.to_json();
    }
    std::cout << std::setw(12) << p.method << "  mse " << std::setprecision(6) << r.aggregate_mse << "  ci95 ["
              << r.ci95.first << ", " << r.ci95.second << "]  n " << r.n;
    if (line.contains("vs_first")) std::cout << "  z vs first " << line["vs_first"]["z"];
    std::cout << "  (" << files[k] << ")\n";
    summary.push_back(line);
    reports.push_back(std::move(r));
  }
  write_json_file(summary, dir / "summary.json");
  save_resolved(cfg, dir);
  if (failed > 0) {
    std::cerr << failed << " trajectories failed during evaluation; see the report files\n";
    return kPartial;
  }
  return kOk;
}

template <class T, class F>
std::vector<T> parse_list(const json& cfg, const std::string& key, F parse) {
  std::vector<T> out;
  for (const auto& s : get<std::vector<std::string>>(cfg, key)) out.push_back(parse(s));
  return out;
}

int run_experiment(const json& cfg) {
  const std::string grid = get<std::string>(cfg, "grid");
  TrainConfig tc;
  try {
    tc = TrainConfig::from_json(cfg.at("train"));
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  auto opt_size = [&](const char* key, int dflt) { return cfg.at(key).is_null() ? dflt : get<int>(cfg, key); };
  const auto seeds = get<std::vector<uint64_t>>(cfg, "seeds");
  if (seeds.empty()) throw UsageError("seeds must not be empty");
  const auto baselines = parse_list<Baseline>(cfg, "baselines", parse_variant);
  const auto tunings = parse_list<Tuning>(cfg, "tunings", [](const std::string& s) {
    const auto t = parse_tuning(s);
    if (!t) throw UsageError("unknown tuning '" + s + "'");
    return *t;
  });
  const fs::path dir = out_dir(cfg);
  save_resolved(cfg, dir);
  std::vector<CellResult> cells;
  json extra = json::object();
  if (grid == "table2") {
    MatrixConfig mc;
    mc.benchmarks = parse_list<Benchmark>(cfg, "benchmarks", parse_bench);
    mc.baselines = baselines;
    mc.tunings = tunings;
    mc.seeds = seeds;
    mc.n_train = opt_size("n_train", 1500);
    mc.n_test = opt_size("n_test", 1000);
    mc.train = tc;
    cells = run_matrix(mc);
  } else if (grid == "lidar" || grid == "video") {
    for (uint64_t seed : seeds) {
      SplitData data;
      std::vector<Baseline> bs = baselines;
      if (grid == "lidar") {
        data = simulate_lidar_split(opt_size("n_train", 1400), opt_size("n_test", 600), seed);
        std::erase_if(bs, [](Baseline b) { return is_extended(b); });
      } else {
        PedestrianSimConfig pc;
        pc.seed = derive_seed(seed, "video");
        const auto files = write_pedestrian_mot(pc, dir / ("mot-" + std::to_string(seed)));
        MotSplit ms;
        ms.train.assign(files.begin(), files.end() - 1);
        ms.test.push_back(files.back());
        auto [train, test] = import_mot_split(ms);
        data.name = data.family = "video";
        data.train = std::move(train);
        data.test = std::move(test);
        bs = {Baseline::kf};
      }
      auto part = run_scenario(data, bs, tunings, tc, seed, grid);
      cells.insert(cells.end(), part.begin(), part.end());
    }
  } else if (grid == "sweep") {
    for (uint64_t seed : seeds) {
      SweepConfig sc;
      sc.benchmark = parse_bench(get<std::string>(cfg, "benchmark"));
      sc.baseline = parse_variant(get<std::string>(cfg, "baseline"));
      sc.sizes = get<std::vector<int>>(cfg, "sizes");
      sc.n_test = opt_size("n_test", 1000);
      sc.seed = seed;
      sc.train = tc;
      sc.min_steps = get<int>(cfg, "min_steps");
      for (auto& p : train_size_sweep(sc)) {
        cells.push_back(p.kf);
        cells.push_back(p.okf);
      }
    }
  } else if (grid == "generalization") {
    GeneralizationConfig gc;
    gc.train_benchmarks = gc.test_benchmarks = parse_list<Benchmark>(cfg, "benchmarks", parse_bench);
    gc.baseline = parse_variant(get<std::string>(cfg, "baseline"));
    gc.n_train = opt_size("n_train", 1500);
    gc.n_test = opt_size("n_test", 1000);
    gc.seed = seeds.front();
    gc.train = tc;
    const GeneralizationResult g = generalization_matrix(gc);
    cells = g.cells;
    extra = {{"train", g.train_names}, {"test", g.test_names}, {"summary_mean_log_ratio", g.summary}};
    json rows = json::array();
    for (const auto& r : g.log_ratio) {
      json row = json::array();
      for (double v : r) row.push_back(std::isfinite(v) ? json(v) : json(nullptr));
      rows.push_back(row);
    }
    extra["log_ratio"] = rows;
  } else if (grid == "ablation") {
    for (uint64_t seed : seeds) {
      AblationConfig ac;
      ac.benchmarks = parse_list<Benchmark>(cfg, "benchmarks", parse_bench);
      ac.baseline = parse_variant(get<std::string>(cfg, "baseline"));
      ac.n_train = opt_size("n_train", 1500);
      ac.n_test = opt_size("n_test", 1000);
      ac.seed = seed;
      ac.train = tc;
      for (auto& r : diagonal_ablation(ac)) {
        cells.push_back(r.kf);
        cells.push_back(r.dkf);
        cells.push_back(r.okf);
      }
    }
  } else {
    throw UsageError("unknown grid '" + grid + "' (table2, sweep, generalization, ablation, lidar, video)");
  }
  write_results_jsonl(cells, dir / "results.jsonl");
  write_results_csv(cells, dir / "results.csv");
  json failures = json::array();
  for (const auto& c : cells) {
    if (!c.ok) failures.push_back({{"benchmark", c.benchmark}, {"baseline", c.baseline}, {"tuning", c.tuning},
                                   {"seed", c.seed}, {"error", c.error}});
  }
  json summary = {{"grid", grid}, {"cells", cells.size()}, {"failed", failures.size()}, {"failures", failures}};
  summary.update(extra);
  write_json_file(summary, dir / "summary.json");
  std::cout << "experiment " << grid << ": " << cells.size() << " cells, " << failures.size() << " failed -> "
            << dir.string() << "\n";
  for (const auto& f : failures) std::cerr << "  failed " << f.dump() << "\n";
  return failures.empty() ? kOk : kPartial;
}

int run_report(const json& cfg) {
  if (cfg.at("results").is_null()) throw UsageError("--results is required");
  fs::path in = get<std::string>(cfg, "results");
  if (fs::is_directory(in)) in /= "results.jsonl";
  std::ifstream f(in);
  if (!f) throw ParseError("cannot open " + in.string());
  std::ostringstream md;
  md << "| experiment | benchmark | test | baseline | tuning | seed | n_train | MSE | CI95 | z vs ref |\n"
     << "|---|---|---|---|---|---|---|---|---|---|\n";
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(in.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto num = [](const json& v) {
      if (v.is_null()) return std::string("-");
      std::ostringstream os;
      os << std::setprecision(5) << v.get<double>();
      return os.str();
    };
    md << "| " << j.value("experiment", "") << " | " << j.value("benchmark", "") << " | "
       << j.value("test_benchmark", "") << " | " << j.value("baseline", "") << " | " << j.value("tuning", "")
       << " | " << j.value("seed", 0) << " | " << j.value("n_train", 0) << " | ";
    if (!j.value("ok", true)) {
      md << "failed | - | - |\n";
      continue;
    }
    md << num(j["mse"]) << " | [" << num(j["ci95"][0]) << ", " << num(j["ci95"][1]) << "] | "
       << (j.contains("vs_reference") && j["vs_reference"].is_object() ? num(j["vs_reference"]["z"]) : "-")
       << " |\n";
  }
  std::cout << md.str();
  if (!cfg.at("out").is_null()) {
    const fs::path out = get<std::string>(cfg, "out");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream(out) << md.str();
  }
  return kOk;
}

// ------------------------------------------------------------------ wiring

void add_model_flags(CLI::App* app, json& patch) {
  add_opt<std::string>(app, "--data", "/data", patch, "Dataset file (.okfd)");
  add_opt<std::string>(app, "--variant", "/variant", patch, "kf | kfp | ekf | ekfp");
  add_opt<std::string>(app, "--family", "/family", patch, "doppler | lidar | toy_lidar | video (default: dataset metadata)");
  add_opt<std::string>(app, "--objective", "/objective", patch, "filter-current | predict-next");
  add_opt<double>(app, "--p0-scale", "/p0_scale", patch, "Initial covariance scale");
  add_opt<int>(app, "--warmup-steps", "/warmup_steps", patch, "Leading steps excluded from loss and metrics");
}

void add_train_flags(CLI::App* app, json& patch) {
  add_opt<int>(app, "--batch-size", "/train/batch_size", patch, "Trajectories per optimizer step");
  add_opt<double>(app, "--lr", "/train/learning_rate", patch, "Learning rate");
  add_opt<int>(app, "--epochs", "/train/epochs", patch, "Passes over the training set");
  add_opt<std::string>(app, "--optimizer", "/train/optimizer", patch, "adam | sgd");
  add_opt<uint64_t>(app, "--train-seed", "/train/seed", patch, "Batch order seed");
  add_opt<double>(app, "--validation-fraction", "/train/validation_fraction", patch, "Held-out share for snapshot selection");
  add_opt<std::string>(app, "--parameterization", "/train/parameterization", patch, "full-cholesky | diagonal");
  add_opt<std::string>(app, "--init", "/train/init", patch, "warm-start | cold-start");
  add_opt<double>(app, "--clip-norm", "/train/clip_norm", patch, "Gradient norm clip (0 = off)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimized Kalman filter toolkit"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker cap for internal parallelism (0 = all cores)");

  std::vector<Command> cmds = {
      {"simulate", simulate_defaults(), {}, {}, run_simulate},
      {"tune", tune_defaults(), {}, {}, run_tune},
      {"train", train_defaults(), {}, {}, run_train},
      {"evaluate", evaluate_defaults(), {}, {}, run_evaluate},
      {"experiment", experiment_defaults(), {}, {}, run_experiment},
      {"report", report_defaults(), {}, {}, run_report},
  };
  const std::map<std::string, std::string> help = {
      {"simulate", "Simulate a scenario preset into train/test datasets"},
      {"tune", "Estimate Q and R from supervised data"},
      {"train", "Optimize Q and R by gradient descent on the filtering error"},
      {"evaluate", "Evaluate parameter files on a dataset"},
      {"experiment", "Run an experiment grid"},
      {"report", "Render results.jsonl as a markdown table"},
  };
  std::map<std::string, CLI::App*> subs;
  for (auto& c : cmds) {
    CLI::App* s = app.add_subcommand(c.verb, help.at(c.verb));
    s->add_option("--config", c.config_file, "JSON config; flags override its values");
    add_opt<std::string>(s, "--out", "/out", c.patch, "Output directory (default $OKF_OUTPUT_ROOT/<verb>)");
    subs[c.verb] = s;
  }
  {
    json& p = cmds[0].patch;
    CLI::App* s = subs["simulate"];
    add_opt<std::string>(s, "--preset", "/preset", p, "toy | close | const_v | const_a | free | lidar | toy_lidar | toy_doppler | video");
    add_opt<uint64_t>(s, "--seed", "/seed", p, "Top-level seed");
    add_opt<int>(s, "--n-train", "/n_train", p, "Training trajectories");
    add_opt<int>(s, "--n-test", "/n_test", p, "Test trajectories");
  }
  add_model_flags(subs["tune"], cmds[1].patch);
  add_opt<std::string>(subs["tune"], "--method", "/method", cmds[1].patch, "estimated | oracle");
  add_model_flags(subs["train"], cmds[2].patch);
  add_train_flags(subs["train"], cmds[2].patch);
  add_opt<std::string>(subs["train"], "--init-params", "/init_params", cmds[2].patch, "Start from this params file");
  add_model_flags(subs["evaluate"], cmds[3].patch);
  add_opt<std::vector<std::string>>(subs["evaluate"], "--params", "/params", cmds[3].patch, "Params files; the first is the reference");
  add_opt<bool>(subs["evaluate"], "--nll", "/nll", cmds[3].patch, "Compute NLL (true/false)");
  bind_flag(subs["evaluate"], "--bootstrap", "/bootstrap", cmds[3].patch, "Bootstrap confidence intervals");
  add_opt<uint64_t>(subs["evaluate"], "--seed", "/seed", cmds[3].patch, "Bootstrap seed");
  {
    json& p = cmds[4].patch;
    CLI::App* s = subs["experiment"];
    add_opt<std::string>(s, "--grid", "/grid", p, "table2 | sweep | generalization | ablation | lidar | video");
    add_opt<std::vector<std::string>>(s, "--benchmarks", "/benchmarks", p, "Benchmarks");
    add_opt<std::vector<std::string>>(s, "--baselines", "/baselines", p, "Filter variants");
    add_opt<std::vector<std::string>>(s, "--tunings", "/tunings", p, "estimated | optimized | oracle");
    add_opt<std::vector<uint64_t>>(s, "--seeds", "/seeds", p, "Seeds");
    add_opt<int>(s, "--n-train", "/n_train", p, "Training trajectories");
    add_opt<int>(s, "--n-test", "/n_test", p, "Test trajectories");
    add_opt<std::string>(s, "--benchmark", "/benchmark", p, "Benchmark of the sweep");
    add_opt<std::string>(s, "--baseline", "/baseline", p, "Variant of sweep/generalization/ablation");
    add_opt<std::vector<int>>(s, "--sizes", "/sizes", p, "Sweep sizes");
    add_opt<int>(s, "--min-steps", "/min_steps", p, "Lower bound on optimizer steps per sweep size");
    add_train_flags(s, p);
  }
  add_opt<std::string>(subs["report"], "--results", "/results", cmds[5].patch, "results.jsonl or its directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  set_thread_limit(threads);

  for (auto& c : cmds) {
    if (!subs[c.verb]->parsed()) continue;
    try {
      return c.run(resolve(c));
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return kUsage;
    } catch (const InvalidArgument& e) {
      std::cerr << "invalid argument: " << e.what() << "\n";
      return kUsage;
    } catch (const NumericFailure& e) {
      std::cerr << "numeric failure: " << e.what() << "\n";
      return kNumeric;
    } catch (const ParseError& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kData;
    } catch (const SchemaError& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kData;
    } catch (const CorruptData& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kData;
    } catch (const InsufficientData& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kData;
    } catch (const fs::filesystem_error& e) {
      std::cerr << "filesystem error: " << e.what() << "\n";
      return kData;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kGeneric;
    }
  }
  return kUsage;
}
