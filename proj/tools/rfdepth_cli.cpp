// rfdepth command-line frontend.
//
// Exit codes: 0 success, 1 usage error, 2 data or model error. Diagnostics
// go to stderr; results go to files or stdout.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rfdepth/rfdepth.hpp"

namespace {

using rfdepth::DomainError;

constexpr std::uint64_t kDefaultSeed = 20210227;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t parse_count(const std::string& s, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw UsageError(std::string("invalid ") + what + ": '" + s + "'");
  }
  if (pos != s.size()) throw UsageError(std::string("invalid ") + what + ": '" + s + "'");
  return static_cast<std::size_t>(v);
}

/// "default" = floor(p/3) (at least 1), "bagging" = p, "sqrt" = floor(sqrt p), or a number.
std::size_t parse_mtry(const std::string& s, std::size_t p) {
  if (s == "default") return std::max<std::size_t>(1, p / 3);
  if (s == "bagging") return p;
  if (s == "sqrt") return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(double(p)))));
  const std::size_t v = parse_count(s, "mtry");
  if (v < 1 || v > p) throw UsageError("mtry must lie in 1..p");
  return v;
}

std::optional<std::size_t> parse_maxnodes(const std::string& s) {
  if (s == "unlimited" || s == "none") return std::nullopt;
  return parse_count(s, "maxnodes");
}

rfdepth::Resample parse_resample(const std::string& s) {
  if (s == "bootstrap") return rfdepth::Resample::bootstrap();
  if (s == "none") return rfdepth::Resample::none();
  if (s.rfind("subsample:", 0) == 0) return rfdepth::Resample::subsample(parse_count(s.substr(10), "subsample size"));
  throw UsageError("resample must be bootstrap, none or subsample:K");
}

rfdepth::Task parse_task(const std::string& s) {
  if (s == "regression") return rfdepth::Task::Regression;
  if (s == "classification") return rfdepth::Task::Classification;
  throw UsageError("task must be regression or classification");
}

unsigned parse_threads(const std::string& s) {
  if (s == "auto") return 0;
  return static_cast<unsigned>(parse_count(s, "threads"));
}

std::vector<double> parse_snrs(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& s : items) {
    if (s == "grid") {
      const auto g = rfdepth::snr_grid();
      out.insert(out.end(), g.begin(), g.end());
      continue;
    }
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(s, &pos));
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw UsageError("invalid snr: '" + s + "'");
    }
  }
  return out;
}

/// Named regime with optional per-field overrides.
struct ProblemShape {
  std::string setting = "low";
  std::size_t n = 0, p = 0, s = 0;
  double rho = 0.35;

  rfdepth::SyntheticSpec resolve() const {
    rfdepth::SyntheticSpec spec;
    if (!setting.empty() && setting != "custom") {
      auto named = rfdepth::find_setting(setting);
      if (!named) throw UsageError("unknown setting '" + setting + "' (low, medium, high-5, high-10, custom)");
      spec.n = named->n;
      spec.p = named->p;
      spec.s = named->s;
    }
    if (n) spec.n = n;
    if (p) spec.p = p;
    if (s) spec.s = s;
    spec.rho = rho;
    spec.test_size = spec.n;
    return spec;
  }

  void add_options(CLI::App* app) {
    app->add_option("--setting", setting, "low | medium | high-5 | high-10 | custom")->capture_default_str();
    app->add_option("--n", n, "training size (overrides the setting)");
    app->add_option("--p", p, "dimension (overrides the setting)");
    app->add_option("--s", s, "number of unit coefficients (overrides the setting)");
    app->add_option("--rho", rho, "AR(1) correlation")->capture_default_str();
  }
};

/// Tree options shared by fit / predict.
struct TreeOptions {
  std::string task = "regression";
  std::string mtry = "default";
  std::size_t nodesize = 1;
  std::string maxnodes = "unlimited";
  std::string resample = "bootstrap";
  std::string growth = "fifo";
  std::size_t trees = 500;

  void add_options(CLI::App* app) {
    app->add_option("--task", task, "regression | classification")->capture_default_str();
    app->add_option("--mtry", mtry, "number, default (p/3), bagging (p) or sqrt")->capture_default_str();
    app->add_option("--nodesize", nodesize)->capture_default_str();
    app->add_option("--maxnodes", maxnodes, "number or unlimited")->capture_default_str();
    app->add_option("--resample", resample, "bootstrap | none | subsample:K")->capture_default_str();
    app->add_option("--growth", growth, "fifo | best-first")->capture_default_str();
    app->add_option("--trees", trees, "number of trees")->capture_default_str();
  }

  rfdepth::TreeConfig config(std::size_t p) const {
    rfdepth::TreeConfig cfg;
    cfg.task = parse_task(task);
    cfg.mtry = parse_mtry(mtry, p);
    cfg.nodesize = nodesize;
    cfg.maxnodes = parse_maxnodes(maxnodes);
    cfg.resample = parse_resample(resample);
    if (growth == "fifo")
      cfg.growth_order = rfdepth::GrowthOrder::Fifo;
    else if (growth == "best-first")
      cfg.growth_order = rfdepth::GrowthOrder::BestFirst;
    else
      throw UsageError("growth must be fifo or best-first");
    return cfg;
  }
};

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary | std::ios::trunc);
  if (!file) throw rfdepth::IoError("cannot write " + path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rfdepth: depth-controlled random forests and experiment sweeps"};
  app.set_config("--config", "", "TOML/INI file mirroring the flags; flags win on conflict");
  app.require_subcommand(1);

  std::uint64_t seed = kDefaultSeed;
  std::string threads_opt = "auto";
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "master seed")->capture_default_str();
    sub->add_option("--threads", threads_opt, "worker threads or auto (RFDEPTH_THREADS)")->capture_default_str();
  };

  // synth
  auto* synth = app.add_subcommand("synth", "write a generated problem as delimited text");
  ProblemShape synth_shape;
  double synth_snr = 1.0;
  std::size_t synth_test = 0;
  std::string synth_train_out, synth_test_out;
  synth_shape.add_options(synth);
  synth->add_option("--snr", synth_snr)->required();
  synth->add_option("--test-size", synth_test, "default: training size");
  synth->add_option("--out-train", synth_train_out)->required();
  synth->add_option("--out-test", synth_test_out);
  add_common(synth);

  // fit / predict
  auto* fit = app.add_subcommand("fit", "fit a forest and report losses as JSON");
  auto* predict = app.add_subcommand("predict", "fit a forest and write predictions for query rows");
  TreeOptions tree_opts;
  std::string train_path, test_path, query_path, out_path;
  for (auto* sub : {fit, predict}) {
    tree_opts.add_options(sub);
    sub->add_option("--train", train_path, "CSV with header, response in the last column")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "output path (default stdout)");
    add_common(sub);
  }
  fit->add_option("--test", test_path)->check(CLI::ExistingFile);
  predict->add_option("--query", query_path, "CSV of the same layout")->required()->check(CLI::ExistingFile);

  // sweep-depth / tune-nodesize
  auto* sweep = app.add_subcommand("sweep-depth", "test loss versus maxnodes over repetitions");
  auto* tune = app.add_subcommand("tune-nodesize", "per-repetition optimal nodesize");
  ProblemShape sweep_shape;
  std::vector<std::string> snr_items;
  std::size_t reps = 100;
  std::size_t sweep_trees = 500;
  std::vector<std::string> mtry_items;
  std::vector<std::string> maxnodes_items;
  std::vector<std::size_t> nodesize_items;
  std::size_t test_size = 0;
  std::string optima_out;
  for (auto* sub : {sweep, tune}) {
    sweep_shape.add_options(sub);
    sub->add_option("--snr", snr_items, "SNR values or 'grid'")->required()->delimiter(',');
    sub->add_option("--reps", reps)->capture_default_str();
    sub->add_option("--trees", sweep_trees)->capture_default_str();
    sub->add_option("--out", out_path, "results CSV (default stdout)");
    sub->add_option("--test-size", test_size, "test rows per repetition");
    add_common(sub);
  }
  std::string sweep_model = "forest";
  sweep->add_option("--model", sweep_model, "forest | randfs (randfs: --maxnodes lists depths, --trees members)")
      ->capture_default_str();
  sweep->add_option("--mtry", mtry_items, "list of numbers / default / bagging")->delimiter(',');
  sweep->add_option("--maxnodes", maxnodes_items, "maxnodes list (default: standard grid)")->delimiter(',');
  sweep->add_option("--nodesize", nodesize_items, "nodesize (default 1)")->delimiter(',');
  tune->add_option("--mtry", mtry_items, "number / default / bagging")->delimiter(',');
  tune->add_option("--nodesize-grid", nodesize_items, "nodesize grid (default: 1, 3 and spaced values)")->delimiter(',');
  tune->add_option("--optima-out", optima_out, "CSV of per-repetition optimal nodesize");

  // double-descent
  auto* dd = app.add_subcommand("double-descent", "single-tree maxnodes sweep followed by a tree-count sweep");
  std::string mnist_dir;
  std::size_t dd_n = 2000;
  std::size_t dd_p = 20;
  double dd_flip = 0.2;
  std::size_t dd_positive = 1;
  std::string dd_policy = "full";
  std::vector<std::size_t> phase1, phase2;
  std::string dd_task = "regression", dd_resample = "bootstrap", dd_mtry;
  std::size_t dd_reps = 1;
  dd->add_option("--mnist-dir", mnist_dir, "directory with the four IDX files")->check(CLI::ExistingDirectory);
  dd->add_option("--n", dd_n, "train / validation / test size")->capture_default_str();
  dd->add_option("--p", dd_p, "synthetic dimension (no --mnist-dir)")->capture_default_str();
  dd->add_option("--flip", dd_flip, "synthetic label-flip rate (Bayes error)")->capture_default_str();
  dd->add_option("--positive-class", dd_positive, "digit mapped to 1")->capture_default_str();
  dd->add_option("--policy", dd_policy, "full | tuned | shallow")->capture_default_str();
  dd->add_option("--phase1", phase1, "maxnodes values for single trees")->delimiter(',');
  dd->add_option("--phase2", phase2, "tree counts for the forest phase")->delimiter(',');
  dd->add_option("--task", dd_task)->capture_default_str();
  dd->add_option("--resample", dd_resample)->capture_default_str();
  dd->add_option("--mtry", dd_mtry, "default: sqrt for classification, p/3 for regression");
  dd->add_option("--reps", dd_reps)->capture_default_str();
  dd->add_option("--out", out_path, "results CSV (default stdout)");
  add_common(dd);

  // randfs
  auto* rfs = app.add_subcommand("randfs", "randomized forward-selection ensemble");
  std::size_t rfs_depth = 1, rfs_members = 100;
  std::string rfs_mtry = "default", rfs_resample = "none";
  ProblemShape rfs_shape;
  double rfs_snr = 1.0;
  rfs->add_option("--depth", rfs_depth)->required();
  rfs->add_option("--mtry", rfs_mtry)->capture_default_str();
  rfs->add_option("--members", rfs_members)->capture_default_str();
  rfs->add_option("--resample", rfs_resample, "none | bootstrap")->capture_default_str();
  rfs->add_option("--train", train_path, "CSV training data (default: generated problem)")->check(CLI::ExistingFile);
  rfs->add_option("--test", test_path)->check(CLI::ExistingFile);
  rfs->add_option("--snr", rfs_snr, "SNR of the generated problem")->capture_default_str();
  rfs_shape.add_options(rfs);
  rfs->add_option("--out", out_path, "JSON output (default stdout)");
  add_common(rfs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const unsigned threads = parse_threads(threads_opt);
    std::ofstream file;

    if (synth->parsed()) {
      auto spec = synth_shape.resolve();
      spec.snr = synth_snr;
      if (synth_test) spec.test_size = synth_test;
      spec.seed = seed;
      auto g = rfdepth::generate(spec);
      rfdepth::write_delimited(g.train, synth_train_out);
      if (!synth_test_out.empty()) rfdepth::write_delimited(g.test, synth_test_out);
      std::cerr << "sigma2=" << g.sigma2 << " signal=" << g.signal << "\n";
    } else if (fit->parsed() || predict->parsed()) {
      const auto task = parse_task(tree_opts.task);
      const auto train = rfdepth::read_delimited(train_path, task);
      const auto cfg = tree_opts.config(train.p());
      const auto forest = rfdepth::fit_forest(train, cfg, tree_opts.trees, seed, threads);
      auto& os = open_output(out_path, file);
      if (fit->parsed()) {
        nlohmann::ordered_json j;
        j["n"] = train.n();
        j["p"] = train.p();
        j["task"] = rfdepth::to_string(task);
        j["mtry"] = cfg.mtry;
        j["n_trees"] = forest.n_trees();
        std::size_t leaves = 0;
        for (const auto& t : forest.trees()) leaves += t.n_leaves();
        j["mean_leaves"] = static_cast<double>(leaves) / static_cast<double>(forest.n_trees());
        j["train_loss"] = rfdepth::evaluate(rfdepth::predict_rows(forest, train), train.response(), task);
        j["interpolating"] = rfdepth::is_interpolating(
            [&](std::span<const double> x) { return forest.predict(x); }, train, task);
        if (!test_path.empty()) {
          const auto test = rfdepth::read_delimited(test_path, task);
          j["test_loss"] = rfdepth::evaluate(rfdepth::predict_rows(forest, test), test.response(), task);
        }
        os << j.dump(2) << "\n";
      } else {
        const auto query = rfdepth::read_delimited(query_path, task);
        os << "prediction\n";
        for (double v : rfdepth::predict_rows(forest, query)) os << rfdepth::detail::format_double(v) << "\n";
      }
    } else if (sweep->parsed() || tune->parsed()) {
      const auto shape = sweep_shape.resolve();
      std::vector<rfdepth::SweepResult> rows;
      std::size_t failures = 0;
      std::ostringstream optima;
      optima << "rep,snr,optimal_nodesize\n";
      for (double snr : parse_snrs(snr_items)) {
        rfdepth::SyntheticSpec spec = shape;
        spec.snr = snr;
        rfdepth::SweepSpec sw;
        sw.setting = sweep_shape.setting;
        sw.snr = snr;
        sw.reps = reps;
        sw.master_seed = seed;
        sw.threads = threads;
        sw.n_trees = {sweep_trees};
        sw.tree.task = rfdepth::Task::Regression;
        sw.tree.nodesize = 1;
        sw.tree.resample = rfdepth::Resample::bootstrap();
        if (sweep->parsed() && sweep_model == "randfs") {
          spec.test_size = test_size ? test_size : spec.n;
          rfdepth::RandFSSweepSpec rs;
          rs.setting = sweep_shape.setting;
          rs.snr = snr;
          rs.problem = rfdepth::synthetic_source(spec);
          rs.reps = reps;
          rs.master_seed = seed;
          rs.threads = threads;
          rs.n_members = {sweep_trees};
          const auto items = mtry_items.empty() ? std::vector<std::string>{"default"} : mtry_items;
          for (const auto& m : items) rs.mtry.push_back(parse_mtry(m, spec.p));
          if (maxnodes_items.empty()) {
            for (std::size_t d = 1; d <= std::min(spec.p, spec.n - 1); ++d) rs.depth.push_back(d);
          } else {
            for (const auto& m : maxnodes_items) rs.depth.push_back(parse_count(m, "depth"));
          }
          auto res = rfdepth::run_randfs_sweep(rs);
          failures += res.failures;
          rows.insert(rows.end(), res.rows.begin(), res.rows.end());
        } else if (sweep->parsed()) {
          if (sweep_model != "forest") throw UsageError("model must be forest or randfs");
          spec.test_size = test_size ? test_size : spec.n;
          sw.experiment = "depth-sweep";
          sw.problem = rfdepth::synthetic_source(spec);
          const auto items = mtry_items.empty() ? std::vector<std::string>{"bagging", "default"} : mtry_items;
          for (const auto& m : items) sw.mtry.push_back(parse_mtry(m, spec.p));
          if (maxnodes_items.empty()) {
            sw.maxnodes = rfdepth::default_maxnodes_grid(spec.n);
          } else {
            for (const auto& m : maxnodes_items) {
              auto v = parse_maxnodes(m);
              sw.maxnodes.push_back(v ? *v : spec.n);
            }
          }
          sw.nodesize = nodesize_items.empty() ? std::vector<std::size_t>{1} : nodesize_items;
          sw.tree.mtry = sw.mtry.front();
          auto res = rfdepth::run_depth_sweep(sw);
          failures += res.failures;
          rows.insert(rows.end(), res.rows.begin(), res.rows.end());
        } else {
          spec.test_size = test_size ? test_size : 1000;
          sw.experiment = "nodesize-tune";
          sw.problem = rfdepth::synthetic_source(spec);
          sw.tree.mtry = parse_mtry(mtry_items.empty() ? "default" : mtry_items.front(), spec.p);
          sw.nodesize = nodesize_items.empty()
                            ? rfdepth::default_nodesize_grid(spec.n, sweep_shape.setting == "medium" ? 25 : 10)
                            : nodesize_items;
          auto res = rfdepth::tune_nodesize(sw);
          failures += res.sweep.failures;
          rows.insert(rows.end(), res.sweep.rows.begin(), res.sweep.rows.end());
          for (std::size_t r = 0; r < res.optimal.size(); ++r)
            optima << r << ',' << rfdepth::detail::format_double(snr) << ','
                   << (res.optimal[r] ? std::to_string(*res.optimal[r]) : "NA") << '\n';
        }
      }
      if (failures) std::cerr << "warning: " << failures << " fits failed and were excluded\n";
      open_output(out_path, file) << rfdepth::format_results_csv(rows);
      if (!optima_out.empty()) {
        std::ofstream o(optima_out, std::ios::binary | std::ios::trunc);
        if (!o) throw rfdepth::IoError("cannot write " + optima_out);
        o << optima.str();
      }
    } else if (dd->parsed()) {
      rfdepth::DoubleDescentSpec spec;
      spec.tree.task = parse_task(dd_task);
      spec.tree.resample = parse_resample(dd_resample);
      spec.tree.nodesize = 1;
      std::size_t p = dd_p;
      if (!mnist_dir.empty()) {
        auto train_pool = rfdepth::load_idx(mnist_dir + "/train-images-idx3-ubyte", mnist_dir + "/train-labels-idx1-ubyte");
        auto test_pool = rfdepth::load_idx(mnist_dir + "/t10k-images-idx3-ubyte", mnist_dir + "/t10k-labels-idx1-ubyte");
        train_pool = rfdepth::binarize_label(train_pool, dd_positive);
        test_pool = rfdepth::binarize_label(test_pool, dd_positive);
        if (spec.tree.task == rfdepth::Task::Regression) {
          train_pool = train_pool.with_task(rfdepth::Task::Regression);
          test_pool = test_pool.with_task(rfdepth::Task::Regression);
        }
        p = train_pool.p();
        spec.setting = "mnist";
        spec.problem = rfdepth::pooled_source(std::move(train_pool), std::move(test_pool),
                                              rfdepth::SplitPlan{"mnist", dd_n, dd_n, dd_n, seed});
      } else {
        rfdepth::LabelNoiseSpec ln;
        ln.n = dd_n;
        ln.p = dd_p;
        ln.s = std::min<std::size_t>(5, dd_p);
        ln.flip_rate = dd_flip;
        ln.test_size = dd_n;
        ln.validation_size = dd_n;
        spec.setting = "label-noise";
        auto base = rfdepth::label_noise_source(ln);
        if (spec.tree.task == rfdepth::Task::Regression) {
          spec.problem = [base](std::uint64_t s) {
            auto ps = base(s);
            return rfdepth::ProblemSplits{ps.train.with_task(rfdepth::Task::Regression),
                                          ps.test.with_task(rfdepth::Task::Regression),
                                          ps.validation->with_task(rfdepth::Task::Regression)};
          };
        } else {
          spec.problem = base;
        }
      }
      spec.tree.mtry = parse_mtry(
          dd_mtry.empty() ? (spec.tree.task == rfdepth::Task::Classification ? "sqrt" : "default") : dd_mtry, p);
      if (dd_policy == "full")
        spec.policy = rfdepth::DepthPolicy::FullDepth;
      else if (dd_policy == "tuned")
        spec.policy = rfdepth::DepthPolicy::Tuned;
      else if (dd_policy == "shallow")
        spec.policy = rfdepth::DepthPolicy::Shallow;
      else
        throw UsageError("policy must be full, tuned or shallow");
      spec.phase1_maxnodes = phase1.empty() ? rfdepth::default_maxnodes_grid(dd_n) : phase1;
      spec.phase2_trees = phase2.empty() ? std::vector<std::size_t>{1, 2, 5, 10, 20, 50, 100, 200, 500} : phase2;
      spec.reps = dd_reps;
      spec.master_seed = seed;
      spec.threads = threads;
      auto res = rfdepth::run_double_descent(spec);
      const auto failures = res.phase1.failures + res.phase2.failures;
      if (failures) std::cerr << "warning: " << failures << " fits failed and were excluded\n";
      std::vector<rfdepth::SweepResult> rows = res.phase1.rows;
      rows.insert(rows.end(), res.phase2.rows.begin(), res.phase2.rows.end());
      open_output(out_path, file) << rfdepth::format_results_csv(rows);
    } else if (rfs->parsed()) {
      std::optional<rfdepth::Dataset> train, test;
      if (!train_path.empty()) {
        train = rfdepth::read_delimited(train_path, rfdepth::Task::Regression);
        if (!test_path.empty()) test = rfdepth::read_delimited(test_path, rfdepth::Task::Regression);
      } else {
        auto spec = rfs_shape.resolve();
        spec.snr = rfs_snr;
        spec.seed = seed;
        auto g = rfdepth::generate(spec);
        train = std::move(g.train);
        test = std::move(g.test);
      }
      rfdepth::RandFSConfig cfg;
      cfg.depth = rfs_depth;
      cfg.mtry = parse_mtry(rfs_mtry, train->p());
      cfg.n_members = rfs_members;
      cfg.resample = parse_resample(rfs_resample);
      cfg.seed = seed;
      const auto model = rfdepth::fit_randfs(*train, cfg, threads);
      nlohmann::ordered_json j;
      j["depth"] = cfg.depth;
      j["mtry"] = cfg.mtry;
      j["members"] = cfg.n_members;
      j["intercept"] = model.intercept;
      j["coefficients"] = model.coefficients;
      j["gamma"] = model.gamma;
      j["train_mse"] = rfdepth::evaluate(rfdepth::predict_rows(model, *train), train->response(),
                                         rfdepth::Task::Regression);
      if (test)
        j["test_mse"] = rfdepth::evaluate(rfdepth::predict_rows(model, *test), test->response(),
                                          rfdepth::Task::Regression);
      open_output(out_path, file) << j.dump(2) << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 1;
  } catch (const rfdepth::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
