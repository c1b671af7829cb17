#include "config.hpp"

#include "ces/checks.hpp"
#include "ces/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

using namespace ces;
using namespace ces::cli;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_path;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool verbose = false;
};

struct Paths {
  fs::path root;
  fs::path data() const { return root / "data"; }
  fs::path collected() const { return data() / "collected.bin"; }
  fs::path train() const { return data() / "train.bin"; }
  fs::path val() const { return data() / "val.bin"; }
  fs::path checkpoint() const { return root / "model" / "surrogate.ckpt"; }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(p, mode);
  if (!os) throw IoError("cannot write " + p.string());
  os.precision(10);
  return os;
}

void setup_logging(const fs::path& root, bool verbose) {
  auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
  console->set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  std::vector<spdlog::sink_ptr> sinks{console};
  try {
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>((root / "ces.log").string());
    file->set_level(spdlog::level::debug);
    sinks.push_back(file);
  } catch (const spdlog::spdlog_ex& e) {
    throw IoError(e.what());
  }
  auto logger = std::make_shared<spdlog::logger>("ces", sinks.begin(), sinks.end());
  logger->set_level(spdlog::level::debug);
  spdlog::set_default_logger(logger);
}

// Loads the config, applies flag overrides, and archives it beside the outputs.
std::pair<RunConfig, Paths> prepare(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? default_config() : load_config(g.config_path);
  if (!g.output.empty()) cfg.output = g.output;
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  cfg.validate();

  Paths paths{cfg.output};
  ensure_dir(paths.root);
  setup_logging(paths.root, g.verbose);
  const fs::path archived = paths.root / "config.ini";
  if (!g.config_path.empty()) {
    std::error_code ec;
    if (!fs::exists(archived) || !fs::equivalent(g.config_path, archived, ec))
      fs::copy_file(g.config_path, archived, fs::copy_options::overwrite_existing, ec);
    if (ec) throw IoError("cannot archive config: " + ec.message());
  } else {
    write_config(archived, cfg);
  }
  write_config(paths.root / "effective.ini", cfg);
  return {cfg, paths};
}

std::vector<SampleRecord> load_records(const fs::path& p) {
  if (!fs::exists(p)) throw IoError("missing dataset " + p.string());
  return pipeline::dataset_load(p);
}

surrogate::Checkpoint load_model(const Paths& paths) {
  if (!fs::exists(paths.checkpoint())) throw IoError("missing checkpoint " + paths.checkpoint().string());
  return surrogate::load_checkpoint(paths.checkpoint());
}

std::map<std::string, std::string> checkpoint_meta(const RunConfig& cfg, const surrogate::AdamState& st) {
  return {{"seed", std::to_string(cfg.seed)},
          {"init_seed", std::to_string(cfg.init_seed)},
          {"lr", fmt::format("{}", cfg.train.lr)},
          {"batch", std::to_string(cfg.train.batch)},
          {"epochs_done", std::to_string(st.epoch)},
          {"steps_done", std::to_string(st.step)}};
}

void save_model(const Paths& paths, const RunConfig& cfg, const surrogate::SurrogateParams& params,
                const surrogate::AdamState& st) {
  ensure_dir(paths.checkpoint().parent_path());
  surrogate::save_checkpoint(paths.checkpoint(), params, st, checkpoint_meta(cfg, st));
}

void write_manifest_logged(const Paths& paths) {
  for (const auto& [name, s] : pipeline::write_manifest(paths.data())) {
    std::string by;
    for (const auto& [src, n] : s.by_source) by += fmt::format(" {}={}", src, n);
    spdlog::info("{}: {} records ({}), sha256 {}", name, s.records, by.empty() ? "empty" : by.substr(1), s.sha256);
  }
}

// ---------------------------------------------------------------------------

int cmd_collect(const Globals& g, bool resume) {
  auto [cfg, paths] = prepare(g);
  ensure_dir(paths.data());
  pipeline::CollectConfig cc = cfg.collect_config();

  if (resume && fs::exists(paths.collected())) {
    const auto have = load_records(paths.collected());
    cc.existing = static_cast<long>(have.size());
    if (!have.empty()) cc.first_collector = pipeline::collector_index(cc, have.back().seed) + 1;
    spdlog::info("resuming with {} records on disk, next collector {}", cc.existing, cc.first_collector);
  } else {
    fs::remove(paths.collected());
  }

  const long target = static_cast<long>(cfg.collectors) * cfg.samples_per_collector;
  long written = cc.existing;
  const auto t0 = std::chrono::steady_clock::now();
  cc.on_batch = [&](std::span<const SampleRecord> batch) {
    pipeline::dataset_append(paths.collected(), batch);
    written += static_cast<long>(batch.size());
    spdlog::info("collected {}/{} records ({:.1f} s)", written, target, seconds_since(t0));
  };
  if (written < target) pipeline::collect(cc);

  const auto all = load_records(paths.collected());
  std::vector<SampleRecord> train, val;
  pipeline::split_train_val(all, train, val);
  fs::remove(paths.train());
  fs::remove(paths.val());
  pipeline::dataset_append(paths.train(), train);
  pipeline::dataset_append(paths.val(), val);
  write_manifest_logged(paths);
  std::cout << "collected " << all.size() << " records (" << train.size() << " train, " << val.size()
            << " validation) in " << paths.data().string() << "\n";
  return 0;
}

// Trains epoch by epoch so every epoch leaves a resumable checkpoint.
surrogate::TrainResult train_logged(const RunConfig& cfg, const Paths& paths, surrogate::SurrogateParams params,
                                    std::optional<surrogate::AdamState> state, std::span<const SampleRecord> train,
                                    std::span<const SampleRecord> val, std::ofstream* csv, bool checkpoints) {
  surrogate::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  surrogate::TrainResult last;
  last.params = params;
  if (state) last.state = *state;
  for (int e = state ? state->epoch : 0; e < cfg.train.epochs; ++e) {
    if (tc.max_steps && last.state.step >= *tc.max_steps) break;
    tc.epochs = e + 1;
    auto r = surrogate::train(last.params, train, val, tc, last.state, [&](const surrogate::EpochReport& rep) {
      spdlog::info("epoch {} step {}: loss {:.4e}, val E%err {:.3f}, G-sim {:.4f}, Hvp-sim {:.4f}", rep.epoch,
                   rep.steps, rep.train.total, rep.validation.e_pct_err, rep.validation.g_sim,
                   rep.validation.hvp_sim);
      if (csv)
        *csv << rep.epoch << ',' << rep.train.l0 << ',' << rep.train.l1 << ',' << rep.train.l2 << ','
             << rep.validation.e_pct_err << ',' << rep.validation.g_sim << ',' << rep.validation.hvp_sim << std::endl;
    });
    for (auto& h : r.history) last.history.push_back(h);
    last.params = std::move(r.params);
    last.state = r.state;
    if (checkpoints) save_model(paths, cfg, last.params, last.state);
    if (r.diverged) {
      last.diverged = true;
      break;
    }
  }
  return last;
}

int run_ablation(const RunConfig& cfg, const Paths& paths, std::span<const SampleRecord> train,
                 std::span<const SampleRecord> val) {
  auto csv = open_out(paths.root / "ablation.csv");
  csv << "scale_by_norm,remove_rigid,sobolev_g,sobolev_hvp,E_pct_err,G_sim,Hvp_sim,steps,diverged\n";
  for (int mask = 15; mask >= 0; --mask) {
    RunConfig c = cfg;
    c.arch.features = {bool(mask & 8), bool(mask & 4), bool(mask & 2), bool(mask & 1)};
    spdlog::info("ablation: scale_by_norm={} remove_rigid={} sobolev_g={} sobolev_hvp={}",
                 c.arch.features.scale_by_norm, c.arch.features.remove_rigid, c.arch.features.sobolev_g,
                 c.arch.features.sobolev_hvp);
    const auto r = train_logged(c, paths, surrogate::init_params(c.arch, c.init_seed), std::nullopt, train, val,
                                nullptr, false);
    const auto m = r.history.empty() ? surrogate::Metrics{} : r.history.back().validation;
    csv << int(bool(mask & 8)) << ',' << int(bool(mask & 4)) << ',' << int(bool(mask & 2)) << ','
        << int(bool(mask & 1)) << ',' << m.e_pct_err << ',' << m.g_sim << ',' << m.hvp_sim << ','
        << r.state.step << ',' << int(r.diverged) << std::endl;
  }
  std::cout << "wrote " << (paths.root / "ablation.csv").string() << "\n";
  return 0;
}

int cmd_train(const Globals& g, bool resume, bool ablate) {
  auto [cfg, paths] = prepare(g);
  const auto train = load_records(paths.train());
  const auto val = load_records(paths.val());

  surrogate::SurrogateParams params;
  std::optional<surrogate::AdamState> state;
  const fs::path csv_path = paths.root / "metrics.csv";
  if (resume && fs::exists(paths.checkpoint())) {
    auto ck = load_model(paths);
    params = std::move(ck.params);
    state = ck.state;
    spdlog::info("resuming from epoch {} step {}", state ? state->epoch : 0, state ? state->step : 0);
  } else {
    params = surrogate::init_params(cfg.arch, cfg.init_seed);
  }
  const bool fresh_csv = !state || !fs::exists(csv_path);
  auto csv = open_out(csv_path, fresh_csv ? std::ios::out : std::ios::app);
  if (fresh_csv) csv << "epoch,l0,l1,l2,E_pct_err,G_sim,Hvp_sim\n";

  const auto r = train_logged(cfg, paths, params, state, train, val, &csv, true);
  if (!r.history.empty() || !state) save_model(paths, cfg, r.params, r.state);
  if (r.diverged) throw SolverError("training diverged at step " + std::to_string(r.state.step));
  std::cout << "trained " << r.state.epoch << " epochs (" << r.state.step << " steps), checkpoint "
            << paths.checkpoint().string() << "\n";
  if (ablate) return run_ablation(cfg, paths, train, val);
  return 0;
}

int cmd_ablate(const Globals& g) {
  auto [cfg, paths] = prepare(g);
  const auto train = load_records(paths.train());
  const auto val = load_records(paths.val());
  return run_ablation(cfg, paths, train, val);
}

int cmd_dagger(const Globals& g) {
  auto [cfg, paths] = prepare(g);
  auto ck = load_model(paths);
  surrogate::AdamState state = ck.state.value_or(surrogate::AdamState{});
  auto params = std::move(ck.params);
  auto train = load_records(paths.train());
  const auto val = load_records(paths.val());

  auto csv = open_out(paths.root / "dagger.csv");
  csv << "round,scenarios,appended,expected,failures,train_records,E_pct_err,G_sim,Hvp_sim\n";
  pipeline::DaggerOptions opt;
  opt.iterates = cfg.dagger_iterates;
  opt.component = cfg.component;
  opt.component.material = cfg.material;
  opt.lbfgs = cfg.lbfgs;

  for (int round = 1; round <= cfg.dagger_rounds; ++round) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0xda99u,
                      static_cast<std::uint32_t>(round)};
    std::mt19937_64 rng(seq);
    std::vector<SampleRecord> fresh;
    for (int s = 0; s < cfg.dagger_scenarios; ++s) {
      const auto sc = pipeline::draw_scenario(rng, cfg.dagger_grid, cfg.validity, cfg.dagger_max_strain,
                                              cfg.dagger_p_compression);
      opt.seed = cfg.seed * 1000003ULL + 500000ULL + static_cast<std::uint64_t>(round) * 1000ULL + s;
      auto recs = pipeline::dagger_round(params, sc, opt, rng);
      spdlog::info("round {} scenario {}: {} {} strain {:.3f}, {} records", round, s,
                   sc.bc.mode == composer::Mode::compression ? "compression" : "tension",
                   sc.bc.axis == composer::LoadAxis::x ? "x" : "y", sc.bc.strain, recs.size());
      for (auto& r : recs) fresh.push_back(std::move(r));
    }
    const long expected = static_cast<long>(cfg.dagger_iterates) * cfg.dagger_grid * cfg.dagger_grid *
                          cfg.dagger_scenarios;
    pipeline::dataset_append(paths.train(), fresh);
    for (auto& r : fresh) train.push_back(std::move(r));
    write_manifest_logged(paths);

    surrogate::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    tc.epochs = std::numeric_limits<int>::max();
    tc.max_steps = state.step + cfg.dagger_steps;
    auto r = surrogate::train(params, train, val, tc, state);
    params = std::move(r.params);
    state = r.state;
    save_model(paths, cfg, params, state);
    const auto m = surrogate::evaluate_metrics(params, val, cfg.seed + 1);
    csv << round << ',' << cfg.dagger_scenarios << ',' << static_cast<long>(fresh.size()) << ',' << expected << ','
        << expected - static_cast<long>(fresh.size()) << ',' << train.size() << ',' << m.e_pct_err << ','
        << m.g_sim << ',' << m.hvp_sim << std::endl;
    spdlog::info("round {}: appended {} of {} records, val E%err {:.3f}, G-sim {:.4f}, Hvp-sim {:.4f}", round,
                 fresh.size(), expected, m.e_pct_err, m.g_sim, m.hvp_sim);
    if (r.diverged) throw SolverError("training diverged in round " + std::to_string(round));
  }
  std::cout << "ran " << cfg.dagger_rounds << " DAgger rounds; training set has " << train.size() << " records\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Solves

composer::Assembly scenario_assembly(const RunConfig& cfg, const geometry::PoreShape& xi, int grid,
                                     const composer::BoundaryCondition& bc) {
  std::vector<geometry::PoreShape> shapes(static_cast<std::size_t>(grid) * grid, xi);
  return composer::build_assembly(shapes, grid, cfg.component.N, bc, cfg.component.cell_side);
}

composer::Assembly scenario_assembly(const RunConfig& cfg) {
  const auto& s = cfg.scenario;
  return scenario_assembly(cfg, {s.alpha, s.beta, cfg.component.cell_side}, s.grid, {s.strain, s.axis, s.mode});
}

void log_attempts(const std::string& label, const composer::FeaReference& ref) {
  for (const auto& a : ref.attempts)
    spdlog::debug("{}: schedule ({}, {}) {} after {} Newton iterations, {:.3f} s", label, a.load_steps, a.relaxation,
                  a.converged ? "converged" : "failed", a.newton_iterations, a.wall_time_s);
  if (ref.converged)
    spdlog::info("{}: selected schedule ({}, {}) with {} Newton iterations, {} dofs", label, ref.load_steps,
                 ref.relaxation, ref.newton_iterations, ref.mesh_dofs);
  else
    spdlog::warn("{}: no schedule converged", label);
}

void write_points(const fs::path& p, const composer::Assembly& a, const Eigen::VectorXd& u) {
  auto os = open_out(p);
  os << "point,x,y,ux,uy\n";
  for (int i = 0; i < a.num_points(); ++i)
    os << i << ',' << a.points[i].x() << ',' << a.points[i].y() << ',' << u[2 * i] << ',' << u[2 * i + 1] << '\n';
}

int cmd_solve_fea(const Globals& g) {
  auto [cfg, paths] = prepare(g);
  const auto assembly = scenario_assembly(cfg);
  const auto ref = composer::fea_reference(assembly, cfg.fea_spec(cfg.scenario.mesh));
  log_attempts("fea", ref);
  if (!ref.converged) throw SolverError("no schedule in the grid converged");
  write_points(paths.root / "fea_solution.csv", assembly, ref.control_solution);
  std::cout << fmt::format("fea: energy {:.10g}, {} dofs, schedule ({}, {}), {} Newton iterations, {:.3f} s\n",
                           ref.energy, ref.mesh_dofs, ref.load_steps, ref.relaxation, ref.newton_iterations,
                           ref.wall_time_s);
  return 0;
}

int cmd_solve_ces(const Globals& g) {
  auto [cfg, paths] = prepare(g);
  const auto model = load_model(paths);
  const auto assembly = scenario_assembly(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = composer::solve_composed(assembly, model.params, cfg.lbfgs);
  const double dt = seconds_since(t0);
  write_points(paths.root / "ces_solution.csv", assembly, r.solution);
  std::cout << fmt::format("ces: energy {:.10g}, {} dofs, {} iterations, gradient norm {:.3e}, {:.3f} s\n",
                           r.energy, assembly.num_dofs(), r.iterations, r.grad_norm, dt);
  if (!r.converged) throw SolverError("L-BFGS did not converge");
  return 0;
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchRow {
  std::string method;
  int dofs = 0;
  double wall = 0.0;
  double l2 = NAN;
  double rel = NAN;
  bool ok = false;
};

struct BenchScenario {
  geometry::PoreShape xi;
  composer::Mode mode;
  std::vector<BenchRow> rows;
};

std::string mesh_label(const geometry::MeshParams& m) {
  return fmt::format("fea_{}_{}", m.pore_resolution, m.min_mesh_resolution);
}

void run_scenario(const RunConfig& cfg, const surrogate::SurrogateParams& params, BenchScenario& sc) {
  const auto& b = cfg.benchmark;
  const auto assembly = scenario_assembly(cfg, sc.xi, b.grid, {b.strain, composer::LoadAxis::y, sc.mode});
  const std::string tag = fmt::format("({:.3f}, {:.3f}) {}", sc.xi.alpha, sc.xi.beta,
                                      sc.mode == composer::Mode::compression ? "compression" : "tension");

  std::vector<composer::FeaReference> refs;
  for (const auto& m : b.ladder) {
    refs.push_back(composer::fea_reference(assembly, cfg.fea_spec(m)));
    log_attempts(tag + " " + mesh_label(m), refs.back());
  }
  const auto& truth = refs.back();

  BenchRow ces{"ces", assembly.num_dofs()};
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = composer::solve_composed(assembly, params, cfg.lbfgs);
  ces.wall = seconds_since(t0);
  ces.ok = r.converged;
  if (truth.converged) {
    const auto c = composer::compare(assembly, r.solution, r.energy, truth.control_solution, truth.energy);
    ces.l2 = c.l2_error;
    ces.rel = c.rel_energy_error;
  }
  spdlog::info("{}: ces {} iterations, l2 {:.3e}, rel energy {:.3e}, {:.3f} s", tag, r.iterations, ces.l2, ces.rel,
               ces.wall);
  sc.rows.push_back(ces);

  for (std::size_t i = 0; i < refs.size(); ++i) {
    BenchRow row{mesh_label(b.ladder[i]), refs[i].mesh_dofs, refs[i].wall_time_s};
    row.ok = refs[i].converged;
    if (i + 1 == refs.size()) {
      if (row.ok) row.l2 = row.rel = 0.0;
    } else if (row.ok && truth.converged) {
      const auto c = composer::compare(assembly, refs[i].control_solution, refs[i].energy, truth.control_solution,
                                       truth.energy);
      row.l2 = c.l2_error;
      row.rel = c.rel_energy_error;
    }
    sc.rows.push_back(row);
  }
}

int cmd_benchmark(const Globals& g) {
  auto [cfg, paths] = prepare(g);
  const auto model = load_model(paths);
  const auto& b = cfg.benchmark;

  std::vector<geometry::PoreShape> shapes{{0.0, 0.0, cfg.component.cell_side}};
  std::mt19937_64 rng(cfg.seed);
  for (int i = 0; i < b.sampled_shapes; ++i)
    shapes.push_back(geometry::sample_valid_pore(rng, cfg.validity, cfg.component.cell_side));
  std::vector<BenchScenario> scenarios;
  for (const auto& xi : shapes)
    for (auto mode : b.modes) scenarios.push_back({xi, mode, {}});

  const int workers = std::min<int>(pipeline::worker_count(cfg.workers), static_cast<int>(scenarios.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next++) < scenarios.size();) {
      try {
        run_scenario(cfg, model.params, scenarios[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  auto csv = open_out(paths.root / "results.csv");
  csv << "method,dofs,wall_time_s,l2_error,rel_energy_error,status,alpha,beta,mode\n";
  int failed = 0;
  for (const auto& sc : scenarios)
    for (const auto& r : sc.rows) {
      failed += !r.ok;
      csv << r.method << ',' << r.dofs << ',' << r.wall << ',' << r.l2 << ',' << r.rel << ','
          << (r.ok ? "ok" : "failed") << ',' << sc.xi.alpha << ',' << sc.xi.beta << ','
          << (sc.mode == composer::Mode::compression ? "compression" : "tension") << '\n';
    }
  std::cout << "benchmarked " << scenarios.size() << " scenarios (" << failed << " failed solves), wrote "
            << (paths.root / "results.csv").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_validate(const Globals& g, bool all, const std::vector<int>& only) {
  auto [cfg, paths] = prepare(g);
  checks::Context ctx;
  ctx.work_dir = paths.root / "checks";
  ctx.workers = cfg.workers;
  int passed = 0, total = 0;
  for (const auto& c : checks::criteria()) {
    if (!only.empty() ? std::find(only.begin(), only.end(), c.id) == only.end() : (c.heavy && !all)) continue;
    const auto r = checks::run(c, ctx);
    std::cout << checks::format(r) << std::endl;
    ++total;
    passed += r.passed;
  }
  std::cout << passed << " of " << total << " criteria passed\n";
  return passed == total ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Component-based energy surrogate pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("-o,--output", g.output, "output directory (overrides [run] output)");
  app.add_option("--seed", g.seed, "override [run] seed");
  app.add_option("--workers", g.workers, "worker threads (0: CES_WORKERS or all cores)");
  app.add_flag("-v,--verbose", g.verbose, "debug logging on the console");

  bool resume = false, ablate = false, all = false;
  std::vector<int> only;
  auto* collect = app.add_subcommand("collect", "run HMC collectors and write the dataset");
  collect->add_flag("--resume", resume, "continue a partial collection");
  auto* train = app.add_subcommand("train", "train the surrogate on data/train.bin");
  train->add_flag("--resume", resume, "continue from the saved checkpoint");
  train->add_flag("--ablate", ablate, "also run the feature ablation grid");
  auto* ablation = app.add_subcommand("ablate", "train every combination of the four feature flags");
  auto* dagger = app.add_subcommand("dagger", "DAgger rounds: compose, sample, label, retrain");
  auto* solve_fea = app.add_subcommand("solve-fea", "full FEA solve of the configured scenario");
  auto* solve_ces = app.add_subcommand("solve-ces", "composed surrogate solve of the configured scenario");
  auto* bench = app.add_subcommand("benchmark", "CES against the FEA ladder, written to results.csv");
  auto* validate = app.add_subcommand("validate", "run the acceptance checks");
  validate->add_flag("--all", all, "include the checks that collect data and train");
  validate->add_option("--only", only, "criterion ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*collect) return cmd_collect(g, resume);
    if (*train) return cmd_train(g, resume, ablate);
    if (*ablation) return cmd_ablate(g);
    if (*dagger) return cmd_dagger(g);
    if (*solve_fea) return cmd_solve_fea(g);
    if (*solve_ces) return cmd_solve_ces(g);
    if (*bench) return cmd_benchmark(g);
    if (*validate) return cmd_validate(g, all, only);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const pipeline::DatasetError& e) {
    std::cerr << "dataset error at record " << e.record() << ": " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
