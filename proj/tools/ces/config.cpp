#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace ces::cli {

namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v;
  if (!(is >> v) || !(is >> std::ws).eof()) throw ValidationError("bad value for " + key + ": '" + text + "'");
  return v;
}

template <>
bool parse<bool>(const std::string& key, const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), ::tolower);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ValidationError("bad boolean for " + key + ": '" + text + "'");
}

composer::Mode parse_mode(const std::string& key, const std::string& t) {
  if (t == "compression") return composer::Mode::compression;
  if (t == "tension") return composer::Mode::tension;
  throw ValidationError(key + " must be compression or tension, not '" + t + "'");
}

std::string mode_name(composer::Mode m) { return m == composer::Mode::compression ? "compression" : "tension"; }

geometry::MeshParams parse_mesh(const std::string& key, const std::string& t) {
  const auto parts = split(t, ':');
  if (parts.size() != 2) throw ValidationError(key + " meshes are written pore_resolution:min_mesh_resolution");
  return {parse<int>(key, parts[0]), parse<int>(key, parts[1])};
}

std::string mesh_name(const geometry::MeshParams& m) {
  return std::to_string(m.pore_resolution) + ":" + std::to_string(m.min_mesh_resolution);
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }

// Reads keys from one ptree and remembers which were consumed.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <class T>
  void get(const std::string& path, T& out) {
    used_.insert(path);
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'))) out = parse<T>(path, *v);
  }
  template <class F>
  void get_with(const std::string& path, F f) {
    used_.insert(path);
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'))) f(*v);
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) throw ValidationError("key '" + section + "' outside a section");
      for (const auto& [key, _] : body)
        if (!used_.count(section + "." + key)) throw ValidationError("unknown config key " + section + "." + key);
    }
  }

 private:
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

void read(Reader& r, RunConfig& c) {
  r.get("run.seed", c.seed);
  r.get_with("run.output", [&](const std::string& v) { c.output = v; });
  r.get("run.workers", c.workers);

  r.get("material.mu", c.material.mu);
  r.get("material.kappa", c.material.kappa);

  r.get("geometry.thickness_floor", c.validity.thickness_floor);
  r.get("geometry.box_lo", c.validity.box_lo);
  r.get("geometry.box_hi", c.validity.box_hi);
  r.get("geometry.pore_resolution", c.component.mesh.pore_resolution);
  r.get("geometry.min_mesh_resolution", c.component.mesh.min_mesh_resolution);
  r.get("geometry.N", c.component.N);
  r.get("geometry.cell_side", c.component.cell_side);

  r.get("collect.collectors", c.collectors);
  r.get("collect.samples_per_collector", c.samples_per_collector);
  r.get("collect.strain_std", c.strain_std);

  r.get("surrogate.width", c.arch.width);
  r.get("surrogate.hidden_layers", c.arch.hidden_layers);
  r.get("surrogate.scale_by_norm", c.arch.features.scale_by_norm);
  r.get("surrogate.remove_rigid", c.arch.features.remove_rigid);
  r.get("surrogate.sobolev_g", c.arch.features.sobolev_g);
  r.get("surrogate.sobolev_hvp", c.arch.features.sobolev_hvp);
  r.get("surrogate.lr", c.train.lr);
  r.get("surrogate.batch", c.train.batch);
  r.get("surrogate.epochs", c.train.epochs);
  r.get_with("surrogate.max_steps", [&](const std::string& v) {
    const long n = parse<long>("surrogate.max_steps", v);
    c.train.max_steps = n > 0 ? std::optional<long>(n) : std::nullopt;
  });
  r.get("surrogate.init_seed", c.init_seed);

  r.get("dagger.rounds", c.dagger_rounds);
  r.get("dagger.scenarios", c.dagger_scenarios);
  r.get("dagger.iterates", c.dagger_iterates);
  r.get("dagger.grid", c.dagger_grid);
  r.get("dagger.max_strain", c.dagger_max_strain);
  r.get("dagger.p_compression", c.dagger_p_compression);
  r.get("dagger.steps_per_round", c.dagger_steps);
  r.get("dagger.lbfgs_max_iters", c.lbfgs.max_iters);
  r.get("dagger.lbfgs_grad_tol", c.lbfgs.grad_tol);

  r.get_with("fea.load_steps", [&](const std::string& v) {
    c.load_steps.clear();
    for (const auto& s : split(v, ',')) c.load_steps.push_back(parse<int>("fea.load_steps", s));
  });
  r.get_with("fea.relaxations", [&](const std::string& v) {
    c.relaxations.clear();
    for (const auto& s : split(v, ',')) c.relaxations.push_back(parse<double>("fea.relaxations", s));
  });

  r.get("scenario.grid", c.scenario.grid);
  r.get("scenario.alpha", c.scenario.alpha);
  r.get("scenario.beta", c.scenario.beta);
  r.get("scenario.strain", c.scenario.strain);
  r.get_with("scenario.mode", [&](const std::string& v) { c.scenario.mode = parse_mode("scenario.mode", v); });
  r.get_with("scenario.axis", [&](const std::string& v) {
    if (v != "x" && v != "y") throw ValidationError("scenario.axis must be x or y");
    c.scenario.axis = v == "x" ? composer::LoadAxis::x : composer::LoadAxis::y;
  });
  r.get_with("scenario.mesh", [&](const std::string& v) { c.scenario.mesh = parse_mesh("scenario.mesh", v); });

  r.get("benchmark.grid", c.benchmark.grid);
  r.get("benchmark.strain", c.benchmark.strain);
  r.get("benchmark.sampled_shapes", c.benchmark.sampled_shapes);
  r.get_with("benchmark.modes", [&](const std::string& v) {
    c.benchmark.modes.clear();
    for (const auto& s : split(v, ',')) c.benchmark.modes.push_back(parse_mode("benchmark.modes", s));
  });
  r.get_with("benchmark.ladder", [&](const std::string& v) {
    c.benchmark.ladder.clear();
    for (const auto& s : split(v, ',')) c.benchmark.ladder.push_back(parse_mesh("benchmark.ladder", s));
  });
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  c.train.epochs = 50;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    if (!std::filesystem::exists(path)) throw IoError("cannot read config " + path.string());
    throw ValidationError(e.what());
  }
  RunConfig c = default_config();
  Reader r(tree);
  read(r, c);
  r.reject_unknown();
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
  };
  require(material.mu > 0 && material.kappa > 0, "material moduli must be positive");
  require(validity.box_lo < validity.box_hi, "geometry.box_lo must be below geometry.box_hi");
  require(validity.box_lo >= -1.0 && validity.box_hi <= 1.0, "the pore parameter box must lie within [-1, 1]");
  require(validity.thickness_floor > 0 && validity.thickness_floor < 0.5, "geometry.thickness_floor must be in (0, 0.5)");
  require(component.N >= 4, "geometry.N must be at least 4");
  require(component.cell_side > 0, "geometry.cell_side must be positive");
  require(component.mesh.pore_resolution >= 4 && component.mesh.min_mesh_resolution >= 1, "bad component mesh");
  require(collectors >= 1 && samples_per_collector >= 1, "collector counts must be positive");
  require(strain_std > 0, "collect.strain_std must be positive");
  require(arch.width >= 1 && arch.hidden_layers >= 1, "bad network size");
  require(train.lr > 0 && train.batch >= 1 && train.epochs >= 0, "bad training settings");
  require(dagger_rounds >= 0 && dagger_scenarios >= 0 && dagger_iterates >= 0 && dagger_grid >= 1,
          "bad DAgger settings");
  require(dagger_max_strain >= 0 && dagger_p_compression >= 0 && dagger_p_compression <= 1, "bad DAgger strain draw");
  require(!load_steps.empty() && !relaxations.empty(), "the schedule grid is empty");
  for (int s : load_steps) require(s >= 1, "fea.load_steps entries must be >= 1");
  for (double l : relaxations) require(l > 0 && l <= 1, "fea.relaxations entries must be in (0, 1]");
  require(scenario.grid >= 1 && scenario.strain >= 0, "bad scenario");
  require(benchmark.grid >= 1 && benchmark.strain >= 0 && benchmark.sampled_shapes >= 0, "bad benchmark settings");
  require(!benchmark.ladder.empty() && !benchmark.modes.empty(), "benchmark ladder and modes must be non-empty");

  // The box must contain valid shapes; this is cheap next to any FEA work.
  geometry::ValidityConfig probe = validity;
  probe.max_rejections = 2000;
  std::mt19937_64 rng(seed);
  try {
    geometry::sample_valid_pore(rng, probe, component.cell_side);
  } catch (const std::exception&) {
    throw ValidationError("no valid pore shape found in the box [" + num(validity.box_lo) + ", " +
                          num(validity.box_hi) + "]^2");
  }
  geometry::PoreShape s{scenario.alpha, scenario.beta, component.cell_side};
  require(geometry::is_valid_pore(s, validity), "the scenario pore shape is not valid");
}

pipeline::CollectConfig RunConfig::collect_config() const {
  pipeline::CollectConfig c;
  c.collectors = collectors;
  c.samples_per_collector = samples_per_collector;
  c.seed = seed;
  c.workers = workers;
  c.validity = validity;
  c.collector.component = component;
  c.collector.component.material = material;
  c.collector.strain_std = strain_std;
  return c;
}

composer::FeaSpec RunConfig::fea_spec(const geometry::MeshParams& mesh) const {
  composer::FeaSpec s;
  s.mesh = mesh;
  s.material = material;
  s.load_steps = load_steps;
  s.relaxations = relaxations;
  return s;
}

void write_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  os << "[run]\nseed = " << c.seed << "\noutput = " << c.output.string() << "\nworkers = " << c.workers << "\n\n"
     << "[material]\nmu = " << num(c.material.mu) << "\nkappa = " << num(c.material.kappa) << "\n\n"
     << "[geometry]\nthickness_floor = " << num(c.validity.thickness_floor) << "\nbox_lo = " << num(c.validity.box_lo)
     << "\nbox_hi = " << num(c.validity.box_hi) << "\npore_resolution = " << c.component.mesh.pore_resolution
     << "\nmin_mesh_resolution = " << c.component.mesh.min_mesh_resolution << "\nN = " << c.component.N
     << "\ncell_side = " << num(c.component.cell_side) << "\n\n"
     << "[collect]\ncollectors = " << c.collectors << "\nsamples_per_collector = " << c.samples_per_collector
     << "\nstrain_std = " << num(c.strain_std) << "\n\n"
     << "[surrogate]\nwidth = " << c.arch.width << "\nhidden_layers = " << c.arch.hidden_layers
     << "\nscale_by_norm = " << b(c.arch.features.scale_by_norm) << "\nremove_rigid = "
     << b(c.arch.features.remove_rigid) << "\nsobolev_g = " << b(c.arch.features.sobolev_g)
     << "\nsobolev_hvp = " << b(c.arch.features.sobolev_hvp) << "\nlr = " << num(c.train.lr)
     << "\nbatch = " << c.train.batch << "\nepochs = " << c.train.epochs
     << "\nmax_steps = " << c.train.max_steps.value_or(0) << "\ninit_seed = " << c.init_seed << "\n\n"
     << "[dagger]\nrounds = " << c.dagger_rounds << "\nscenarios = " << c.dagger_scenarios
     << "\niterates = " << c.dagger_iterates << "\ngrid = " << c.dagger_grid
     << "\nmax_strain = " << num(c.dagger_max_strain) << "\np_compression = " << num(c.dagger_p_compression)
     << "\nsteps_per_round = " << c.dagger_steps << "\nlbfgs_max_iters = " << c.lbfgs.max_iters
     << "\nlbfgs_grad_tol = " << num(c.lbfgs.grad_tol) << "\n\n"
     << "[fea]\nload_steps = " << join(c.load_steps, [](int v) { return std::to_string(v); })
     << "\nrelaxations = " << join(c.relaxations, num) << "\n\n"
     << "[scenario]\ngrid = " << c.scenario.grid << "\nalpha = " << num(c.scenario.alpha)
     << "\nbeta = " << num(c.scenario.beta) << "\nstrain = " << num(c.scenario.strain)
     << "\nmode = " << mode_name(c.scenario.mode) << "\naxis = " << (c.scenario.axis == composer::LoadAxis::x ? "x" : "y")
     << "\nmesh = " << mesh_name(c.scenario.mesh) << "\n\n"
     << "[benchmark]\ngrid = " << c.benchmark.grid << "\nstrain = " << num(c.benchmark.strain)
     << "\nsampled_shapes = " << c.benchmark.sampled_shapes << "\nmodes = " << join(c.benchmark.modes, mode_name)
     << "\nladder = " << join(c.benchmark.ladder, mesh_name) << "\n";
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace ces::cli
