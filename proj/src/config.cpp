#include "fairpart/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fairpart/errors.hpp"

extern char** environ;

namespace fairpart {

using json = nlohmann::json;

namespace {

const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
      throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(field + " must be finite");
  return v;
}

std::uint64_t count(const json& j, const std::string& field) {
  const double v = number(j, field);
  if (v < 0.0 || v != std::floor(v) || v > 1.8e19)
    throw ConfigError(field + " must be a nonnegative integer");
  return j.is_number_unsigned() ? j.get<std::uint64_t>() : static_cast<std::uint64_t>(v);
}

std::string text(const json& j, const std::string& field) {
  if (!j.is_string()) throw ConfigError(field + " must be a string");
  return j.get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field + " must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(number(j[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

Bounds box(const json& j, const std::string& field) {
  const auto v = numbers(j, field);
  if (v.size() != 4) throw ConfigError(field + " must be [xmin, ymin, xmax, ymax]");
  if (!(v[0] <= v[2] && v[1] <= v[3])) throw ConfigError(field + " has min greater than max");
  return {v[0], v[1], v[2], v[3]};
}

Point point(const json& j, const std::string& field) {
  const auto v = numbers(j, field);
  if (v.size() != 2) throw ConfigError(field + " must be [x, y]");
  return {v[0], v[1]};
}

std::array<double, 3> covariance(const json& j, const std::string& field) {
  if (j.is_number()) {
    const double s = number(j, field);
    return {s, 0.0, s};
  }
  if (j.is_array() && j.size() == 2 && j[0].is_array()) {
    const auto a = numbers(j[0], field + "[0]");
    const auto b = numbers(j[1], field + "[1]");
    if (a.size() != 2 || b.size() != 2) throw ConfigError(field + " must be a 2x2 matrix");
    if (a[1] != b[0]) throw ConfigError(field + " must be symmetric");
    return {a[0], a[1], b[1]};
  }
  const auto v = numbers(j, field);
  if (v.size() != 3) throw ConfigError(field + " must be [xx, xy, yy], [[xx, xy], [xy, yy]] or a scalar");
  return {v[0], v[1], v[2]};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void parse_population(const json& j, RunConfig& cfg, const std::filesystem::path& base) {
  only_keys(j, "population", {"csv", "mixture"});
  const auto* csv = find(j, "csv");
  const auto* mix = find(j, "mixture");
  if ((csv == nullptr) == (mix == nullptr))
    throw ConfigError("population must have exactly one of 'csv' or 'mixture'");
  if (csv) {
    cfg.population_csv = resolve(base, text(*csv, "population.csv"));
    return;
  }
  only_keys(*mix, "population.mixture", {"bounds", "groups"});
  if (const auto* b = find(*mix, "bounds")) cfg.bounds = box(*b, "population.mixture.bounds");
  const auto* groups = find(*mix, "groups");
  if (!groups || !groups->is_array() || groups->empty())
    throw ConfigError("population.mixture.groups must be a non-empty array");
  for (std::size_t z = 0; z < groups->size(); ++z) {
    const std::string where = "population.mixture.groups[" + std::to_string(z) + "]";
    const auto& g = (*groups)[z];
    only_keys(g, where, {"prior", "components", "uniform"});
    MixtureGroupSpec spec;
    const auto* prior = find(g, "prior");
    if (!prior) throw ConfigError(where + ".prior is required");
    spec.prior = number(*prior, where + ".prior");
    if (!(spec.prior > 0.0)) throw ConfigError(where + ".prior must be positive");
    const auto* comps = find(g, "components");
    const auto* uni = find(g, "uniform");
    if ((comps == nullptr) == (uni == nullptr))
      throw ConfigError(where + " must have exactly one of 'components' or 'uniform'");
    if (uni) {
      spec.uniform = box(*uni, where + ".uniform");
    } else {
      if (!comps->is_array() || comps->empty())
        throw ConfigError(where + ".components must be a non-empty array");
      for (std::size_t c = 0; c < comps->size(); ++c) {
        const std::string cw = where + ".components[" + std::to_string(c) + "]";
        const auto& cj = (*comps)[c];
        only_keys(cj, cw, {"weight", "mean", "cov"});
        GaussianComponent comp;
        if (const auto* w = find(cj, "weight")) comp.weight = number(*w, cw + ".weight");
        const auto* mean = find(cj, "mean");
        if (!mean) throw ConfigError(cw + ".mean is required");
        comp.mean = point(*mean, cw + ".mean");
        if (const auto* cov = find(cj, "cov")) comp.cov = covariance(*cov, cw + ".cov");
        spec.components.push_back(comp);
      }
    }
    cfg.mixture.push_back(std::move(spec));
  }
  double total = 0.0;
  for (const auto& g : cfg.mixture) total += g.prior;
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("population.mixture.groups[*].prior must sum to 1 (got " +
                      std::to_string(total) + ")");
}

void parse_facilities(const json& j, RunConfig& cfg, const std::filesystem::path& base) {
  if (j.is_string()) {
    cfg.facilities_csv = resolve(base, j.get<std::string>());
    return;
  }
  if (!j.is_array() || j.empty())
    throw ConfigError("facilities must be a CSV path or a non-empty array");
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string where = "facilities[" + std::to_string(k) + "]";
    const auto& f = j[k];
    if (f.is_array()) {
      cfg.inline_facilities.locations.push_back(point(f, where));
      cfg.inline_facilities.labels.push_back(std::to_string(k + 1));
      continue;
    }
    only_keys(f, where, {"id", "x", "y"});
    const auto* x = find(f, "x");
    const auto* y = find(f, "y");
    if (!x || !y) throw ConfigError(where + " needs x and y");
    cfg.inline_facilities.locations.push_back({number(*x, where + ".x"), number(*y, where + ".y")});
    const auto* id = find(f, "id");
    cfg.inline_facilities.labels.push_back(id ? (id->is_string() ? id->get<std::string>() : id->dump())
                                              : std::to_string(k + 1));
  }
}

void parse_cost(const json& j, RunConfig& cfg, const std::filesystem::path& base) {
  if (j.is_string()) {
    cfg.cost_kind = parse_cost_kind(j.get<std::string>());
    return;
  }
  only_keys(j, "cost", {"kind", "matrix", "units"});
  if (const auto* k = find(j, "kind")) cfg.cost_kind = parse_cost_kind(text(*k, "cost.kind"));
  if (const auto* m = find(j, "matrix")) cfg.cost_matrix = resolve(base, text(*m, "cost.matrix"));
  if (const auto* u = find(j, "units")) cfg.cost_units = text(*u, "cost.units");
}

void parse_solver(const json& j, RunConfig& cfg) {
  only_keys(j, "solver",
            {"mode", "p", "iterations", "alpha", "tail_fraction", "eval_samples", "trace_samples"});
  auto& s = cfg.solver;
  if (const auto* v = find(j, "mode")) {
    try {
      s.mode = parse_solve_mode(text(*v, "solver.mode"));
    } catch (const Error&) {
      throw ConfigError("solver.mode must be optimal_p or fixed_p");
    }
  }
  if (const auto* v = find(j, "p")) s.p = numbers(*v, "solver.p");
  if (const auto* v = find(j, "iterations")) s.iterations = count(*v, "solver.iterations");
  if (const auto* v = find(j, "alpha"); v && !v->is_null()) s.step_scale = number(*v, "solver.alpha");
  if (const auto* v = find(j, "tail_fraction")) s.tail_fraction = number(*v, "solver.tail_fraction");
  if (const auto* v = find(j, "eval_samples")) s.eval_samples = count(*v, "solver.eval_samples");
  if (const auto* v = find(j, "trace_samples")) s.trace_samples = count(*v, "solver.trace_samples");
}

void apply_override(json& root, const std::string& path, const std::string& raw) {
  if (path.empty()) throw ConfigError("override has an empty key");
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override key '" + path + "' has an empty segment");
    if (node->is_null()) *node = json::object();
    if (!node->is_object())
      throw ConfigError("override '" + path + "' descends into a non-object value");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

std::map<std::string, std::string> environment_overrides() {
  std::map<std::string, std::string> out;
  const std::string prefix = kEnvPrefix;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

RunConfig parse_run_config(const std::string& source, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides,
                           const std::map<std::string, std::string>& env) {
  json root;
  try {
    root = json::parse(source, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");

  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string path;
    for (std::size_t i = prefix.size(); i < name.size(); ++i) {
      if (name.compare(i, 2, "__") == 0) {
        path += '.';
        ++i;
      } else {
        path += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
      }
    }
    apply_override(root, path, value);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' must be key=value");
    apply_override(root, o.substr(0, eq), o.substr(eq + 1));
  }

  only_keys(root, "", {"population", "facilities", "cost", "solver", "output", "seed"});
  RunConfig cfg;
  const auto* pop = find(root, "population");
  if (!pop) throw ConfigError("population is required");
  parse_population(*pop, cfg, base_dir);
  const auto* fac = find(root, "facilities");
  if (!fac) throw ConfigError("facilities is required");
  parse_facilities(*fac, cfg, base_dir);
  if (const auto* c = find(root, "cost")) parse_cost(*c, cfg, base_dir);
  if (const auto* s = find(root, "solver")) parse_solver(*s, cfg);
  if (const auto* o = find(root, "output")) cfg.output_dir = resolve(base_dir, text(*o, "output"));
  else cfg.output_dir = resolve(base_dir, "out");
  if (const auto* s = find(root, "seed")) cfg.seed = count(*s, "seed");
  cfg.solver.seed = cfg.seed;

  if (cfg.cost_kind == CostKind::matrix) {
    if (!cfg.population_csv) throw ConfigError("cost.kind matrix requires a CSV population");
    if (!cfg.cost_matrix) throw ConfigError("cost.kind matrix requires cost.matrix");
  } else if (cfg.cost_matrix) {
    throw ConfigError("cost.matrix is only valid with cost.kind matrix");
  }
  if (cfg.solver.mode == SolveMode::fixed_p && cfg.solver.p.empty())
    throw ConfigError("solver.p is required in fixed_p mode");
  if (!cfg.facilities_csv) cfg.solver.validate(cfg.inline_facilities.size());
  cfg.resolved = root.dump(2) + "\n";
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides, bool use_environment) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path(), overrides,
                          use_environment ? environment_overrides()
                                          : std::map<std::string, std::string>{});
}

Problem build_problem(const RunConfig& cfg) {
  Problem problem;
  FacilitySet facilities = cfg.facilities_csv ? load_facilities(*cfg.facilities_csv)
                                              : cfg.inline_facilities;
  cfg.solver.validate(facilities.size());

  if (cfg.population_csv) {
    auto pop = std::make_shared<DiscretePopulation>(load_population(*cfg.population_csv));
    problem.discrete = pop;
    problem.population = pop;
  } else {
    std::vector<double> priors;
    std::vector<std::shared_ptr<const Density>> densities;
    double total = 0.0;
    for (const auto& g : cfg.mixture) total += g.prior;
    const bool normalized = std::abs(total - 1.0) <= 1e-12;
    for (const auto& g : cfg.mixture) {
      priors.push_back(normalized ? g.prior : g.prior / total);
      if (g.uniform)
        densities.push_back(std::make_shared<UniformBoxDensity>(*g.uniform));
      else
        densities.push_back(std::make_shared<GaussianMixtureDensity>(g.components, cfg.bounds));
    }
    problem.population = std::make_shared<GroupMixture>(std::move(priors), std::move(densities), cfg.bounds);
  }

  std::shared_ptr<CostModel> cost;
  switch (cfg.cost_kind) {
    case CostKind::euclidean:
      cost = std::make_shared<CostModel>(CostModel::euclidean(std::move(facilities)));
      break;
    case CostKind::squared_euclidean:
      cost = std::make_shared<CostModel>(CostModel::squared_euclidean(std::move(facilities)));
      break;
    case CostKind::matrix:
      cost = std::make_shared<CostModel>(
          load_cost_matrix(*cfg.cost_matrix, std::move(facilities), cfg.cost_units));
      cost->bind(*problem.discrete);
      break;
  }
  for (const auto& [a, b] : cost->coincident_facilities())
    problem.warnings.push_back("facilities " + std::to_string(a + 1) + " and " +
                               std::to_string(b + 1) +
                               " share a location; ties go to the lower index");
  problem.cost = std::move(cost);
  return problem;
}

// ---------------------------------------------------------------------------

std::string weights_to_json(const WeightsFile& f) {
  json rows = json::array();
  for (std::size_t k = 0; k < f.weights.w.rows(); ++k) {
    const auto r = f.weights.w.row(k);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  json j = {{"K", f.weights.facility_count()},
            {"M", f.weights.group_count()},
            {"q", f.weights.q},
            {"mode", f.mode},
            {"w", rows},
            {"seed", f.seed},
            {"iterations", f.iterations},
            {"alpha", f.step_scale},
            {"cost_kind", f.cost_kind}};
  if (!f.p.empty()) j["p"] = f.p;
  return j.dump(2) + "\n";
}

WeightsFile weights_from_json(const std::string& source) {
  json j;
  try {
    j = json::parse(source);
  } catch (const json::exception& e) {
    throw ParseError(std::string("weights file is not valid JSON: ") + e.what());
  }
  try {
    WeightsFile f;
    const auto kk = j.at("K").get<std::size_t>();
    const auto m = j.at("M").get<std::size_t>();
    auto q = j.at("q").get<std::vector<double>>();
    if (q.size() != m) throw DimensionMismatch("weights file: q has length " + std::to_string(q.size()) +
                                               ", M is " + std::to_string(m));
    const auto& rows = j.at("w");
    if (rows.size() != kk) throw DimensionMismatch("weights file: w has " + std::to_string(rows.size()) +
                                                   " rows, K is " + std::to_string(kk));
    Matrix w(kk, m);
    for (std::size_t k = 0; k < kk; ++k) {
      const auto r = rows[k].get<std::vector<double>>();
      if (r.size() != m) throw DimensionMismatch("weights file: row " + std::to_string(k + 1) +
                                                 " has wrong length");
      for (std::size_t z = 0; z < m; ++z) w(k, z) = r[z];
    }
    if (!w.all_finite()) throw NonFinite("weights file holds non-finite weights");
    f.weights = WeightMatrix(std::move(w), std::move(q));
    f.mode = j.value("mode", std::string());
    if (j.contains("p")) f.p = j.at("p").get<std::vector<double>>();
    f.seed = j.value("seed", std::uint64_t{0});
    f.iterations = j.value("iterations", std::uint64_t{0});
    f.step_scale = j.value("alpha", 0.0);
    f.cost_kind = j.value("cost_kind", std::string());
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("weights file: ") + e.what());
  }
}

void save_weights(const WeightsFile& file, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << weights_to_json(file);
}

WeightsFile load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return weights_from_json(ss.str());
}

}  // namespace fairpart
