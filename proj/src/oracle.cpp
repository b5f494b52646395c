#include "fairpart/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fairpart/errors.hpp"
#include "rational_lp.hpp"

namespace fairpart {

using json = nlohmann::json;

DiscreteInstance DiscreteInstance::make(DiscretePopulation pop, CostModel cost,
                                        std::optional<InstanceCaps> caps) {
  if (caps) {
    if (pop.site_count() > caps->max_sites || cost.facility_count() > caps->max_facilities ||
        pop.group_count() > caps->max_groups)
      throw DimensionMismatch("instance exceeds the oracle size caps (" +
                              std::to_string(caps->max_sites) + " sites, " +
                              std::to_string(caps->max_facilities) + " facilities, " +
                              std::to_string(caps->max_groups) + " groups)");
  }
  cost.bind(pop);
  DiscreteInstance inst;
  inst.population = std::make_shared<const DiscretePopulation>(std::move(pop));
  inst.cost = std::make_shared<const CostModel>(std::move(cost));
  return inst;
}

DiscreteInstance load_instance(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ParseError("missing " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }
  auto pop = load_population(dir / "population.csv");
  auto facilities = load_facilities(dir / "facilities.csv");
  const auto kind = parse_cost_kind(manifest.value("cost", std::string("euclidean")));
  const std::string units = manifest.value("units", std::string());
  CostModel cost = kind == CostKind::matrix
                       ? load_cost_matrix(dir / "costs.csv", facilities, units)
                   : kind == CostKind::euclidean ? CostModel::euclidean(facilities)
                                                 : CostModel::squared_euclidean(facilities);
  if (manifest.contains("K") && manifest["K"].get<std::size_t>() != cost.facility_count())
    throw DimensionMismatch("manifest K does not match facilities.csv");
  if (manifest.contains("M") && manifest["M"].get<std::size_t>() != pop.group_count())
    throw DimensionMismatch("manifest M does not match population.csv");
  if (manifest.contains("q")) {
    const auto q = manifest["q"].get<std::vector<double>>();
    if (q.size() != pop.group_count()) throw DimensionMismatch("manifest q has wrong length");
    for (std::size_t z = 0; z < q.size(); ++z)
      if (std::abs(q[z] - pop.priors()[z]) > 1e-9)
        throw DimensionMismatch("manifest q disagrees with population counts");
  }
  return DiscreteInstance::make(std::move(pop), std::move(cost));
}

void save_instance(const DiscreteInstance& instance, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_population(*instance.population, dir / "population.csv");
  const auto& fs = instance.cost->facilities();
  {
    std::ofstream out(dir / "facilities.csv");
    out << "facility_id,x,y\n";
    out.precision(17);
    for (std::size_t k = 0; k < fs.size(); ++k)
      out << (fs.labels.empty() ? "f" + std::to_string(k + 1) : fs.labels[k]) << ','
          << fs.locations[k].x << ',' << fs.locations[k].y << '\n';
  }
  if (instance.cost->kind() == CostKind::matrix) {
    std::ofstream out(dir / "costs.csv");
    out << "site_id";
    for (std::size_t k = 0; k < fs.size(); ++k) out << ",c_" << k + 1;
    out << '\n';
    out.precision(17);
    for (const auto& s : instance.population->sites()) {
      out << s.id;
      for (std::size_t k = 0; k < fs.size(); ++k) out << ',' << instance.cost->cost(s.id, k);
      out << '\n';
    }
  }
  json manifest = {{"K", instance.facility_count()},
                   {"M", instance.group_count()},
                   {"q", instance.priors()},
                   {"cost", to_string(instance.cost->kind())}};
  if (!instance.cost->units().empty()) manifest["units"] = instance.cost->units();
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

ExactModel::ExactModel(const DiscretePopulation& pop, const CostModel& cost)
    : facilities_(cost.facility_count()), q_(pop.priors()), qq_(pop.priors_dot()) {
  for (std::size_t i = 0; i < pop.site_count(); ++i) {
    if (!(pop.sites()[i].total() > 0.0)) continue;
    SiteData s;
    s.index = i;
    s.mass = pop.site_mass(i);
    s.posterior = pop.posterior(pop.location(i));
    s.costs.resize(facilities_);
    cost.costs_into(pop.location(i), s.costs);
    sites_.push_back(std::move(s));
  }
}

namespace {

/// Lowest-index minimizer of c_k - post . w_k.
std::size_t site_argmin(const ExactModel::SiteData& s, const Matrix& w, double& best) {
  std::size_t arg = 0;
  for (std::size_t k = 0; k < w.rows(); ++k) {
    double mix = 0.0;
    for (std::size_t z = 0; z < w.cols(); ++z) mix += s.posterior[z] * w(k, z);
    const double score = s.costs[k] - mix;
    if (k == 0 || score < best) {
      best = score;
      arg = k;
    }
  }
  return arg;
}

Matrix project_rows(const Matrix& v, const std::vector<double>& q, double qq) {
  Matrix w = v;
  for (std::size_t k = 0; k < w.rows(); ++k) {
    auto row = w.row(k);
    const double coef = std::inner_product(q.begin(), q.end(), row.begin(), 0.0) / qq;
    for (std::size_t z = 0; z < q.size(); ++z) row[z] -= coef * q[z];
  }
  return w;
}

}  // namespace

double ExactModel::expected_min_score(const Matrix& w) const {
  double total = 0.0;
  for (const auto& s : sites_) {
    double best = 0.0;
    site_argmin(s, w, best);
    total += s.mass * best;
  }
  return total;
}

double ExactModel::dual_value(const Matrix& w) const {
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < w.rows(); ++k) {
    double mean = 0.0;
    for (std::size_t z = 0; z < q_.size(); ++z) mean += q_[z] * w(k, z);
    lowest = std::min(lowest, mean);
  }
  return expected_min_score(w) + lowest;
}

double ExactModel::dual_value(const Matrix& w, std::span<const double> p) const {
  double linear = 0.0;
  for (std::size_t k = 0; k < w.rows(); ++k)
    for (std::size_t z = 0; z < q_.size(); ++z) linear += p[k] * q_[z] * w(k, z);
  return expected_min_score(w) + linear;
}

Matrix ExactModel::gradient(const Matrix& iterate, SolveMode mode, std::span<const double> p,
                            double* min_score) const {
  const std::size_t m = q_.size();
  Matrix grad(facilities_, m);
  double value = 0.0;
  if (mode == SolveMode::optimal_p) {
    const Matrix w = project_rows(iterate, q_, qq_);
    for (const auto& s : sites_) {
      double best = 0.0;
      const auto k = site_argmin(s, w, best);
      value += s.mass * best;
      const double post_q = std::inner_product(q_.begin(), q_.end(), s.posterior.begin(), 0.0);
      for (std::size_t z = 0; z < m; ++z)
        grad(k, z) -= s.mass * (s.posterior[z] - post_q * q_[z] / qq_);
    }
  } else {
    if (p.size() != facilities_) throw DimensionMismatch("p must have one entry per facility");
    for (std::size_t k = 0; k < facilities_; ++k)
      for (std::size_t z = 0; z < m; ++z) grad(k, z) = p[k] * q_[z];
    for (const auto& s : sites_) {
      double best = 0.0;
      const auto k = site_argmin(s, iterate, best);
      value += s.mass * best;
      for (std::size_t z = 0; z < m; ++z) grad(k, z) -= s.mass * s.posterior[z];
    }
  }
  if (min_score) *min_score = value;
  return grad;
}

std::vector<std::size_t> ExactModel::assignment(const Matrix& w) const {
  std::vector<std::size_t> out;
  out.reserve(sites_.size());
  for (const auto& s : sites_) {
    double best = 0.0;
    out.push_back(site_argmin(s, w, best));
  }
  return out;
}

double ExactModel::max_cost() const {
  double m = 0.0;
  for (const auto& site : sites_)
    for (double c : site.costs) m = std::max(m, c);
  return m;
}

double ExactModel::assignment_cost(const Matrix& w) const {
  double total = 0.0;
  for (const auto& s : sites_) {
    double best = 0.0;
    total += s.mass * s.costs[site_argmin(s, w, best)];
  }
  return total;
}

Matrix exact_gradient(const Matrix& iterate, const DiscreteInstance& instance, SolveMode mode,
                      std::span<const double> p) {
  return ExactModel(*instance.population, *instance.cost).gradient(iterate, mode, p);
}

// ---------------------------------------------------------------------------

AscentResult exact_ascent(const DiscretePopulation& pop, const CostModel& cost,
                          const AscentConfig& config) {
  const std::size_t kk = cost.facility_count(), m = pop.group_count();
  if (config.mode == SolveMode::fixed_p) {
    SolverConfig check;
    check.mode = config.mode;
    check.p = config.p;
    check.validate(kk);
  }
  const ExactModel model(pop, cost);
  const auto& q = pop.priors();
  const double alpha = config.step_scale.value_or(model.max_cost() > 0.0 ? model.max_cost() : 1.0);
  const std::span<const double> p(config.p);
  const bool fixed = config.mode == SolveMode::fixed_p;

  auto weights_of = [&](const Matrix& it) {
    return fixed ? it : project_rows(it, q, pop.priors_dot());
  };
  auto value_of = [&](const Matrix& w) {
    return fixed ? model.dual_value(w, p) : model.dual_value(w);
  };

  Matrix iterate(kk, m), average(kk, m);
  Matrix best_w = weights_of(iterate);
  double best = value_of(best_w);
  AscentResult result;
  const std::uint64_t every =
      std::max<std::uint64_t>(1, config.iterations / std::max<std::size_t>(1, config.checkpoints));

  for (std::uint64_t n = 0; n < config.iterations; ++n) {
    double score = 0.0;
    const Matrix grad = model.gradient(iterate, config.mode, p, &score);
    // The gradient call already evaluated the raw iterate.
    {
      const Matrix w = weights_of(iterate);
      double raw = score;
      if (fixed) {
        for (std::size_t k = 0; k < kk; ++k)
          for (std::size_t z = 0; z < m; ++z) raw += p[k] * q[z] * w(k, z);
      } else {
        double lowest = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kk; ++k) {
          double mean = 0.0;
          for (std::size_t z = 0; z < m; ++z) mean += q[z] * w(k, z);
          lowest = std::min(lowest, mean);
        }
        raw += lowest;
      }
      if (raw > best) {
        best = raw;
        best_w = w;
      }
    }
    const double a = alpha / std::sqrt(static_cast<double>(n) + 1.0);
    auto& it = iterate.data();
    for (std::size_t i = 0; i < it.size(); ++i) it[i] += a * grad.data()[i];
    if (!iterate.all_finite())
      throw NonFinite("exact ascent diverged at iteration " + std::to_string(n));
    const double inv = 1.0 / static_cast<double>(n + 1);
    auto& avg = average.data();
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += (it[i] - avg[i]) * inv;

    if ((n + 1) % every == 0 || n + 1 == config.iterations) {
      const Matrix w = weights_of(average);
      const double v = value_of(w);
      if (v > best) {
        best = v;
        best_w = w;
      }
      result.trace.push_back({n + 1, v, best});
    }
  }
  result.averaged_weights = WeightMatrix(weights_of(average), q);
  result.averaged_value = value_of(result.averaged_weights.w);
  result.weights = WeightMatrix(best_w, q);
  result.dual_value = best;
  return result;
}

// ---------------------------------------------------------------------------

LPSolution lp_primal(const DiscreteInstance& instance, std::span<const double> p) {
  const auto& pop = *instance.population;
  const auto& cost = *instance.cost;
  const std::size_t kk = cost.facility_count(), m = pop.group_count();
  const bool free_p = p.empty();
  if (!free_p) {
    SolverConfig check;
    check.mode = SolveMode::fixed_p;
    check.p.assign(p.begin(), p.end());
    check.validate(kk);
  }

  std::vector<std::size_t> sites;
  for (std::size_t i = 0; i < pop.site_count(); ++i)
    if (pop.sites()[i].total() > 0.0) sites.push_back(i);
  const std::size_t ns = sites.size();

  // Variables g(s,k) then, for free sizes, p_k. Rows: one assignment row per
  // site, then one marginal row per (k, z), scaled by the group total:
  //   sum_s count_z(s) g(s,k) - N_z p_k = 0.
  lp::Problem prob;
  prob.cols = ns * kk + (free_p ? kk : 0);
  prob.rows = ns + kk * m;
  prob.a.assign(prob.rows * prob.cols, mpq_class(0));
  prob.b.assign(prob.rows, mpq_class(0));
  prob.c.assign(prob.cols, mpq_class(0));

  const mpq_class grand(pop.grand_total());
  for (std::size_t si = 0; si < ns; ++si) {
    const auto& site = pop.sites()[sites[si]];
    const mpq_class mass = mpq_class(site.total()) / grand;
    for (std::size_t k = 0; k < kk; ++k) {
      prob.at(si, si * kk + k) = 1;
      prob.c[si * kk + k] = mass * mpq_class(cost.cost(pop.location(sites[si]), k));
    }
    prob.b[si] = 1;
  }
  mpq_class p_sum = 0;
  for (double pk : p) p_sum += mpq_class(pk);
  for (std::size_t k = 0; k < kk; ++k)
    for (std::size_t z = 0; z < m; ++z) {
      const std::size_t row = ns + k * m + z;
      for (std::size_t si = 0; si < ns; ++si)
        prob.at(row, si * kk + k) = mpq_class(pop.sites()[sites[si]].counts[z]);
      const mpq_class group_total(pop.group_total(z));
      if (free_p) {
        prob.at(row, ns * kk + k) = -group_total;
      } else {
        // p is renormalized exactly so the marginal rows stay consistent.
        prob.b[row] = group_total * mpq_class(p[k]) / p_sum;
      }
    }

  const auto res = lp::solve(std::move(prob));
  if (res.status != lp::Status::optimal)
    throw Infeasible(res.status == lp::Status::infeasible ? "relaxation is infeasible"
                                                          : "relaxation is unbounded");

  LPSolution sol;
  sol.g = Matrix(pop.site_count(), kk);
  for (std::size_t i = 0; i < pop.site_count(); ++i) sol.g(i, 0) = 1.0;
  for (std::size_t si = 0; si < ns; ++si)
    for (std::size_t k = 0; k < kk; ++k) sol.g(sites[si], k) = res.x[si * kk + k].get_d();
  sol.p.resize(kk);
  for (std::size_t k = 0; k < kk; ++k)
    sol.p[k] = free_p ? res.x[ns * kk + k].get_d() : mpq_class(mpq_class(p[k]) / p_sum).get_d();
  sol.objective = res.objective.get_d();

  sol.marginal_residuals = Matrix(kk, m);
  for (std::size_t k = 0; k < kk; ++k)
    for (std::size_t z = 0; z < m; ++z) {
      double s = 0.0;
      for (std::size_t i = 0; i < pop.site_count(); ++i) s += sol.g(i, k) * pop.pmf(z, i);
      sol.marginal_residuals(k, z) = s - sol.p[k];
    }
  for (std::size_t si = 0; si < ns; ++si) {
    double s = 0.0;
    for (std::size_t k = 0; k < kk; ++k) s += sol.g(sites[si], k);
    sol.assignment_residual = std::max(sol.assignment_residual, std::abs(s - 1.0));
  }
  return sol;
}

double duality_gap(const LPSolution& lp, const DiscreteInstance& instance,
                   const WeightMatrix& weights, std::span<const double> p) {
  if (weights.facility_count() != instance.facility_count() ||
      weights.group_count() != instance.group_count())
    throw DimensionMismatch("weights do not match the instance");
  const ExactModel model(*instance.population, *instance.cost);
  const double dual = p.empty() ? model.dual_value(weights.w) : model.dual_value(weights.w, p);
  return lp.objective - dual;
}

double duality_gap(const DiscreteInstance& instance, const WeightMatrix& weights,
                   std::span<const double> p) {
  return duality_gap(lp_primal(instance, p), instance, weights, p);
}

}  // namespace fairpart

namespace fairpart {

bool OracleSummary::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const OracleCheck& c) { return c.passed; });
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

double relative(double diff, double reference) {
  return std::abs(diff) / std::max(std::abs(reference), 1e-12);
}

/// Largest |mean - exact| / stderr over components, with components of zero
/// spread compared exactly (up to rounding).
OracleCheck gradient_check(const std::string& name, const Matrix& iterate,
                           const DiscreteInstance& inst, const OracleOptions& opt,
                           std::uint64_t stream) {
  const auto& pop = *inst.population;
  const auto& cost = *inst.cost;
  const Matrix exact = exact_gradient(iterate, inst, opt.mode, opt.p);
  auto state = SolverState::initial(opt.mode, iterate.rows(), iterate.cols(), 1.0, opt.seed);
  state.iterate = iterate;
  const std::size_t size = iterate.data().size();
  std::vector<double> sum(size, 0.0), sq(size, 0.0);
  auto rng = make_rng(opt.seed, stream);
  const std::uint64_t n = std::max<std::uint64_t>(opt.gradient_samples, 2);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto d = sampled_direction(state, pop.sample_joint(rng), opt.p, pop, cost);
    for (std::size_t j = 0; j < size; ++j) {
      sum[j] += d.data()[j];
      sq[j] += d.data()[j] * d.data()[j];
    }
  }
  const double nn = static_cast<double>(n);
  double worst = 0.0;
  bool ok = true;
  for (std::size_t j = 0; j < size; ++j) {
    const double mean = sum[j] / nn;
    const double var = std::max(0.0, (sq[j] - nn * mean * mean) / (nn - 1.0));
    const double se = std::sqrt(var / nn);
    const double diff = std::abs(mean - exact.data()[j]);
    if (se > 0.0) worst = std::max(worst, diff / se);
    if (diff > 4.0 * se + 1e-9) ok = false;
  }
  return {name, ok, "max |z| = " + fmt(worst) + " over " + std::to_string(n) + " samples"};
}

}  // namespace

OracleSummary verify_instance(const DiscreteInstance& inst, const OracleOptions& opt) {
  const bool fixed = opt.mode == SolveMode::fixed_p;
  const std::span<const double> p = fixed ? std::span<const double>(opt.p) : std::span<const double>();
  OracleSummary out;

  const auto lp = lp_primal(inst, p);
  out.lp_objective = lp.objective;
  out.lp_sizes = lp.p;
  const double residual = std::max(lp.marginal_residuals.max_abs(), lp.assignment_residual);
  out.checks.push_back({"lp_feasible", residual <= 1e-9, "max residual " + fmt(residual)});

  AscentConfig acfg;
  acfg.mode = opt.mode;
  acfg.p = opt.p;
  acfg.iterations = opt.ascent_iterations;
  const auto ascent = exact_ascent(inst, acfg);
  out.ascent_value = ascent.dual_value;
  out.ascent_gap = lp.objective - ascent.dual_value;
  out.checks.push_back({"strong_duality", relative(out.ascent_gap, lp.objective) <= opt.tolerance,
                        "LP " + fmt(lp.objective) + ", dual " + fmt(ascent.dual_value) +
                            ", gap " + fmt(out.ascent_gap)});

  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : ascent.trace) worst = std::min(worst, lp.objective - c.average_value);
  if (ascent.trace.empty()) worst = out.ascent_gap;
  out.checks.push_back({"weak_duality", worst >= -1e-9, "min checkpoint gap " + fmt(worst)});

  const std::size_t kk = inst.facility_count(), m = inst.group_count();
  out.checks.push_back(gradient_check("gradient_unbiased_at_zero", Matrix(kk, m), inst, opt, 11));
  out.checks.push_back(
      gradient_check("gradient_unbiased_at_ascent", ascent.weights.w, inst, opt, 12));

  if (opt.weights) {
    const double gap = duality_gap(lp, inst, *opt.weights, p);
    out.supplied_gap = gap;
    out.checks.push_back({"supplied_weights_gap",
                          gap >= -1e-9 && relative(gap, lp.objective) <= opt.tolerance,
                          "gap " + fmt(gap)});
  }
  return out;
}

}  // namespace fairpart
