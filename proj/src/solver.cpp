#include "fairpart/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <thread>

#include "fairpart/errors.hpp"

namespace fairpart {

namespace {

// Posterior and cost buffers reused by the hot loops.
struct Scratch {
  std::vector<double> posterior;
  std::vector<double> costs;
};

Scratch& scratch(std::size_t groups, std::size_t facilities) {
  thread_local Scratch s;
  s.posterior.resize(groups);
  s.costs.resize(facilities);
  return s;
}

void check_compatible(const Population& pop, const CostModel& cost) {
  if (cost.kind() == CostKind::matrix) {
    if (!pop.is_discrete())
      throw ConfigError("matrix costs require a site-table (CSV) population");
    if (!cost.bound()) throw ConfigError("matrix cost model is not bound to the population");
  }
}

void check_weights(const WeightMatrix& weights, const Population& pop, const CostModel& cost) {
  if (weights.group_count() != pop.group_count() ||
      weights.facility_count() != cost.facility_count())
    throw DimensionMismatch("weights are " + std::to_string(weights.facility_count()) + "x" +
                            std::to_string(weights.group_count()) + ", instance is " +
                            std::to_string(cost.facility_count()) + "x" +
                            std::to_string(pop.group_count()));
}

constexpr std::uint64_t kStreamSolver = 1;
constexpr std::uint64_t kStreamTrace = 2;
constexpr std::uint64_t kStreamEval = 3;
constexpr std::uint64_t kChunk = 1 << 15;

unsigned g_workers = 0;

}  // namespace

// ---------------------------------------------------------------------------

WeightMatrix::WeightMatrix(Matrix weights, std::vector<double> priors)
    : w(std::move(weights)), q(std::move(priors)) {
  if (w.cols() != q.size()) throw DimensionMismatch("weight columns must match group count");
}

WeightMatrix WeightMatrix::zeros(std::size_t facilities, const std::vector<double>& priors) {
  return {Matrix(facilities, priors.size()), priors};
}

double WeightMatrix::row_mean(std::size_t k) const {
  double s = 0.0;
  for (std::size_t z = 0; z < q.size(); ++z) s += q[z] * w(k, z);
  return s;
}

double WeightMatrix::constraint_residual() const {
  double r = 0.0;
  for (std::size_t k = 0; k < w.rows(); ++k) r = std::max(r, std::abs(row_mean(k)));
  return r;
}

const char* to_string(SolveMode mode) {
  return mode == SolveMode::optimal_p ? "optimal_p" : "fixed_p";
}

SolveMode parse_solve_mode(const std::string& s) {
  if (s == "optimal_p") return SolveMode::optimal_p;
  if (s == "fixed_p") return SolveMode::fixed_p;
  throw ConfigError("solver.mode must be optimal_p or fixed_p, got '" + s + "'");
}

void SolverConfig::validate(std::size_t facilities) const {
  if (mode == SolveMode::fixed_p) {
    if (p.size() != facilities)
      throw ConfigError("solver.p must have one entry per facility (" +
                        std::to_string(facilities) + ")");
    double sum = 0.0;
    for (double pk : p) {
      if (!(pk >= 0.0) || !std::isfinite(pk)) throw ConfigError("solver.p entries must be >= 0");
      sum += pk;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError("solver.p must sum to 1 (got " + std::to_string(sum) + ")");
  }
  if (step_scale && !(*step_scale > 0.0 && std::isfinite(*step_scale)))
    throw ConfigError("solver.alpha must be positive");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    throw ConfigError("solver.tail_fraction must lie in (0, 1]");
}

double default_step_scale(const CostModel& cost) {
  auto median = cost.median_pairwise_cost();
  if (!median || !(*median > 0.0)) return 1.0;
  return 0.5 * *median;
}

SolverState SolverState::initial(SolveMode mode, std::size_t facilities, std::size_t groups,
                                 double step_scale, std::uint64_t seed) {
  SolverState s;
  s.mode = mode;
  s.iterate = Matrix(facilities, groups);
  s.average = Matrix(facilities, groups);
  s.step_scale = step_scale;
  s.seed = seed;
  return s;
}

double SolverState::step_size() const {
  return step_scale / std::sqrt(static_cast<double>(n) + 1.0);
}

// ---------------------------------------------------------------------------

std::size_t argmin_facility(const Matrix& w, std::span<const double> posterior,
                            const CostModel& cost, const Location& x, double* min_score) {
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t k = 0; k < w.rows(); ++k) {
    double mix = 0.0;
    const auto row = w.row(k);
    for (std::size_t z = 0; z < row.size(); ++z) mix += posterior[z] * row[z];
    const double score = cost.cost(x, k) - mix;
    if (k == 0 || score < best_score) {
      best = k;
      best_score = score;
    }
  }
  if (min_score) *min_score = best_score;
  return best;
}

double effective_score(const WeightMatrix& weights, const Population& pop,
                       const CostModel& cost, const Location& x, std::size_t k) {
  check_weights(weights, pop, cost);
  if (k >= weights.facility_count()) throw IndexOutOfRange("facility index " + std::to_string(k));
  const auto post = pop.posterior(x);
  double mix = 0.0;
  for (std::size_t z = 0; z < post.size(); ++z) mix += post[z] * weights.w(k, z);
  return cost.cost(x, k) - mix;
}

std::size_t argmin_facility(const WeightMatrix& weights, const Population& pop,
                            const CostModel& cost, const Location& x) {
  check_weights(weights, pop, cost);
  auto& s = scratch(pop.group_count(), cost.facility_count());
  pop.posterior_into(x, s.posterior);
  return argmin_facility(weights.w, s.posterior, cost, x);
}

WeightMatrix project_v_to_w(const VMatrix& v, const std::vector<double>& q) {
  if (v.v.cols() != q.size()) throw DimensionMismatch("v columns must match group count");
  const double qq = std::inner_product(q.begin(), q.end(), q.begin(), 0.0);
  Matrix w = v.v;
  for (std::size_t k = 0; k < w.rows(); ++k) {
    auto row = w.row(k);
    const double coef = std::inner_product(q.begin(), q.end(), row.begin(), 0.0) / qq;
    for (std::size_t z = 0; z < q.size(); ++z) row[z] -= coef * q[z];
  }
  return {std::move(w), q};
}

// ---------------------------------------------------------------------------

namespace {

void fold_into_average(SolverState& state) {
  if (state.n < state.average_from) return;
  ++state.averaged;
  const double inv = 1.0 / static_cast<double>(state.averaged);
  auto& avg = state.average.data();
  const auto& cur = state.iterate.data();
  for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += (cur[i] - avg[i]) * inv;
}

/// Winner under the weights the current iterate stands for, or nullopt if the
/// posterior is undefined at the sample.
std::optional<std::size_t> current_winner(const SolverState& state, const JointSample& sample,
                                          const Population& pop, const CostModel& cost,
                                          Scratch& s) {
  if (!state.iterate.all_finite())
    throw NonFinite("solver iterate became non-finite at step " + std::to_string(state.n));
  try {
    pop.posterior_into(sample.location, s.posterior);
  } catch (const ZeroDensity&) {
    return std::nullopt;
  }
  if (state.mode == SolveMode::fixed_p)
    return argmin_facility(state.iterate, s.posterior, cost, sample.location);

  // Projected score without materializing w:
  //   E(w_k|x) = post.v_k - (q.v_k / q'q) (post.q)
  const auto& q = pop.priors();
  const double qq = pop.priors_dot();
  const double post_q = std::inner_product(q.begin(), q.end(), s.posterior.begin(), 0.0);
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t k = 0; k < state.iterate.rows(); ++k) {
    const auto row = state.iterate.row(k);
    double pv = 0.0, qv = 0.0;
    for (std::size_t z = 0; z < row.size(); ++z) {
      pv += s.posterior[z] * row[z];
      qv += q[z] * row[z];
    }
    const double score = cost.cost(sample.location, k) - (pv - qv / qq * post_q);
    if (k == 0 || score < best_score) {
      best = k;
      best_score = score;
    }
  }
  return best;
}

void check_finite(const SolverState& state) {
  if (!state.iterate.all_finite())
    throw NonFinite("solver iterate became non-finite at step " + std::to_string(state.n));
}

}  // namespace

StepOutcome sa_step_optimal_p(SolverState& state, const JointSample& sample,
                              const Population& pop, const CostModel& cost) {
  auto& s = scratch(pop.group_count(), cost.facility_count());
  const auto winner = current_winner(state, sample, pop, cost, s);
  if (!winner) {
    ++state.discarded;
    return StepOutcome::discarded;
  }
  const auto& q = pop.priors();
  const double a = state.step_size();
  const double scale = q[sample.group] / pop.priors_dot();
  auto row = state.iterate.row(*winner);
  for (std::size_t z = 0; z < q.size(); ++z) {
    const double indicator = z == sample.group ? 1.0 : 0.0;
    row[z] -= a * (indicator - scale * q[z]);
  }
  ++state.n;
  fold_into_average(state);
  return StepOutcome::applied;
}

StepOutcome sa_step_fixed_p(SolverState& state, const JointSample& sample,
                            std::span<const double> p, const Population& pop,
                            const CostModel& cost) {
  auto& s = scratch(pop.group_count(), cost.facility_count());
  const auto winner = current_winner(state, sample, pop, cost, s);
  if (!winner) {
    ++state.discarded;
    return StepOutcome::discarded;
  }
  const auto& q = pop.priors();
  const double a = state.step_size();
  for (std::size_t k = 0; k < state.iterate.rows(); ++k) {
    auto row = state.iterate.row(k);
    for (std::size_t z = 0; z < q.size(); ++z) row[z] += a * p[k] * q[z];
  }
  state.iterate(*winner, sample.group) -= a;
  ++state.n;
  fold_into_average(state);
  return StepOutcome::applied;
}

Matrix sampled_direction(const SolverState& state, const JointSample& sample,
                         std::span<const double> p, const Population& pop,
                         const CostModel& cost) {
  auto& s = scratch(pop.group_count(), cost.facility_count());
  const auto winner = current_winner(state, sample, pop, cost, s);
  if (!winner) throw ZeroDensity("sample has zero total density");
  const auto& q = pop.priors();
  Matrix d(state.iterate.rows(), state.iterate.cols());
  if (state.mode == SolveMode::optimal_p) {
    const double scale = q[sample.group] / pop.priors_dot();
    for (std::size_t z = 0; z < q.size(); ++z)
      d(*winner, z) = -((z == sample.group ? 1.0 : 0.0) - scale * q[z]);
  } else {
    for (std::size_t k = 0; k < d.rows(); ++k)
      for (std::size_t z = 0; z < q.size(); ++z) d(k, z) = p[k] * q[z];
    d(*winner, sample.group) -= 1.0;
  }
  return d;
}

VMatrix polyak_average(const SolverState& state) {
  if (state.averaged == 0) return {state.iterate};
  return {state.average};
}

WeightMatrix averaged_weights(const SolverState& state, const std::vector<double>& q) {
  auto avg = polyak_average(state);
  if (state.mode == SolveMode::optimal_p) return project_v_to_w(avg, q);
  return {std::move(avg.v), q};
}

// ---------------------------------------------------------------------------

std::vector<double> SampleSummary::region_masses() const {
  std::vector<double> m(counts.rows(), 0.0);
  if (samples == 0) return m;
  for (std::size_t k = 0; k < counts.rows(); ++k) {
    double row = 0.0;
    for (std::size_t z = 0; z < counts.cols(); ++z) row += counts(k, z);
    m[k] = row / static_cast<double>(samples);
  }
  return m;
}

double SampleSummary::max_fairness_deviation() const {
  const auto masses = region_masses();
  double dev = 0.0;
  for (std::size_t z = 0; z < counts.cols(); ++z) {
    double group = 0.0;
    for (std::size_t k = 0; k < counts.rows(); ++k) group += counts(k, z);
    if (group == 0.0) continue;
    for (std::size_t k = 0; k < counts.rows(); ++k)
      dev = std::max(dev, std::abs(counts(k, z) / group - masses[k]));
  }
  return dev;
}

double SampleSummary::score_stderr() const {
  if (samples < 2) return 0.0;
  const double n = static_cast<double>(samples);
  return std::sqrt(score_m2 / (n - 1.0) / n);
}

void set_evaluation_workers(unsigned workers) { g_workers = workers; }

unsigned evaluation_workers() {
  if (g_workers != 0) return g_workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

SampleSummary summarize_chunk(const WeightMatrix& weights, const Population& pop,
                              const CostModel& cost, std::uint64_t n, std::uint64_t chunk_seed,
                              bool keep_costs) {
  const std::size_t kk = cost.facility_count(), m = pop.group_count();
  SampleSummary out;
  out.counts = Matrix(kk, m);
  if (keep_costs) out.raw_costs.resize(m);
  std::vector<double> post(m);
  auto rng = make_rng(chunk_seed);
  double mean = 0.0, m2 = 0.0, cost_sum = 0.0;
  std::uint64_t accepted = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto sample = pop.sample_joint(rng);
    try {
      pop.posterior_into(sample.location, post);
    } catch (const ZeroDensity&) {
      ++out.discarded;
      continue;
    }
    double score = 0.0;
    const auto k = argmin_facility(weights.w, post, cost, sample.location, &score);
    out.counts(k, sample.group) += 1.0;
    const double c = cost.cost(sample.location, k);
    cost_sum += c;
    ++accepted;
    const double delta = score - mean;
    mean += delta / static_cast<double>(accepted);
    m2 += delta * (score - mean);
    if (keep_costs)
      out.raw_costs[sample.group].push_back(cost.kind() == CostKind::squared_euclidean
                                                ? std::sqrt(c)
                                                : c);
  }
  out.samples = accepted;
  out.score_mean = mean;
  out.score_m2 = m2;
  out.cost_mean = accepted ? cost_sum / static_cast<double>(accepted) : 0.0;
  return out;
}

void merge_into(SampleSummary& acc, SampleSummary&& part) {
  if (part.samples > 0) {
    const double na = static_cast<double>(acc.samples), nb = static_cast<double>(part.samples);
    const double n = na + nb;
    const double delta = part.score_mean - acc.score_mean;
    acc.score_mean += delta * nb / n;
    acc.score_m2 += part.score_m2 + delta * delta * na * nb / n;
    acc.cost_mean += (part.cost_mean - acc.cost_mean) * nb / n;
  }
  acc.samples += part.samples;
  acc.discarded += part.discarded;
  for (std::size_t i = 0; i < acc.counts.data().size(); ++i)
    acc.counts.data()[i] += part.counts.data()[i];
  for (std::size_t z = 0; z < part.raw_costs.size(); ++z)
    acc.raw_costs[z].insert(acc.raw_costs[z].end(), part.raw_costs[z].begin(),
                            part.raw_costs[z].end());
}

}  // namespace

SampleSummary summarize_samples(const WeightMatrix& weights, const Population& pop,
                                const CostModel& cost, std::uint64_t n, std::uint64_t seed,
                                bool keep_costs) {
  check_weights(weights, pop, cost);
  check_compatible(pop, cost);
  const std::uint64_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<SampleSummary> parts(chunks);
  auto work = [&](std::uint64_t c) {
    const std::uint64_t len = std::min(kChunk, n - c * kChunk);
    parts[c] = summarize_chunk(weights, pop, cost, len, derive_seed(seed, c), keep_costs);
  };
  const unsigned workers = std::min<std::uint64_t>(evaluation_workers(), chunks);
  if (workers <= 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) work(c);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::uint64_t c = t; c < chunks; c += workers) work(c);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  SampleSummary total;
  total.counts = Matrix(cost.facility_count(), pop.group_count());
  if (keep_costs) total.raw_costs.resize(pop.group_count());
  for (auto& part : parts) merge_into(total, std::move(part));
  return total;
}

Estimate dual_objective_estimate(const WeightMatrix& weights, const Population& pop,
                                 const CostModel& cost, std::uint64_t n_samples,
                                 std::uint64_t seed, std::span<const double> p) {
  const auto summary = summarize_samples(weights, pop, cost, n_samples, seed);
  Estimate e{summary.score_mean, summary.score_stderr()};
  if (!p.empty()) {
    if (p.size() != weights.facility_count()) throw DimensionMismatch("p has wrong length");
    for (std::size_t k = 0; k < p.size(); ++k) e.value += p[k] * weights.row_mean(k);
  }
  return e;
}

std::vector<double> region_masses(const WeightMatrix& weights, const Population& pop,
                                  const CostModel& cost, std::uint64_t n_samples,
                                  std::uint64_t seed) {
  return summarize_samples(weights, pop, cost, n_samples, seed).region_masses();
}

// ---------------------------------------------------------------------------

std::uint64_t evaluation_seed(std::uint64_t master_seed) {
  return derive_seed(master_seed, kStreamEval);
}

SolverResult run(const SolverConfig& config, const Population& pop, const CostModel& cost) {
  const std::size_t kk = cost.facility_count(), m = pop.group_count();
  config.validate(kk);
  check_compatible(pop, cost);
  const double alpha = config.step_scale.value_or(default_step_scale(cost));
  const std::uint64_t total = config.iterations;

  auto state = SolverState::initial(config.mode, kk, m, alpha, config.seed);
  const auto tail = static_cast<std::uint64_t>(
      std::ceil(config.tail_fraction * static_cast<double>(total)));
  state.average_from = total - std::min(tail, total) + 1;

  const std::span<const double> p =
      config.mode == SolveMode::fixed_p ? std::span<const double>(config.p)
                                        : std::span<const double>();
  const std::uint64_t trace_seed = derive_seed(config.seed, kStreamTrace);
  SolverResult result;
  result.step_scale = alpha;

  auto checkpoint = [&] {
    if (config.trace_samples == 0) return;
    const auto w = averaged_weights(state, pop.priors());
    const auto summary = summarize_samples(w, pop, cost, config.trace_samples, trace_seed);
    TraceRow row{state.n, summary.score_mean, summary.score_stderr(),
                 summary.max_fairness_deviation()};
    for (std::size_t k = 0; k < p.size(); ++k) row.dual_estimate += p[k] * w.row_mean(k);
    result.trace.push_back(row);
  };

  auto rng = make_rng(config.seed, kStreamSolver);
  const std::uint64_t every = std::max<std::uint64_t>(1, total / 100);
  const std::uint64_t discard_floor = 1000;
  while (state.n < total) {
    const auto sample = pop.sample_joint(rng);
    const auto outcome = config.mode == SolveMode::optimal_p
                             ? sa_step_optimal_p(state, sample, pop, cost)
                             : sa_step_fixed_p(state, sample, p, pop, cost);
    if (outcome == StepOutcome::discarded) {
      const auto seen = state.n + state.discarded;
      if (state.discarded > discard_floor &&
          static_cast<double>(state.discarded) > 1e-3 * static_cast<double>(seen))
        throw ZeroDensity("more than 0.1% of solver samples fall where the population "
                          "density is zero");
      continue;
    }
    if (state.n % every == 0 || state.n == total) {
      check_finite(state);
      checkpoint();
    }
  }
  if (state.discarded > 0 &&
      static_cast<double>(state.discarded) > 1e-3 * static_cast<double>(state.n + state.discarded))
    throw ZeroDensity("more than 0.1% of solver samples fall where the population density is zero");
  if (state.discarded > 0)
    std::clog << "fairpart: discarded " << state.discarded << " zero-density samples\n";

  result.weights = averaged_weights(state, pop.priors());
  result.raw_final = {state.iterate};
  result.iterations = state.n;
  result.discarded = state.discarded;
  const auto eval_seed = derive_seed(config.seed, kStreamEval);
  if (config.eval_samples > 0) {
    const auto summary = summarize_samples(result.weights, pop, cost, config.eval_samples,
                                           eval_seed);
    result.dual_value = {summary.score_mean, summary.score_stderr()};
    for (std::size_t k = 0; k < p.size(); ++k)
      result.dual_value.value += p[k] * result.weights.row_mean(k);
    result.region_masses = summary.region_masses();
  }
  return result;
}

std::vector<double> classical_ot_solve(std::shared_ptr<const Population> pop,
                                       const CostModel& cost, std::span<const double> p,
                                       SolverConfig config) {
  auto single = collapse_groups(std::move(pop));
  config.mode = SolveMode::fixed_p;
  config.p.assign(p.begin(), p.end());
  const auto result = run(config, *single, cost);
  std::vector<double> w(cost.facility_count());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = result.weights.w(k, 0);
  return w;
}

}  // namespace fairpart
