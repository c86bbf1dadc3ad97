#pragma once

// Derivative-free ensemble update rules: weighted resampling (WRS),
// sample-based relative entropy policy search (REPS), population-based
// optimisation (PBO), the shared exploration step, and the OLP/EYE baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "inhand/cost.hpp"
#include "inhand/physics.hpp"
#include "inhand/rng.hpp"

namespace inhand {

enum class OptimizerKind { WRS, REPS, PBO, OLP, EYE };

inline std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::WRS: return "WRS";
    case OptimizerKind::REPS: return "REPS";
    case OptimizerKind::PBO: return "PBO";
    case OptimizerKind::OLP: return "OLP";
    case OptimizerKind::EYE: return "EYE";
  }
  return "?";
}

inline OptimizerKind optimizer_kind_from_string(std::string_view s) {
  if (s == "WRS" || s == "wrs") return OptimizerKind::WRS;
  if (s == "REPS" || s == "reps") return OptimizerKind::REPS;
  if (s == "PBO" || s == "pbo") return OptimizerKind::PBO;
  if (s == "OLP" || s == "olp") return OptimizerKind::OLP;
  if (s == "EYE" || s == "eye") return OptimizerKind::EYE;
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}

struct WrsConfig {
  double lambda = 1.0;  // softmax temperature
};

struct RepsConfig {
  double epsilon = 1.0;  // KL bound
  double eta_lower = 1e-3;
  double eta_upper = 1e3;
  double tolerance = 1e-6;
};

struct PboConfig {
  std::size_t k_best = 10;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::REPS;
  WrsConfig wrs;
  RepsConfig reps;
  PboConfig pbo;
};

/// Exploration noise: per-parameter std devs for theta jitter (flattened
/// SimParams order) and std devs of the perturbation force components and
/// torque applied to the object for one step.
struct ExplorationConfig {
  std::vector<double> sigma_theta;
  double sigma_force = 0.0;   // N
  double sigma_torque = 0.0;  // N m

  void validate(std::size_t dimension) const {
    if (sigma_theta.size() != dimension) throw std::invalid_argument("ExplorationConfig: sigma_theta dimension mismatch");
    for (double s : sigma_theta)
      if (!(s >= 0.0)) throw std::invalid_argument("ExplorationConfig: negative sigma");
    if (!(sigma_force >= 0.0) || !(sigma_torque >= 0.0)) throw std::invalid_argument("ExplorationConfig: negative sigma");
  }

  ExplorationConfig scaled(double factor) const {
    ExplorationConfig e = *this;
    for (double& s : e.sigma_theta) s *= factor;
    e.sigma_force *= factor;
    e.sigma_torque *= factor;
    return e;
  }
};

namespace detail {
inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite input");
}
}  // namespace detail

/// P(i) = exp(-lambda (C_i - min C)) / sum_k exp(-lambda (C_k - min C)).
inline std::vector<double> wrs_pmf(std::span<const double> costs, double lambda) {
  if (costs.empty()) throw std::invalid_argument("wrs_pmf: empty cost list");
  if (!(lambda > 0.0)) throw std::invalid_argument("wrs_pmf: lambda must be positive");
  detail::require_finite(costs, "wrs_pmf");
  const double cmin = *std::min_element(costs.begin(), costs.end());
  std::vector<double> p(costs.size());
  double z = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) z += p[i] = std::exp(-lambda * (costs[i] - cmin));
  for (double& x : p) x /= z;
  return p;
}

/// R_i = max C + min C - C_i.
inline std::vector<double> reps_rewards(std::span<const double> costs) {
  if (costs.empty()) throw std::invalid_argument("reps_rewards: empty cost list");
  detail::require_finite(costs, "reps_rewards");
  const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
  std::vector<double> r(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) r[i] = *hi + *lo - costs[i];
  return r;
}

/// Dual g(eta) = eta eps + eta log (1/K sum exp(R_i / eta)), evaluated with a
/// max shift.
inline double reps_dual(std::span<const double> rewards, double eta, double epsilon) {
  const double rmax = *std::max_element(rewards.begin(), rewards.end());
  double z = 0.0;
  for (double r : rewards) z += std::exp((r - rmax) / eta);
  return eta * epsilon + rmax + eta * std::log(z / static_cast<double>(rewards.size()));
}

/// dg/deta.
inline double reps_dual_derivative(std::span<const double> rewards, double eta, double epsilon) {
  const double rmax = *std::max_element(rewards.begin(), rewards.end());
  double z = 0.0, zx = 0.0;
  for (double r : rewards) {
    const double x = (r - rmax) / eta;
    const double e = std::exp(x);
    z += e;
    zx += e * x;
  }
  return epsilon + std::log(z / static_cast<double>(rewards.size())) - zx / z;
}

/// Minimiser of the convex dual over [eta_lower, eta_upper]: bisection on the
/// sign of g' to a coarse bracket, then golden-section search to tolerance.
/// All-equal rewards return the upper bound.
inline double reps_dual_solve(std::span<const double> rewards, double epsilon, double eta_lower, double eta_upper,
                              double tolerance = 1e-6) {
  if (rewards.empty()) throw std::invalid_argument("reps_dual_solve: empty reward list");
  if (!(epsilon > 0.0)) throw std::invalid_argument("reps_dual_solve: epsilon must be positive");
  if (!(eta_lower > 0.0 && eta_lower < eta_upper)) throw std::invalid_argument("reps_dual_solve: bad eta bounds");
  detail::require_finite(rewards, "reps_dual_solve");
  const auto [rlo, rhi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*rhi - *rlo == 0.0) return eta_upper;

  double lo = eta_lower, hi = eta_upper;
  if (reps_dual_derivative(rewards, lo, epsilon) >= 0.0) return lo;
  if (reps_dual_derivative(rewards, hi, epsilon) <= 0.0) return hi;
  const double coarse = std::max(tolerance, 1e-6 * (eta_upper - eta_lower));
  while (hi - lo > coarse) {
    const double mid = 0.5 * (lo + hi);
    if (reps_dual_derivative(rewards, mid, epsilon) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double gc = reps_dual(rewards, c, epsilon), gd = reps_dual(rewards, d, epsilon);
  while (b - a > tolerance) {
    if (gc < gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = reps_dual(rewards, c, epsilon);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = reps_dual(rewards, d, epsilon);
    }
  }
  return 0.5 * (a + b);
}

/// P(i) = exp(R_i / eta) / sum_j exp(R_j / eta).
inline std::vector<double> reps_pmf(std::span<const double> rewards, double eta) {
  if (rewards.empty()) throw std::invalid_argument("reps_pmf: empty reward list");
  if (!(eta > 0.0)) throw std::invalid_argument("reps_pmf: eta must be positive");
  detail::require_finite(rewards, "reps_pmf");
  const double rmax = *std::max_element(rewards.begin(), rewards.end());
  std::vector<double> p(rewards.size());
  double z = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) z += p[i] = std::exp((rewards[i] - rmax) / eta);
  for (double& x : p) x /= z;
  return p;
}

/// KL(p || uniform over the K samples).
inline double kl_to_uniform(std::span<const double> pmf) {
  const double k = static_cast<double>(pmf.size());
  double kl = 0.0;
  for (double p : pmf)
    if (p > 0.0) kl += p * std::log(p * k);
  return kl;
}

inline double entropy(std::span<const double> pmf) {
  double h = 0.0;
  for (double p : pmf)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

/// count independent draws with replacement from pmf (inverse CDF).
inline std::vector<std::size_t> multinomial_resample(std::span<const double> pmf, std::size_t count, Rng& rng) {
  if (pmf.empty()) throw std::invalid_argument("multinomial_resample: empty pmf");
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("multinomial_resample: invalid probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("multinomial_resample: pmf does not sum to 1");
  std::vector<double> cdf(pmf.size());
  std::partial_sum(pmf.begin(), pmf.end(), cdf.begin());
  std::vector<std::size_t> out(count);
  for (auto& o : out) {
    const double u = uniform01(rng) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
    if (idx >= pmf.size()) idx = pmf.size() - 1;
    while (pmf[idx] == 0.0 && idx > 0) --idx;  // never land on a zero-mass lane
    o = idx;
  }
  return out;
}

/// Lanes ranked by (cost, index); the k_best cheapest map to themselves and
/// every other lane copies a uniformly drawn survivor.
inline std::vector<std::size_t> pbo_select(std::span<const double> costs, std::size_t k_best, Rng& rng) {
  const std::size_t k = costs.size();
  if (k_best < 1 || k_best > k) throw std::invalid_argument("pbo_select: k_best out of range");
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
  std::vector<std::size_t> sources(k);
  std::vector<bool> survivor(k, false);
  for (std::size_t r = 0; r < k_best; ++r) survivor[order[r]] = true;
  std::uniform_int_distribution<std::size_t> pick(0, k_best - 1);
  for (std::size_t i = 0; i < k; ++i) sources[i] = survivor[i] ? i : order[pick(rng)];
  return sources;
}

/// One simulation lane of the ensemble.
struct Lane {
  WorldState state;
  SimParams params;
  CostAccumulator accumulator{1};
  bool divergent = false;
  std::size_t origin = 0;  // initial lane this lane descends from
};

/// Copies (state, theta) from each lane's source, jitters theta with
/// N(0, sigma_theta) (clamped to bounds), queues a N(0, sigma_v) wrench on
/// the object, and resets every cost accumulator. Lane i draws from the
/// sub-stream (seed, explore, tau, i).
inline std::vector<Lane> resample_and_perturb(const std::vector<Lane>& lanes, std::span<const std::size_t> sources,
                                              const ExplorationConfig& explore, const ParamBounds& bounds,
                                              std::uint64_t seed, std::uint64_t tau) {
  if (sources.size() != lanes.size()) throw std::invalid_argument("resample_and_perturb: source count mismatch");
  std::vector<Lane> out;
  out.reserve(lanes.size());
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    if (sources[i] >= lanes.size()) throw std::invalid_argument("resample_and_perturb: source out of range");
    const Lane& src = lanes[sources[i]];
    Lane lane = src;
    Rng rng = make_stream(seed, {stream::kExplore, tau, i});
    std::vector<double> theta = src.params.to_vector();
    explore.validate(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += explore.sigma_theta[k] * standard_normal(rng);
    lane.params = bounds.clamp(SimParams::from_vector(theta));
    const double fx = explore.sigma_force * standard_normal(rng);
    const double fy = explore.sigma_force * standard_normal(rng);
    const double tz = explore.sigma_torque * standard_normal(rng);
    lane.state = apply_external_force(std::move(lane.state), Vec2(fx, fy), tz);
    lane.accumulator.reset();
    out.push_back(std::move(lane));
  }
  return out;
}

inline std::vector<Lane> resample_and_perturb(const std::vector<Lane>& lanes, std::span<const double> pmf,
                                              const ExplorationConfig& explore, const ParamBounds& bounds,
                                              std::uint64_t seed, std::uint64_t tau) {
  if (pmf.size() != lanes.size()) throw std::invalid_argument("resample_and_perturb: pmf size mismatch");
  Rng rng = make_stream(seed, {stream::kSelect, tau});
  const auto sources = multinomial_resample(pmf, lanes.size(), rng);
  return resample_and_perturb(lanes, sources, explore, bounds, seed, tau);
}

struct UpdateDiagnostics {
  std::vector<double> pmf;  // empty for PBO and the baselines
  std::vector<std::size_t> sources;
  double eta = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
};

/// Runs one optimizer update in place. Lanes with a non-finite window cost
/// (divergent) get zero probability / the worst rank, so they are replaced
/// whenever any finite lane exists. EYE and OLP leave the ensemble untouched.
inline UpdateDiagnostics optimizer_update(std::vector<Lane>& lanes, std::span<const double> window_costs,
                                          const OptimizerConfig& config, const ExplorationConfig& explore,
                                          const ParamBounds& bounds, std::uint64_t seed, std::uint64_t tau) {
  UpdateDiagnostics diag;
  const std::size_t k = lanes.size();
  if (window_costs.size() != k) throw std::invalid_argument("optimizer_update: cost count mismatch");
  if (config.kind == OptimizerKind::EYE || config.kind == OptimizerKind::OLP) {
    diag.sources.resize(k);
    std::iota(diag.sources.begin(), diag.sources.end(), 0);
    return diag;
  }

  std::vector<std::size_t> finite;
  std::vector<double> finite_costs;
  for (std::size_t i = 0; i < k; ++i)
    if (std::isfinite(window_costs[i])) {
      finite.push_back(i);
      finite_costs.push_back(window_costs[i]);
    }
  if (finite.empty()) {
    diag.sources.resize(k);
    std::iota(diag.sources.begin(), diag.sources.end(), 0);
    return diag;
  }

  if (config.kind == OptimizerKind::PBO) {
    std::vector<double> ranked(window_costs.begin(), window_costs.end());
    for (double& c : ranked)
      if (!std::isfinite(c)) c = std::numeric_limits<double>::max();
    const std::size_t k_best = std::min(config.pbo.k_best, finite.size());
    Rng rng = make_stream(seed, {stream::kSelect, tau});
    diag.sources = pbo_select(ranked, k_best, rng);
  } else {
    std::vector<double> sub;
    if (config.kind == OptimizerKind::WRS) {
      sub = wrs_pmf(finite_costs, config.wrs.lambda);
    } else {
      const auto rewards = reps_rewards(finite_costs);
      diag.eta = reps_dual_solve(rewards, config.reps.epsilon, config.reps.eta_lower, config.reps.eta_upper,
                                 config.reps.tolerance);
      sub = reps_pmf(rewards, diag.eta);
    }
    diag.pmf.assign(k, 0.0);
    for (std::size_t j = 0; j < finite.size(); ++j) diag.pmf[finite[j]] = sub[j];
    diag.entropy = entropy(diag.pmf);
    diag.kl = kl_to_uniform(diag.pmf);
    Rng rng = make_stream(seed, {stream::kSelect, tau});
    diag.sources = multinomial_resample(diag.pmf, k, rng);
  }
  lanes = resample_and_perturb(lanes, diag.sources, explore, bounds, seed, tau);
  return diag;
}

}  // namespace inhand
