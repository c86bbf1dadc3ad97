// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned in
// the constants below. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "../support/oracles.hpp"
#include "inhand/io.hpp"

using namespace inhand;
namespace fs = std::filesystem;

namespace {

constexpr double kOracleRel = 1e-9;
constexpr std::size_t kOracleSamples = 1000;
constexpr double kOracleBudget = 10.0;

constexpr std::size_t kDualVectors = 100;
constexpr std::size_t kDualGrid = 10000;
constexpr double kDualSlack = 1e-6;
constexpr double kDualBudget = 30.0;

constexpr double kPlaybackTolerance = 1e-9;
constexpr double kPlaybackBudget = 5.0;

constexpr std::size_t kSeeds = 10;
constexpr std::size_t kPairedWinsRequired = 8;
constexpr double kGridBudget = 20 * 60.0;

constexpr std::size_t kNoiseViolationsAllowed = 1;
constexpr std::size_t kKInversionsAllowed = 1;
constexpr std::size_t kExplorationKindsRequired = 2;

constexpr double kRealtimeRate = 30.0;

constexpr std::size_t kFuzzSteps = 10000;
constexpr double kPenetrationTolerance = 1e-4;  // solver penetration slop
constexpr double kConeTolerance = 1e-12;
constexpr double kMomentumTolerance = 1e-9;
constexpr double kEnergyTolerance = 1e-12;
constexpr double kFuzzBudget = 60.0;

constexpr std::size_t kInjectedLanes = 10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  verdicts.push_back({id, name, pass, detail});
  std::printf("[%s] %2d %-24s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1. Formula oracles ---------------------------------------------------

void criterion_formulas() {
  const auto t0 = Clock::now();
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t failures = 0;
  long double worst = 0;
  auto check = [&](long double lib, long double ref) {
    const long double rel = std::abs(lib - ref) / std::max<long double>(1e-300L, std::abs(ref));
    if (std::abs(ref) > 0) worst = std::max(worst, rel);
    if (!oracle::close(lib, ref, kOracleRel)) ++failures;
  };

  for (std::size_t n = 0; n < kOracleSamples; ++n) {
    const Observation a = oracle::random_observation(rng, 4, 2);
    Observation b = oracle::random_observation(rng, 4, 2);
    if (n % 3 == 0) {
      // Flags agree more often, so the gated terms are exercised.
      for (std::size_t l = 0; l < 2; ++l) {
        b.sensors[l].contact = a.sensors[l].contact;
        b.sensors[l].slipping = a.sensors[l].slipping;
        b.sensors[l].rot_slipping = a.sensors[l].rot_slipping;
      }
    }
    CostWeights w;
    for (double& x : w.w) x = 0.1 + 10.0 * u(rng);
    check(instantaneous_cost(a, b, w), oracle::cost(a, b, w));
  }

  for (std::size_t n = 0; n < kOracleSamples; ++n) {
    const std::size_t k = 1 + static_cast<std::size_t>(u(rng) * 60);
    std::vector<double> c(k);
    for (double& x : c) x = 20.0 * u(rng);
    const double lambda = 0.05 + 3.0 * u(rng);
    const auto p = wrs_pmf(c, lambda);
    const auto q = oracle::wrs(c, lambda);
    for (std::size_t i = 0; i < k; ++i) check(p[i], q[i]);

    const auto r = reps_rewards(c);
    const auto rr = oracle::rewards(c);
    for (std::size_t i = 0; i < k; ++i) check(r[i], rr[i]);

    const double eta = 0.1 + 10.0 * u(rng);
    const auto pr = reps_pmf(r, eta);
    const auto qr = oracle::reps(r, eta);
    for (std::size_t i = 0; i < k; ++i) check(pr[i], qr[i]);
  }

  for (std::size_t n = 0; n < kOracleSamples; ++n) {
    PointCloud2 cloud;
    const std::size_t m = 1 + static_cast<std::size_t>(u(rng) * 50);
    for (std::size_t i = 0; i < m; ++i) cloud.points.push_back(0.1 * Vec2(standard_normal(rng), standard_normal(rng)));
    const Pose2 g(6.0 * u(rng) - 3.0, 0.1 * Vec2(standard_normal(rng), standard_normal(rng)));
    const Pose2 e(6.0 * u(rng) - 3.0, 0.1 * Vec2(standard_normal(rng), standard_normal(rng)));
    check(add_metric(cloud, g, e), oracle::add(cloud, g, e));
  }

  for (std::size_t n = 0; n < kOracleSamples; ++n) {
    const std::size_t window = 1 + static_cast<std::size_t>(u(rng) * 20);
    CostAccumulator acc(window);
    std::vector<double> history;
    const std::size_t pushes = static_cast<std::size_t>(u(rng) * 60);
    for (std::size_t i = 0; i < pushes; ++i) {
      history.push_back(100.0 * u(rng));
      acc.push(history.back());
      check(acc.average(), oracle::window_mean(history, window));
    }
  }

  const double dt = seconds_since(t0);
  report(1, "formula oracles", failures == 0 && dt < kOracleBudget,
         fmt("mismatches=%zu worst_rel=%.2Le (tol %.0e) time=%.2fs (budget %.0fs)", failures, worst, kOracleRel, dt,
             kOracleBudget));
}

// ---- 2. REPS dual -----------------------------------------------------------

void criterion_dual() {
  const auto t0 = Clock::now();
  Rng rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const RepsConfig cfg;
  std::size_t failures = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < kDualVectors; ++n) {
    const std::size_t k = 2 + static_cast<std::size_t>(u(rng) * 60);
    std::vector<double> c(k);
    const double scale = std::pow(10.0, 4.0 * u(rng) - 2.0);
    for (double& x : c) x = scale * u(rng);
    const auto r = reps_rewards(c);
    const double eps = 0.1 + 2.0 * u(rng);
    const double eta = reps_dual_solve(r, eps, cfg.eta_lower, cfg.eta_upper, cfg.tolerance);
    const double g_star = reps_dual(r, eta, eps);
    // Grid minimum over both a linear and a log-spaced 10k-point grid.
    double g_grid = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < kDualGrid; ++i) {
      const double f = static_cast<double>(i) / (kDualGrid - 1);
      const double lin = cfg.eta_lower + f * (cfg.eta_upper - cfg.eta_lower);
      const double lg = cfg.eta_lower * std::pow(cfg.eta_upper / cfg.eta_lower, f);
      g_grid = std::min({g_grid, reps_dual(r, lin, eps), reps_dual(r, lg, eps)});
    }
    worst = std::max(worst, g_star - g_grid);
    if (!(g_star <= g_grid + kDualSlack)) ++failures;
  }
  const double dt = seconds_since(t0);
  report(2, "REPS dual optimum", failures == 0 && dt < kDualBudget,
         fmt("violations=%zu/%zu worst g*-grid_min=%.3e (slack %.0e) time=%.2fs (budget %.0fs)", failures, kDualVectors,
             worst, kDualSlack, dt, kDualBudget));
}

// ---- 3. Perfect-model playback ----------------------------------------------

void criterion_playback() {
  const auto t0 = Clock::now();
  TrajectorySpec spec{ObjectKind::Foam, ScriptKind::GraspRotate, 100, 0.0};
  const TrajectoryRecord rec = make_trajectory(spec);
  TrackerConfig cfg = default_tracker_config(rec.scene, OptimizerKind::OLP);
  cfg.theta_prior.mean = rec.gt_theta;
  std::fill(cfg.theta_prior.sigma.begin(), cfg.theta_prior.sigma.end(), 0.0);
  cfg.pose_noise = PoseNoise{};
  const RunResult r = run_tracker(rec, cfg);
  const double dt = seconds_since(t0);
  report(3, "perfect-model playback", r.add.size() == 600 && r.summary.mean_add <= kPlaybackTolerance && dt < kPlaybackBudget,
         fmt("ticks=%zu mean_ADD=%.3e m max_ADD=%.3e m (tol %.0e) time=%.2fs (budget %.0fs)", r.add.size(),
             r.summary.mean_add, r.summary.max_add, kPlaybackTolerance, dt, kPlaybackBudget));
}

// ---- Grid helpers -------------------------------------------------------------

const OptimizerKind kAll[] = {OptimizerKind::WRS, OptimizerKind::REPS, OptimizerKind::PBO, OptimizerKind::EYE,
                              OptimizerKind::OLP};

TrackerRecipe recipe(OptimizerKind kind, const std::string& noise) {
  TrackerRecipe r;
  r.optimizer = default_optimizer(kind);
  r.noise = noise;
  r.name = std::string(to_string(kind)) + "-" + noise;
  return r;
}

struct Grid {
  std::vector<RunResult> runs;
  // (trajectory, config) -> per-seed results in seed order
  std::map<std::pair<std::string, std::string>, std::vector<const RunResult*>> cells;

  void index() {
    cells.clear();
    for (const auto& r : runs) cells[{r.trajectory, r.config}].push_back(&r);
  }
  const std::vector<const RunResult*>& at(const std::string& traj, const std::string& config) const {
    return cells.at({traj, config});
  }
  double mean(const std::string& traj, const std::string& config) const {
    double s = 0;
    const auto& v = at(traj, config);
    for (const auto* r : v) s += r->summary.mean_add;
    return s / static_cast<double>(v.size());
  }
  std::size_t errors() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const RunResult& r) { return !r.error.empty(); }));
  }
};

Grid run_grid(const std::vector<TrajectoryRecord>& trajs, const std::vector<TrackerRecipe>& configs, std::size_t jobs) {
  ExperimentSpec spec;
  spec.trajectories = trajs;
  spec.configs = configs;
  for (std::size_t s = 0; s < kSeeds; ++s) spec.seeds.push_back(s);
  spec.jobs = jobs;
  Grid g;
  g.runs = run_experiment(spec);
  g.index();
  return g;
}

// ---- 4. Ordering --------------------------------------------------------------

void criterion_ordering(const std::vector<TrajectoryRecord>& trajs, const Grid& g, double seconds) {
  std::size_t worst = kSeeds;
  std::ostringstream detail;
  bool ok = g.errors() == 0;
  for (const auto& t : trajs) {
    const auto& eye = g.at(t.name, "EYE-med");
    const auto& olp = g.at(t.name, "OLP-med");
    detail << t.name << ":";
    for (OptimizerKind k : {OptimizerKind::WRS, OptimizerKind::REPS, OptimizerKind::PBO}) {
      const auto& opt = g.at(t.name, std::string(to_string(k)) + "-med");
      std::size_t wins = 0;
      for (std::size_t s = 0; s < kSeeds; ++s)
        wins += opt[s]->summary.mean_add < eye[s]->summary.mean_add && opt[s]->summary.std_add < eye[s]->summary.std_add;
      worst = std::min(worst, wins);
      detail << " " << to_string(k) << "<EYE " << wins;
    }
    std::size_t wins = 0;
    for (std::size_t s = 0; s < kSeeds; ++s) wins += eye[s]->summary.mean_add < olp[s]->summary.mean_add;
    worst = std::min(worst, wins);
    detail << " EYE<OLP " << wins << "; ";
  }
  ok = ok && worst >= kPairedWinsRequired && seconds < kGridBudget;
  report(4, "ordering vs EYE/OLP", ok,
         fmt("min paired wins=%zu/%zu (need %zu) errors=%zu time=%.0fs (budget %.0fs)", worst, kSeeds,
             kPairedWinsRequired, g.errors(), seconds, kGridBudget));
  std::printf("       %s\n", detail.str().c_str());
  for (OptimizerKind k : kAll) {
    double m = 0;
    for (const auto& t : trajs) m += g.mean(t.name, std::string(to_string(k)) + "-med");
    std::printf("       %-4s mean ADD over trajectories at med: %.3f mm\n", std::string(to_string(k)).c_str(),
                1000.0 * m / static_cast<double>(trajs.size()));
  }
}

// ---- 5. Noise monotonicity ------------------------------------------------------

void criterion_noise(const std::vector<TrajectoryRecord>& trajs, const Grid& g) {
  bool ok = g.errors() == 0;
  std::ostringstream detail;
  for (OptimizerKind k : kAll) {
    const std::string base(to_string(k));
    std::size_t v_low = 0, v_high = 0;
    double agg[3] = {0, 0, 0};
    for (const auto& t : trajs) {
      const double lo = g.mean(t.name, base + "-low"), me = g.mean(t.name, base + "-med"), hi = g.mean(t.name, base + "-high");
      v_low += lo > me;
      v_high += me > hi;
      agg[0] += lo;
      agg[1] += me;
      agg[2] += hi;
    }
    const bool agg_ok = agg[0] <= agg[1] && agg[1] <= agg[2];
    ok = ok && agg_ok && v_low <= kNoiseViolationsAllowed && v_high <= kNoiseViolationsAllowed;
    const double n = static_cast<double>(trajs.size());
    detail << base << " " << fmt("%.2f/%.2f/%.2fmm", 1000 * agg[0] / n, 1000 * agg[1] / n, 1000 * agg[2] / n)
           << " viol " << v_low << "," << v_high << "; ";
  }
  report(5, "noise monotonicity", ok,
         fmt("low<=med<=high in aggregate, <=%zu violating trajectories per gap", kNoiseViolationsAllowed));
  std::printf("       %s\n", detail.str().c_str());
}

// ---- 6. Ablations ---------------------------------------------------------------

void criterion_ablation(const std::vector<TrajectoryRecord>& trajs, const Grid& g) {
  // (a) K in {1, 10, 40}
  std::size_t inversions = 0;
  std::ostringstream kd;
  for (const auto& t : trajs) {
    const double k1 = g.mean(t.name, "REPS-med/K-1"), k10 = g.mean(t.name, "REPS-med/K-10"),
                 k40 = g.mean(t.name, "REPS-med");
    inversions += (k10 > k1) + (k40 > k10);
    kd << fmt("%.2f/%.2f/%.2f ", 1000 * k1, 1000 * k10, 1000 * k40);
  }
  const bool a = inversions <= kKInversionsAllowed;

  // (b) contacts off at med and high
  auto aggregate_mean = [&](const std::string& config) {
    double m = 0;
    for (const auto& t : trajs) m += g.mean(t.name, config);
    return m / static_cast<double>(trajs.size());
  };
  const double full_med = aggregate_mean("REPS-med"), off_med = aggregate_mean("REPS-med/contacts-off");
  const double full_high = aggregate_mean("REPS-high"), off_high = aggregate_mean("REPS-high/contacts-off");
  const bool b = off_med > full_med && off_high > full_high;

  // (c) med exploration vs 0.1x and 10x, per object
  std::size_t kinds_ok = 0;
  std::ostringstream ed;
  for (ObjectKind o : {ObjectKind::Foam, ObjectKind::Spam, ObjectKind::Banana}) {
    double m[3] = {0, 0, 0};
    const char* names[3] = {"REPS-med/explore-low", "REPS-med", "REPS-med/explore-high"};
    for (const auto& t : trajs)
      if (t.name.rfind(std::string(to_string(o)) + "-", 0) == 0)
        for (int i = 0; i < 3; ++i) m[i] += g.mean(t.name, names[i]);
    kinds_ok += m[1] < m[0] && m[1] < m[2];
    ed << to_string(o) << fmt(" %.2f/%.2f/%.2f ", 500 * m[0], 500 * m[1], 500 * m[2]);
  }
  const bool c = kinds_ok >= kExplorationKindsRequired;

  report(6, "ablation directions", a && b && c && g.errors() == 0,
         fmt("(a) K inversions=%zu (allow %zu) (b) contacts-off med %.2f>%.2f high %.2f>%.2f mm (c) med best in %zu/3 "
             "kinds (need %zu)",
             inversions, kKInversionsAllowed, 1000 * off_med, 1000 * full_med, 1000 * off_high, 1000 * full_high,
             kinds_ok, kExplorationKindsRequired));
  std::printf("       K=1/10/40 [mm]: %s\n       explore low/med/high [mm]: %s\n", kd.str().c_str(), ed.str().c_str());
}

// ---- 7. Real-time budget -----------------------------------------------------------

void criterion_realtime(const TrajectoryRecord& rec, std::size_t jobs) {
  TrackerConfig cfg = default_tracker_config(rec.scene, OptimizerKind::REPS);
  cfg.weights = trajectory_weights(rec);
  cfg.jobs = jobs;
  const auto t0 = Clock::now();
  const RunResult r = run_tracker(rec, cfg);
  const double dt = seconds_since(t0);
  const double rate = static_cast<double>(r.add.size()) / dt;
  report(7, "real-time rate", r.add.size() == 600 && rate >= kRealtimeRate,
         fmt("K=%zu ticks=%zu rate=%.0f ticks/s (need %.0f) threads=%zu", cfg.K, r.add.size(), rate, kRealtimeRate, jobs));
}

// ---- 8. Physics properties ----------------------------------------------------------

void criterion_physics() {
  const auto t0 = Clock::now();
  const oracle::FuzzReport f = oracle::physics_fuzz(88, kFuzzSteps);
  const double dt = seconds_since(t0);
  const bool ok = f.steps == kFuzzSteps && f.nonfinite == 0 && f.nondeterministic == 0 &&
                  f.worst_separation >= -kPenetrationTolerance && f.worst_cone_excess <= kConeTolerance &&
                  f.worst_momentum_error <= kMomentumTolerance && f.worst_energy_gain <= kEnergyTolerance &&
                  f.free_steps > 0 && dt < kFuzzBudget;
  report(8, "physics fuzz", ok,
         fmt("steps=%zu free=%zu min_sep=%.2e (tol -%.0e) cone=%.1e momentum=%.1e energy_gain=%.1e nondet=%zu "
             "time=%.1fs (budget %.0fs)",
             f.steps, f.free_steps, f.worst_separation, kPenetrationTolerance, f.worst_cone_excess,
             f.worst_momentum_error, f.worst_energy_gain, f.nondeterministic, dt, kFuzzBudget));
}

// ---- 9. Divergence containment ----------------------------------------------------------

void criterion_divergence(const TrajectoryRecord& rec) {
  TrackerConfig cfg = default_tracker_config(rec.scene, OptimizerKind::REPS);
  cfg.weights = trajectory_weights(rec);
  cfg.seed = 9;
  const std::size_t inject_after = 304;  // mid-window, before the update at tick 309
  std::size_t divergent_after_update = cfg.K;
  std::size_t injected = 0;
  Rng rng(99);
  const TickHook hook = [&](Tracker& tracker, std::size_t t) {
    if (t == inject_after) {
      std::vector<std::size_t> lanes(tracker.lanes().size());
      std::iota(lanes.begin(), lanes.end(), 0);
      std::shuffle(lanes.begin(), lanes.end(), rng);
      for (std::size_t i = 0; i < kInjectedLanes; ++i) tracker.mark_divergent(lanes[i]);
      injected = static_cast<std::size_t>(
          std::count_if(tracker.lanes().begin(), tracker.lanes().end(), [](const Lane& l) { return l.divergent; }));
    }
    if (t > inject_after && tracker.ticks() % cfg.T == 0 && divergent_after_update == cfg.K)
      divergent_after_update = static_cast<std::size_t>(
          std::count_if(tracker.lanes().begin(), tracker.lanes().end(), [](const Lane& l) { return l.divergent; }));
  };
  const RunResult r = run_tracker(rec, cfg, hook);
  bool finite_after = true;
  double max_after = 0.0;
  for (std::size_t t = inject_after + 1; t < r.add.size(); ++t) {
    finite_after = finite_after && std::isfinite(r.add[t]);
    max_after = std::max(max_after, r.add[t]);
  }
  report(9, "divergence containment", injected == kInjectedLanes && divergent_after_update == 0 && finite_after,
         fmt("injected=%zu divergent after next update=%zu finite ADD after=%s max ADD after=%.2f mm", injected,
             divergent_after_update, finite_after ? "yes" : "no", 1000 * max_after));
}

// ---- 10. Determinism ----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void criterion_determinism(const std::vector<TrajectoryRecord>& trajs, const std::vector<TrackerRecipe>& configs,
                           const Grid& first, const fs::path& out, std::size_t jobs) {
  const Grid second = run_grid(trajs, configs, jobs);
  emit_metrics(out / "run1", first.runs);
  emit_metrics(out / "run2", second.runs);
  std::size_t identical = 0, bytes = 0;
  const char* files[] = {kTimeseriesFile, kSummaryFile, kAggregateFile, kUpdatesFile};
  for (const char* f : files) {
    const std::string a = slurp(out / "run1" / f), b = slurp(out / "run2" / f);
    identical += !a.empty() && a == b;
    bytes += a.size();
  }
  report(10, "end-to-end determinism", identical == 4,
         fmt("%zu/4 metrics files byte-identical (%zu bytes) in %s", identical, bytes, out.string().c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string out = "acceptance_out";
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::set<int> only;
  app.add_option("--out", out, "directory for the determinism metrics files");
  app.add_option("--jobs", jobs, "worker threads for the experiment grids")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  auto want = [&](int id) { return only.empty() || only.count(id) > 0; };

  const auto start = Clock::now();
  if (want(1)) criterion_formulas();
  if (want(2)) criterion_dual();
  if (want(3)) criterion_playback();
  if (want(8)) criterion_physics();

  std::vector<TrajectoryRecord> trajs;
  if (want(4) || want(5) || want(6) || want(7) || want(9) || want(10))
    for (const auto& spec : default_trajectory_set(100)) trajs.push_back(make_trajectory(spec));

  if (want(7)) criterion_realtime(trajs.front(), std::min<std::size_t>(4, jobs));
  if (want(9)) criterion_divergence(trajs.front());

  std::vector<TrackerRecipe> med;
  for (OptimizerKind k : kAll) med.push_back(recipe(k, "med"));
  Grid grid;
  if (want(4) || want(5) || want(6) || want(10)) {
    const auto t0 = Clock::now();
    grid = run_grid(trajs, med, jobs);
    const double dt = seconds_since(t0);
    if (want(4)) criterion_ordering(trajs, grid, dt);
  }
  if (want(5) || want(6)) {
    std::vector<TrackerRecipe> extra;
    if (want(5))
      for (const char* noise : {"low", "high"})
        for (OptimizerKind k : kAll) extra.push_back(recipe(k, noise));
    else
      extra.push_back(recipe(OptimizerKind::REPS, "high"));
    if (want(6)) {
      const TrackerRecipe reps_med = recipe(OptimizerKind::REPS, "med");
      for (auto& r : ablate(reps_med, AblationAxis::K))
        if (r.K == 1 || r.K == 10) extra.push_back(r);
      for (auto& r : ablate(reps_med, AblationAxis::Exploration))
        if (r.exploration_scale != reps_med.exploration_scale) extra.push_back(r);
      extra.push_back(ablate(reps_med, AblationAxis::ContactsOff).front());
      extra.push_back(ablate(recipe(OptimizerKind::REPS, "high"), AblationAxis::ContactsOff).front());
    }
    Grid more = run_grid(trajs, extra, jobs);
    more.runs.insert(more.runs.end(), grid.runs.begin(), grid.runs.end());
    more.index();
    if (want(5)) criterion_noise(trajs, more);
    if (want(6)) criterion_ablation(trajs, more);
  }
  if (want(10)) criterion_determinism(trajs, med, grid, out, jobs);

  std::size_t failed = 0;
  for (const auto& v : verdicts) failed += !v.pass;
  std::printf("%zu/%zu criteria passed in %.0fs\n", verdicts.size() - failed, verdicts.size(), seconds_since(start));
  return failed == 0 ? 0 : 1;
}
