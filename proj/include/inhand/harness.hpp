#pragma once

// Offline evaluation: default tracker configuration for a scene, cost-weight
// calibration, replay of a recorded trajectory through a tracker with
// per-tick ADD, experiment grids and ablation variants.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "inhand/cost.hpp"
#include "inhand/geometry.hpp"
#include "inhand/optimizers.hpp"
#include "inhand/physics.hpp"
#include "inhand/rng.hpp"
#include "inhand/scenes.hpp"
#include "inhand/script.hpp"
#include "inhand/tracker.hpp"

namespace inhand {

/// Prior over theta centred on the nominal parameters. Object mass, inertia
/// and friction are uncertain; contact stiffness, restitution and the PD
/// gains are treated as known.
inline ThetaPrior default_theta_prior(const SceneSpec& scene) {
  ThetaPrior prior;
  prior.mean = nominal_params(scene);
  prior.sigma.assign(prior.mean.dimension(), 0.0);
  prior.sigma[0] = 0.25 * prior.mean.object_mass;
  prior.sigma[1] = 0.25 * prior.mean.object_inertia;
  prior.sigma[2] = 0.25 * prior.mean.friction;
  return prior;
}

/// The "med" exploration level.
inline ExplorationConfig default_exploration(const SceneSpec& scene) {
  const SimParams p = nominal_params(scene);
  ExplorationConfig e;
  e.sigma_theta.assign(p.dimension(), 0.0);
  e.sigma_theta[0] = 0.03 * p.object_mass;
  e.sigma_theta[1] = 0.03 * p.object_inertia;
  e.sigma_theta[2] = 0.03 * p.friction;
  e.sigma_force = 0.03;
  e.sigma_torque = 3e-4;
  return e;
}

inline OptimizerConfig default_optimizer(OptimizerKind kind) {
  OptimizerConfig o;
  o.kind = kind;
  o.wrs.lambda = 1.0;
  o.reps.epsilon = 1.0;
  o.pbo.k_best = 10;
  return o;
}

inline TrackerConfig default_tracker_config(const SceneSpec& scene, OptimizerKind kind = OptimizerKind::REPS) {
  TrackerConfig c;
  c.K = 40;
  c.T = 10;
  c.theta_prior = default_theta_prior(scene);
  c.bounds = ParamBounds::around(nominal_params(scene), 4.0);
  c.pose_noise = kNoiseMed;
  c.exploration = default_exploration(scene);
  c.optimizer = default_optimizer(kind);
  return c;
}

/// Replays a record's control stream through lanes sampled from the
/// tracker's initial distribution (no optimizer updates) and normalises each
/// cost term by its mean magnitude.
inline CostWeights calibrate_cost_weights(const TrajectoryRecord& record, const TrackerConfig& config,
                                          std::size_t lanes = 8, std::size_t max_ticks = 300,
                                          bool active_only = true) {
  const Simulator sim(record.scene);
  TrackerConfig c = config;
  c.K = lanes;
  c.optimizer.kind = OptimizerKind::EYE;
  WorldState init = sim.make_state(record.initial_joints, record.initial_pose);
  const Tracker tracker(sim, c, init, record.initial_pose);
  std::vector<CostTerms> samples;
  for (Lane lane : tracker.lanes()) {
    const std::size_t n = std::min(max_ticks, record.ticks.size());
    for (std::size_t t = 0; t < n; ++t) {
      lane.state = sim.step(lane.state, sim.clamp_control(record.ticks[t].control), lane.params);
      samples.push_back(cost_terms(sim.observe(lane.state), record.ticks[t].observation));
    }
  }
  return calibrate_weights(samples, active_only);
}

struct RunSummary {
  double mean_add = 0.0;
  double std_add = 0.0;
  double max_add = 0.0;
  double final_add = 0.0;
};

inline RunSummary summarize(const std::vector<double>& add) {
  RunSummary s;
  if (add.empty()) return s;
  const double n = static_cast<double>(add.size());
  s.mean_add = std::accumulate(add.begin(), add.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : add) ss += (a - s.mean_add) * (a - s.mean_add);
  s.std_add = std::sqrt(ss / n);
  s.max_add = *std::max_element(add.begin(), add.end());
  s.final_add = add.back();
  return s;
}

struct UpdateRecord {
  std::size_t tick = 0;
  double eta = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  std::vector<std::size_t> sources;
};

struct RunResult {
  std::string trajectory;
  std::string config;
  std::uint64_t seed = 0;
  std::vector<double> add;             // per tick
  std::vector<std::size_t> best_lane;  // per tick
  std::vector<UpdateRecord> updates;
  std::size_t divergent_events = 0;    // lane-ticks spent divergent
  double wall_seconds = 0.0;
  std::string error;                   // empty on success
  RunSummary summary;
};

/// Hook invoked after every tick, e.g. to inject faults.
using TickHook = std::function<void(Tracker&, std::size_t tick)>;

/// Runs one tracker offline over a record and scores every tick's estimate
/// against the recorded ground-truth pose.
inline RunResult run_tracker(const TrajectoryRecord& record, const TrackerConfig& config, const TickHook& hook = {}) {
  if (record.schema_version != kTrajectorySchemaVersion)
    throw std::invalid_argument("run_tracker: trajectory schema version mismatch");
  const Simulator sim(record.scene);
  const WorldState init = sim.make_state(record.initial_joints, record.initial_pose);
  Tracker tracker(sim, config, init, record.initial_pose);
  RunResult r;
  r.trajectory = record.name;
  r.seed = config.seed;
  r.add.reserve(record.ticks.size());
  for (std::size_t t = 0; t < record.ticks.size(); ++t) {
    const TickRecord& tick = record.ticks[t];
    TrackOutput out = tracker.tick(tick.control, tick.observation);
    r.add.push_back(add_metric(record.scene.object_cloud, tick.gt_pose, out.estimate));
    r.best_lane.push_back(out.best);
    r.wall_seconds += out.wall_seconds;
    for (double c : out.window_costs)
      if (std::isinf(c)) ++r.divergent_events;
    if (out.updated && !out.update.sources.empty() && config.optimizer.kind != OptimizerKind::EYE &&
        config.optimizer.kind != OptimizerKind::OLP)
      r.updates.push_back({t, out.update.eta, out.update.entropy, out.update.kl, out.update.sources});
    if (hook) hook(tracker, t);
  }
  r.summary = summarize(r.add);
  return r;
}

inline PoseNoise pose_noise_from_label(std::string_view label) {
  if (label == "none") return {};
  if (label == "low") return kNoiseLow;
  if (label == "med") return kNoiseMed;
  if (label == "high") return kNoiseHigh;
  throw std::invalid_argument("unknown noise level: " + std::string(label));
}

/// Scene-independent description of one tracker configuration in a grid.
/// instantiate() turns it into a TrackerConfig for a given trajectory.
struct TrackerRecipe {
  std::string name;
  OptimizerConfig optimizer = default_optimizer(OptimizerKind::REPS);
  std::string noise = "med";
  std::size_t K = 40;
  std::size_t T = 10;
  double exploration_scale = 1.0;
  bool contacts = true;  // cost terms 4..6
  bool slip = true;      // cost terms 7..10

  void validate() const {
    if (name.empty()) throw std::invalid_argument("TrackerRecipe: empty name");
    pose_noise_from_label(noise);
    if (K < 1 || T < 1) throw std::invalid_argument("TrackerRecipe: K and T must be >= 1");
    if (!(exploration_scale >= 0.0)) throw std::invalid_argument("TrackerRecipe: negative exploration scale");
  }
};

inline TrackerConfig instantiate(const TrackerRecipe& recipe, const SceneSpec& scene, const CostWeights& weights) {
  recipe.validate();
  TrackerConfig c = default_tracker_config(scene, recipe.optimizer.kind);
  c.optimizer = recipe.optimizer;
  c.pose_noise = pose_noise_from_label(recipe.noise);
  c.K = recipe.K;
  c.T = recipe.T;
  if (c.optimizer.kind == OptimizerKind::PBO) c.optimizer.pbo.k_best = std::min(c.optimizer.pbo.k_best, c.K);
  c.exploration = c.exploration.scaled(recipe.exploration_scale);
  c.weights = weights;
  if (!recipe.contacts)
    for (std::size_t k : {3, 4, 5}) c.weights.w[k] = 0.0;
  if (!recipe.slip)
    for (std::size_t k : {6, 7, 8, 9}) c.weights.w[k] = 0.0;
  return c;
}

struct ExperimentSpec {
  std::vector<TrajectoryRecord> trajectories;
  std::vector<TrackerRecipe> configs;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;

  void validate() const {
    if (trajectories.empty()) throw std::invalid_argument("ExperimentSpec: no trajectories");
    if (configs.empty()) throw std::invalid_argument("ExperimentSpec: no configs");
    if (seeds.empty()) throw std::invalid_argument("ExperimentSpec: at least one repetition required");
    std::vector<std::uint64_t> s = seeds;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw std::invalid_argument("ExperimentSpec: seeds must be distinct");
    for (const auto& t : trajectories)
      if (t.schema_version != kTrajectorySchemaVersion)
        throw std::invalid_argument("ExperimentSpec: trajectory schema version mismatch");
    for (const auto& c : configs) c.validate();
    if (jobs < 1) throw std::invalid_argument("ExperimentSpec: jobs must be >= 1");
  }
};

/// Seed of one run: the same (seed, trajectory) pair gives every config the
/// same initial lanes, so configs are compared on paired draws.
inline std::uint64_t run_seed(std::uint64_t seed, std::size_t trajectory_index) {
  return derive_seed(seed, {static_cast<std::uint64_t>(trajectory_index)});
}

/// Cost weights for a trajectory, calibrated once against the med-noise
/// initial distribution of the default tracker.
inline CostWeights trajectory_weights(const TrajectoryRecord& record) {
  TrackerConfig c = default_tracker_config(record.scene, OptimizerKind::EYE);
  return calibrate_cost_weights(record, c);
}

/// Runs every (trajectory, config, seed) cell. Results come back in
/// trajectory-major, then config, then seed order regardless of scheduling.
/// A cell that throws is recorded with its error message and infinite ADD.
inline std::vector<RunResult> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  // A trajectory that cannot be calibrated fails each of its cells rather
  // than the whole experiment.
  std::vector<CostWeights> weights(spec.trajectories.size());
  std::vector<std::string> calibration_error(spec.trajectories.size());
  for (std::size_t t = 0; t < spec.trajectories.size(); ++t) {
    try {
      weights[t] = trajectory_weights(spec.trajectories[t]);
    } catch (const std::exception& e) {
      calibration_error[t] = std::string("calibration: ") + e.what();
    }
  }

  struct Cell {
    std::size_t traj, config, seed;
  };
  std::vector<Cell> cells;
  for (std::size_t t = 0; t < spec.trajectories.size(); ++t)
    for (std::size_t c = 0; c < spec.configs.size(); ++c)
      for (std::size_t s = 0; s < spec.seeds.size(); ++s) cells.push_back({t, c, s});
  std::vector<RunResult> results(cells.size());

  auto run_cell = [&](std::size_t i) {
    const Cell& cell = cells[i];
    const auto& traj = spec.trajectories[cell.traj];
    RunResult r;
    try {
      if (!calibration_error[cell.traj].empty()) throw std::runtime_error(calibration_error[cell.traj]);
      TrackerConfig cfg = instantiate(spec.configs[cell.config], traj.scene, weights[cell.traj]);
      cfg.seed = run_seed(spec.seeds[cell.seed], cell.traj);
      r = run_tracker(traj, cfg);
    } catch (const std::exception& e) {
      r = RunResult{};
      r.error = e.what();
      const double inf = std::numeric_limits<double>::infinity();
      r.summary = {inf, inf, inf, inf};
    }
    r.trajectory = traj.name;
    r.config = spec.configs[cell.config].name;
    r.seed = spec.seeds[cell.seed];
    results[i] = std::move(r);
  };

  const std::size_t workers = std::min(spec.jobs, cells.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
      });
  }
  return results;
}

enum class AblationAxis { Exploration, K, ContactsOff, SlipOff };

inline std::string_view to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::Exploration: return "exploration";
    case AblationAxis::K: return "K";
    case AblationAxis::ContactsOff: return "contacts_off";
    case AblationAxis::SlipOff: return "slip_off";
  }
  return "?";
}

inline AblationAxis ablation_axis_from_string(std::string_view s) {
  if (s == "exploration") return AblationAxis::Exploration;
  if (s == "K" || s == "k") return AblationAxis::K;
  if (s == "contacts_off") return AblationAxis::ContactsOff;
  if (s == "slip_off") return AblationAxis::SlipOff;
  throw std::invalid_argument("unknown ablation axis: " + std::string(s));
}

/// Variants of a recipe along one ablation axis: exploration scaled by
/// {0.1, 1, 10}; K in {1, 10, 40, 100}; contact terms off; slip terms off.
inline std::vector<TrackerRecipe> ablate(const TrackerRecipe& base, AblationAxis axis) {
  std::vector<TrackerRecipe> out;
  switch (axis) {
    case AblationAxis::Exploration: {
      const std::pair<const char*, double> levels[] = {{"low", 0.1}, {"med", 1.0}, {"high", 10.0}};
      for (const auto& [label, f] : levels) {
        TrackerRecipe r = base;
        r.name = base.name + "/explore-" + label;
        r.exploration_scale = base.exploration_scale * f;
        out.push_back(std::move(r));
      }
      break;
    }
    case AblationAxis::K:
      for (std::size_t k : {1, 10, 40, 100}) {
        TrackerRecipe r = base;
        r.name = base.name + "/K-" + std::to_string(k);
        r.K = k;
        out.push_back(std::move(r));
      }
      break;
    case AblationAxis::ContactsOff: {
      TrackerRecipe r = base;
      r.name = base.name + "/contacts-off";
      r.contacts = false;
      out.push_back(std::move(r));
      break;
    }
    case AblationAxis::SlipOff: {
      TrackerRecipe r = base;
      r.name = base.name + "/slip-off";
      r.slip = false;
      out.push_back(std::move(r));
      break;
    }
  }
  return out;
}

/// The shipped evaluation set: every object with both script kinds.
struct TrajectorySpec {
  ObjectKind object = ObjectKind::Foam;
  ScriptKind kind = ScriptKind::GraspRotate;
  std::uint64_t seed = 0;
  double observation_noise_scale = 1.0;
};

inline std::string trajectory_name(const TrajectorySpec& s) {
  return std::string(to_string(s.object)) + "-" + std::string(to_string(s.kind)) + "-s" + std::to_string(s.seed);
}

/// Scripts a trajectory, retrying with derived seeds if the script drops the
/// object.
inline TrajectoryRecord make_trajectory(const TrajectorySpec& spec, int max_attempts = 5) {
  const SceneSpec scene = default_scene(spec.object);
  GroundTruthConfig gt = default_ground_truth(scene);
  gt.noise = gt.noise.scaled(spec.observation_noise_scale);
  std::string last_error;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng = make_stream(spec.seed, {stream::kGroundTruth, static_cast<std::uint64_t>(attempt)});
    try {
      TrajectoryRecord rec = script_trajectory(spec.kind, scene, gt, rng);
      rec.name = trajectory_name(spec);
      return rec;
    } catch (const ScriptRejected& e) {
      last_error = e.what();
    }
  }
  throw std::runtime_error("make_trajectory: every attempt rejected: " + last_error);
}

inline std::vector<TrajectorySpec> default_trajectory_set(std::uint64_t seed) {
  std::vector<TrajectorySpec> out;
  for (ObjectKind o : {ObjectKind::Foam, ObjectKind::Spam, ObjectKind::Banana})
    for (ScriptKind k : {ScriptKind::GraspRotate, ScriptKind::Gait}) out.push_back({o, k, seed + out.size(), 1.0});
  return out;
}

}  // namespace inhand
