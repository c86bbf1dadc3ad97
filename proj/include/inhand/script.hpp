#pragma once

// Scripted demonstrations: a hidden-parameter ground-truth simulator driven
// by a waypoint controller over fingertip targets, recording controls,
// ground-truth poses and noise-corrupted observations.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "inhand/geometry.hpp"
#include "inhand/physics.hpp"
#include "inhand/rng.hpp"
#include "inhand/scenes.hpp"

namespace inhand {

enum class ScriptKind { GraspRotate, Gait };

inline std::string_view to_string(ScriptKind k) { return k == ScriptKind::GraspRotate ? "grasp-rotate" : "gait"; }

inline ScriptKind script_kind_from_string(std::string_view s) {
  if (s == "grasp-rotate") return ScriptKind::GraspRotate;
  if (s == "gait") return ScriptKind::Gait;
  throw std::invalid_argument("unknown script kind: " + std::string(s));
}

/// Standard deviations of the synthetic sensor noise added to recorded
/// observations, plus the probability of flipping each boolean flag.
struct ObservationNoise {
  double joint = 0.002;             // rad
  double sensor_position = 0.0005;  // m
  double sensor_rotation = 0.002;   // rad
  double force = 0.05;              // N, per component
  double flag_flip = 0.02;

  static ObservationNoise none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }

  void validate() const {
    if (!(joint >= 0 && sensor_position >= 0 && sensor_rotation >= 0 && force >= 0))
      throw std::invalid_argument("ObservationNoise: negative standard deviation");
    if (!(flag_flip >= 0 && flag_flip <= 1)) throw std::invalid_argument("ObservationNoise: flip probability not in [0,1]");
  }

  ObservationNoise scaled(double f) const {
    return {joint * f, sensor_position * f, sensor_rotation * f, force * f, std::min(1.0, flag_flip * f)};
  }
};

/// Corrupts an observation. The number of draws does not depend on the noise
/// levels, so zero noise returns the input unchanged.
inline Observation corrupt_observation(Observation obs, const ObservationNoise& noise, Rng& rng) {
  for (double& q : obs.joint_positions) q += noise.joint * standard_normal(rng);
  for (auto& s : obs.sensors) {
    const double px = standard_normal(rng), py = standard_normal(rng), pr = standard_normal(rng);
    const double fx = standard_normal(rng), fy = standard_normal(rng);
    s.position += noise.sensor_position * Vec2(px, py);
    s.rotation = wrap_angle(s.rotation + noise.sensor_rotation * pr);
    if (s.contact) s.contact_force += noise.force * Vec2(fx, fy);
    auto flip = [&](bool& b) {
      if (uniform01(rng) < noise.flag_flip) b = !b;
    };
    flip(s.contact);
    flip(s.slipping);
    flip(s.rot_slipping);
    flip(s.rotational_slip_direction);
  }
  return obs;
}

/// Hidden ground truth of a demonstration.
struct GroundTruthConfig {
  SimParams theta;
  ObservationNoise noise;
  Pose2 initial_pose;
};

/// Default hidden parameters: friction +30% and mass +20% over the nominal
/// values the tracker's prior is centred on.
inline GroundTruthConfig default_ground_truth(const SceneSpec& scene) {
  GroundTruthConfig gt;
  gt.theta = nominal_params(scene);
  gt.theta.friction *= 1.3;
  gt.theta.object_mass *= 1.2;
  gt.theta.object_inertia *= 1.2;
  gt.initial_pose = resting_pose(scene);
  return gt;
}

struct TickRecord {
  ControlCommand control;
  Observation observation;  // recorded (noisy) observation after the step
  Pose2 gt_pose;            // true object pose after the step
};

inline constexpr int kTrajectorySchemaVersion = 1;

struct TrajectoryRecord {
  int schema_version = kTrajectorySchemaVersion;
  std::string name;
  ScriptKind kind = ScriptKind::GraspRotate;
  SceneSpec scene;
  std::uint64_t scene_hash = 0;
  SimParams gt_theta;              // hidden parameters, kept for evaluation only
  std::vector<double> initial_joints;
  Pose2 initial_pose;              // settled true pose at tick 0
  std::vector<TickRecord> ticks;

  std::size_t joint_count() const { return scene.joint_count(); }
  std::size_t sensor_count() const { return scene.sensor_count(); }
};

class ScriptRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScriptOptions {
  std::size_t length = 600;  // ticks; the script holds still after its last phase
  double jitter = 1.0;       // scales every waypoint perturbation
};

namespace detail {

/// Waypoint controller over the two fingertip targets, stepping the
/// ground-truth simulator and recording every tick.
class ScriptRunner {
 public:
  ScriptRunner(const Simulator& sim, const GroundTruthConfig& gt, Rng& noise_rng, std::size_t length)
      : sim_(sim), gt_(gt), noise_rng_(noise_rng), length_(length) {}

  WorldState state;
  Vec2 left, right;  // current tip targets
  std::vector<TickRecord> ticks;

  std::vector<double> ik(const Vec2& l, const Vec2& r) const {
    const auto& f = sim_.scene().fingers;
    const auto a = two_link_ik(f[0], l, -1.0);
    const auto b = two_link_ik(f[1], r, 1.0);
    return {a[0], a[1], b[0], b[1]};
  }

  void move(const Vec2& l, const Vec2& r, int n) {
    const Vec2 l0 = left, r0 = right;
    for (int i = 1; i <= n; ++i) {
      const double f = static_cast<double>(i) / n;
      step(ik(l0 + (l - l0) * f, r0 + (r - r0) * f));
    }
    left = l;
    right = r;
  }

  void hold_until(std::size_t tick) {
    while (ticks.size() < tick) step(ik(left, right));
  }

  void step(std::vector<double> q) {
    if (ticks.size() >= length_) throw std::logic_error("script: waypoints exceed the trajectory length");
    ControlCommand u = sim_.clamp_control({std::move(q)});
    state = sim_.step(state, u, gt_.theta);
    const Vec2& p = state.object_pose.translation;
    if (!state.all_finite() || std::abs(p.x()) > 0.3 || p.y() < sim_.scene().table_height - 0.02 || p.y() > 0.3)
      throw ScriptRejected("script: object left the workspace at tick " + std::to_string(ticks.size()));
    ticks.push_back({std::move(u), corrupt_observation(sim_.observe(state), gt_.noise, noise_rng_), state.object_pose});
  }

 private:
  const Simulator& sim_;
  const GroundTruthConfig& gt_;
  Rng& noise_rng_;
  std::size_t length_;
};

/// Axis-aligned half extents of the object outline at its current pose.
inline Vec2 half_extents(const SceneSpec& scene, const Pose2& pose) {
  Vec2 lo = Vec2::Constant(1e9), hi = Vec2::Constant(-1e9);
  for (const auto& v : scene.object_polygon) {
    const Vec2 w = rotate(pose.angle, v);
    lo = lo.cwiseMin(w);
    hi = hi.cwiseMax(w);
  }
  return 0.5 * (hi - lo);
}

}  // namespace detail

/// Rolls out a scripted demonstration on the ground-truth simulator.
///
/// grasp-rotate: approach, close low on the object, pivot it about its lower
/// right corner (the cube tumbles onto its side; longer objects are tilted
/// and set back down), re-grasp, lift, rotate in hand, lower, release.
/// gait: as above, but after the re-grasp the object is set on the table and
/// each fingertip in turn breaks contact and is re-placed at a new height
/// before the lift.
inline TrajectoryRecord script_trajectory(ScriptKind kind, const SceneSpec& scene, const GroundTruthConfig& gt, Rng& rng,
                                          const ScriptOptions& options = {}) {
  scene.validate();
  gt.theta.validate(scene.joint_count());
  gt.noise.validate();
  if (scene.fingers.size() != 2) throw std::invalid_argument("script_trajectory: scene must have two fingers");
  const Simulator sim(scene);

  // Waypoint jitter comes from its own stream so noise levels never change
  // the commanded motion.
  Rng noise_rng(derive_seed(rng(), {stream::kObservationNoise}));
  Rng jitter_rng(derive_seed(rng(), {stream::kScript}));
  auto jitter = [&](double s) { return options.jitter * s * (2.0 * uniform01(jitter_rng) - 1.0); };

  const double r = scene.fingers[0].tip_radius;
  const Vec2 ext0 = detail::half_extents(scene, gt.initial_pose);
  const double squeeze = 0.005;

  detail::ScriptRunner run(sim, gt, noise_rng, options.length);
  const Vec2 c0 = gt.initial_pose.translation;
  const double floor_y = c0.y() - ext0.y();
  const double grip_y = floor_y + (1.4 + jitter(0.15)) * ext0.y();
  run.left = Vec2(c0.x() - ext0.x() - r - 0.006, grip_y);
  run.right = Vec2(c0.x() + ext0.x() + r + 0.006, grip_y);
  run.state = sim.settle(sim.make_state(run.ik(run.left, run.right), gt.initial_pose), gt.theta);

  TrajectoryRecord rec;
  rec.kind = kind;
  rec.scene = scene;
  rec.gt_theta = gt.theta;
  rec.initial_joints = run.state.joint_positions;
  rec.initial_pose = run.state.object_pose;

  // Approach and close.
  const Vec2 l_grip(c0.x() - ext0.x() - r + squeeze, grip_y), r_grip(c0.x() + ext0.x() + r - squeeze, grip_y);
  run.move(l_grip - Vec2(0.004 + squeeze, 0), r_grip + Vec2(0.004 + squeeze, 0), 6);
  run.move(l_grip, r_grip, 24);

  // Pivot about the lower right corner. A square tips past its balance
  // point and lands on its side; anything longer is only tilted.
  const Vec2 pivot(c0.x() + ext0.x(), floor_y);
  const double balance = std::atan2(ext0.x(), ext0.y());
  const bool tumble = balance < 0.9;
  const double tilt = tumble ? balance + 0.17 + jitter(0.04) : 0.45 + jitter(0.05);
  const int pivot_steps = 10;
  for (int k = 1; k <= pivot_steps; ++k) {
    const double a = -tilt * k / pivot_steps;
    run.move(pivot + rotate(a, l_grip - pivot), pivot + rotate(a, r_grip - pivot), 10);
  }
  const Vec2 axis = rotate(-tilt, Vec2(1, 0));
  if (tumble) {
    run.move(run.left - axis * (squeeze + 0.003), run.right + axis * (squeeze + 0.003), 8);
    run.move(run.left + Vec2(-0.02, 0.03), run.right + Vec2(0.045, 0.0), 15);
  } else {
    for (int k = pivot_steps - 1; k >= 0; --k) {
      const double a = -tilt * k / pivot_steps;
      run.move(pivot + rotate(a, l_grip - pivot), pivot + rotate(a, r_grip - pivot), 5);
    }
    run.move(run.left - Vec2(squeeze + 0.01, 0), run.right + Vec2(squeeze + 0.01, 0), 10);
  }
  run.move(run.left + Vec2(0, 0.01), run.right + Vec2(0, 0.01), 25);

  // Re-grasp around wherever the object came to rest.
  const Pose2 rest = run.state.object_pose;
  const Vec2 ext = detail::half_extents(scene, rest);
  const Vec2 c = rest.translation;
  const double y1 = c.y() + jitter(0.2) * ext.y();
  const Vec2 l1(c.x() - ext.x() - r + squeeze, y1), r1(c.x() + ext.x() + r - squeeze, y1);
  run.move(l1 - Vec2(0.012, 0), r1 + Vec2(0.012, 0), 25);
  run.move(l1, r1, 30);

  Vec2 lg = l1, rg = r1;
  if (kind == ScriptKind::Gait) {
    // Each finger in turn lets go and re-places at a new height while the
    // table and the other finger keep the object in place.
    const double dy = (0.35 + jitter(0.1)) * ext.y();
    run.move(lg - Vec2(0.015, -0.005), rg, 12);
    lg += Vec2(0, dy);
    run.move(lg - Vec2(0.015, 0), rg, 12);
    run.move(lg, rg, 16);
    run.move(lg, rg + Vec2(0.015, 0.005), 12);
    rg += Vec2(0, dy);
    run.move(lg, rg + Vec2(0.015, 0), 12);
    run.move(lg, rg, 16);
  }

  // Lift, rotate in hand, lower, release.
  const double lift = 0.025 + jitter(0.005);
  lg += Vec2(0, lift);
  rg += Vec2(0, lift);
  run.move(lg, rg, 45);
  if (run.state.object_pose.translation.y() < c.y() + 0.5 * lift)
    throw ScriptRejected("script: grasp failed, object not lifted");
  const Vec2 centre = 0.5 * (lg + rg);
  const double spin = (kind == ScriptKind::Gait ? 0.3 : 0.5) + jitter(0.1);
  const int spin_steps = 6;
  for (int k = 1; k <= spin_steps; ++k) {
    const double a = spin * k / spin_steps;
    run.move(centre + rotate(a, lg - centre), centre + rotate(a, rg - centre), 10);
  }
  const Vec2 ls = run.left, rs = run.right;
  run.move(ls - Vec2(0, lift), rs - Vec2(0, lift), 40);
  const Vec2 out = rotate(spin, Vec2(1, 0)) * (squeeze + 0.008);
  run.move(run.left - out, run.right + out, 12);
  run.move(run.left + Vec2(-0.01, 0.04), run.right + Vec2(0.01, 0.04), 25);
  run.hold_until(options.length);

  rec.ticks = std::move(run.ticks);
  return rec;
}

}  // namespace inhand
