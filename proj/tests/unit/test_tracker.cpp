#include <gtest/gtest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "inhand/harness.hpp"

using namespace inhand;

namespace {

const TrajectoryRecord& foam_record() {
  static const TrajectoryRecord rec = make_trajectory({ObjectKind::Foam, ScriptKind::GraspRotate, 100});
  return rec;
}

TrackerConfig config_for(const TrajectoryRecord& rec, OptimizerKind kind, std::size_t k = 12) {
  TrackerConfig c = default_tracker_config(rec.scene, kind);
  c.K = k;
  return c;
}

WorldState initial_state(const Simulator& sim, const TrajectoryRecord& rec) {
  return sim.make_state(rec.initial_joints, rec.initial_pose);
}

void zero_spread(TrackerConfig& c) {
  c.pose_noise = PoseNoise{};
  std::fill(c.theta_prior.sigma.begin(), c.theta_prior.sigma.end(), 0.0);
}

bool lanes_identical(const std::vector<Lane>& lanes) {
  for (const auto& l : lanes)
    if (!oracle::bit_equal(l.state, lanes[0].state) || l.params.to_vector() != lanes[0].params.to_vector())
      return false;
  return true;
}

}  // namespace

TEST(TrackerInit, ZeroSpreadGivesIdenticalLanes) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  TrackerConfig c = config_for(rec, OptimizerKind::REPS);
  zero_spread(c);
  const Tracker t(sim, c, initial_state(sim, rec), rec.initial_pose);
  ASSERT_EQ(t.lanes().size(), c.K);
  EXPECT_TRUE(lanes_identical(t.lanes()));
  EXPECT_EQ(t.best(), 0u);
}

TEST(TrackerInit, MedNoiseTranslationSpread) {
  // Free space first: the sampler alone, no contact projection.
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  TrackerConfig c = config_for(rec, OptimizerKind::REPS, 40);
  const Pose2 aloft(0.0, Vec2(0.0, 0.45));
  WorldState init = initial_state(sim, rec);
  init.object_pose = aloft;
  double in_air = 0, on_table = 0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    c.seed = seed;
    const Tracker free(sim, c, init, aloft);
    const Tracker table(sim, c, initial_state(sim, rec), rec.initial_pose);
    for (std::size_t i = 0; i < c.K; ++i) {
      const Vec2 d = free.lanes()[i].state.object_pose.translation - aloft.translation;
      in_air += d.squaredNorm();
      const double dx = table.lanes()[i].state.object_pose.translation.x() - rec.initial_pose.translation.x();
      on_table += dx * dx;
      ++n;
    }
  }
  const double sd_air = std::sqrt(in_air / (2.0 * n)), sd_table = std::sqrt(on_table / n);
  EXPECT_GE(sd_air, 0.004);
  EXPECT_LE(sd_air, 0.006);
  // On the table, horizontal offsets survive projection.
  EXPECT_GE(sd_table, 0.004);
  EXPECT_LE(sd_table, 0.006);
}

TEST(TrackerInit, InitialLanesAreNotPenetrating) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  TrackerConfig c = config_for(rec, OptimizerKind::REPS, 40);
  c.pose_noise = kNoiseHigh;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    const Tracker t(sim, c, initial_state(sim, rec), rec.initial_pose);
    for (const auto& l : t.lanes()) {
      EXPECT_GE(sim.min_separation(l.state), -Tracker::kUnresolvedPenetration);
      EXPECT_TRUE(c.bounds.contains(l.params));
    }
  }
}

TEST(TrackerInit, OlpUsesOneLane) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  for (std::size_t k : {1u, 5u, 40u}) {
    const Tracker t(sim, config_for(rec, OptimizerKind::OLP, k), initial_state(sim, rec), rec.initial_pose);
    EXPECT_EQ(t.lanes().size(), 1u);
  }
}

TEST(TrackerInit, RejectsBadConfig) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  TrackerConfig c = config_for(rec, OptimizerKind::REPS);
  c.K = 0;
  EXPECT_THROW(Tracker(sim, c, initial_state(sim, rec), rec.initial_pose), std::invalid_argument);
  c = config_for(rec, OptimizerKind::REPS);
  c.T = 0;
  EXPECT_THROW(Tracker(sim, c, initial_state(sim, rec), rec.initial_pose), std::invalid_argument);
  c = config_for(rec, OptimizerKind::PBO, 5);
  c.optimizer.pbo.k_best = 6;
  EXPECT_THROW(Tracker(sim, c, initial_state(sim, rec), rec.initial_pose), std::invalid_argument);
  c = config_for(rec, OptimizerKind::REPS);
  c.weights.w.fill(0.0);
  EXPECT_THROW(Tracker(sim, c, initial_state(sim, rec), rec.initial_pose), std::invalid_argument);
  WorldState bad = initial_state(sim, rec);
  bad.joint_positions.pop_back();
  EXPECT_THROW(Tracker(sim, config_for(rec, OptimizerKind::REPS), bad, rec.initial_pose), std::invalid_argument);
}

TEST(TrackerTick, EstimateBeforeFirstTickIsAnError) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  const Tracker t(sim, config_for(rec, OptimizerKind::EYE), initial_state(sim, rec), rec.initial_pose);
  EXPECT_THROW(t.current_estimate(), std::logic_error);
}

TEST(TrackerTick, ExactTwinLaneIsSelected) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  TrackerConfig c = config_for(rec, OptimizerKind::EYE);
  c.seed = 3;
  Tracker t(sim, c, initial_state(sim, rec), rec.initial_pose);
  const std::size_t twin = 3;
  Lane ghost = t.lanes()[twin];
  std::size_t selected = 0;
  for (std::size_t k = 0; k < 200; ++k) {
    const auto& control = rec.ticks[k].control;
    ghost.state = sim.step(ghost.state, sim.clamp_control(control), ghost.params);
    const TrackOutput out = t.tick(control, sim.observe(ghost.state));
    ASSERT_EQ(out.window_costs[twin], 0.0) << "tick " << k;
    // Lanes the fingers have not touched yet read the same sensors, so an
    // earlier lane can tie at zero.
    ASSERT_LE(out.best, twin) << "tick " << k;
    ASSERT_EQ(out.window_costs[out.best], 0.0);
    if (out.best == twin) {
      ++selected;
      EXPECT_EQ(t.current_estimate().translation, ghost.state.object_pose.translation);
      EXPECT_EQ(t.current_estimate().angle, ghost.state.object_pose.angle);
    }
  }
  EXPECT_GT(selected, 150u);
}

TEST(TrackerTick, IdenticalLanesPickLaneZero) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  TrackerConfig c = config_for(rec, OptimizerKind::EYE);
  zero_spread(c);
  Tracker t(sim, c, initial_state(sim, rec), rec.initial_pose);
  for (std::size_t k = 0; k < 100; ++k) EXPECT_EQ(t.tick(rec.ticks[k].control, rec.ticks[k].observation).best, 0u);
}

TEST(TrackerTick, EyeWithoutSpreadKeepsLanesBitIdentical) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  TrackerConfig c = config_for(rec, OptimizerKind::EYE);
  zero_spread(c);
  Tracker t(sim, c, initial_state(sim, rec), rec.initial_pose);
  for (const auto& tick : rec.ticks) {
    t.tick(tick.control, tick.observation);
    ASSERT_TRUE(lanes_identical(t.lanes())) << "tick " << t.ticks();
  }
}

TEST(TrackerTick, EstimatesComeFromLanesAndBestIsArgmin) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  for (OptimizerKind kind : {OptimizerKind::WRS, OptimizerKind::REPS, OptimizerKind::PBO, OptimizerKind::EYE}) {
    TrackerConfig c = config_for(rec, kind);
    c.T = 7;
    Tracker t(sim, c, initial_state(sim, rec), rec.initial_pose);
    std::size_t updates = 0;
    for (std::size_t k = 0; k < 150; ++k) {
      const std::vector<Lane> before = t.lanes();
      const TrackOutput out = t.tick(rec.ticks[k].control, rec.ticks[k].observation);
      EXPECT_EQ(out.best, best_index(out.window_costs));
      EXPECT_EQ(out.updated, (k + 1) % c.T == 0);
      updates += out.updated;
      // The published pose is the best lane's simulated pose, before any update.
      Lane stepped = before[out.best];
      stepped.state = sim.step(stepped.state, sim.clamp_control(rec.ticks[k].control), stepped.params);
      EXPECT_EQ(out.estimate.translation, stepped.state.object_pose.translation) << to_string(kind);
      EXPECT_EQ(out.estimate.angle, stepped.state.object_pose.angle) << to_string(kind);
      if (!out.updated) {
        EXPECT_EQ(out.estimate.translation, t.lanes()[out.best].state.object_pose.translation);
      }
    }
    EXPECT_EQ(updates, 150u / c.T);
  }
}

TEST(TrackerTick, UpdatesResetAccumulators) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  Tracker t(sim, config_for(rec, OptimizerKind::REPS), initial_state(sim, rec), rec.initial_pose);
  for (std::size_t k = 0; k < 25; ++k) {
    const TrackOutput out = t.tick(rec.ticks[k].control, rec.ticks[k].observation);
    const std::size_t expected = out.updated ? 0 : (k % 10) + 1;
    for (const auto& l : t.lanes()) EXPECT_EQ(l.accumulator.size(), expected);
  }
}

TEST(TrackerTick, DivergentLanesAreRecovered) {
  const auto& rec = foam_record();
  const Simulator sim(rec.scene);
  for (OptimizerKind kind : {OptimizerKind::WRS, OptimizerKind::REPS, OptimizerKind::PBO}) {
    TrackerConfig c = config_for(rec, kind, 12);
    Tracker t(sim, c, initial_state(sim, rec), rec.initial_pose);
    for (std::size_t k = 0; k < 30; ++k) {
      if (k == 13)
        for (std::size_t lane : {0u, 4u, 5u, 7u, 11u}) t.mark_divergent(lane);
      const TrackOutput out = t.tick(rec.ticks[k].control, rec.ticks[k].observation);
      if (k >= 13 && k < 19) {
        EXPECT_TRUE(std::isinf(out.window_costs[4]));
        EXPECT_NE(out.best, 4u);
      }
      if (k == 19) {
        ASSERT_TRUE(out.updated);
        for (const auto& l : t.lanes()) EXPECT_FALSE(l.divergent) << to_string(kind);
      }
    }
  }
}

TEST(TrackerTick, ThreadedSteppingIsDeterministic) {
  const auto& rec = foam_record();
  TrackerConfig c = config_for(rec, OptimizerKind::PBO, 10);
  c.seed = 5;
  const RunResult a = run_tracker(rec, c);
  c.jobs = 3;
  const RunResult b = run_tracker(rec, c);
  EXPECT_EQ(a.add, b.add);
  EXPECT_EQ(a.best_lane, b.best_lane);
}

TEST(TrackerTick, RepsEndsCloserThanEye) {
  // Paired seeds on a 600-tick grasp-rotate record at K=40, Med noise.
  const auto& rec = foam_record();
  const CostWeights w = trajectory_weights(rec);
  TrackerRecipe reps, eye;
  reps.name = "REPS-med";
  eye.name = "EYE-med";
  eye.optimizer = default_optimizer(OptimizerKind::EYE);
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TrackerConfig cr = instantiate(reps, rec.scene, w), ce = instantiate(eye, rec.scene, w);
    cr.seed = ce.seed = seed;
    const double r = run_tracker(rec, cr).summary.final_add, e = run_tracker(rec, ce).summary.final_add;
    wins += r < e;
  }
  EXPECT_GE(wins, 8);
}
