#pragma once

// Ensemble pose tracker: K simulation lanes driven by the shared control
// stream, scored against the measured observation every tick, with an
// optimizer update at the end of every window of T ticks.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

#include "inhand/cost.hpp"
#include "inhand/geometry.hpp"
#include "inhand/optimizers.hpp"
#include "inhand/physics.hpp"
#include "inhand/rng.hpp"

namespace inhand {

/// Independent normal prior over the flattened parameter vector.
struct ThetaPrior {
  SimParams mean;
  std::vector<double> sigma;
};

struct TrackerConfig {
  std::size_t K = 40;
  std::size_t T = 10;
  ThetaPrior theta_prior;
  ParamBounds bounds;
  PoseNoise pose_noise = kNoiseMed;
  ExplorationConfig exploration;
  OptimizerConfig optimizer;
  CostWeights weights;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;  // worker threads for lane stepping

  std::size_t lane_count() const { return optimizer.kind == OptimizerKind::OLP ? 1 : K; }

  void validate() const {
    if (K < 1) throw std::invalid_argument("TrackerConfig: K must be >= 1");
    if (T < 1) throw std::invalid_argument("TrackerConfig: T must be >= 1");
    if (jobs < 1) throw std::invalid_argument("TrackerConfig: jobs must be >= 1");
    const std::size_t dim = theta_prior.mean.dimension();
    if (theta_prior.sigma.size() != dim) throw std::invalid_argument("TrackerConfig: prior sigma dimension mismatch");
    for (double s : theta_prior.sigma)
      if (!(s >= 0.0)) throw std::invalid_argument("TrackerConfig: negative prior sigma");
    if (bounds.lower.size() != dim || bounds.upper.size() != dim)
      throw std::invalid_argument("TrackerConfig: bounds dimension mismatch");
    pose_noise.validate();
    exploration.validate(dim);
    weights.validate();
    if (optimizer.kind == OptimizerKind::PBO && (optimizer.pbo.k_best < 1 || optimizer.pbo.k_best > K))
      throw std::invalid_argument("TrackerConfig: k_best out of range");
    if (optimizer.kind == OptimizerKind::WRS && !(optimizer.wrs.lambda > 0.0))
      throw std::invalid_argument("TrackerConfig: lambda must be positive");
    if (optimizer.kind == OptimizerKind::REPS && !(optimizer.reps.epsilon > 0.0))
      throw std::invalid_argument("TrackerConfig: epsilon must be positive");
  }
};

struct TrackOutput {
  std::size_t tick = 0;
  std::size_t best = 0;
  Pose2 estimate;
  std::vector<double> window_costs;  // +inf for divergent lanes
  double wall_seconds = 0.0;
  bool updated = false;  // an optimizer update ran after this tick
  UpdateDiagnostics update;
};

class Tracker {
 public:
  static constexpr int kMaxInitAttempts = 20;
  // Penetration still present after the settle pass that marks a sample as
  // unresolvable.
  static constexpr double kUnresolvedPenetration = 1e-3;

  Tracker(const Simulator& sim, TrackerConfig config, const WorldState& initial_state, const Pose2& initial_estimate)
      : sim_(&sim), config_(std::move(config)) {
    config_.validate();
    config_.theta_prior.mean.validate(sim.scene().joint_count());
    if (initial_state.joint_positions.size() != sim.scene().joint_count() ||
        initial_state.sensors.size() != sim.scene().sensor_count())
      throw std::invalid_argument("Tracker: initial state does not match the scene");

    const std::size_t k = config_.lane_count();
    lanes_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      bool ok = false;
      for (int attempt = 0; attempt < kMaxInitAttempts && !ok; ++attempt) {
        Rng rng = make_stream(config_.seed, {stream::kInit, i, static_cast<std::uint64_t>(attempt)});
        WorldState s = initial_state;
        s.object_pose = sample_pose(initial_estimate, config_.pose_noise, rng);
        std::vector<double> theta = config_.theta_prior.mean.to_vector();
        for (std::size_t d = 0; d < theta.size(); ++d) theta[d] += config_.theta_prior.sigma[d] * standard_normal(rng);
        const SimParams params = config_.bounds.clamp(SimParams::from_vector(theta));
        s = sim.settle(s, params);
        if (!s.all_finite() || sim.min_separation(s) < -kUnresolvedPenetration) continue;
        lanes_[i].state = std::move(s);
        lanes_[i].params = params;
        lanes_[i].accumulator = CostAccumulator(config_.T);
        lanes_[i].origin = i;
        ok = true;
      }
      if (!ok) throw std::runtime_error("Tracker: could not resolve initial penetration for a lane");
    }
  }

  const TrackerConfig& config() const { return config_; }
  const std::vector<Lane>& lanes() const { return lanes_; }
  std::size_t ticks() const { return ticks_; }
  std::size_t best() const { return best_; }

  /// Flags a lane as divergent: its window cost becomes +inf until the next
  /// optimizer update replaces it.
  void mark_divergent(std::size_t lane) { lanes_.at(lane).divergent = true; }

  TrackOutput tick(const ControlCommand& control, const Observation& gt_obs) {
    const auto start = std::chrono::steady_clock::now();
    const ControlCommand u = sim_->clamp_control(control);
    const std::size_t k = lanes_.size();

    auto advance = [&](std::size_t i) {
      Lane& lane = lanes_[i];
      if (lane.divergent) return;
      try {
        WorldState next = sim_->step(lane.state, u, lane.params);
        if (!next.all_finite()) throw std::domain_error("non-finite state");
        const double c = instantaneous_cost(sim_->observe(next), gt_obs, config_.weights);
        lane.accumulator.push(c);
        lane.state = std::move(next);
      } catch (const std::exception&) {
        lane.divergent = true;
      }
    };
    const std::size_t workers = std::min(config_.jobs, k);
    if (workers <= 1) {
      for (std::size_t i = 0; i < k; ++i) advance(i);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < k; i += workers) advance(i);
        });
    }

    TrackOutput out;
    out.tick = ticks_;
    out.window_costs.resize(k);
    for (std::size_t i = 0; i < k; ++i)
      out.window_costs[i] =
          lanes_[i].divergent ? std::numeric_limits<double>::infinity() : lanes_[i].accumulator.average();
    best_ = best_index(out.window_costs);
    out.best = best_;
    out.estimate = lanes_[best_].state.object_pose;
    estimate_ = out.estimate;
    ++ticks_;

    if (ticks_ % config_.T == 0) {
      out.update = optimizer_update(lanes_, out.window_costs, config_.optimizer, config_.exploration, config_.bounds,
                                    config_.seed, updates_);
      out.updated = true;
      ++updates_;
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }

  /// Object pose of the best lane at the last tick, as published before any
  /// optimizer update that followed it.
  Pose2 current_estimate() const {
    if (ticks_ == 0) throw std::logic_error("current_estimate: no tick has run yet");
    return estimate_;
  }

 private:
  const Simulator* sim_;
  TrackerConfig config_;
  std::vector<Lane> lanes_;
  std::size_t best_ = 0;
  Pose2 estimate_;
  std::size_t ticks_ = 0;
  std::uint64_t updates_ = 0;
};

}  // namespace inhand
