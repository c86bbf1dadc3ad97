#pragma once

// Observation mismatch cost, its windowed average, and best-lane selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "inhand/geometry.hpp"
#include "inhand/physics.hpp"

namespace inhand {

inline constexpr std::size_t kCostTermCount = 10;

/// Term order: joint position, sensor position, sensor rotation, contact
/// agreement, force magnitude, force angle, slip agreement, slip angle,
/// rotational-slip agreement, rotational-slip direction.
inline constexpr std::array<std::string_view, kCostTermCount> kCostTermNames = {
    "joint_position", "sensor_position", "sensor_rotation", "contact_agreement", "force_magnitude",
    "force_angle",    "slip_agreement",  "slip_angle",      "rot_slip_agreement", "rot_slip_direction"};

struct CostWeights {
  std::array<double, kCostTermCount> w{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};

  void validate() const {
    bool any = false;
    for (double x : w) {
      if (!(std::isfinite(x) && x >= 0.0)) throw std::invalid_argument("CostWeights: weights must be finite and >= 0");
      any = any || x > 0.0;
    }
    if (!any) throw std::invalid_argument("CostWeights: at least one weight must be positive");
  }
};

/// Unweighted per-term magnitudes, summed over sensors.
using CostTerms = std::array<double, kCostTermCount>;

inline CostTerms cost_terms(const Observation& sim, const Observation& gt) {
  if (sim.joint_positions.size() != gt.joint_positions.size() || sim.sensors.size() != gt.sensors.size())
    throw std::invalid_argument("cost_terms: observation dimensions differ");
  CostTerms t{};
  double dq = 0.0;
  for (std::size_t j = 0; j < sim.joint_positions.size(); ++j) {
    const double d = sim.joint_positions[j] - gt.joint_positions[j];
    dq += d * d;
  }
  t[0] = std::sqrt(dq);
  for (std::size_t l = 0; l < sim.sensors.size(); ++l) {
    const SensorObservation& a = sim.sensors[l];
    const SensorObservation& b = gt.sensors[l];
    t[1] += (a.position - b.position).norm();
    t[2] += std::abs(rotation_angle_between(a.rotation, b.rotation));

    if (a.contact != b.contact) {
      t[3] += 1.0;
    } else if (a.contact_force.norm() >= kZeroVectorTolerance && b.contact_force.norm() >= kZeroVectorTolerance) {
      // Force terms need a direction on both sides.
      t[4] += std::abs(magnitude_difference(a.contact_force, b.contact_force));
      t[5] += std::abs(vector_angle_between(a.contact_force, b.contact_force));
    }

    if (a.slipping != b.slipping) {
      t[6] += 1.0;
    } else if (a.slip_direction.norm() >= kZeroVectorTolerance && b.slip_direction.norm() >= kZeroVectorTolerance) {
      t[7] += std::abs(vector_angle_between(a.slip_direction, b.slip_direction));
    }

    if (a.rot_slipping != b.rot_slipping) {
      t[8] += 1.0;
    } else {
      t[9] += std::abs(static_cast<double>(a.rotational_slip_direction) - static_cast<double>(b.rotational_slip_direction));
    }
  }
  return t;
}

inline double weighted_cost(const CostTerms& terms, const CostWeights& weights) {
  double c = 0.0;
  for (std::size_t k = 0; k < kCostTermCount; ++k) c += weights.w[k] * terms[k];
  return c;
}

/// Weighted sum of the mismatch terms between a simulated and a ground-truth
/// observation. Force terms count only when both contact flags agree and both
/// forces are nonzero; slip angle only when slip flags agree and both
/// directions are nonzero; rotational direction only when flags agree.
inline double instantaneous_cost(const Observation& sim, const Observation& gt, const CostWeights& weights) {
  return weighted_cost(cost_terms(sim, gt), weights);
}

/// Sliding window of the last T instantaneous costs.
class CostAccumulator {
 public:
  explicit CostAccumulator(std::size_t window = 1) : window_(window) {
    if (window == 0) throw std::invalid_argument("CostAccumulator: window must be >= 1");
  }

  void push(double cost) {
    if (!std::isfinite(cost) || cost < 0.0) throw std::invalid_argument("CostAccumulator: cost must be finite and >= 0");
    buffer_.push_back(cost);
    if (buffer_.size() > window_) buffer_.pop_front();
    sum_ = 0.0;
    for (double c : buffer_) sum_ += c;
  }

  void reset() {
    buffer_.clear();
    sum_ = 0.0;
  }

  /// Mean over the buffered entries (divides by the buffered count while the
  /// window is still filling). Zero when empty.
  double average() const { return buffer_.empty() ? 0.0 : sum_ / static_cast<double>(buffer_.size()); }

  std::size_t size() const { return buffer_.size(); }
  std::size_t window() const { return window_; }
  const std::deque<double>& history() const { return buffer_; }

 private:
  std::size_t window_;
  std::deque<double> buffer_;
  double sum_ = 0.0;
};

inline CostAccumulator accumulate(CostAccumulator acc, double cost) {
  acc.push(cost);
  return acc;
}

/// Index of the minimum; ties go to the lowest index.
inline std::size_t best_index(std::span<const double> averages) {
  if (averages.empty()) throw std::invalid_argument("best_index: empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < averages.size(); ++i)
    if (averages[i] < averages[best]) best = i;
  return best;
}

/// Weights that normalise each term's mean magnitude to one:
/// w_k = 1 / mean(|samples_k|), clamped to [1e-3, 1e3]; all-zero terms get 1.
/// With active_only the mean runs over the nonzero samples of each term, so a
/// term that is gated off most of the time is scaled by its size when it
/// fires rather than inflated by its rarity.
inline CostWeights calibrate_weights(std::span<const CostTerms> samples, bool active_only = false) {
  if (samples.empty()) throw std::invalid_argument("calibrate_weights: no samples");
  CostWeights out;
  for (std::size_t k = 0; k < kCostTermCount; ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
      sum += std::abs(s[k]);
      n += !active_only || s[k] != 0.0;
    }
    const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
    out.w[k] = mean > 0.0 ? std::clamp(1.0 / mean, 1e-3, 1e3) : 1.0;
  }
  return out;
}

}  // namespace inhand
