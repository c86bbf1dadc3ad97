#pragma once

// Rigid transforms in the plane and in space, pose sampling, angular
// difference operators and the ADD tracking metric.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "inhand/rng.hpp"

namespace inhand {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

inline Vec2 rotate(double angle, const Vec2& v) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

/// 90 degree counterclockwise rotation; omega x r in the plane is omega * perp(r).
inline Vec2 perp(const Vec2& v) { return {-v.y(), v.x()}; }

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// SE(2) element. The angle is kept wrapped to (-pi, pi].
struct Pose2 {
  static constexpr int kDim = 2;
  using Vector = Vec2;
  using Rotation = double;

  double angle = 0.0;
  Vec2 translation = Vec2::Zero();

  Pose2() = default;
  Pose2(double a, Vec2 t) : angle(wrap_angle(a)), translation(std::move(t)) {}

  static Pose2 identity() { return {}; }

  Vec2 apply(const Vec2& p) const { return rotate(angle, p) + translation; }

  Pose2 compose(const Pose2& other) const {
    return {angle + other.angle, rotate(angle, other.translation) + translation};
  }

  Pose2 inverse() const { return {-angle, -rotate(-angle, translation)}; }

  const double& rotation() const { return angle; }
};

/// SE(3) element with a unit quaternion rotation.
struct Pose3 {
  static constexpr int kDim = 3;
  using Vector = Vec3;
  using Rotation = Eigen::Quaterniond;

  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  Pose3() = default;
  Pose3(const Eigen::Quaterniond& r, Vec3 t) : q(r.normalized()), translation(std::move(t)) {}

  static Pose3 identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return q * p + translation; }

  Pose3 compose(const Pose3& other) const {
    return {q * other.q, q * other.translation + translation};
  }

  Pose3 inverse() const {
    const Eigen::Quaterniond qi = q.conjugate();
    return {qi, -(qi * translation)};
  }

  const Eigen::Quaterniond& rotation() const { return q; }
};

/// so(3) exponential map.
inline Eigen::Quaterniond so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Eigen::Quaterniond r(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return r.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(theta, omega / theta));
}

/// Isotropic pose noise: translation std dev in meters, tangent-space
/// rotation std dev in radians.
struct PoseNoise {
  double sigma_translation = 0.0;
  double sigma_rotation = 0.0;

  void validate() const {
    if (!(sigma_translation >= 0.0) || !(sigma_rotation >= 0.0))
      throw std::invalid_argument("PoseNoise: standard deviations must be nonnegative");
  }
};

// Initial pose noise regimes used by the experiment harness.
inline constexpr PoseNoise kNoiseLow{0.001, 0.01};
inline constexpr PoseNoise kNoiseMed{0.005, 0.1};
inline constexpr PoseNoise kNoiseHigh{0.010, 1.0};

/// Draws translation ~ N(mean, s_t^2 I) and rotation = mean * exp(w),
/// w ~ N(0, s_r^2) in the tangent space.
inline Pose2 sample_pose(const Pose2& mean, const PoseNoise& noise, Rng& rng) {
  noise.validate();
  const double tx = standard_normal(rng) * noise.sigma_translation;
  const double ty = standard_normal(rng) * noise.sigma_translation;
  const double w = standard_normal(rng) * noise.sigma_rotation;
  if (noise.sigma_translation == 0.0 && noise.sigma_rotation == 0.0) return mean;
  return {mean.angle + w, mean.translation + Vec2(tx, ty)};
}

inline Pose3 sample_pose(const Pose3& mean, const PoseNoise& noise, Rng& rng) {
  noise.validate();
  Vec3 t, w;
  for (int i = 0; i < 3; ++i) t[i] = standard_normal(rng) * noise.sigma_translation;
  for (int i = 0; i < 3; ++i) w[i] = standard_normal(rng) * noise.sigma_rotation;
  if (noise.sigma_translation == 0.0 && noise.sigma_rotation == 0.0) return mean;
  return {mean.q * so3_exp(w), mean.translation + t};
}

/// Angle of the axis-angle form of Ra^-1 Rb, in [0, pi].
inline double rotation_angle_between(double ra, double rb) { return std::abs(wrap_angle(rb - ra)); }

inline double rotation_angle_between(const Eigen::Quaterniond& ra, const Eigen::Quaterniond& rb) {
  const Eigen::Quaterniond rel = ra.conjugate() * rb;
  const double v = rel.vec().norm();
  return 2.0 * std::atan2(v, std::abs(rel.w()));
}

inline constexpr double kZeroVectorTolerance = 1e-12;

/// Angle between two vectors in [0, pi]. Either vector shorter than 1e-12
/// yields pi/2.
template <class Derived>
double vector_angle_between(const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Derived>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < kZeroVectorTolerance || nb < kZeroVectorTolerance) return 0.5 * kPi;
  // atan2 of |a x b| and a.b stays exact for parallel vectors, where acos loses
  // half the digits.
  double cr;
  if constexpr (Derived::SizeAtCompileTime == 2)
    cr = std::abs(a.x() * b.y() - a.y() * b.x());
  else
    cr = a.cross(b).norm();
  return std::atan2(cr, a.dot(b));
}

/// Signed magnitude difference |a| - |b|.
template <class Derived>
double magnitude_difference(const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Derived>& b) {
  return a.norm() - b.norm();
}

/// Object-frame model points.
template <int Dim>
struct PointCloud {
  using Point = Eigen::Matrix<double, Dim, 1>;
  std::vector<Point> points;

  void validate() const {
    if (points.empty()) throw std::invalid_argument("PointCloud: empty");
    for (const auto& p : points)
      if (!p.allFinite()) throw std::invalid_argument("PointCloud: non-finite coordinate");
  }
};

using PointCloud2 = PointCloud<2>;
using PointCloud3 = PointCloud<3>;

/// Average distance between corresponding cloud points placed at the
/// ground-truth pose and at the estimated pose (non-symmetric ADD).
template <class Pose>
double add_metric(const PointCloud<Pose::kDim>& cloud, const Pose& pose_gt, const Pose& pose_est) {
  if (cloud.points.empty()) throw std::invalid_argument("add_metric: empty point cloud");
  double sum = 0.0;
  for (const auto& x : cloud.points) sum += (pose_gt.apply(x) - pose_est.apply(x)).norm();
  return sum / static_cast<double>(cloud.points.size());
}

}  // namespace inhand
