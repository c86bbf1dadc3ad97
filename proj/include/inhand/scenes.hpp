#pragma once

// Shipped scenes: a two-finger, two-joint-per-finger gripper hanging from a
// fixed palm above a table, and three object outlines.

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "inhand/physics.hpp"

namespace inhand {

enum class ObjectKind { Spam, Foam, Banana };

inline std::string_view to_string(ObjectKind k) {
  switch (k) {
    case ObjectKind::Spam: return "spam";
    case ObjectKind::Foam: return "foam";
    case ObjectKind::Banana: return "banana";
  }
  return "?";
}

inline ObjectKind object_kind_from_string(std::string_view s) {
  if (s == "spam") return ObjectKind::Spam;
  if (s == "foam") return ObjectKind::Foam;
  if (s == "banana") return ObjectKind::Banana;
  throw std::invalid_argument("unknown object kind: " + std::string(s));
}

/// Width and height of the rectangular outline.
inline Vec2 object_extent(ObjectKind k) {
  switch (k) {
    case ObjectKind::Spam: return {0.090, 0.055};
    case ObjectKind::Foam: return {0.060, 0.060};
    case ObjectKind::Banana: return {0.160, 0.035};
  }
  return {0.05, 0.05};
}

inline std::vector<Vec2> box_polygon(double w, double h) {
  return {{-0.5 * w, -0.5 * h}, {0.5 * w, -0.5 * h}, {0.5 * w, 0.5 * h}, {-0.5 * w, 0.5 * h}};
}

/// Regular grid of model points covering a rectangle, spacing ~5 mm.
inline PointCloud2 box_cloud(double w, double h, double spacing = 0.005) {
  PointCloud2 c;
  const int nx = std::max(2, static_cast<int>(std::round(w / spacing)) + 1);
  const int ny = std::max(2, static_cast<int>(std::round(h / spacing)) + 1);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      c.points.emplace_back(-0.5 * w + w * i / (nx - 1), -0.5 * h + h * j / (ny - 1));
  return c;
}

/// Palm-fixed gripper: fingers hang downward from (+-0.06, 0.16); links 0.08
/// and 0.07 m, fingertip disc radius 0.01 m. At zero joint angles each tip
/// centre sits straight below its base at y = 0.01 (reference configuration).
inline std::vector<FingerSpec> default_fingers() {
  std::vector<FingerSpec> fingers(2);
  for (int side = 0; side < 2; ++side) {
    auto& f = fingers[side];
    f.base = Vec2(side == 0 ? -0.06 : 0.06, 0.16);
    f.base_angle = -0.5 * kPi;
    f.link_lengths = {0.08, 0.07};
    f.joint_lower = {-2.4, -2.6};
    f.joint_upper = {2.4, 2.6};
    f.joint_inertia = {2e-4, 1e-4};
    f.tip_radius = 0.01;
  }
  return fingers;
}

inline SceneSpec default_scene(ObjectKind kind = ObjectKind::Foam) {
  SceneSpec s;
  s.fingers = default_fingers();
  const Vec2 e = object_extent(kind);
  s.object_polygon = box_polygon(e.x(), e.y());
  s.object_cloud = box_cloud(e.x(), e.y());
  return s;
}

/// Nominal physics parameters for an object: uniform density polygon
/// inertia, mass from an areal density of 30 kg/m^2.
inline SimParams nominal_params(const SceneSpec& scene) {
  SimParams p;
  p.object_mass = 30.0 * polygon_area(scene.object_polygon);
  p.object_inertia = polygon_inertia(scene.object_polygon, p.object_mass);
  p.friction = 0.8;
  p.restitution = 0.0;
  p.contact_stiffness = 2e5;
  for (const auto& f : scene.fingers) {
    for (std::size_t j = 0; j < f.joint_count(); ++j) {
      p.pd_stiffness.push_back(j == 0 ? 4.0 : 2.0);
      p.pd_damping.push_back(j == 0 ? 0.06 : 0.03);
    }
  }
  return p;
}

/// Object resting flat on the table, centred under the palm.
inline Pose2 resting_pose(const SceneSpec& scene, double x = 0.0) {
  double min_y = 0.0;
  for (const auto& v : scene.object_polygon) min_y = std::min(min_y, v.y());
  return Pose2(0.0, Vec2(x, scene.table_height - min_y));
}

/// Closed-form two-link inverse kinematics for a finger tip target. Picks
/// the elbow branch given by elbow_sign. Returns joint angles relative to the
/// finger's zero configuration.
inline std::array<double, 2> two_link_ik(const FingerSpec& f, const Vec2& target, double elbow_sign) {
  if (f.joint_count() != 2) throw std::invalid_argument("two_link_ik: finger must have two joints");
  const double l1 = f.link_lengths[0], l2 = f.link_lengths[1];
  const Vec2 d = target - f.base;
  double r = d.norm();
  r = std::clamp(r, std::abs(l1 - l2) + 1e-9, l1 + l2 - 1e-9);
  const double c2 = std::clamp((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0);
  const double q2 = elbow_sign * std::acos(c2);
  const double phi = std::atan2(d.y(), d.x());
  const double psi = std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2));
  const double a1 = phi - psi;
  return {wrap_angle(a1 - f.base_angle), q2};
}

}  // namespace inhand
