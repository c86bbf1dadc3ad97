#pragma once

// Planar forward dynamics model: a palm-fixed articulated gripper with
// position-controlled revolute joints and fingertip discs, one free convex
// polygon object, and a static table half-plane. Contacts are resolved with
// a warm-started sequential impulse solver (Coulomb friction, soft normal
// constraints derived from the contact stiffness) followed by a
// nonlinear position projection pass.
//
// Integration scheme, per substep of length h:
//   v  <- v + h (g + F_ext / m)                (object)
//   qd <- (I qd + h kp (u - q)) / (I + h kd + h^2 kp)   (joints, implicit PD)
//   contact impulses applied to v, qd
//   x  <- x + h v,  q <- q + h qd               (semi-implicit Euler)
// so a free body under gravity g has velocity v0 + n h g after n substeps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "inhand/geometry.hpp"

namespace inhand {

inline constexpr std::size_t kMaxJoints = 8;
inline constexpr std::size_t kMaxDof = 3 + kMaxJoints;

struct FingerSpec {
  Vec2 base = Vec2::Zero();  // location of the first joint
  double base_angle = 0.0;   // direction of the first link at zero joint angle
  std::vector<double> link_lengths;
  std::vector<double> joint_lower;
  std::vector<double> joint_upper;
  std::vector<double> joint_inertia;  // kg m^2, decoupled joint-space inertia
  double tip_radius = 0.01;           // contact sensor disc at the end of the last link

  std::size_t joint_count() const { return link_lengths.size(); }
};

struct SensorThresholds {
  double contact_force = 0.05;    // N
  double slip_speed = 0.002;      // m/s
  double rot_slip_speed = 0.02;   // rad/s
};

struct SolverSettings {
  int velocity_iterations = 20;
  int position_iterations = 10;
  double damping_ratio = 1.0;          // soft contact damping, relative to critical
  double speculative_margin = 0.005;   // m, contacts generated before touching
  double penetration_slop = 1e-4;      // m, maximum tolerated penetration
  double projection_target = 2e-5;     // m, penetration left after projection
  double restitution_threshold = 0.2;  // m/s
};

struct SceneSpec {
  std::vector<FingerSpec> fingers;
  std::vector<Vec2> object_polygon;  // counterclockwise, centroid at the origin
  PointCloud2 object_cloud;          // model points for ADD
  Vec2 gravity{0.0, -9.81};
  double table_height = 0.0;         // the table occupies y <= table_height
  double timestep = 1.0 / 240.0;     // internal substep
  int substeps = 8;                  // substeps per control tick
  SensorThresholds thresholds;
  SolverSettings solver;

  std::size_t joint_count() const {
    std::size_t n = 0;
    for (const auto& f : fingers) n += f.joint_count();
    return n;
  }
  std::size_t sensor_count() const { return fingers.size(); }
  double control_period() const { return timestep * substeps; }

  void validate() const;
};

/// Area centroid of a simple polygon.
inline Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
  double area2 = 0.0;
  Vec2 c = Vec2::Zero();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    const double w = cross(a, b);
    area2 += w;
    c += w * (a + b);
  }
  return c / (3.0 * area2);
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  double area2 = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) area2 += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * area2;
}

/// Moment of inertia about the centroid of a uniform-density polygon of mass m.
inline double polygon_inertia(const std::vector<Vec2>& poly, double mass) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    const double w = cross(a, b);
    num += w * (a.dot(a) + a.dot(b) + b.dot(b));
    den += w;
  }
  return mass * num / (6.0 * den);
}

inline void SceneSpec::validate() const {
  if (fingers.empty()) throw std::invalid_argument("SceneSpec: no fingers");
  if (joint_count() > kMaxJoints) throw std::invalid_argument("SceneSpec: too many joints");
  for (const auto& f : fingers) {
    const std::size_t n = f.joint_count();
    if (n == 0 || f.joint_lower.size() != n || f.joint_upper.size() != n || f.joint_inertia.size() != n)
      throw std::invalid_argument("SceneSpec: inconsistent finger joint description");
    for (std::size_t j = 0; j < n; ++j) {
      if (!(f.link_lengths[j] > 0.0)) throw std::invalid_argument("SceneSpec: link length must be positive");
      if (!(f.joint_lower[j] <= f.joint_upper[j])) throw std::invalid_argument("SceneSpec: joint limits inverted");
      if (!(f.joint_inertia[j] > 0.0)) throw std::invalid_argument("SceneSpec: joint inertia must be positive");
    }
    if (!(f.tip_radius > 0.0)) throw std::invalid_argument("SceneSpec: tip radius must be positive");
  }
  if (object_polygon.size() < 3) throw std::invalid_argument("SceneSpec: polygon needs 3+ vertices");
  for (std::size_t i = 0; i < object_polygon.size(); ++i) {
    const Vec2& a = object_polygon[i];
    const Vec2& b = object_polygon[(i + 1) % object_polygon.size()];
    const Vec2& c = object_polygon[(i + 2) % object_polygon.size()];
    if (!(cross(b - a, c - b) > 0.0))
      throw std::invalid_argument("SceneSpec: polygon must be convex and counterclockwise");
  }
  if (polygon_centroid(object_polygon).norm() > 1e-9)
    throw std::invalid_argument("SceneSpec: polygon centroid must be at the object origin");
  object_cloud.validate();
  if (!(timestep > 0.0 && timestep <= 0.01)) throw std::invalid_argument("SceneSpec: timestep must be in (0, 0.01]");
  if (substeps < 1) throw std::invalid_argument("SceneSpec: substeps must be >= 1");
  if (!gravity.allFinite()) throw std::invalid_argument("SceneSpec: gravity must be finite");
}

/// Tunable physics parameters theta. Flattened order:
/// [mass, inertia, friction, restitution, contact_stiffness, kp_0..kp_D-1, kd_0..kd_D-1].
struct SimParams {
  double object_mass = 0.1;            // kg
  double object_inertia = 1e-4;        // kg m^2
  double friction = 0.8;               // Coulomb coefficient
  double restitution = 0.0;            // [0, 1]
  double contact_stiffness = 2e5;      // N/m
  std::vector<double> pd_stiffness;    // N m / rad per joint
  std::vector<double> pd_damping;      // N m s / rad per joint

  static constexpr std::size_t kScalarCount = 5;

  std::size_t joint_count() const { return pd_stiffness.size(); }
  std::size_t dimension() const { return kScalarCount + 2 * joint_count(); }

  std::vector<double> to_vector() const {
    std::vector<double> v{object_mass, object_inertia, friction, restitution, contact_stiffness};
    v.insert(v.end(), pd_stiffness.begin(), pd_stiffness.end());
    v.insert(v.end(), pd_damping.begin(), pd_damping.end());
    return v;
  }

  static SimParams from_vector(std::span<const double> v) {
    if (v.size() < kScalarCount || (v.size() - kScalarCount) % 2 != 0)
      throw std::invalid_argument("SimParams: bad parameter vector dimension");
    const std::size_t d = (v.size() - kScalarCount) / 2;
    SimParams p;
    p.object_mass = v[0];
    p.object_inertia = v[1];
    p.friction = v[2];
    p.restitution = v[3];
    p.contact_stiffness = v[4];
    p.pd_stiffness.assign(v.begin() + kScalarCount, v.begin() + kScalarCount + d);
    p.pd_damping.assign(v.begin() + kScalarCount + d, v.end());
    return p;
  }

  void validate(std::size_t joints) const {
    if (pd_stiffness.size() != joints || pd_damping.size() != joints)
      throw std::invalid_argument("SimParams: PD gain count does not match joint count");
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    if (!positive(object_mass) || !positive(object_inertia) || !positive(contact_stiffness))
      throw std::invalid_argument("SimParams: mass, inertia and contact stiffness must be positive");
    if (!(std::isfinite(friction) && friction >= 0.0)) throw std::invalid_argument("SimParams: friction must be >= 0");
    if (!(restitution >= 0.0 && restitution <= 1.0)) throw std::invalid_argument("SimParams: restitution must be in [0,1]");
    for (std::size_t j = 0; j < joints; ++j)
      if (!positive(pd_stiffness[j]) || !positive(pd_damping[j]))
        throw std::invalid_argument("SimParams: PD gains must be positive");
  }
};

/// Box bounds on the flattened parameter vector.
struct ParamBounds {
  std::vector<double> lower, upper;

  /// Physical bounds: mass, inertia, stiffness and gains strictly positive,
  /// friction >= 0, restitution in [0, 1].
  static ParamBounds physical(std::size_t joints) {
    ParamBounds b;
    b.lower = {1e-4, 1e-8, 0.0, 0.0, 1e2};
    b.upper = {100.0, 10.0, 5.0, 1.0, 1e8};
    for (int k = 0; k < 2; ++k)
      for (std::size_t j = 0; j < joints; ++j) {
        b.lower.push_back(1e-4);
        b.upper.push_back(1e4);
      }
    return b;
  }

  /// Physical bounds narrowed to [nominal / factor, nominal * factor] for
  /// mass, inertia and the joint gains. The contact solver loses stability
  /// once inertia falls orders of magnitude below the object's geometric
  /// value, which an unbounded random walk over hundreds of updates reaches.
  static ParamBounds around(const SimParams& nominal, double factor) {
    if (!(factor >= 1.0)) throw std::invalid_argument("ParamBounds::around: factor must be >= 1");
    ParamBounds b = physical(nominal.joint_count());
    const std::vector<double> v = nominal.to_vector();
    auto narrow = [&](std::size_t i) {
      b.lower[i] = std::max(b.lower[i], v[i] / factor);
      b.upper[i] = std::min(b.upper[i], v[i] * factor);
    };
    narrow(0);
    narrow(1);
    for (std::size_t i = SimParams::kScalarCount; i < v.size(); ++i) narrow(i);
    return b;
  }

  SimParams clamp(const SimParams& p) const {
    std::vector<double> v = p.to_vector();
    if (v.size() != lower.size()) throw std::invalid_argument("ParamBounds: dimension mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], lower[i], upper[i]);
    return SimParams::from_vector(v);
  }

  bool contains(const SimParams& p) const {
    const std::vector<double> v = p.to_vector();
    if (v.size() != lower.size()) return false;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!(v[i] >= lower[i] && v[i] <= upper[i])) return false;
    return true;
  }
};

struct ControlCommand {
  std::vector<double> target_joint_positions;
};

/// Per-fingertip contact summary of the most recent step.
struct SensorContact {
  Vec2 impulse = Vec2::Zero();        // total impulse received over the last control tick
  Vec2 slip_velocity = Vec2::Zero();  // tangential velocity of the touched surface relative to the tip
  double relative_spin = 0.0;         // angular velocity of the touched body minus the tip link's
  bool touching = false;              // active contact in the final substep
};

struct CachedImpulse {
  std::uint32_t key = 0;
  double normal = 0.0;
  double tangent = 0.0;
};

struct WorldState {
  std::vector<double> joint_positions;
  std::vector<double> joint_velocities;
  Pose2 object_pose;
  Vec2 object_velocity = Vec2::Zero();
  double object_angular_velocity = 0.0;
  // Wrench applied to the object during the next step only.
  Vec2 external_force = Vec2::Zero();
  double external_torque = 0.0;
  std::vector<SensorContact> sensors;
  std::vector<CachedImpulse> warm_start;

  bool all_finite() const {
    auto finite = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return finite(joint_positions) && finite(joint_velocities) && std::isfinite(object_pose.angle) &&
           object_pose.translation.allFinite() && object_velocity.allFinite() &&
           std::isfinite(object_angular_velocity) && external_force.allFinite() && std::isfinite(external_torque);
  }
};

struct SensorObservation {
  Vec2 position = Vec2::Zero();
  double rotation = 0.0;
  Vec2 contact_force = Vec2::Zero();
  Vec2 slip_direction = Vec2::Zero();
  bool rotational_slip_direction = false;  // true: touched body spins counterclockwise relative to the tip
  bool contact = false;
  bool slipping = false;
  bool rot_slipping = false;
};

struct Observation {
  std::vector<double> joint_positions;
  std::vector<SensorObservation> sensors;
};

/// Queues a wrench on the object for the next step. Contacts are still
/// resolved during that step, so the push cannot drive the object into
/// another body.
inline WorldState apply_external_force(WorldState state, const Vec2& force, double torque) {
  if (!force.allFinite() || !std::isfinite(torque))
    throw std::invalid_argument("apply_external_force: non-finite wrench");
  state.external_force += force;
  state.external_torque += torque;
  return state;
}

enum class ContactKind : std::uint8_t { ObjectTable = 0, TipObject = 1, TipTable = 2 };

/// Contact candidate between body A (table or object) and body B (object or
/// fingertip). The normal points from A to B.
struct ContactGeometry {
  ContactKind kind = ContactKind::ObjectTable;
  int finger = -1;
  int feature = 0;
  Vec2 normal = Vec2::UnitY();
  Vec2 point_a = Vec2::Zero();
  Vec2 point_b = Vec2::Zero();
  double separation = 0.0;

  std::uint32_t key() const {
    return (static_cast<std::uint32_t>(kind) << 24) | (static_cast<std::uint32_t>(finger + 1) << 16) |
           static_cast<std::uint32_t>(feature);
  }
};

class Simulator {
 public:
  explicit Simulator(SceneSpec scene) : scene_(std::move(scene)) {
    scene_.validate();
    std::size_t offset = 0;
    for (const auto& f : scene_.fingers) {
      joint_offset_.push_back(offset);
      offset += f.joint_count();
    }
  }

  const SceneSpec& scene() const { return scene_; }

  /// A resting state with the given joint angles and object pose.
  WorldState make_state(std::vector<double> joints, const Pose2& object_pose) const {
    if (joints.size() != scene_.joint_count()) throw std::invalid_argument("make_state: joint count mismatch");
    WorldState s;
    s.joint_positions = std::move(joints);
    s.joint_velocities.assign(s.joint_positions.size(), 0.0);
    s.object_pose = object_pose;
    s.sensors.assign(scene_.sensor_count(), SensorContact{});
    return s;
  }

  /// Fingertip sensor frames (disc centre, absolute orientation of the last link).
  std::vector<Pose2> forward_kinematics(std::span<const double> q) const {
    if (q.size() != scene_.joint_count()) throw std::invalid_argument("forward_kinematics: joint count mismatch");
    std::vector<Pose2> out;
    out.reserve(scene_.fingers.size());
    for (std::size_t f = 0; f < scene_.fingers.size(); ++f) {
      const auto chain = finger_chain(f, q);
      out.emplace_back(chain.angles.back(), chain.points.back());
    }
    return out;
  }

  /// Advances one control tick (scene.substeps substeps) under a constant
  /// target joint command. Throws std::domain_error on non-finite input.
  WorldState step(const WorldState& state, const ControlCommand& control, const SimParams& params) const;

  Observation observe(const WorldState& state) const;

  /// Projects the state out of penetration without changing velocities.
  WorldState settle(const WorldState& state, const SimParams& params, int max_iterations = 50) const {
    check_inputs(state, params);
    WorldState s = state;
    const auto inv_mass = inverse_mass(params, 0.0);
    project_positions(s, inv_mass, max_iterations);
    return s;
  }

  /// All collision pairs regardless of distance (margin = +inf).
  std::vector<ContactGeometry> contacts(const WorldState& state, double margin) const {
    std::vector<ContactGeometry> out;
    collect_contacts(state, margin, out);
    return out;
  }

  /// Minimum signed distance over all collision pairs.
  double min_separation(const WorldState& state) const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : contacts(state, std::numeric_limits<double>::infinity())) m = std::min(m, c.separation);
    return m;
  }

  /// Kinetic plus gravitational plus PD-spring energy for a fixed command.
  double mechanical_energy(const WorldState& s, const SimParams& p, const ControlCommand& u) const {
    double e = 0.5 * p.object_mass * s.object_velocity.squaredNorm() +
               0.5 * p.object_inertia * s.object_angular_velocity * s.object_angular_velocity -
               p.object_mass * scene_.gravity.dot(s.object_pose.translation);
    const auto inertia = joint_inertia();
    for (std::size_t j = 0; j < s.joint_positions.size(); ++j) {
      const double err = u.target_joint_positions[j] - s.joint_positions[j];
      e += 0.5 * inertia[j] * s.joint_velocities[j] * s.joint_velocities[j] + 0.5 * p.pd_stiffness[j] * err * err;
    }
    return e;
  }

  std::vector<double> joint_lower() const {
    std::vector<double> v;
    for (const auto& f : scene_.fingers) v.insert(v.end(), f.joint_lower.begin(), f.joint_lower.end());
    return v;
  }
  std::vector<double> joint_upper() const {
    std::vector<double> v;
    for (const auto& f : scene_.fingers) v.insert(v.end(), f.joint_upper.begin(), f.joint_upper.end());
    return v;
  }
  std::vector<double> joint_inertia() const {
    std::vector<double> v;
    for (const auto& f : scene_.fingers) v.insert(v.end(), f.joint_inertia.begin(), f.joint_inertia.end());
    return v;
  }

  ControlCommand clamp_control(const ControlCommand& u) const {
    if (u.target_joint_positions.size() != scene_.joint_count())
      throw std::invalid_argument("ControlCommand: joint count mismatch");
    ControlCommand out = u;
    std::size_t k = 0;
    for (const auto& f : scene_.fingers)
      for (std::size_t j = 0; j < f.joint_count(); ++j, ++k) {
        if (!std::isfinite(out.target_joint_positions[k])) throw std::domain_error("ControlCommand: non-finite target");
        out.target_joint_positions[k] = std::clamp(out.target_joint_positions[k], f.joint_lower[j], f.joint_upper[j]);
      }
    return out;
  }

 private:
  struct Chain {
    std::array<Vec2, kMaxJoints + 1> points;  // joint origins followed by the tip centre
    std::array<double, kMaxJoints> angles;     // absolute link angles (only first n valid)
    std::size_t n = 0;
    const Vec2& tip() const { return points[n]; }
    double tip_angle() const { return angles[n - 1]; }
  };

  struct ChainView {
    std::vector<Vec2> points;
    std::vector<double> angles;
  };

  ChainView finger_chain(std::size_t f, std::span<const double> q) const {
    const Chain c = chain(f, q);
    return {std::vector<Vec2>(c.points.begin(), c.points.begin() + c.n + 1),
            std::vector<double>(c.angles.begin(), c.angles.begin() + c.n)};
  }

  Chain chain(std::size_t f, std::span<const double> q) const {
    const FingerSpec& spec = scene_.fingers[f];
    Chain c;
    c.n = spec.joint_count();
    c.points[0] = spec.base;
    double a = spec.base_angle;
    for (std::size_t j = 0; j < c.n; ++j) {
      a += q[joint_offset_[f] + j];
      c.angles[j] = a;
      c.points[j + 1] = c.points[j] + spec.link_lengths[j] * Vec2(std::cos(a), std::sin(a));
    }
    return c;
  }

  using DofArray = std::array<double, kMaxDof>;

  struct SolverContact {
    ContactGeometry geom;
    DofArray jn{}, jt{};
    double mass_n = 0.0, mass_t = 0.0;
    double gamma = 0.0, bias = 0.0;
    double lambda_n = 0.0, lambda_t = 0.0;
  };

  void check_inputs(const WorldState& s, const SimParams& p) const {
    if (s.joint_positions.size() != scene_.joint_count() || s.joint_velocities.size() != scene_.joint_count())
      throw std::invalid_argument("WorldState: joint count mismatch");
    if (!s.all_finite()) throw std::domain_error("WorldState: non-finite entry");
    p.validate(scene_.joint_count());
  }

  /// Diagonal inverse generalized inertia. With h > 0 the joint entries are
  /// augmented by the implicit PD terms (I + h kd + h^2 kp).
  DofArray inverse_mass(const SimParams& p, double h) const {
    DofArray inv{};
    inv[0] = inv[1] = 1.0 / p.object_mass;
    inv[2] = 1.0 / p.object_inertia;
    std::size_t k = 0;
    for (const auto& f : scene_.fingers)
      for (std::size_t j = 0; j < f.joint_count(); ++j, ++k)
        inv[3 + k] = 1.0 / (f.joint_inertia[j] + h * p.pd_damping[k] + h * h * p.pd_stiffness[k]);
    return inv;
  }

  void collect_contacts(const WorldState& s, double margin, std::vector<ContactGeometry>& out) const;

  /// Jacobian row mapping generalized velocity to d . (v_B(p_B) - v_A(p_A)).
  DofArray jacobian(const WorldState& s, const ContactGeometry& c, const Vec2& d) const {
    DofArray row{};
    const Vec2& com = s.object_pose.translation;
    if (c.kind == ContactKind::ObjectTable) {
      row[0] = d.x();
      row[1] = d.y();
      row[2] = cross(c.point_b - com, d);
      return row;
    }
    if (c.kind == ContactKind::TipObject) {
      row[0] = -d.x();
      row[1] = -d.y();
      row[2] = -cross(c.point_a - com, d);
    }
    const auto ch = chain(static_cast<std::size_t>(c.finger), s.joint_positions);
    for (std::size_t j = 0; j < ch.n; ++j)
      row[3 + joint_offset_[c.finger] + j] = d.dot(perp(c.point_b - ch.points[j]));
    return row;
  }

  static double dot(const DofArray& a, const DofArray& b, std::size_t n) {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r += a[i] * b[i];
    return r;
  }

  static double effective(const DofArray& row, const DofArray& inv, std::size_t n) {
    double k = 0.0;
    for (std::size_t i = 0; i < n; ++i) k += row[i] * row[i] * inv[i];
    return k;
  }

  void project_positions(WorldState& s, const DofArray& inv_mass, int max_iterations) const;
  void clamp_joints(WorldState& s) const;

  SceneSpec scene_;
  std::vector<std::size_t> joint_offset_;
};

inline void Simulator::collect_contacts(const WorldState& s, double margin, std::vector<ContactGeometry>& out) const {
  out.clear();
  const Pose2& pose = s.object_pose;
  const double table = scene_.table_height;
  const auto& poly = scene_.object_polygon;
  const std::size_t nv = poly.size();

  for (std::size_t i = 0; i < nv; ++i) {
    const Vec2 v = pose.apply(poly[i]);
    const double sep = v.y() - table;
    if (sep < margin) {
      ContactGeometry c;
      c.kind = ContactKind::ObjectTable;
      c.feature = static_cast<int>(i);
      c.normal = Vec2::UnitY();
      c.point_b = v;
      c.point_a = Vec2(v.x(), table);
      c.separation = sep;
      out.push_back(c);
    }
  }

  for (std::size_t f = 0; f < scene_.fingers.size(); ++f) {
    const double r = scene_.fingers[f].tip_radius;
    const Vec2 center = chain(f, s.joint_positions).tip();

    const double tsep = center.y() - r - table;
    if (tsep < margin) {
      ContactGeometry c;
      c.kind = ContactKind::TipTable;
      c.finger = static_cast<int>(f);
      c.normal = Vec2::UnitY();
      c.point_b = center - r * Vec2::UnitY();
      c.point_a = Vec2(center.x(), table);
      c.separation = tsep;
      out.push_back(c);
    }

    // Disc against convex polygon, in the object frame.
    const Vec2 local = rotate(-pose.angle, center - pose.translation);
    double best_face = -std::numeric_limits<double>::infinity();
    std::size_t face = 0;
    for (std::size_t i = 0; i < nv; ++i) {
      const Vec2 e = poly[(i + 1) % nv] - poly[i];
      const Vec2 n = Vec2(e.y(), -e.x()).normalized();
      const double d = n.dot(local - poly[i]);
      if (d > best_face) {
        best_face = d;
        face = i;
      }
    }
    Vec2 closest, n_local;
    double dist;
    int feature;
    if (best_face <= 0.0) {
      const Vec2 e = poly[(face + 1) % nv] - poly[face];
      n_local = Vec2(e.y(), -e.x()).normalized();
      closest = local - best_face * n_local;
      dist = best_face;
      feature = static_cast<int>(face);
    } else {
      dist = std::numeric_limits<double>::infinity();
      feature = 0;
      for (std::size_t i = 0; i < nv; ++i) {
        const Vec2& a = poly[i];
        const Vec2 e = poly[(i + 1) % nv] - a;
        const double t = std::clamp((local - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
        const Vec2 p = a + t * e;
        const double d = (local - p).norm();
        if (d < dist) {
          dist = d;
          closest = p;
          feature = static_cast<int>(i);
        }
      }
      n_local = (local - closest) / dist;
    }
    const double sep = dist - r;
    if (sep < margin) {
      ContactGeometry c;
      c.kind = ContactKind::TipObject;
      c.finger = static_cast<int>(f);
      c.feature = feature;
      c.normal = rotate(pose.angle, n_local);
      c.point_a = pose.apply(closest);
      c.point_b = center - r * c.normal;
      c.separation = sep;
      out.push_back(c);
    }
  }
}

inline void Simulator::clamp_joints(WorldState& s) const {
  std::size_t k = 0;
  for (const auto& f : scene_.fingers)
    for (std::size_t j = 0; j < f.joint_count(); ++j, ++k) {
      double& q = s.joint_positions[k];
      double& qd = s.joint_velocities[k];
      if (q < f.joint_lower[j]) {
        q = f.joint_lower[j];
        qd = std::max(qd, 0.0);
      } else if (q > f.joint_upper[j]) {
        q = f.joint_upper[j];
        qd = std::min(qd, 0.0);
      }
    }
}

inline void Simulator::project_positions(WorldState& s, const DofArray& inv_mass, int max_iterations) const {
  const std::size_t nj = scene_.joint_count();
  const std::size_t ndof = 3 + nj;
  const double target = scene_.solver.projection_target;
  const double activation = 0.5 * scene_.solver.penetration_slop;
  std::vector<ContactGeometry> cs;
  for (int it = 0; it < max_iterations; ++it) {
    collect_contacts(s, -activation, cs);
    if (cs.empty()) break;
    // Linearised Gauss-Seidel sweep over the snapshot, then re-detect.
    DofArray dx{};
    for (const auto& c : cs) {
      const DofArray row = jacobian(s, c, c.normal);
      const double k = effective(row, inv_mass, ndof);
      if (k <= 0.0) continue;
      const double sep = c.separation + dot(row, dx, ndof);
      if (sep >= -target) continue;
      const double lambda = -(sep + target) / k;
      for (std::size_t i = 0; i < ndof; ++i) dx[i] += inv_mass[i] * row[i] * lambda;
    }
    s.object_pose = Pose2(s.object_pose.angle + dx[2], s.object_pose.translation + Vec2(dx[0], dx[1]));
    for (std::size_t j = 0; j < nj; ++j) s.joint_positions[j] += dx[3 + j];
    clamp_joints(s);
  }
}

inline WorldState Simulator::step(const WorldState& state, const ControlCommand& control, const SimParams& params) const {
  check_inputs(state, params);
  const ControlCommand u = clamp_control(control);
  const std::size_t nj = scene_.joint_count();
  const std::size_t ndof = 3 + nj;
  const double h = scene_.timestep;
  const auto& solver = scene_.solver;

  WorldState s = state;
  s.sensors.assign(scene_.sensor_count(), SensorContact{});
  const DofArray inv_mass = inverse_mass(params, h);
  const auto inertia = joint_inertia();

  std::vector<ContactGeometry> geoms;
  std::vector<SolverContact> contacts;
  std::vector<CachedImpulse> cache = std::move(s.warm_start);

  for (int sub = 0; sub < scene_.substeps; ++sub) {
    // Unconstrained velocity update.
    DofArray v{};
    const Vec2 acc = scene_.gravity + s.external_force / params.object_mass;
    v[0] = s.object_velocity.x() + h * acc.x();
    v[1] = s.object_velocity.y() + h * acc.y();
    v[2] = s.object_angular_velocity + h * s.external_torque / params.object_inertia;
    for (std::size_t j = 0; j < nj; ++j) {
      const double kp = params.pd_stiffness[j], kd = params.pd_damping[j];
      const double err = u.target_joint_positions[j] - s.joint_positions[j];
      v[3 + j] = (inertia[j] * s.joint_velocities[j] + h * kp * err) / (inertia[j] + h * kd + h * h * kp);
    }

    // Contact setup.
    collect_contacts(s, solver.speculative_margin, geoms);
    contacts.clear();
    for (const auto& g : geoms) {
      SolverContact c;
      c.geom = g;
      const Vec2 t = perp(g.normal);
      c.jn = jacobian(s, g, g.normal);
      c.jt = jacobian(s, g, t);
      const double kn = effective(c.jn, inv_mass, ndof);
      const double kt = effective(c.jt, inv_mass, ndof);
      c.mass_t = kt > 0.0 ? 1.0 / kt : 0.0;
      const double vn = dot(c.jn, v, ndof);
      if (params.restitution > 0.0 && vn < -solver.restitution_threshold && g.separation < solver.penetration_slop) {
        c.gamma = 0.0;
        c.bias = params.restitution * vn;
        c.mass_n = kn > 0.0 ? 1.0 / kn : 0.0;
      } else if (g.separation > 0.0) {
        c.gamma = 0.0;
        c.bias = g.separation / h;
        c.mass_n = kn > 0.0 ? 1.0 / kn : 0.0;
      } else {
        const double m_eff = kn > 0.0 ? 1.0 / kn : 0.0;
        const double ks = params.contact_stiffness;
        const double damping = 2.0 * solver.damping_ratio * std::sqrt(ks * m_eff);
        const double denom = damping + h * ks;
        c.gamma = 1.0 / (h * denom);
        c.bias = (h * ks / denom) / h * g.separation;
        c.mass_n = 1.0 / (kn + c.gamma);
      }
      for (const auto& w : cache)
        if (w.key == g.key()) {
          c.lambda_n = w.normal;
          c.lambda_t = std::clamp(w.tangent, -params.friction * w.normal, params.friction * w.normal);
          break;
        }
      for (std::size_t i = 0; i < ndof; ++i) v[i] += inv_mass[i] * (c.jn[i] * c.lambda_n + c.jt[i] * c.lambda_t);
      contacts.push_back(c);
    }

    for (int it = 0; it < solver.velocity_iterations; ++it) {
      for (auto& c : contacts) {
        const double vt = dot(c.jt, v, ndof);
        const double limit = params.friction * c.lambda_n;
        const double lt = std::clamp(c.lambda_t - c.mass_t * vt, -limit, limit);
        const double dlt = lt - c.lambda_t;
        c.lambda_t = lt;
        if (dlt != 0.0)
          for (std::size_t i = 0; i < ndof; ++i) v[i] += inv_mass[i] * c.jt[i] * dlt;

        const double vn = dot(c.jn, v, ndof);
        const double ln = std::max(c.lambda_n - c.mass_n * (vn + c.bias + c.gamma * c.lambda_n), 0.0);
        const double dln = ln - c.lambda_n;
        c.lambda_n = ln;
        if (dln != 0.0)
          for (std::size_t i = 0; i < ndof; ++i) v[i] += inv_mass[i] * c.jn[i] * dln;
      }
    }
    // A later normal update can shrink the cone under an earlier friction
    // impulse; project back so every contact ends inside its cone.
    for (auto& c : contacts) {
      const double limit = params.friction * c.lambda_n;
      const double lt = std::clamp(c.lambda_t, -limit, limit);
      const double dlt = lt - c.lambda_t;
      c.lambda_t = lt;
      if (dlt != 0.0)
        for (std::size_t i = 0; i < ndof; ++i) v[i] += inv_mass[i] * c.jt[i] * dlt;
    }

    cache.clear();
    const bool last = sub + 1 == scene_.substeps;
    std::vector<double> touch_strength(scene_.sensor_count(), -1.0);
    for (const auto& c : contacts) {
      if (c.lambda_n > 0.0) cache.push_back({c.geom.key(), c.lambda_n, c.lambda_t});
      if (c.geom.kind == ContactKind::ObjectTable) continue;
      const auto f = static_cast<std::size_t>(c.geom.finger);
      const Vec2 t = perp(c.geom.normal);
      s.sensors[f].impulse += c.lambda_n * c.geom.normal + c.lambda_t * t;
      if (last && c.lambda_n > 0.0) {
        // Prefer the object contact; otherwise the strongest contact wins.
        const double strength = c.lambda_n + (c.geom.kind == ContactKind::TipObject ? 1e9 : 0.0);
        if (strength > touch_strength[f]) {
          touch_strength[f] = strength;
          auto& sc = s.sensors[f];
          sc.touching = true;
          sc.slip_velocity = -dot(c.jt, v, ndof) * t;
          double tip_spin = 0.0;
          for (std::size_t j = 0; j < scene_.fingers[f].joint_count(); ++j) tip_spin += v[3 + joint_offset_[f] + j];
          const double body_spin = c.geom.kind == ContactKind::TipObject ? v[2] : 0.0;
          sc.relative_spin = body_spin - tip_spin;
        }
      }
    }

    // Position update.
    s.object_velocity = Vec2(v[0], v[1]);
    s.object_angular_velocity = v[2];
    for (std::size_t j = 0; j < nj; ++j) s.joint_velocities[j] = v[3 + j];
    s.object_pose = Pose2(s.object_pose.angle + h * v[2], s.object_pose.translation + h * Vec2(v[0], v[1]));
    for (std::size_t j = 0; j < nj; ++j) s.joint_positions[j] += h * v[3 + j];
    clamp_joints(s);
    project_positions(s, inv_mass, solver.position_iterations);
  }

  s.external_force = Vec2::Zero();
  s.external_torque = 0.0;
  s.warm_start = std::move(cache);
  if (!s.all_finite()) throw std::domain_error("Simulator::step: state became non-finite");
  return s;
}

inline Observation Simulator::observe(const WorldState& state) const {
  Observation o;
  o.joint_positions = state.joint_positions;
  const auto frames = forward_kinematics(state.joint_positions);
  const double period = scene_.control_period();
  const auto& th = scene_.thresholds;
  o.sensors.resize(frames.size());
  for (std::size_t l = 0; l < frames.size(); ++l) {
    auto& so = o.sensors[l];
    so.position = frames[l].translation;
    so.rotation = frames[l].angle;
    const SensorContact sc = l < state.sensors.size() ? state.sensors[l] : SensorContact{};
    so.contact_force = sc.impulse / period;
    so.contact = so.contact_force.norm() > th.contact_force;
    const double slip = sc.slip_velocity.norm();
    so.slipping = so.contact && sc.touching && slip > th.slip_speed;
    so.slip_direction = so.slipping ? Vec2(sc.slip_velocity / slip) : Vec2::Zero();
    so.rot_slipping = so.contact && sc.touching && std::abs(sc.relative_spin) > th.rot_slip_speed;
    so.rotational_slip_direction = so.rot_slipping && sc.relative_spin > 0.0;
  }
  return o;
}

}  // namespace inhand
