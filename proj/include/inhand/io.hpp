#pragma once

// Persistence: JSON for scenes, parameters and experiment configs; JSONL
// trajectory records; CSV metrics files.
//
// Trajectory file (JSONL). Line 1 is the header:
//   {"format":"inhand-trajectory","schema_version":1,"name":..,"kind":..,
//    "scene":{..},"scene_hash":"<16 hex digits>","timestep":..,"substeps":..,
//    "joint_count":D,"sensor_count":L,"gt_theta":{..},
//    "initial_joints":[..],"initial_pose":{..}}
// Every following line is one tick:
//   {"tick":i,"control":[..D],"observation":{..},"gt_pose":{"angle":..,"x":..,"y":..}}
//
// Metrics files (CSV). The first line is "# <kind> schema <version>", the
// second the column header. Doubles are printed with %.17g so files are
// bit-exact and byte-stable across runs.

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <tuple>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "inhand/harness.hpp"

namespace inhand {

using nlohmann::json;

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr int kExperimentSchemaVersion = 1;

// ---- JSON for domain types --------------------------------------------------

inline json to_json_value(const Vec2& v) { return json::array({v.x(), v.y()}); }

inline Vec2 vec2_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected a [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json to_json_value(const Pose2& p) {
  return {{"angle", p.angle}, {"x", p.translation.x()}, {"y", p.translation.y()}};
}

inline Pose2 pose_from_json(const json& j) {
  Pose2 p;
  // Bypass the wrapping constructor so stored angles round-trip exactly.
  p.angle = j.at("angle").get<double>();
  p.translation = Vec2(j.at("x").get<double>(), j.at("y").get<double>());
  return p;
}

inline json to_json_value(const FingerSpec& f) {
  return {{"base", to_json_value(f.base)},       {"base_angle", f.base_angle},   {"link_lengths", f.link_lengths},
          {"joint_lower", f.joint_lower},        {"joint_upper", f.joint_upper}, {"joint_inertia", f.joint_inertia},
          {"tip_radius", f.tip_radius}};
}

inline FingerSpec finger_from_json(const json& j) {
  FingerSpec f;
  f.base = vec2_from_json(j.at("base"));
  f.base_angle = j.at("base_angle").get<double>();
  f.link_lengths = j.at("link_lengths").get<std::vector<double>>();
  f.joint_lower = j.at("joint_lower").get<std::vector<double>>();
  f.joint_upper = j.at("joint_upper").get<std::vector<double>>();
  f.joint_inertia = j.at("joint_inertia").get<std::vector<double>>();
  f.tip_radius = j.at("tip_radius").get<double>();
  return f;
}

inline json to_json_value(const SceneSpec& s) {
  json fingers = json::array();
  for (const auto& f : s.fingers) fingers.push_back(to_json_value(f));
  json polygon = json::array();
  for (const auto& v : s.object_polygon) polygon.push_back(to_json_value(v));
  json cloud = json::array();
  for (const auto& v : s.object_cloud.points) cloud.push_back(to_json_value(v));
  return {{"fingers", fingers},
          {"object_polygon", polygon},
          {"object_cloud", cloud},
          {"gravity", to_json_value(s.gravity)},
          {"table_height", s.table_height},
          {"timestep", s.timestep},
          {"substeps", s.substeps},
          {"thresholds",
           {{"contact_force", s.thresholds.contact_force},
            {"slip_speed", s.thresholds.slip_speed},
            {"rot_slip_speed", s.thresholds.rot_slip_speed}}},
          {"solver",
           {{"velocity_iterations", s.solver.velocity_iterations},
            {"position_iterations", s.solver.position_iterations},
            {"damping_ratio", s.solver.damping_ratio},
            {"speculative_margin", s.solver.speculative_margin},
            {"penetration_slop", s.solver.penetration_slop},
            {"projection_target", s.solver.projection_target},
            {"restitution_threshold", s.solver.restitution_threshold}}}};
}

/// Parses a scene. Thresholds and solver settings are optional and default
/// to the built-in values.
inline SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  for (const auto& f : j.at("fingers")) s.fingers.push_back(finger_from_json(f));
  for (const auto& v : j.at("object_polygon")) s.object_polygon.push_back(vec2_from_json(v));
  for (const auto& v : j.at("object_cloud")) s.object_cloud.points.push_back(vec2_from_json(v));
  s.gravity = vec2_from_json(j.at("gravity"));
  s.table_height = j.at("table_height").get<double>();
  s.timestep = j.at("timestep").get<double>();
  s.substeps = j.at("substeps").get<int>();
  if (j.contains("thresholds")) {
    const json& t = j["thresholds"];
    s.thresholds.contact_force = t.value("contact_force", s.thresholds.contact_force);
    s.thresholds.slip_speed = t.value("slip_speed", s.thresholds.slip_speed);
    s.thresholds.rot_slip_speed = t.value("rot_slip_speed", s.thresholds.rot_slip_speed);
  }
  if (j.contains("solver")) {
    const json& t = j["solver"];
    s.solver.velocity_iterations = t.value("velocity_iterations", s.solver.velocity_iterations);
    s.solver.position_iterations = t.value("position_iterations", s.solver.position_iterations);
    s.solver.damping_ratio = t.value("damping_ratio", s.solver.damping_ratio);
    s.solver.speculative_margin = t.value("speculative_margin", s.solver.speculative_margin);
    s.solver.penetration_slop = t.value("penetration_slop", s.solver.penetration_slop);
    s.solver.projection_target = t.value("projection_target", s.solver.projection_target);
    s.solver.restitution_threshold = t.value("restitution_threshold", s.solver.restitution_threshold);
  }
  s.validate();
  return s;
}

/// FNV-1a over the compact JSON dump of the scene.
inline std::uint64_t scene_hash(const SceneSpec& scene) {
  const std::string text = to_json_value(scene).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

inline json to_json_value(const SimParams& p) {
  return {{"object_mass", p.object_mass},
          {"object_inertia", p.object_inertia},
          {"friction", p.friction},
          {"restitution", p.restitution},
          {"contact_stiffness", p.contact_stiffness},
          {"pd_stiffness", p.pd_stiffness},
          {"pd_damping", p.pd_damping}};
}

inline SimParams params_from_json(const json& j) {
  SimParams p;
  p.object_mass = j.at("object_mass").get<double>();
  p.object_inertia = j.at("object_inertia").get<double>();
  p.friction = j.at("friction").get<double>();
  p.restitution = j.at("restitution").get<double>();
  p.contact_stiffness = j.at("contact_stiffness").get<double>();
  p.pd_stiffness = j.at("pd_stiffness").get<std::vector<double>>();
  p.pd_damping = j.at("pd_damping").get<std::vector<double>>();
  return p;
}

inline json to_json_value(const SensorObservation& s) {
  return {{"position", to_json_value(s.position)},
          {"rotation", s.rotation},
          {"force", to_json_value(s.contact_force)},
          {"slip_direction", to_json_value(s.slip_direction)},
          {"rot_slip_ccw", s.rotational_slip_direction},
          {"contact", s.contact},
          {"slipping", s.slipping},
          {"rot_slipping", s.rot_slipping}};
}

inline SensorObservation sensor_from_json(const json& j) {
  SensorObservation s;
  s.position = vec2_from_json(j.at("position"));
  s.rotation = j.at("rotation").get<double>();
  s.contact_force = vec2_from_json(j.at("force"));
  s.slip_direction = vec2_from_json(j.at("slip_direction"));
  s.rotational_slip_direction = j.at("rot_slip_ccw").get<bool>();
  s.contact = j.at("contact").get<bool>();
  s.slipping = j.at("slipping").get<bool>();
  s.rot_slipping = j.at("rot_slipping").get<bool>();
  return s;
}

inline json to_json_value(const Observation& o) {
  json sensors = json::array();
  for (const auto& s : o.sensors) sensors.push_back(to_json_value(s));
  return {{"joints", o.joint_positions}, {"sensors", sensors}};
}

inline Observation observation_from_json(const json& j) {
  Observation o;
  o.joint_positions = j.at("joints").get<std::vector<double>>();
  for (const auto& s : j.at("sensors")) o.sensors.push_back(sensor_from_json(s));
  return o;
}

inline json to_json_value(const CostWeights& w) {
  json out = json::object();
  for (std::size_t k = 0; k < kCostTermCount; ++k) out[std::string(kCostTermNames[k])] = w.w[k];
  return out;
}

inline CostWeights weights_from_json(const json& j) {
  CostWeights w;
  for (std::size_t k = 0; k < kCostTermCount; ++k) w.w[k] = j.value(std::string(kCostTermNames[k]), w.w[k]);
  w.validate();
  return w;
}

inline json to_json_value(const TrackerRecipe& r) {
  return {{"name", r.name},
          {"optimizer", std::string(to_string(r.optimizer.kind))},
          {"lambda", r.optimizer.wrs.lambda},
          {"epsilon", r.optimizer.reps.epsilon},
          {"eta_lower", r.optimizer.reps.eta_lower},
          {"eta_upper", r.optimizer.reps.eta_upper},
          {"k_best", r.optimizer.pbo.k_best},
          {"noise", r.noise},
          {"K", r.K},
          {"T", r.T},
          {"exploration_scale", r.exploration_scale},
          {"contacts", r.contacts},
          {"slip", r.slip}};
}

/// Missing fields take the defaults of the named optimizer.
inline TrackerRecipe recipe_from_json(const json& j) {
  TrackerRecipe r;
  r.optimizer = default_optimizer(optimizer_kind_from_string(j.at("optimizer").get<std::string>()));
  r.name = j.value("name", std::string(to_string(r.optimizer.kind)));
  r.optimizer.wrs.lambda = j.value("lambda", r.optimizer.wrs.lambda);
  r.optimizer.reps.epsilon = j.value("epsilon", r.optimizer.reps.epsilon);
  r.optimizer.reps.eta_lower = j.value("eta_lower", r.optimizer.reps.eta_lower);
  r.optimizer.reps.eta_upper = j.value("eta_upper", r.optimizer.reps.eta_upper);
  r.optimizer.pbo.k_best = j.value("k_best", r.optimizer.pbo.k_best);
  r.noise = j.value("noise", r.noise);
  r.K = j.value("K", r.K);
  r.T = j.value("T", r.T);
  r.exploration_scale = j.value("exploration_scale", r.exploration_scale);
  r.contacts = j.value("contacts", r.contacts);
  r.slip = j.value("slip", r.slip);
  r.validate();
  return r;
}

inline json to_json_value(const TrajectorySpec& t) {
  return {{"object", std::string(to_string(t.object))},
          {"kind", std::string(to_string(t.kind))},
          {"seed", t.seed},
          {"observation_noise_scale", t.observation_noise_scale}};
}

inline TrajectorySpec trajectory_spec_from_json(const json& j) {
  TrajectorySpec t;
  t.object = object_kind_from_string(j.at("object").get<std::string>());
  t.kind = script_kind_from_string(j.at("kind").get<std::string>());
  t.seed = j.at("seed").get<std::uint64_t>();
  t.observation_noise_scale = j.value("observation_noise_scale", 1.0);
  return t;
}

// ---- Trajectory records -----------------------------------------------------

inline constexpr const char* kTrajectoryFormat = "inhand-trajectory";

inline void write_trajectory(std::ostream& os, const TrajectoryRecord& rec) {
  json header = {{"format", kTrajectoryFormat},
                 {"schema_version", rec.schema_version},
                 {"name", rec.name},
                 {"kind", std::string(to_string(rec.kind))},
                 {"scene", to_json_value(rec.scene)},
                 {"scene_hash", hex64(scene_hash(rec.scene))},
                 {"timestep", rec.scene.timestep},
                 {"substeps", rec.scene.substeps},
                 {"joint_count", rec.joint_count()},
                 {"sensor_count", rec.sensor_count()},
                 {"gt_theta", to_json_value(rec.gt_theta)},
                 {"initial_joints", rec.initial_joints},
                 {"initial_pose", to_json_value(rec.initial_pose)}};
  os << header.dump() << '\n';
  for (std::size_t t = 0; t < rec.ticks.size(); ++t) {
    const TickRecord& tick = rec.ticks[t];
    json line = {{"tick", t},
                 {"control", tick.control.target_joint_positions},
                 {"observation", to_json_value(tick.observation)},
                 {"gt_pose", to_json_value(tick.gt_pose)}};
    os << line.dump() << '\n';
  }
  if (!os) throw std::runtime_error("write_trajectory: stream error");
}

/// Parses a trajectory and checks the schema version, the scene hash, tick
/// contiguity and every per-tick dimension.
inline TrajectoryRecord read_trajectory(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_trajectory: empty input");
  const json header = json::parse(line);
  if (header.value("format", std::string()) != kTrajectoryFormat)
    throw std::runtime_error("read_trajectory: not a trajectory file");
  TrajectoryRecord rec;
  rec.schema_version = header.at("schema_version").get<int>();
  if (rec.schema_version != kTrajectorySchemaVersion)
    throw std::runtime_error("read_trajectory: schema version " + std::to_string(rec.schema_version) +
                             " is not supported (expected " + std::to_string(kTrajectorySchemaVersion) + ")");
  rec.name = header.at("name").get<std::string>();
  rec.kind = script_kind_from_string(header.at("kind").get<std::string>());
  rec.scene = scene_from_json(header.at("scene"));
  rec.scene_hash = scene_hash(rec.scene);
  if (hex64(rec.scene_hash) != header.at("scene_hash").get<std::string>())
    throw std::runtime_error("read_trajectory: scene hash mismatch");
  const std::size_t d = header.at("joint_count").get<std::size_t>();
  const std::size_t l = header.at("sensor_count").get<std::size_t>();
  if (d != rec.joint_count() || l != rec.sensor_count())
    throw std::runtime_error("read_trajectory: header dimensions do not match the scene");
  if (header.at("timestep").get<double>() != rec.scene.timestep || header.at("substeps").get<int>() != rec.scene.substeps)
    throw std::runtime_error("read_trajectory: header timestep does not match the scene");
  rec.gt_theta = params_from_json(header.at("gt_theta"));
  rec.initial_joints = header.at("initial_joints").get<std::vector<double>>();
  if (rec.initial_joints.size() != d) throw std::runtime_error("read_trajectory: initial joint dimension mismatch");
  rec.initial_pose = pose_from_json(header.at("initial_pose"));

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.at("tick").get<std::size_t>() != rec.ticks.size())
      throw std::runtime_error("read_trajectory: ticks are not contiguous at " + std::to_string(rec.ticks.size()));
    TickRecord tick;
    tick.control.target_joint_positions = j.at("control").get<std::vector<double>>();
    tick.observation = observation_from_json(j.at("observation"));
    tick.gt_pose = pose_from_json(j.at("gt_pose"));
    if (tick.control.target_joint_positions.size() != d || tick.observation.joint_positions.size() != d ||
        tick.observation.sensors.size() != l)
      throw std::runtime_error("read_trajectory: dimension mismatch at tick " + std::to_string(rec.ticks.size()));
    rec.ticks.push_back(std::move(tick));
  }
  return rec;
}

inline void save_trajectory(const std::filesystem::path& path, const TrajectoryRecord& rec) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_trajectory(os, rec);
}

inline TrajectoryRecord load_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_trajectory(is);
}

// ---- Experiment config --------------------------------------------------------

/// Declarative experiment: trajectories are either scripted from specs or
/// loaded from files; configs are recipes, optionally expanded along
/// ablation axes.
struct ExperimentConfig {
  int schema_version = kExperimentSchemaVersion;
  std::vector<TrajectorySpec> trajectories;
  std::vector<std::string> trajectory_files;
  std::vector<TrackerRecipe> configs;
  std::vector<std::string> ablations;  // axes applied to every config
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;

  /// Recipes after ablation expansion; a base config is kept once.
  std::vector<TrackerRecipe> expanded_configs() const {
    std::vector<TrackerRecipe> out;
    for (const auto& c : configs) {
      out.push_back(c);
      for (const auto& axis : ablations)
        for (auto& v : ablate(c, ablation_axis_from_string(axis))) out.push_back(std::move(v));
    }
    return out;
  }
};

inline json to_json_value(const ExperimentConfig& c) {
  json trajs = json::array();
  for (const auto& t : c.trajectories) trajs.push_back(to_json_value(t));
  json configs = json::array();
  for (const auto& r : c.configs) configs.push_back(to_json_value(r));
  return {{"schema_version", c.schema_version}, {"trajectories", trajs}, {"trajectory_files", c.trajectory_files},
          {"configs", configs},                 {"ablations", c.ablations}, {"seeds", c.seeds},
          {"jobs", c.jobs}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  c.schema_version = j.value("schema_version", kExperimentSchemaVersion);
  if (c.schema_version != kExperimentSchemaVersion)
    throw std::runtime_error("experiment config: unsupported schema version " + std::to_string(c.schema_version));
  for (const auto& t : j.value("trajectories", json::array())) c.trajectories.push_back(trajectory_spec_from_json(t));
  c.trajectory_files = j.value("trajectory_files", std::vector<std::string>{});
  for (const auto& r : j.at("configs")) c.configs.push_back(recipe_from_json(r));
  c.ablations = j.value("ablations", std::vector<std::string>{});
  for (const auto& a : c.ablations) ablation_axis_from_string(a);
  if (j.contains("seeds")) {
    c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  } else {
    const auto n = j.value("repetitions", std::size_t{1});
    for (std::size_t i = 0; i < n; ++i) c.seeds.push_back(i);
  }
  c.jobs = j.value("jobs", std::size_t{1});
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return experiment_config_from_json(json::parse(is));
}

// ---- Metrics ------------------------------------------------------------------

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV field quoting for free text such as error messages.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline constexpr const char* kTimeseriesHeader = "trajectory,config,seed,tick,add,best_lane";
inline constexpr const char* kSummaryHeader =
    "trajectory,config,seed,ticks,mean_add,std_add,max_add,final_add,divergent_lane_ticks,error";
inline constexpr const char* kAggregateHeader =
    "trajectory,config,runs,errors,mean_add,std_of_mean_add,mean_std_add,mean_max_add,mean_final_add";
inline constexpr const char* kUpdatesHeader = "trajectory,config,seed,tick,eta,entropy,kl,distinct_ancestors";

inline void write_schema_line(std::ostream& os, const char* kind, const char* header) {
  os << "# " << kind << " schema " << kMetricsSchemaVersion << '\n' << header << '\n';
}

inline void write_timeseries(std::ostream& os, const std::vector<RunResult>& results) {
  write_schema_line(os, "timeseries", kTimeseriesHeader);
  for (const auto& r : results)
    for (std::size_t t = 0; t < r.add.size(); ++t)
      os << r.trajectory << ',' << r.config << ',' << r.seed << ',' << t << ',' << fmt_double(r.add[t]) << ','
         << r.best_lane[t] << '\n';
}

inline void write_summary(std::ostream& os, const std::vector<RunResult>& results) {
  write_schema_line(os, "summary", kSummaryHeader);
  for (const auto& r : results)
    os << r.trajectory << ',' << r.config << ',' << r.seed << ',' << r.add.size() << ','
       << fmt_double(r.summary.mean_add) << ',' << fmt_double(r.summary.std_add) << ','
       << fmt_double(r.summary.max_add) << ',' << fmt_double(r.summary.final_add) << ',' << r.divergent_events << ','
       << csv_field(r.error) << '\n';
}

struct AggregateRow {
  std::string trajectory;  // "*" for the row over all trajectories
  std::string config;
  std::size_t runs = 0;
  std::size_t errors = 0;
  double mean_add = 0.0;         // mean over runs of the per-run mean ADD
  double std_of_mean_add = 0.0;  // population std over runs of the per-run mean
  double mean_std_add = 0.0;
  double mean_max_add = 0.0;
  double mean_final_add = 0.0;
};

/// Per (trajectory, config) and per config over all trajectories, in first
/// appearance order of trajectories and configs.
inline std::vector<AggregateRow> aggregate(const std::vector<RunResult>& results) {
  std::vector<std::string> trajs, configs;
  auto note = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : results) {
    note(trajs, r.trajectory);
    note(configs, r.config);
  }
  auto reduce = [&](const std::string& traj, const std::string& config) {
    AggregateRow row{traj, config};
    std::vector<double> means;
    for (const auto& r : results) {
      if (r.config != config || (traj != "*" && r.trajectory != traj)) continue;
      ++row.runs;
      if (!r.error.empty()) ++row.errors;
      means.push_back(r.summary.mean_add);
      row.mean_std_add += r.summary.std_add;
      row.mean_max_add += r.summary.max_add;
      row.mean_final_add += r.summary.final_add;
    }
    if (row.runs == 0) return row;
    const double n = static_cast<double>(row.runs);
    const RunSummary s = summarize(means);
    row.mean_add = s.mean_add;
    row.std_of_mean_add = s.std_add;
    row.mean_std_add /= n;
    row.mean_max_add /= n;
    row.mean_final_add /= n;
    return row;
  };
  std::vector<AggregateRow> out;
  for (const auto& t : trajs)
    for (const auto& c : configs) {
      AggregateRow row = reduce(t, c);
      if (row.runs > 0) out.push_back(row);
    }
  for (const auto& c : configs) out.push_back(reduce("*", c));
  return out;
}

inline void write_aggregate(std::ostream& os, const std::vector<AggregateRow>& rows) {
  write_schema_line(os, "aggregate", kAggregateHeader);
  for (const auto& a : rows)
    os << a.trajectory << ',' << a.config << ',' << a.runs << ',' << a.errors << ',' << fmt_double(a.mean_add) << ','
       << fmt_double(a.std_of_mean_add) << ',' << fmt_double(a.mean_std_add) << ',' << fmt_double(a.mean_max_add)
       << ',' << fmt_double(a.mean_final_add) << '\n';
}

inline void write_updates(std::ostream& os, const std::vector<RunResult>& results) {
  write_schema_line(os, "updates", kUpdatesHeader);
  for (const auto& r : results)
    for (const auto& u : r.updates) {
      std::vector<std::size_t> s = u.sources;
      std::sort(s.begin(), s.end());
      const auto distinct = static_cast<std::size_t>(std::unique(s.begin(), s.end()) - s.begin());
      os << r.trajectory << ',' << r.config << ',' << r.seed << ',' << u.tick << ',' << fmt_double(u.eta) << ','
         << fmt_double(u.entropy) << ',' << fmt_double(u.kl) << ',' << distinct << '\n';
    }
}

inline constexpr const char* kTimeseriesFile = "timeseries.csv";
inline constexpr const char* kSummaryFile = "summary.csv";
inline constexpr const char* kAggregateFile = "aggregate.csv";
inline constexpr const char* kUpdatesFile = "updates.csv";

/// Writes the four metrics files into `dir`, creating it if needed.
inline void emit_metrics(const std::filesystem::path& dir, const std::vector<RunResult>& results) {
  if (results.empty()) throw std::invalid_argument("emit_metrics: no results");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open(kTimeseriesFile);
    write_timeseries(os, results);
  }
  {
    auto os = open(kSummaryFile);
    write_summary(os, results);
  }
  {
    auto os = open(kAggregateFile);
    write_aggregate(os, aggregate(results));
  }
  {
    auto os = open(kUpdatesFile);
    write_updates(os, results);
  }
}

// ---- Reading metrics back -----------------------------------------------------

/// Splits one CSV line, honouring double-quoted fields.
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

/// Rebuilds run results from a timeseries file plus the matching summary
/// file (for error strings and divergence counts). Summary statistics are
/// recomputed from the per-tick rows.
inline std::vector<RunResult> read_runs(const std::filesystem::path& dir) {
  auto open = [&](const char* name, const char* header) {
    auto is = std::make_unique<std::ifstream>(dir / name);
    if (!*is) throw std::runtime_error("cannot open " + (dir / name).string());
    std::string schema, cols;
    std::getline(*is, schema);
    std::getline(*is, cols);
    if (schema.rfind("# ", 0) != 0 || schema.find(" schema " + std::to_string(kMetricsSchemaVersion)) == std::string::npos)
      throw std::runtime_error(std::string(name) + ": unsupported schema line");
    if (cols != header) throw std::runtime_error(std::string(name) + ": unexpected columns");
    return is;
  };
  std::vector<RunResult> runs;
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::size_t> index;
  {
    auto is = open(kSummaryFile, kSummaryHeader);
    std::string line;
    while (std::getline(*is, line)) {
      const auto f = split_csv(line);
      if (f.size() != 10) throw std::runtime_error("summary.csv: malformed row");
      RunResult r;
      r.trajectory = f[0];
      r.config = f[1];
      r.seed = std::stoull(f[2]);
      r.divergent_events = std::stoull(f[8]);
      r.error = f[9];
      if (!r.error.empty()) r.summary = {std::stod(f[4]), std::stod(f[5]), std::stod(f[6]), std::stod(f[7])};
      index[{r.trajectory, r.config, r.seed}] = runs.size();
      runs.push_back(std::move(r));
    }
  }
  {
    auto is = open(kTimeseriesFile, kTimeseriesHeader);
    std::string line;
    while (std::getline(*is, line)) {
      const auto f = split_csv(line);
      if (f.size() != 6) throw std::runtime_error("timeseries.csv: malformed row");
      auto it = index.find({f[0], f[1], std::stoull(f[2])});
      if (it == index.end()) throw std::runtime_error("timeseries.csv: run missing from summary.csv");
      RunResult& r = runs[it->second];
      if (std::stoull(f[3]) != r.add.size()) throw std::runtime_error("timeseries.csv: ticks not contiguous");
      r.add.push_back(std::stod(f[4]));
      r.best_lane.push_back(std::stoull(f[5]));
    }
  }
  for (auto& r : runs)
    if (r.error.empty()) r.summary = summarize(r.add);
  return runs;
}

}  // namespace inhand
