// inhand: record scripted trajectories, run trackers over them, run and
// ablate experiment grids, and aggregate metrics.
//
//   inhand record     --object foam --kind gait --seed 3 --out foam.jsonl
//   inhand track      --trajectory foam.jsonl --optimizer PBO --out run/
//   inhand experiment --config configs/default.json --out results/ --jobs 4
//   inhand ablate     --config configs/default.json --axis K --out ablate_k.json
//   inhand report     --in results/ --out summary/

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "inhand/io.hpp"

using namespace inhand;
namespace fs = std::filesystem;

namespace {

std::vector<TrajectoryRecord> load_trajectories(const ExperimentConfig& cfg, const fs::path& base) {
  std::vector<TrajectoryRecord> out;
  for (const auto& spec : cfg.trajectories) out.push_back(make_trajectory(spec));
  for (const auto& file : cfg.trajectory_files) {
    fs::path p(file);
    if (p.is_relative()) p = base / p;
    out.push_back(load_trajectory(p));
  }
  return out;
}

void print_aggregate(const std::vector<AggregateRow>& rows) {
  std::printf("%-28s %-26s %5s %6s %12s %12s %12s\n", "trajectory", "config", "runs", "errors", "mean_add_mm",
              "std_mean_mm", "mean_std_mm");
  for (const auto& r : rows)
    std::printf("%-28s %-26s %5zu %6zu %12.3f %12.3f %12.3f\n", r.trajectory.c_str(), r.config.c_str(), r.runs,
                r.errors, 1000 * r.mean_add, 1000 * r.std_of_mean_add, 1000 * r.mean_std_add);
}

std::size_t count_errors(const std::vector<RunResult>& runs) {
  std::size_t n = 0;
  for (const auto& r : runs)
    if (!r.error.empty()) {
      std::fprintf(stderr, "cell error: %s / %s / seed %llu: %s\n", r.trajectory.c_str(), r.config.c_str(),
                   static_cast<unsigned long long>(r.seed), r.error.c_str());
      ++n;
    }
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-hand pose tracking with simulation ensembles"};
  app.require_subcommand(1);

  // record
  auto* record = app.add_subcommand("record", "script a demonstration trajectory and save it as JSONL");
  std::string object = "foam", kind = "grasp-rotate", record_out;
  std::uint64_t record_seed = 0;
  double noise_scale = 1.0;
  record->add_option("--object", object, "foam | spam | banana")->capture_default_str();
  record->add_option("--kind", kind, "grasp-rotate | gait")->capture_default_str();
  record->add_option("--seed", record_seed, "script seed")->capture_default_str();
  record->add_option("--observation-noise", noise_scale, "scale of the observation noise")->capture_default_str();
  record->add_option("--out", record_out, "output .jsonl file")->required();

  // track
  auto* track = app.add_subcommand("track", "run one tracker over one trajectory");
  std::string track_in, track_out, optimizer = "REPS", noise = "med";
  std::uint64_t track_seed = 0;
  std::size_t K = 40, T = 10, lane_jobs = 1;
  double exploration = 1.0;
  track->add_option("--trajectory", track_in, "trajectory .jsonl")->required()->check(CLI::ExistingFile);
  track->add_option("--optimizer", optimizer, "WRS | REPS | PBO | EYE | OLP")->capture_default_str();
  track->add_option("--noise", noise, "initial pose noise: none | low | med | high")->capture_default_str();
  track->add_option("-K,--lanes", K, "number of simulation lanes")->capture_default_str();
  track->add_option("-T,--window", T, "ticks per optimizer update")->capture_default_str();
  track->add_option("--exploration", exploration, "scale of the exploration noise")->capture_default_str();
  track->add_option("--seed", track_seed, "tracker seed")->capture_default_str();
  track->add_option("--jobs", lane_jobs, "threads for lane stepping")->capture_default_str();
  track->add_option("--out", track_out, "metrics directory")->required();

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run a grid of (trajectory, config, seed) cells");
  std::string exp_config, exp_out;
  std::uint64_t exp_seed = 0;
  std::size_t exp_jobs = 0;
  auto* exp_seed_opt = experiment->add_option("--seed", exp_seed, "first seed; replaces the config's seed list "
                                                                  "with the same number of consecutive seeds");
  experiment->add_option("--config", exp_config, "experiment config JSON")->required()->check(CLI::ExistingFile);
  experiment->add_option("--jobs", exp_jobs, "worker threads (default: from config)");
  experiment->add_option("--out", exp_out, "metrics directory")->required();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "expand a config's recipes along ablation axes");
  std::string abl_config, abl_out;
  std::vector<std::string> axes;
  std::uint64_t abl_seed = 0;
  auto* abl_seed_opt = ablate_cmd->add_option("--seed", abl_seed, "first seed of the written config");
  ablate_cmd->add_option("--config", abl_config, "base experiment config JSON")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--axis", axes, "exploration | K | contacts_off | slip_off")->required();
  ablate_cmd->add_option("--out", abl_out, "output config JSON")->required();

  // report
  auto* report = app.add_subcommand("report", "recompute aggregate tables from metrics files");
  std::string rep_in, rep_out;
  report->add_option("--in", rep_in, "metrics directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", rep_out, "directory for aggregate.csv (default: print only)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*record) {
      const TrajectorySpec spec{object_kind_from_string(object), script_kind_from_string(kind), record_seed, noise_scale};
      const TrajectoryRecord rec = make_trajectory(spec);
      save_trajectory(record_out, rec);
      const Pose2& a = rec.ticks.front().gt_pose;
      const Pose2& b = rec.ticks.back().gt_pose;
      std::printf("%s: %zu ticks, object rotated %.3f rad, moved %.1f mm -> %s\n", rec.name.c_str(), rec.ticks.size(),
                  wrap_angle(b.angle - a.angle), 1000 * (b.translation - a.translation).norm(), record_out.c_str());
      return 0;
    }

    if (*track) {
      const TrajectoryRecord rec = load_trajectory(track_in);
      TrackerRecipe r;
      r.optimizer = default_optimizer(optimizer_kind_from_string(optimizer));
      r.name = optimizer + "-" + noise;
      r.noise = noise;
      r.K = K;
      r.T = T;
      r.exploration_scale = exploration;
      TrackerConfig cfg = instantiate(r, rec.scene, trajectory_weights(rec));
      cfg.seed = track_seed;
      cfg.jobs = lane_jobs;
      RunResult run;
      try {
        run = run_tracker(rec, cfg);
      } catch (const std::exception& e) {
        run.trajectory = rec.name;
        run.error = e.what();
      }
      run.config = r.name;
      emit_metrics(track_out, {run});
      if (!run.error.empty()) {
        std::fprintf(stderr, "tracker error: %s\n", run.error.c_str());
        return 2;
      }
      std::printf("%s %s: mean ADD %.3f mm, std %.3f mm, final %.3f mm, %.0f ticks/s -> %s\n", rec.name.c_str(),
                  r.name.c_str(), 1000 * run.summary.mean_add, 1000 * run.summary.std_add,
                  1000 * run.summary.final_add, static_cast<double>(run.add.size()) / run.wall_seconds,
                  track_out.c_str());
      return 0;
    }

    if (*experiment) {
      ExperimentConfig cfg = load_experiment_config(exp_config);
      if (*exp_seed_opt)
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = exp_seed + i;
      ExperimentSpec spec;
      spec.trajectories = load_trajectories(cfg, fs::path(exp_config).parent_path());
      spec.configs = cfg.expanded_configs();
      spec.seeds = cfg.seeds;
      spec.jobs = exp_jobs > 0 ? exp_jobs : cfg.jobs;
      std::fprintf(stderr, "running %zu trajectories x %zu configs x %zu seeds on %zu threads\n",
                   spec.trajectories.size(), spec.configs.size(), spec.seeds.size(), spec.jobs);
      const auto runs = run_experiment(spec);
      emit_metrics(exp_out, runs);
      print_aggregate(aggregate(runs));
      return count_errors(runs) == 0 ? 0 : 2;
    }

    if (*ablate_cmd) {
      ExperimentConfig cfg = load_experiment_config(abl_config);
      for (const auto& a : axes) ablation_axis_from_string(a);
      cfg.ablations = axes;
      cfg.configs = cfg.expanded_configs();
      cfg.ablations.clear();
      if (*abl_seed_opt)
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = abl_seed + i;
      std::ofstream os(abl_out);
      if (!os) throw std::runtime_error("cannot write " + abl_out);
      os << to_json_value(cfg).dump(2) << '\n';
      std::printf("%zu configs -> %s\n", cfg.configs.size(), abl_out.c_str());
      return 0;
    }

    if (*report) {
      const auto runs = read_runs(rep_in);
      const auto rows = aggregate(runs);
      print_aggregate(rows);
      if (!rep_out.empty()) {
        fs::create_directories(rep_out);
        std::ofstream os(fs::path(rep_out) / kAggregateFile);
        if (!os) throw std::runtime_error("cannot write " + rep_out);
        write_aggregate(os, rows);
      }
      return count_errors(runs) == 0 ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
