#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "oaslam/beacons.hpp"
#include "oaslam/config.hpp"
#include "oaslam/errors.hpp"
#include "oaslam/eval.hpp"
#include "oaslam/slam.hpp"

namespace oaslam {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON configuration file (defaults when omitted)");
  cmd->add_option("--seed", o.seed, "Overrides the configured seed");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
}

RunConfig load(const CommonOptions& o) {
  RunConfig c = o.config.empty() ? parse_run_config("{}") : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  return c;
}

fs::path prepare_out(const CommonOptions& o, const RunConfig& c) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError(dir.string() + ": cannot create output directory: " + ec.message());
  std::ofstream f(dir / "effective_config.json");
  if (!f) throw InputError((dir / "effective_config.json").string() + ": cannot write file");
  f << dump_run_config(c) << '\n';
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw InputError(path.string() + ": cannot write file");
  return f;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

int cmd_simulate(const CommonOptions& o, std::ostream& out) {
  const RunConfig c = load(o);
  const auto dir = prepare_out(o, c);
  const auto sim = simulate(c);
  {
    auto f = open_out(dir / "dataset.ndjson");
    write_dataset(f, sim.records);
  }
  {
    auto f = open_out(dir / "truth.ndjson");
    write_truth(f, sim.truth);
  }
  out << "wrote " << sim.records.size() << " records to " << (dir / "dataset.ndjson").string() << '\n';
  return 0;
}

int cmd_slam(const CommonOptions& o, const std::string& dataset, std::ostream& out) {
  const RunConfig c = load(o);
  const auto records = read_dataset_file(dataset);
  const auto dir = prepare_out(o, c);
  const auto result = run_slam(records, slam_config(c));
  {
    auto f = open_out(dir / "map.ndjson");
    for (const auto& lm : result.landmarks) f << format_landmark(lm) << '\n';
  }
  {
    auto f = open_out(dir / "trajectory.ndjson");
    for (const auto& p : result.trajectory) f << format_pose_line(p) << '\n';
  }
  {
    auto f = open_out(dir / "decisions.ndjson");
    for (const auto& d : result.decisions) f << format_decision(d) << '\n';
  }
  {
    auto f = open_out(dir / "report.json");
    f << format_report(result.report) << '\n';
  }
  out << "landmarks " << result.report.landmarks << ", factors " << result.report.factors << ", final cost "
      << fmt("%.6g", result.report.final_cost) << ", iterations " << result.report.total_iterations << '\n';
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& trajectory, const std::string& map,
             const std::string& truth_path, bool csv, std::ostream& out) {
  const RunConfig c = load(o);
  const auto estimate = read_trajectory_file(trajectory);
  const GroundTruth truth = read_truth_file(truth_path);
  const auto dir = prepare_out(o, c);
  const auto err = ape(estimate, truth.poses, c.eval.max_skew, c.eval.align);
  const std::string mode = err.aligned ? "aligned" : "absolute";

  std::optional<MapMatchReport> pr;
  std::vector<Landmark> landmarks;
  if (!map.empty()) {
    landmarks = read_map_file(map);
    pr = map_precision_recall(landmarks, truth, c.eval.match_radius);
  }

  {
    auto f = open_out(dir / "eval_report.ndjson");
    f << json{{"type", "ape"}, {"ape", err.ape}, {"pairs", err.pairs}, {"mode", mode}, {"max_skew", c.eval.max_skew}}.dump()
      << '\n';
    if (pr) {
      for (const auto& m : pr->matches) {
        f << json{{"type", "match"}, {"landmark", m.landmark_id}, {"object", m.object_id}, {"distance", m.distance}}.dump()
          << '\n';
      }
      f << json{{"type", "map"},
                {"precision", pr->precision},
                {"precision_defined", pr->precision_defined},
                {"recall", pr->recall},
                {"radius", pr->radius},
                {"false_positives", pr->false_positives},
                {"false_negatives", pr->false_negatives}}
               .dump()
        << '\n';
    }
  }
  std::string text = "APE (" + mode + "): " + fmt("%.6f", err.ape) + " m over " + std::to_string(err.pairs) + " pairs\n";
  if (pr) {
    text += "map precision: " + (pr->precision_defined ? fmt("%.4f", pr->precision) : std::string("undefined")) + "\n";
    text += "map recall: " + fmt("%.4f", pr->recall) + "\n";
    text += "matches: " + std::to_string(pr->matches.size()) + ", false positives: " +
            std::to_string(pr->false_positives.size()) + ", false negatives: " +
            std::to_string(pr->false_negatives.size()) + ", radius " + fmt("%.3g", pr->radius) + " m\n";
  }
  {
    auto f = open_out(dir / "eval_report.txt");
    f << text;
  }
  if (csv) {
    auto f = open_out(dir / "trajectory.csv");
    f << "timestamp,x,y,z,yaw\n";
    for (const auto& p : estimate) {
      const Vec3& t = p.pose.translation();
      f << fmt("%.17g", p.t) << ',' << fmt("%.17g", t.x()) << ',' << fmt("%.17g", t.y()) << ','
        << fmt("%.17g", t.z()) << ',' << fmt("%.17g", p.pose.yaw()) << '\n';
    }
    if (pr) {
      auto m = open_out(dir / "map.csv");
      m << "id,x,y,z\n";
      for (const auto& lm : landmarks) {
        m << lm.id << ',' << fmt("%.17g", lm.position.x()) << ',' << fmt("%.17g", lm.position.y()) << ','
          << fmt("%.17g", lm.position.z()) << '\n';
      }
    }
  }
  out << text;
  return 0;
}

int cmd_beacons(const CommonOptions& o, const std::string& ranges, std::ostream& out) {
  const RunConfig c = load(o);
  std::vector<RangeObservation> epochs;
  for (const auto& r : read_dataset_file(ranges)) {
    if (const auto* e = std::get_if<RangeObservation>(&r)) epochs.push_back(*e);
  }
  if (epochs.empty()) throw InputError(ranges + ": no beacon_ranges records");
  const auto dir = prepare_out(o, c);
  const auto track = solve_track(epochs, c.beacons.beacons, c.beacons.initial_guess);
  int gaps = 0;
  auto f = open_out(dir / "track.ndjson");
  for (const auto& p : track) {
    json j{{"type", "track_point"}, {"t", p.timestamp}};
    j["x"] = p.position ? json(p.position->x()) : json(nullptr);
    j["y"] = p.position ? json(p.position->y()) : json(nullptr);
    j["heading"] = p.heading ? json(*p.heading) : json(nullptr);
    j["residual_norm"] = p.residual_norm;
    f << j.dump() << '\n';
    gaps += !p.position;
  }
  out << "solved " << track.size() - gaps << " of " << track.size() << " epochs\n";
  return 0;
}

int cmd_ablate(const CommonOptions& o, const std::string& dataset, const std::string& truth_path, std::ostream& out) {
  const RunConfig c = load(o);
  const auto records = read_dataset_file(dataset);
  const GroundTruth truth = read_truth_file(truth_path);
  const auto dir = prepare_out(o, c);
  const auto rows = run_ablation(records, truth, default_ablation_suite(slam_config(c)), c.eval);
  const std::string table = format_ablation_table(rows);
  {
    auto f = open_out(dir / "ablation.txt");
    f << table;
  }
  {
    auto f = open_out(dir / "ablation.ndjson");
    for (const auto& r : rows) {
      f << json{{"type", "ablation_row"},
                {"config", r.name},
                {"ape", r.ape},
                {"precision", r.precision},
                {"recall", r.recall},
                {"landmarks", r.landmarks}}
               .dump()
        << '\n';
    }
  }
  out << table;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Opti-acoustic semantic SLAM toolkit", "oaslam"};
  app.require_subcommand(1);

  CommonOptions sim_o, slam_o, eval_o, beacon_o, ablate_o;
  std::string dataset, trajectory, map, truth, ranges;
  bool csv = false;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset and ground-truth sidecar");
  add_common(sim, sim_o);

  auto* slam = app.add_subcommand("slam", "Run the SLAM pipeline on a dataset");
  add_common(slam, slam_o);
  slam->add_option("--dataset", dataset, "Dataset NDJSON")->required();

  auto* ev = app.add_subcommand("eval", "APE and map precision/recall against ground truth");
  add_common(ev, eval_o);
  ev->add_option("--trajectory", trajectory, "Estimated trajectory NDJSON")->required();
  ev->add_option("--map", map, "Estimated map NDJSON");
  ev->add_option("--truth", truth, "Ground-truth sidecar NDJSON")->required();
  ev->add_flag("--csv", csv, "Also write trajectory.csv and map.csv");

  auto* bc = app.add_subcommand("beacons", "Solve a track from beacon ranges");
  add_common(bc, beacon_o);
  bc->add_option("--ranges", ranges, "NDJSON with beacon_ranges records")->required();

  auto* ab = app.add_subcommand("ablate", "Run the ablation suite on a dataset");
  add_common(ab, ablate_o);
  ab->add_option("--dataset", dataset, "Dataset NDJSON")->required();
  ab->add_option("--truth", truth, "Ground-truth sidecar NDJSON")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*sim) return cmd_simulate(sim_o, out);
    if (*slam) return cmd_slam(slam_o, dataset, out);
    if (*ev) return cmd_eval(eval_o, trajectory, map, truth, csv, out);
    if (*bc) return cmd_beacons(beacon_o, ranges, out);
    if (*ab) return cmd_ablate(ablate_o, dataset, truth, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e);
  }
  return 1;
}

}  // namespace oaslam
