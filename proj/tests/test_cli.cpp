#include "doctest.h"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "oaslam/dataset.hpp"
#include "oaslam/eval.hpp"

using namespace oaslam;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("oaslam_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::vector<std::string> lines_of(const std::string& path) {
  std::vector<std::string> out;
  std::ifstream f(path);
  for (std::string line; std::getline(f, line);) out.push_back(line);
  return out;
}

const char* kNoisy = R"({"seed": 5, "trajectory": {"laps": 1},
  "noise": {"pixel_sigma": 1, "range_sigma": 0.02, "embedding_sigma": 0.05,
            "odometry_translation_sigma": 0.01, "odometry_rotation_sigma": 0.003}})";

}  // namespace

TEST_CASE("cli: simulate, slam and eval are byte-deterministic") {
  TempDir dir("det");
  write_file(dir / "cfg.json", kNoisy);
  for (const std::string run : {"a", "b"}) {
    const std::string out = dir / run;
    REQUIRE(cli({"simulate", "--config", dir / "cfg.json", "--out", out}).code == 0);
    REQUIRE(cli({"slam", "--config", dir / "cfg.json", "--dataset", out + "/dataset.ndjson", "--out", out}).code == 0);
    REQUIRE(cli({"eval", "--trajectory", out + "/trajectory.ndjson", "--map", out + "/map.ndjson", "--truth",
                 out + "/truth.ndjson", "--config", dir / "cfg.json", "--out", out, "--csv"})
                .code == 0);
  }
  for (const char* f : {"dataset.ndjson", "truth.ndjson", "map.ndjson", "trajectory.ndjson", "decisions.ndjson",
                        "report.json", "eval_report.ndjson", "eval_report.txt", "trajectory.csv", "map.csv"}) {
    INFO(f);
    CHECK(slurp(dir / (std::string("a/") + f)) == slurp(dir / (std::string("b/") + f)));
  }

  // The effective config alone reproduces the dataset.
  REQUIRE(cli({"simulate", "--config", dir / "a/effective_config.json", "--out", dir / "c"}).code == 0);
  CHECK(slurp(dir / "c/dataset.ndjson") == slurp(dir / "a/dataset.ndjson"));

  // A different seed changes it.
  REQUIRE(cli({"simulate", "--config", dir / "cfg.json", "--seed", "6", "--out", dir / "d"}).code == 0);
  CHECK(slurp(dir / "d/dataset.ndjson") != slurp(dir / "a/dataset.ndjson"));
}

TEST_CASE("cli: configuration and input errors exit with 1") {
  TempDir dir("err");
  write_file(dir / "bad.json", R"({"noise": {"range_sigma": -0.1}})");
  auto r = cli({"simulate", "--config", dir / "bad.json", "--out", dir / "x"});
  CHECK(r.code == 1);
  CHECK(r.err.find("noise.range_sigma") != std::string::npos);

  r = cli({"slam", "--dataset", dir / "missing.ndjson", "--out", dir / "x"});
  CHECK(r.code == 1);

  REQUIRE(cli({"simulate", "--out", dir / "s"}).code == 0);
  const auto lines = lines_of(dir / "s/dataset.ndjson");
  std::string text;
  for (int i = 0; i < 9; ++i) text += lines[static_cast<std::size_t>(i)] + "\n";
  text += lines[9].substr(0, lines[9].size() / 2) + "\n";
  write_file(dir / "trunc.ndjson", text);
  r = cli({"slam", "--dataset", dir / "trunc.ndjson", "--out", dir / "x"});
  CHECK(r.code == 1);
  CHECK(r.err.find("trunc.ndjson:10") != std::string::npos);

  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"slam"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("cli: event counts for a one-lap, two-object world") {
  TempDir dir("count");
  write_file(dir / "cfg.json", R"({"trajectory": {"laps": 1},
      "world": {"objects": [{"position": [4, -1.5, 1], "class": 0}, {"position": [8, 5.5, 1], "class": 1}]},
      "beacons": {"enabled": true}})");
  REQUIRE(cli({"simulate", "--config", dir / "cfg.json", "--out", dir.path.string()}).code == 0);
  const auto records = read_dataset_file(dir / "dataset.ndjson");
  const auto truth = read_truth_file(dir / "truth.ndjson");
  const std::size_t n = truth.poses.size();
  std::map<std::string, std::size_t> count;
  for (const auto& r : records) ++count[record_type(r)];
  CHECK(records.size() == 5 * n);
  CHECK(count["odom"] == n - 1);
  CHECK(count["abs_fix"] == 1);
  CHECK(count["partial_pose"] == n);
  CHECK(count["sonar_ping"] == n);
  CHECK(count["camera_frame"] == n);
  CHECK(count["beacon_ranges"] == n);
  CHECK(truth.objects.size() == 2);
}

TEST_CASE("cli: eval of the truth against itself is zero") {
  TempDir dir("self");
  REQUIRE(cli({"simulate", "--out", dir.path.string()}).code == 0);
  // Truth pose lines double as a trajectory file.
  std::string poses;
  for (const auto& line : lines_of(dir / "truth.ndjson")) {
    if (nlohmann::json::parse(line).at("type") == "pose") poses += line + "\n";
  }
  write_file(dir / "est.ndjson", poses);
  const auto r = cli({"eval", "--trajectory", dir / "est.ndjson", "--truth", dir / "truth.ndjson", "--out",
                      dir.path.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(lines_of(dir / "eval_report.ndjson").at(0));
  CHECK(j.at("type") == "ape");
  CHECK(j.at("ape").get<double>() == 0.0);
}

TEST_CASE("cli: beacons recover a noiseless track") {
  TempDir dir("beacons");
  write_file(dir / "cfg.json", R"({"trajectory": {"laps": 1}, "beacons": {"enabled": true}})");
  REQUIRE(cli({"simulate", "--config", dir / "cfg.json", "--out", dir.path.string()}).code == 0);
  REQUIRE(cli({"beacons", "--config", dir / "cfg.json", "--ranges", dir / "dataset.ndjson", "--out",
               dir.path.string()})
              .code == 0);
  const auto truth = read_truth_file(dir / "truth.ndjson");
  const auto track = lines_of(dir / "track.ndjson");
  REQUIRE(track.size() == truth.poses.size());
  int solved = 0;
  for (std::size_t i = 0; i < track.size(); ++i) {
    const auto j = nlohmann::json::parse(track[i]);
    CHECK(j.at("type") == "track_point");
    if (j.at("x").is_null()) continue;
    ++solved;
    const Vec3& p = truth.poses[i].pose.translation();
    CHECK(std::hypot(j.at("x").get<double>() - p.x(), j.at("y").get<double>() - p.y()) < 1e-6);
  }
  CHECK(solved > static_cast<int>(track.size()) * 9 / 10);
}

TEST_CASE("cli: ablate writes four rows") {
  TempDir dir("ablate");
  write_file(dir / "cfg.json", kNoisy);
  REQUIRE(cli({"simulate", "--config", dir / "cfg.json", "--out", dir.path.string()}).code == 0);
  const auto r = cli({"ablate", "--config", dir / "cfg.json", "--dataset", dir / "dataset.ndjson", "--truth",
                      dir / "truth.ndjson", "--out", dir.path.string()});
  REQUIRE(r.code == 0);
  const auto rows = lines_of(dir / "ablation.ndjson");
  REQUIRE(rows.size() == 4);
  CHECK(nlohmann::json::parse(rows[0]).at("config") == "odometry-only");
  CHECK(nlohmann::json::parse(rows[3]).at("landmarks").get<int>() > 0);
  CHECK(slurp(dir / "ablation.txt") == r.out);
}
