#include "oaslam/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "oaslam/errors.hpp"

namespace oaslam {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw InputError(std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw InputError(std::string("field '") + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw InputError(std::string("field '") + key + "' must be finite");
  return x;
}

std::vector<double> numbers(const json& j, const char* key, std::size_t expected = 0) {
  const json& v = field(j, key);
  if (!v.is_array()) throw InputError(std::string("field '") + key + "' must be an array");
  if (expected && v.size() != expected) {
    throw InputError(std::string("field '") + key + "' must have " + std::to_string(expected) + " entries");
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number() || !std::isfinite(e.get<double>())) {
      throw InputError(std::string("field '") + key + "' must hold finite numbers");
    }
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::optional<double>> optional_numbers(const json& j, const char* key) {
  std::vector<std::optional<double>> out;
  auto it = j.find(key);
  if (it == j.end()) return out;
  if (!it->is_array()) throw InputError(std::string("field '") + key + "' must be an array");
  for (const auto& e : *it) {
    if (e.is_null()) {
      out.emplace_back(std::nullopt);
    } else if (e.is_number() && std::isfinite(e.get<double>())) {
      out.emplace_back(e.get<double>());
    } else {
      throw InputError(std::string("field '") + key + "' must hold finite numbers or null");
    }
  }
  return out;
}

json optional_array(const std::vector<std::optional<double>>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(x ? json(*x) : json(nullptr));
  return a;
}

json pose_json(const Pose3& p, json& j) {
  const auto& q = p.rotation();
  j["rotation"] = {q.w(), q.x(), q.y(), q.z()};
  j["translation"] = {p.translation().x(), p.translation().y(), p.translation().z()};
  return j;
}

Pose3 pose_from(const json& j) {
  const auto q = numbers(j, "rotation", 4);
  const auto t = numbers(j, "translation", 3);
  Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  if (std::abs(quat.norm() - 1.0) > 1e-6) throw InputError("field 'rotation' must be a unit quaternion");
  quat.normalize();
  return Pose3(quat, Vec3(t[0], t[1], t[2]));
}

struct RecordWriter {
  json operator()(const OdometryRecord& r) const {
    json j{{"type", "odom"}, {"t", r.t}};
    pose_json(r.delta, j);
    return j;
  }
  json operator()(const AbsoluteFixRecord& r) const {
    return {{"type", "abs_fix"}, {"t", r.t}, {"x", r.x}, {"y", r.y}, {"heading", r.heading}};
  }
  json operator()(const PartialPoseRecord& r) const {
    return {{"type", "partial_pose"}, {"t", r.t}, {"depth", r.depth}, {"pitch", r.pitch}, {"roll", r.roll}};
  }
  json operator()(const CameraFrameRecord& r) const {
    json dets = json::array();
    for (const auto& d : r.detections) {
      const auto& e = d.embedding.values();
      dets.push_back({{"u", d.centroid.u},
                      {"v", d.centroid.v},
                      {"embedding", std::vector<double>(e.data(), e.data() + e.size())},
                      {"mask_area", d.mask_area}});
    }
    return {{"type", "camera_frame"}, {"t", r.t}, {"detections", dets}};
  }
  json operator()(const SonarPing& r) const {
    json beams = json::array();
    for (const auto& b : r.beams) beams.push_back({{"bearing", b.bearing}, {"intensities", b.intensities}});
    return {{"type", "sonar_ping"}, {"t", r.timestamp}, {"beams", beams}};
  }
  json operator()(const RangeObservation& r) const {
    return {{"type", "beacon_ranges"},
            {"t", r.timestamp},
            {"ranges", optional_array(r.ranges)},
            {"bearings", optional_array(r.bearings)}};
  }
};

json parse_json_line(const std::string& line) {
  try {
    json j = json::parse(line);
    if (!j.is_object()) throw InputError("record must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON: ") + e.what());
  }
}

std::string located(const std::string& source, std::size_t line, const std::string& msg) {
  return source + ":" + std::to_string(line) + ": " + msg;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  return in;
}

}  // namespace

double record_time(const DatasetRecord& r) {
  return std::visit(
      [](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, SonarPing> || std::is_same_v<T, RangeObservation>) {
          return x.timestamp;
        } else {
          return x.t;
        }
      },
      r);
}

std::string record_type(const DatasetRecord& r) {
  static const char* names[] = {"odom", "abs_fix", "partial_pose", "camera_frame", "sonar_ping", "beacon_ranges"};
  return names[r.index()];
}

std::string format_record(const DatasetRecord& r) { return std::visit(RecordWriter{}, r).dump(); }

DatasetRecord parse_record(const std::string& line) {
  const json j = parse_json_line(line);
  const json& type = field(j, "type");
  if (!type.is_string()) throw InputError("field 'type' must be a string");
  const std::string kind = type.get<std::string>();
  const double t = number(j, "t");
  if (kind == "odom") return OdometryRecord{t, pose_from(j)};
  if (kind == "abs_fix") return AbsoluteFixRecord{t, number(j, "x"), number(j, "y"), number(j, "heading")};
  if (kind == "partial_pose") return PartialPoseRecord{t, number(j, "depth"), number(j, "pitch"), number(j, "roll")};
  if (kind == "camera_frame") {
    CameraFrameRecord r{t, {}};
    const json& dets = field(j, "detections");
    if (!dets.is_array()) throw InputError("field 'detections' must be an array");
    for (const auto& d : dets) {
      const auto e = numbers(d, "embedding");
      Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
      const double area = d.contains("mask_area") ? number(d, "mask_area") : 0.0;
      r.detections.push_back(Detection{Pixel{number(d, "u"), number(d, "v")}, Embedding(v), area});
    }
    return r;
  }
  if (kind == "sonar_ping") {
    SonarPing p;
    p.timestamp = t;
    const json& beams = field(j, "beams");
    if (!beams.is_array()) throw InputError("field 'beams' must be an array");
    for (const auto& b : beams) p.beams.push_back(SonarBeam{number(b, "bearing"), numbers(b, "intensities")});
    return p;
  }
  if (kind == "beacon_ranges") {
    RangeObservation r;
    r.timestamp = t;
    r.ranges = optional_numbers(j, "ranges");
    r.bearings = optional_numbers(j, "bearings");
    return r;
  }
  throw InputError("unknown record type '" + kind + "'");
}

std::vector<DatasetRecord> read_dataset(std::istream& in, const std::string& source) {
  std::vector<DatasetRecord> out;
  std::map<std::string, double> last_t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      DatasetRecord r = parse_record(line);
      const std::string type = record_type(r);
      const double t = record_time(r);
      auto it = last_t.find(type);
      if (it != last_t.end() && t < it->second) throw InputError("timestamp decreases within '" + type + "' records");
      last_t[type] = t;
      out.push_back(std::move(r));
    } catch (const Error& e) {
      throw InputError(located(source, n, e.what()));
    }
  }
  return out;
}

std::vector<DatasetRecord> read_dataset_file(const std::string& path) {
  auto in = open_input(path);
  return read_dataset(in, path);
}

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records) {
  for (const auto& r : records) out << format_record(r) << '\n';
}

std::string format_pose_line(const TimedPose& p) {
  json j{{"type", "pose"}, {"t", p.t}};
  pose_json(p.pose, j);
  return j.dump();
}

void write_truth(std::ostream& out, const GroundTruth& truth) {
  for (const auto& p : truth.poses) out << format_pose_line(p) << '\n';
  for (const auto& o : truth.objects) {
    out << json{{"type", "object"},
                {"id", o.id},
                {"class", o.class_id},
                {"position", {o.position.x(), o.position.y(), o.position.z()}}}
               .dump()
        << '\n';
  }
  for (const auto& f : truth.frames) {
    out << json{{"type", "frame"}, {"t", f.t}, {"object_ids", f.object_ids}}.dump() << '\n';
  }
}

GroundTruth read_truth(std::istream& in, const std::string& source) {
  GroundTruth truth;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const json j = parse_json_line(line);
      const std::string type = field(j, "type").get<std::string>();
      if (type == "pose") {
        truth.poses.push_back({number(j, "t"), pose_from(j)});
      } else if (type == "object") {
        const auto p = numbers(j, "position", 3);
        truth.objects.push_back({static_cast<int>(number(j, "id")), static_cast<int>(number(j, "class")),
                                 Vec3(p[0], p[1], p[2])});
      } else if (type == "frame") {
        FrameTruth f{number(j, "t"), {}};
        for (double id : numbers(j, "object_ids")) f.object_ids.push_back(static_cast<int>(id));
        truth.frames.push_back(std::move(f));
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError(located(source, n, e.what()));
    } catch (const Error& e) {
      throw InputError(located(source, n, e.what()));
    }
  }
  return truth;
}

GroundTruth read_truth_file(const std::string& path) {
  auto in = open_input(path);
  return read_truth(in, path);
}

std::vector<TimedPose> read_trajectory_file(const std::string& path) { return read_truth_file(path).poses; }

}  // namespace oaslam
