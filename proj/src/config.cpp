#include "oaslam/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "oaslam/errors.hpp"

namespace oaslam {

using nlohmann::json;

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string p;
  while (std::getline(ss, p, '.')) parts.push_back(p);
  return parts;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "' " + what);
}

double as_number(const json& j, const std::string& key) {
  if (!j.is_number()) bad(key, "must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad(key, "must be finite");
  return v;
}

template <int N>
Eigen::Matrix<double, N, 1> as_vector(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != N) bad(key, "must be an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = as_number(j[static_cast<std::size_t>(i)], key);
  return v;
}

Pose3 as_pose(const json& j, const std::string& key) {
  if (!j.is_object()) bad(key, "must be an object with rotation and translation");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "rotation" && it.key() != "translation") bad(key + "." + it.key(), "is not a known key");
  }
  if (!j.contains("rotation") || !j.contains("translation")) bad(key, "needs rotation [w,x,y,z] and translation [x,y,z]");
  const Eigen::Vector4d q = as_vector<4>(j["rotation"], key + ".rotation");
  if (std::abs(q.norm() - 1.0) > 1e-6) bad(key + ".rotation", "must be a unit quaternion");
  return Pose3(Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized(), as_vector<3>(j["translation"], key + ".translation"));
}

json pose_json(const Pose3& p) {
  const auto& q = p.rotation();
  return {{"rotation", {q.w(), q.x(), q.y(), q.z()}},
          {"translation", {p.translation().x(), p.translation().y(), p.translation().z()}}};
}

template <class Derived>
json vec_json(const Eigen::MatrixBase<Derived>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// Reads values at dotted paths, remembering which paths were consumed so
// leftovers can be reported as unknown keys.
class Loader {
 public:
  explicit Loader(const json& root) : root_(root) {}

  const json* find(const std::string& path) {
    known_.insert(path);
    const json* node = &root_;
    for (const auto& part : split_path(path)) {
      if (!node->is_object()) return nullptr;
      auto it = node->find(part);
      if (it == node->end()) return nullptr;
      node = &*it;
    }
    return node;
  }

  void field(const std::string& k, double& v) {
    if (auto* j = find(k)) v = as_number(*j, k);
  }
  void field(const std::string& k, int& v) {
    if (auto* j = find(k)) {
      if (!j->is_number_integer()) bad(k, "must be an integer");
      v = j->get<int>();
    }
  }
  void field(const std::string& k, std::uint64_t& v) {
    if (auto* j = find(k)) {
      if (!j->is_number_unsigned() && !(j->is_number_integer() && j->get<std::int64_t>() >= 0)) {
        bad(k, "must be a non-negative integer");
      }
      v = j->get<std::uint64_t>();
    }
  }
  void field(const std::string& k, bool& v) {
    if (auto* j = find(k)) {
      if (!j->is_boolean()) bad(k, "must be true or false");
      v = j->get<bool>();
    }
  }
  template <int N>
  void field(const std::string& k, Eigen::Matrix<double, N, 1>& v) {
    if (auto* j = find(k)) v = as_vector<N>(*j, k);
  }
  void field(const std::string& k, Pose3& v) {
    if (auto* j = find(k)) v = as_pose(*j, k);
  }
  void field(const std::string& k, std::optional<Pose3>& v) {
    if (auto* j = find(k)) v = j->is_null() ? std::nullopt : std::optional<Pose3>(as_pose(*j, k));
  }
  void field(const std::string& k, std::vector<Vec2>& v) {
    if (auto* j = find(k)) {
      if (!j->is_array()) bad(k, "must be an array of [x, y] pairs");
      v.clear();
      for (const auto& e : *j) v.push_back(as_vector<2>(e, k));
    }
  }
  void field(const std::string& k, std::vector<std::pair<int, int>>& v) {
    if (auto* j = find(k)) {
      if (!j->is_array()) bad(k, "must be an array of [a, b] class pairs");
      v.clear();
      for (const auto& e : *j) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
          bad(k, "must be an array of [a, b] class pairs");
        }
        v.emplace_back(e[0].get<int>(), e[1].get<int>());
      }
    }
  }
  void field(const std::string& k, std::vector<WorldObject>& v) {
    if (auto* j = find(k)) {
      if (!j->is_array()) bad(k, "must be an array of objects");
      v.clear();
      for (const auto& e : *j) {
        if (!e.is_object() || !e.contains("position") || !e.contains("class")) {
          bad(k, "entries need position [x,y,z] and class");
        }
        for (auto it = e.begin(); it != e.end(); ++it) {
          if (it.key() != "position" && it.key() != "class") bad(k + "[]." + it.key(), "is not a known key");
        }
        if (!e["class"].is_number_integer()) bad(k + "[].class", "must be an integer");
        v.push_back({as_vector<3>(e["position"], k + "[].position"), e["class"].get<int>()});
      }
    }
  }

  void reject_unknown() const { walk(root_, ""); }

 private:
  void walk(const json& node, const std::string& prefix) const {
    for (auto it = node.begin(); it != node.end(); ++it) {
      const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (known_.count(path)) continue;
      const bool is_section = std::any_of(known_.begin(), known_.end(), [&](const std::string& k) {
        return k.size() > path.size() && k.compare(0, path.size() + 1, path + ".") == 0;
      });
      if (!is_section) throw ConfigError("unknown config key '" + path + "'");
      if (!it->is_object()) bad(path, "must be an object");
      walk(*it, path);
    }
  }

  const json& root_;
  std::set<std::string> known_;
};

class Dumper {
 public:
  json root = json::object();

  json& slot(const std::string& path) {
    json* node = &root;
    for (const auto& part : split_path(path)) node = &(*node)[part];
    return *node;
  }
  void field(const std::string& k, double v) { slot(k) = v; }
  void field(const std::string& k, int v) { slot(k) = v; }
  void field(const std::string& k, std::uint64_t v) { slot(k) = v; }
  void field(const std::string& k, bool v) { slot(k) = v; }
  template <int N>
  void field(const std::string& k, const Eigen::Matrix<double, N, 1>& v) {
    slot(k) = vec_json(v);
  }
  void field(const std::string& k, const Pose3& v) { slot(k) = pose_json(v); }
  void field(const std::string& k, const std::optional<Pose3>& v) { slot(k) = v ? pose_json(*v) : json(nullptr); }
  void field(const std::string& k, const std::vector<Vec2>& v) {
    json a = json::array();
    for (const auto& p : v) a.push_back(vec_json(p));
    slot(k) = a;
  }
  void field(const std::string& k, const std::vector<std::pair<int, int>>& v) {
    json a = json::array();
    for (const auto& [x, y] : v) a.push_back({x, y});
    slot(k) = a;
  }
  void field(const std::string& k, const std::vector<WorldObject>& v) {
    json a = json::array();
    for (const auto& o : v) a.push_back({{"position", vec_json(o.position)}, {"class", o.class_id}});
    slot(k) = a;
  }
};

// Single list of every configurable value, shared by loading and dumping.
template <class Archive, class Config>
void visit(Archive& ar, Config& c) {
  ar.field("seed", c.seed);

  ar.field("camera.fx", c.camera.fx);
  ar.field("camera.fy", c.camera.fy);
  ar.field("camera.cx", c.camera.cx);
  ar.field("camera.cy", c.camera.cy);
  ar.field("camera.width", c.camera.width);
  ar.field("camera.height", c.camera.height);

  ar.field("sonar.horizontal_fov", c.sonar.horizontal_fov);
  ar.field("sonar.num_beams", c.sonar.num_beams);
  ar.field("sonar.range_resolution", c.sonar.range_resolution);
  ar.field("sonar.num_bins", c.sonar.num_bins);
  ar.field("sonar.vertical_aperture", c.sonar.vertical_aperture);
  ar.field("sonar.intensity_threshold", c.sonar.intensity_threshold);
  ar.field("sonar.slant_range", c.slant_range);

  ar.field("extrinsics.camera_from_body", c.extrinsics.camera_from_body);
  ar.field("extrinsics.sonar_from_body", c.extrinsics.sonar_from_body);

  ar.field("trajectory.waypoints", c.trajectory.waypoints);
  ar.field("trajectory.corner_radius", c.trajectory.corner_radius);
  ar.field("trajectory.depth", c.trajectory.depth);
  ar.field("trajectory.laps", c.trajectory.laps);
  ar.field("trajectory.speed", c.trajectory.speed);
  ar.field("trajectory.rate", c.trajectory.rate);
  ar.field("trajectory.start_time", c.trajectory.start_time);

  ar.field("world.objects", c.objects);
  ar.field("world.embedding_dim", c.prototypes.dim);
  ar.field("world.max_prototype_cosine", c.prototypes.max_cosine);
  ar.field("world.confusable_pairs", c.prototypes.confusable_pairs);
  ar.field("world.confusable_cosine", c.prototypes.confusable_cosine);
  ar.field("world.object_radius", c.object_radius);

  ar.field("noise.odometry_translation_sigma", c.noise.odometry_translation_sigma);
  ar.field("noise.odometry_rotation_sigma", c.noise.odometry_rotation_sigma);
  ar.field("noise.odometry_translation_bias", c.noise.odometry_translation_bias);
  ar.field("noise.odometry_rotation_bias", c.noise.odometry_rotation_bias);
  ar.field("noise.pixel_sigma", c.noise.pixel_sigma);
  ar.field("noise.embedding_sigma", c.noise.embedding_sigma);
  ar.field("noise.range_sigma", c.noise.range_sigma);
  ar.field("noise.multipath_probability", c.noise.multipath_probability);
  ar.field("noise.multipath_min_factor", c.noise.multipath_min_factor);
  ar.field("noise.multipath_max_factor", c.noise.multipath_max_factor);
  ar.field("noise.dropout_probability", c.noise.dropout_probability);
  ar.field("noise.depth_sigma", c.noise.depth_sigma);
  ar.field("noise.attitude_sigma", c.noise.attitude_sigma);

  ar.field("beacons.enabled", c.beacons.enabled);
  ar.field("beacons.positions", c.beacons.beacons.beacons);
  ar.field("beacons.range_sigma", c.beacons.range_sigma);
  ar.field("beacons.bearing_sigma", c.beacons.bearing_sigma);
  ar.field("beacons.initial_guess", c.beacons.initial_guess);

  ar.field("slam.max_skew", c.slam.max_skew);
  ar.field("slam.slant_correction", c.slam.slant_correction);
  ar.field("slam.landmarks_enabled", c.slam.landmarks_enabled);
  ar.field("slam.initial_pose", c.slam.initial_pose);
  ar.field("slam.prior_sigma", c.slam.prior_sigma);
  ar.field("slam.odometry_sigma", c.slam.odometry_sigma);
  ar.field("slam.partial_pose_sigma", c.slam.partial_pose_sigma);
  ar.field("slam.absolute_sigma", c.slam.absolute_sigma);
  ar.field("slam.landmark_sigma", c.slam.landmark_sigma);
  ar.field("slam.batch_check", c.slam.batch_check);

  ar.field("association.cosine_threshold", c.slam.association.cosine_threshold);
  ar.field("association.use_mahalanobis", c.slam.association.use_mahalanobis);
  ar.field("association.chi2_confidence", c.slam.association.chi2_confidence);
  ar.field("association.chi2_dof", c.slam.association.chi2_dof);
  ar.field("association.nn_radius", c.slam.association.nn_radius);
  ar.field("association.observation_sigma", c.slam.association.observation_sigma);

  ar.field("solver.max_iterations", c.slam.solver.max_iterations);
  ar.field("solver.relative_cost_tolerance", c.slam.solver.relative_cost_tolerance);
  ar.field("solver.step_tolerance", c.slam.solver.step_tolerance);
  ar.field("solver.gradient_tolerance", c.slam.solver.gradient_tolerance);
  ar.field("solver.initial_lambda", c.slam.solver.initial_lambda);
  ar.field("solver.max_lambda", c.slam.solver.max_lambda);

  ar.field("eval.match_radius", c.eval.match_radius);
  ar.field("eval.max_skew", c.eval.max_skew);
  ar.field("eval.align", c.eval.align);
}

template <class F>
void named(const char* key, F&& check) {
  try {
    check();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  named("camera", [&] { camera.validate(); });
  named("sonar", [&] { sonar.validate(); });
  named("trajectory", [&] { trajectory.validate(); });
  noise.validate();
  named("slam", [&] { slam_config(*this).validate(); });
  if (prototypes.dim < 2) throw ConfigError("world.embedding_dim must be >= 2");
  if (!(prototypes.max_cosine > -1.0 && prototypes.max_cosine <= 1.0)) {
    throw ConfigError("world.max_prototype_cosine must lie in (-1, 1]");
  }
  if (!(prototypes.confusable_cosine > -1.0 && prototypes.confusable_cosine < 1.0)) {
    throw ConfigError("world.confusable_cosine must lie in (-1, 1)");
  }
  if (!(object_radius >= 0.0)) throw ConfigError("world.object_radius must be >= 0");
  if (!(beacons.range_sigma >= 0.0)) throw ConfigError("beacons.range_sigma must be >= 0");
  if (!(beacons.bearing_sigma >= 0.0)) throw ConfigError("beacons.bearing_sigma must be >= 0");
  named("beacons.positions", [&] { beacons.beacons.validate(); });
  if (!(eval.match_radius > 0.0)) throw ConfigError("eval.match_radius must be > 0");
  if (!(eval.max_skew >= 0.0)) throw ConfigError("eval.max_skew must be >= 0");
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig config;
  Loader loader(root);
  visit(loader, config);
  loader.reject_unknown();
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string dump_run_config(const RunConfig& config) {
  Dumper dumper;
  visit(dumper, config);
  return dumper.root.dump(2);
}

SlamConfig slam_config(const RunConfig& config) {
  SlamConfig s = config.slam;
  s.camera = config.camera;
  s.sonar = config.sonar;
  s.extrinsics = config.extrinsics;
  return s;
}

WorldSpec world_spec(const RunConfig& config) {
  WorldSpec w;
  w.objects = config.objects;
  w.object_radius = config.object_radius;
  w.seed = config.seed;
  std::vector<int> classes;
  for (const auto& o : config.objects) classes.push_back(o.class_id);
  w.prototypes = make_prototypes(classes, config.prototypes, config.seed);
  check_prototypes(w.prototypes, config.prototypes);
  return w;
}

SensorSuite sensor_suite(const RunConfig& config) {
  return {config.camera, config.sonar, config.extrinsics, config.slant_range};
}

SimulationOutput simulate(const RunConfig& config) {
  config.validate();
  const auto trajectory = generate_trajectory(config.trajectory);
  auto out = render_sensors(trajectory, world_spec(config), config.noise, sensor_suite(config));
  if (config.beacons.enabled) {
    const auto ranges = render_beacon_ranges(trajectory, config.beacons.beacons, config.beacons.range_sigma,
                                             config.beacons.bearing_sigma, config.seed);
    std::vector<DatasetRecord> merged;
    merged.reserve(out.records.size() + ranges.size());
    std::size_t j = 0;
    for (auto& r : out.records) {
      while (j < ranges.size() && ranges[j].timestamp < record_time(r)) merged.emplace_back(ranges[j++]);
      merged.push_back(std::move(r));
    }
    while (j < ranges.size()) merged.emplace_back(ranges[j++]);
    out.records = std::move(merged);
  }
  return out;
}

}  // namespace oaslam
