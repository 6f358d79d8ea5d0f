#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "oaslam/beacons.hpp"
#include "oaslam/embedding.hpp"
#include "oaslam/fusion.hpp"
#include "oaslam/geometry.hpp"

namespace oaslam {

struct Detection {
  Pixel centroid;
  Embedding embedding;
  double mask_area = 0.0;
};

/// Body-frame motion since the previous odometry record (or the start).
struct OdometryRecord {
  double t;
  Pose3 delta;
};

struct AbsoluteFixRecord {
  double t;
  double x;
  double y;
  double heading;
};

struct PartialPoseRecord {
  double t;
  double depth;
  double pitch;
  double roll;
};

struct CameraFrameRecord {
  double t;
  std::vector<Detection> detections;
};

using DatasetRecord = std::variant<OdometryRecord, AbsoluteFixRecord, PartialPoseRecord,
                                   CameraFrameRecord, SonarPing, RangeObservation>;

double record_time(const DatasetRecord& r);
/// Discriminator written to the `type` field.
std::string record_type(const DatasetRecord& r);

/// One NDJSON line, without the trailing newline.
std::string format_record(const DatasetRecord& r);
/// Throws InputError describing the first bad field.
DatasetRecord parse_record(const std::string& line);

/// Parses every line and checks that `t` is non-decreasing per type. Errors
/// are reported as "<source>:<line>: <message>".
std::vector<DatasetRecord> read_dataset(std::istream& in, const std::string& source);
std::vector<DatasetRecord> read_dataset_file(const std::string& path);
void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records);

struct TimedPose {
  double t;
  Pose3 pose;
};

struct TruthObject {
  int id;
  int class_id;
  Vec3 position;
};

/// True object id behind each detection of one camera frame, in detection order.
struct FrameTruth {
  double t;
  std::vector<int> object_ids;
};

struct GroundTruth {
  std::vector<TimedPose> poses;
  std::vector<TruthObject> objects;
  std::vector<FrameTruth> frames;  // one per camera_frame record, in order
};

std::string format_pose_line(const TimedPose& p);
void write_truth(std::ostream& out, const GroundTruth& truth);
/// Reads "pose", "object" and "frame" lines; other types are skipped.
GroundTruth read_truth(std::istream& in, const std::string& source);
GroundTruth read_truth_file(const std::string& path);

/// Reads only the "pose" lines of a trajectory or truth file.
std::vector<TimedPose> read_trajectory_file(const std::string& path);

}  // namespace oaslam
