#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "trograph/kinematics.hpp"
#include "trograph/pointcloud.hpp"
#include "trograph/se3.hpp"

namespace tro::synth {

enum class HandTemplate { TwoFinger, ThreeFinger, PlanarChain3 };

std::string to_string(HandTemplate t);
HandTemplate parse_template(const std::string& name);

/// Planar two-link finger hung from the palm. Flexion about the finger's
/// local y axis moves the tip toward the palm centre.
struct FingerGeometry {
  std::string proximal_joint, distal_joint, tip_link;
  double base_radius = 0.0;  // radial offset of the proximal joint
  double base_drop = 0.0;    // proximal joint sits this far below the palm frame
  double yaw = 0.0;          // radial direction in the palm frame
  double l1 = 0.0, l2 = 0.0;
};

struct GeneratedHand {
  HandTemplate kind = HandTemplate::TwoFinger;
  double scale = 1.0;
  std::string urdf;
  std::vector<std::pair<std::string, pc::Points>> link_clouds;
  kin::HandMeta meta;
  std::vector<FingerGeometry> fingers;  // empty for templates without a grasp closure

  kin::KinematicHand hand() const;
};

/// Deterministic per (template, scale, seed). Lengths and link clouds scale
/// linearly; joint limits do not.
GeneratedHand generate_hand(HandTemplate kind, double scale = 1.0, std::uint64_t seed = 0, std::string name = "");

enum class Shape { Sphere, Box, Cylinder };
std::string to_string(Shape s);

/// Centred at the origin. Sphere: radius. Box: half extents. Cylinder: radius
/// and half height, axis along y.
struct ObjectSpec {
  Shape shape = Shape::Sphere;
  double radius = 0.03;
  se3::Vector3 half_extents = se3::Vector3::Constant(0.02);
  double half_height = 0.03;

  void validate() const;
  /// Unsigned distance from p to the surface.
  double surface_distance(const se3::Vector3& p) const;
  /// Distance from the centre to the surface along unit direction d.
  double ray_to_surface(const se3::Vector3& d) const;
  double top() const;  // highest z of the surface
  nlohmann::json to_json() const;
  static ObjectSpec from_json(const nlohmann::json& j);
};

pc::PointCloud sample_object(const ObjectSpec& spec, int points, std::uint64_t seed);

struct Demo {
  std::string object;
  kin::JointVector q;
  se3::Transform base = se3::Transform::identity();  // palm in the object frame
  double fingertip_distance = 0.0;                  // worst fingertip-to-surface distance
};

struct DemoBatch {
  std::vector<Demo> demos;
  int skipped = 0;
};

/// Largest fingertip-to-surface distance for a hand configuration.
double fingertip_distance(const kin::KinematicHand& hand, const kin::HandMeta& meta, const kin::JointVector& q,
                          const se3::Transform& base, const ObjectSpec& object);
double fingertip_distance(const kin::KinematicHand& hand, const kin::HandMeta& meta,
                          const std::vector<se3::Transform>& link_poses, const ObjectSpec& object);

/// Analytic pinch (two fingers) or tripod (three fingers) closures from
/// above, with palm yaw drawn from [-yaw_range, yaw_range]. Closures that
/// are out of reach or fail the 2 mm check are skipped.
DemoBatch generate_demos(const GeneratedHand& hand, const ObjectSpec& object, const std::string& object_name, int n,
                         double yaw_range, std::uint64_t seed);

struct NamedObject {
  std::string name;
  ObjectSpec spec;
};

/// Cycles sphere / box / cylinder with sizes drawn from fixed ranges.
std::vector<NamedObject> default_objects(int count, std::uint64_t seed);

struct DatasetSpec {
  HandTemplate hand = HandTemplate::TwoFinger;
  double hand_scale = 1.0;
  std::vector<NamedObject> objects;
  int demos_per_object = 1;
  double yaw_range = 0.0;
  int object_points = 1024;
  std::uint64_t seed = 0;
};

struct DatasetSummary {
  std::string hand_name;
  int demos = 0;
  int skipped = 0;
};

/// hands/<name>/{hand.urdf, hand.json, links/*.xyz}, objects/<obj>.{xyz,json},
/// demos/<index>.json
DatasetSummary write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

struct DatasetObject {
  pc::PointCloud cloud;
  std::optional<ObjectSpec> spec;
};

struct DemoRecord {
  std::string object;
  kin::JointVector q;
  se3::Transform base = se3::Transform::identity();
};

struct Dataset {
  kin::KinematicHand hand;
  kin::HandMeta meta;
  std::map<std::string, DatasetObject> objects;
  std::vector<DemoRecord> demos;
};

inline constexpr int kDemoSchemaVersion = 1;

/// Loads the single hand under hands/ (or `hand_name`), every object and demo.
Dataset load_dataset(const std::filesystem::path& dir, const std::string& hand_name = "");

nlohmann::json demo_to_json(const Demo& d, const kin::KinematicHand& hand);
DemoRecord demo_from_json(const nlohmann::json& j, const kin::KinematicHand& hand);

}  // namespace tro::synth
