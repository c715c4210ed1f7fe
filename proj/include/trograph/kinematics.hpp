#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trograph/pointcloud.hpp"
#include "trograph/se3.hpp"

namespace tro::kin {

enum class JointType { Revolute, Prismatic, Fixed };

std::string_view to_string(JointType t);

struct Link {
  std::string name;
  int parent_joint = -1;  // -1 for the root
  pc::Points cloud;       // local-frame geometry, may be empty

  bool operator==(const Link& o) const {
    return name == o.name && parent_joint == o.parent_joint && cloud == o.cloud;
  }
};

struct Joint {
  std::string name;
  JointType type = JointType::Fixed;
  int parent_link = -1;
  int child_link = -1;
  se3::Vector3 origin_xyz = se3::Vector3::Zero();
  se3::Vector3 origin_rpy = se3::Vector3::Zero();
  se3::Transform origin;
  se3::Vector3 axis = se3::Vector3::UnitX();
  double lower = 0.0;
  double upper = 0.0;
  int dof_index = -1;  // position in the joint vector, -1 for fixed joints

  bool actuated() const { return type != JointType::Fixed; }
  bool operator==(const Joint& o) const;
};

/// Joint values, one per actuated joint in URDF declaration order.
using JointVector = Eigen::VectorXd;

/// Immutable kinematic tree of a hand.
class KinematicHand {
 public:
  /// Validates tree structure, limits and axes; derives dof indices and
  /// traversal order.
  static KinematicHand build(std::string name, std::vector<Link> links, std::vector<Joint> joints);

  const std::string& name() const { return name_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  int link_count() const { return static_cast<int>(links_.size()); }
  int dof() const { return static_cast<int>(actuated_.size()); }
  int root_link() const { return root_; }
  /// Joint ids in parent-before-child order.
  const std::vector<int>& traversal() const { return traversal_; }
  /// Joint id of each degree of freedom.
  const std::vector<int>& actuated_joints() const { return actuated_; }
  std::optional<int> find_link(std::string_view name) const;
  int link_index(std::string_view name) const;  // throws InvalidArgument
  int depth() const;

  Eigen::VectorXd lower_limits() const;
  Eigen::VectorXd upper_limits() const;
  JointVector mid_range() const { return 0.5 * (lower_limits() + upper_limits()); }
  bool within_limits(const JointVector& q) const;
  JointVector clamp(const JointVector& q) const;

  /// Copy with link clouds replaced (one per link, empty allowed).
  KinematicHand with_clouds(std::vector<pc::Points> clouds) const;
  bool has_all_clouds() const;

  bool operator==(const KinematicHand& o) const {
    return name_ == o.name_ && links_ == o.links_ && joints_ == o.joints_;
  }

 private:
  std::string name_;
  std::vector<Link> links_;
  std::vector<Joint> joints_;
  std::vector<int> traversal_;
  std::vector<int> actuated_;
  int root_ = 0;
};

/// Parses the supported URDF subset (link, revolute/prismatic/fixed joints,
/// origin xyz/rpy, axis, limit lower/upper).
KinematicHand parse_urdf(const std::string& document);
std::string to_urdf(const KinematicHand& hand);
/// Reads the URDF and attaches `<link>.xyz` clouds from `link_dir` when given.
KinematicHand load_hand(const std::filesystem::path& urdf,
                        const std::optional<std::filesystem::path>& link_dir = std::nullopt);

/// Link poses in the hand base frame, one per link. Values outside the joint
/// limits are evaluated as given; use KinematicHand::within_limits to flag them.
std::vector<se3::Transform> forward_kinematics(const KinematicHand& hand, const JointVector& q);

/// Geometric Jacobian per link, rows [v_origin; omega] in the base frame.
std::vector<Eigen::Matrix<double, 6, Eigen::Dynamic>> fk_jacobian(const KinematicHand& hand,
                                                                  const JointVector& q);

struct EmbodimentSimilarity {
  double link_alignment;  // S_L
  double joint_overlap;   // S_J
};

/// Diameter of the link cloud's axis-aligned bounding box.
double link_length(const Link& link);

/// `original` provides the reference lengths; hands must share topology.
EmbodimentSimilarity embodiment_similarity(const KinematicHand& original,
                                           const KinematicHand& modified);

/// Side-channel hand annotations that URDF has no slot for.
struct Fingertip {
  std::string link;
  se3::Vector3 offset = se3::Vector3::Zero();  // in the link frame
};

struct HandMeta {
  std::string palm_link;
  std::vector<Fingertip> fingertips;
  se3::Vector3 palm_normal{0.0, 0.0, -1.0};  // direction the palm faces, palm frame

  static HandMeta load(const std::filesystem::path& json_path);
  void save(const std::filesystem::path& json_path) const;
};

}  // namespace tro::kin
