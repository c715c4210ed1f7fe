#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "trograph/kinematics.hpp"
#include "trograph/pointcloud.hpp"
#include "trograph/se3.hpp"

namespace tro::graph {

/// One Pose6 per row, columns [rho; theta].
using PoseMatrix = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;
using LinkMask = std::vector<bool>;

inline constexpr int kDefaultLinkPad = 25;
inline constexpr int kLinkBasisPoints = 124;
inline constexpr int kLinkEmbedDim = 128;

/// Fixed seeded two-layer perceptron mapping concat(BPS, centroid, scale)
/// of a link's local cloud to its geometry embedding.
struct LinkGeometryEncoder {
  pc::BasisPointSet basis;
  Eigen::MatrixXd w1, w2;  // (in x hidden), (hidden x out)
  Eigen::RowVectorXd b1, b2;

  static LinkGeometryEncoder make(std::uint64_t seed, int basis_points = kLinkBasisPoints,
                                  int embed_dim = kLinkEmbedDim);
  int embed_dim() const { return static_cast<int>(w2.cols()); }
  /// Zero vector for a link without geometry.
  Eigen::RowVectorXd encode(const pc::Points& local_cloud) const;
};

struct LinkNodeSet {
  PoseMatrix poses;          // L_pad x 6, object frame
  Eigen::MatrixXd geom;      // L_pad x embed
  pc::Points centers;        // L_pad x 3, link-local cloud centroid
  Eigen::VectorXd scales;    // L_pad
  LinkMask mask;             // true = real link

  int padded() const { return static_cast<int>(poses.rows()); }
  int real_count() const;
  std::vector<int> real_rows() const;
  /// Same geometry, new poses; masked rows are forced to zero.
  LinkNodeSet with_poses(const PoseMatrix& poses) const;
};

/// Link nodes from explicit object-frame link transforms. Throws
/// SingularityError naming the link if a log map is singular.
LinkNodeSet build_link_nodes(const kin::KinematicHand& hand, const LinkGeometryEncoder& encoder,
                             const std::vector<se3::Transform>& link_poses, int link_pad = kDefaultLinkPad);
/// Link nodes from joint values and the hand base pose in the object frame.
LinkNodeSet build_link_nodes(const kin::KinematicHand& hand, const LinkGeometryEncoder& encoder,
                             const kin::JointVector& q, const se3::Transform& base,
                             int link_pad = kDefaultLinkPad);

struct EdgeSet {
  int patches = 0;
  int link_pad = 0;
  Eigen::MatrixXd object_link;  // (P * L_pad) x 6, row = i * L_pad + j
  Eigen::MatrixXd link_link;    // L_pad (L_pad - 1) / 2 x 6, upper triangle j < k

  static int upper_index(int j, int k, int link_pad);
  se3::Vector6 object_link_edge(int patch, int link) const;
  /// Ordered pair (j, k), j != k; the lower triangle is the group inverse of
  /// the stored upper entry.
  se3::Vector6 link_link_edge(int j, int k) const;
};

EdgeSet build_edges(const pc::ObjectNodeSet& objects, const LinkNodeSet& links);

struct GraphMeta {
  std::string hand_name;
  std::uint64_t seed = 0;
  std::vector<std::string> link_names;
};

/// Immutable T(R,O) graph. Edges are always derived from the nodes.
class TroGraph {
 public:
  static TroGraph make(pc::ObjectNodeSet objects, LinkNodeSet links, GraphMeta meta = {});

  const pc::ObjectNodeSet& objects() const { return objects_; }
  const LinkNodeSet& links() const { return links_; }
  const EdgeSet& edges() const { return edges_; }
  const GraphMeta& meta() const { return meta_; }
  int patches() const { return objects_.patch_count(); }
  int link_pad() const { return links_.padded(); }

  /// Fresh graph with new link poses and re-derived edges.
  TroGraph with_link_poses(const PoseMatrix& poses) const;

 private:
  TroGraph() = default;
  pc::ObjectNodeSet objects_;
  LinkNodeSet links_;
  EdgeSet edges_;
  GraphMeta meta_;
};

/// Object patching, featurizer and link encoder bundled under one seed.
struct GraphBuilder {
  int patches = 25;
  int link_pad = kDefaultLinkPad;
  std::uint64_t seed = 0;
  pc::PatchFeaturizer featurizer;
  LinkGeometryEncoder encoder;

  static GraphBuilder make(int patches, int link_pad, std::uint64_t seed);
  pc::ObjectNodeSet object_nodes(const pc::PointCloud& cloud) const;
  TroGraph build(const kin::KinematicHand& hand, const pc::ObjectNodeSet& objects, const kin::JointVector& q,
                 const se3::Transform& base) const;
  TroGraph build(const kin::KinematicHand& hand, const pc::ObjectNodeSet& objects,
                 const std::vector<se3::Transform>& link_poses) const;
};

inline constexpr int kGraphSchemaVersion = 1;

nlohmann::json serialize_graph(const TroGraph& g);
/// Throws ParseError on schema violations and IntegrityError when stored
/// edges differ from re-derived ones by more than 1e-9.
TroGraph deserialize_graph(const nlohmann::json& doc);

void save_graph(const std::filesystem::path& path, const TroGraph& g);
TroGraph load_graph(const std::filesystem::path& path);

}  // namespace tro::graph
