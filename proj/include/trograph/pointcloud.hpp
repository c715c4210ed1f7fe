#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace tro::pc {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Non-empty, finite N x 3 point set in meters.
class PointCloud {
 public:
  explicit PointCloud(Points points);
  const Points& points() const { return points_; }
  Eigen::Index size() const { return points_.rows(); }
  Eigen::Vector3d centroid() const { return points_.colwise().mean().transpose(); }

 private:
  Points points_;
};

PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const Points& points);
/// Little-endian: "XYZB", u32 count, count x 3 float32.
PointCloud read_xyzb(const std::filesystem::path& path);
void write_xyzb(const std::filesystem::path& path, const Points& points);
/// Dispatches on extension (.xyz or .xyzb).
PointCloud load_cloud(const std::filesystem::path& path);

/// Greedy farthest point sampling. The first index is drawn uniformly from
/// `seed`; ties in the max-min distance go to the lowest index.
std::vector<int> farthest_point_sample(const PointCloud& cloud, int k, std::uint64_t seed);
std::vector<int> farthest_point_sample_from(const PointCloud& cloud, int k, int first);

struct Partition {
  std::vector<int> labels;          // one per point, in [0, P)
  std::vector<int> center_indices;  // FPS picks
  Points centers;                   // P x 3
  int patch_count() const { return static_cast<int>(center_indices.size()); }
};

Partition partition_patches(const PointCloud& cloud, int patches, std::uint64_t seed);

struct BasisPointSet {
  Points basis;  // B x 3, inside the unit ball
  std::uint64_t seed = 0;

  static BasisPointSet generate(int count, std::uint64_t seed);
  int size() const { return static_cast<int>(basis.rows()); }
};

struct UnitSphereFrame {
  Eigen::Vector3d centroid;
  double scale;  // max distance to centroid; 0 for a degenerate cloud
};

UnitSphereFrame unit_sphere_frame(const Points& points);

/// Minimum distance from each basis point to the cloud after centering at the
/// centroid and dividing by the max point norm. Length equals basis.size().
Eigen::VectorXd bps_encode(const Points& points, const BasisPointSet& basis);
inline Eigen::VectorXd bps_encode(const PointCloud& cloud, const BasisPointSet& basis) {
  return bps_encode(cloud.points(), basis);
}

struct ObjectNodeSet {
  Points centers;            // P x 3, object frame
  double scale = 0.0;        // max distance of any object point from the centroid
  Eigen::MatrixXd features;  // P x feature_dim

  int patch_count() const { return static_cast<int>(centers.rows()); }
  /// concat(center, scale, feature) per row.
  Eigen::MatrixXd node_matrix() const;
};

/// Deterministic stand-in for a learned patch tokenizer: a patch-local BPS
/// descriptor followed by a fixed random projection.
struct PatchFeaturizer {
  BasisPointSet basis;         // 61 points by default
  Eigen::MatrixXd projection;  // basis.size() x feature_dim

  static PatchFeaturizer make(std::uint64_t seed, int basis_points = 61, int feature_dim = 64);
  int feature_dim() const { return static_cast<int>(projection.cols()); }
};

ObjectNodeSet object_patch_features(const PointCloud& cloud, const Partition& partition,
                                    const PatchFeaturizer& featurizer);

}  // namespace tro::pc
