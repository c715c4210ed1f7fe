#include "trograph/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "trograph/errors.hpp"
#include "trograph/rng.hpp"

namespace tro::pc {

static_assert(std::endian::native == std::endian::little, "xyzb IO assumes a little-endian host");

PointCloud::PointCloud(Points points) : points_(std::move(points)) {
  if (points_.rows() < 1) throw InvalidArgument("point cloud must contain at least one point");
  if (!points_.allFinite()) throw InvalidArgument("point cloud contains non-finite coordinates");
}

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open point cloud " + path.string());
  std::vector<std::array<double, 3>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::array<double, 3> p{};
    std::string extra;
    if (!(ss >> p[0] >> p[1] >> p[2]) || (ss >> extra)) {
      throw ParseError(path.string() + ": expected 'x y z'", lineno);
    }
    rows.push_back(p);
  }
  Points pts(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < 3; ++c) pts(static_cast<Eigen::Index>(i), c) = rows[i][c];
  }
  return PointCloud(std::move(pts));
}

void write_xyz(const std::filesystem::path& path, const Points& points) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out << points(i, 0) << ' ' << points(i, 1) << ' ' << points(i, 2) << '\n';
  }
}

PointCloud read_xyzb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open point cloud " + path.string());
  char magic[4];
  std::uint32_t count = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, "XYZB", 4) != 0) {
    throw ParseError(path.string() + ": bad xyzb magic");
  }
  if (!in.read(reinterpret_cast<char*>(&count), sizeof(count))) {
    throw ParseError(path.string() + ": truncated xyzb header");
  }
  std::vector<float> buf(static_cast<std::size_t>(count) * 3);
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw ParseError(path.string() + ": truncated xyzb payload");
  }
  Points pts(count, 3);
  for (std::size_t i = 0; i < buf.size(); ++i) pts.data()[i] = buf[i];
  return PointCloud(std::move(pts));
}

void write_xyzb(const std::filesystem::path& path, const Points& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto count = static_cast<std::uint32_t>(points.rows());
  out.write("XYZB", 4);
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (Eigen::Index i = 0; i < points.size(); ++i) {
    const float f = static_cast<float>(points.data()[i]);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

PointCloud load_cloud(const std::filesystem::path& path) {
  if (path.extension() == ".xyzb") return read_xyzb(path);
  return read_xyz(path);
}

std::vector<int> farthest_point_sample_from(const PointCloud& cloud, int k, int first) {
  const auto n = static_cast<int>(cloud.size());
  if (k < 0 || k > n) throw InvalidArgument("farthest_point_sample: k must be in [0, N]");
  if (first < 0 || first >= n) throw InvalidArgument("farthest_point_sample: bad first index");
  std::vector<int> picks;
  picks.reserve(static_cast<std::size_t>(k));
  if (k == 0) return picks;
  const Points& p = cloud.points();
  Eigen::VectorXd mind = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  int current = first;
  for (int s = 0; s < k; ++s) {
    picks.push_back(current);
    mind = mind.cwiseMin((p.rowwise() - p.row(current)).rowwise().squaredNorm());
    int best = 0;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (mind[i] > best_d) {
        best_d = mind[i];
        best = i;
      }
    }
    current = best;
  }
  return picks;
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int k, std::uint64_t seed) {
  if (k < 0 || k > cloud.size()) throw InvalidArgument("farthest_point_sample: k must be in [0, N]");
  Rng rng(seed);
  const auto first = static_cast<int>(rng.uniform_int(0, cloud.size() - 1));
  return farthest_point_sample_from(cloud, k, first);
}

Partition partition_patches(const PointCloud& cloud, int patches, std::uint64_t seed) {
  if (patches < 1) throw InvalidArgument("partition_patches: need at least one patch");
  Partition part;
  part.center_indices = farthest_point_sample(cloud, patches, seed);
  const Points& p = cloud.points();
  part.centers.resize(patches, 3);
  for (int c = 0; c < patches; ++c) part.centers.row(c) = p.row(part.center_indices[c]);
  part.labels.assign(static_cast<std::size_t>(cloud.size()), 0);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    (part.centers.rowwise() - p.row(i)).rowwise().squaredNorm().minCoeff(&best);
    part.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return part;
}

BasisPointSet BasisPointSet::generate(int count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("basis point set needs at least one point");
  Rng rng(seed);
  BasisPointSet b;
  b.seed = seed;
  b.basis.resize(count, 3);
  for (int j = 0; j < count;) {
    const Eigen::Vector3d v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (v.squaredNorm() > 1.0) continue;
    b.basis.row(j++) = v.transpose();
  }
  return b;
}

UnitSphereFrame unit_sphere_frame(const Points& points) {
  UnitSphereFrame f;
  // Summing each coordinate in sorted order makes the centroid, and so every
  // downstream descriptor, bit-identical under row permutations.
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd col = points.col(c);
    std::sort(col.data(), col.data() + col.size());
    f.centroid[c] = col.sum() / static_cast<double>(col.size());
  }
  f.scale = std::sqrt((points.rowwise() - f.centroid.transpose()).rowwise().squaredNorm().maxCoeff());
  return f;
}

Eigen::VectorXd bps_encode(const Points& points, const BasisPointSet& basis) {
  if (points.rows() < 1) throw InvalidArgument("bps_encode: empty point set");
  const UnitSphereFrame f = unit_sphere_frame(points);
  Points normalized = points.rowwise() - f.centroid.transpose();
  if (f.scale > 0.0) normalized /= f.scale;
  Eigen::VectorXd out(basis.size());
  for (int j = 0; j < basis.size(); ++j) {
    out[j] = std::sqrt((normalized.rowwise() - basis.basis.row(j)).rowwise().squaredNorm().minCoeff());
  }
  return out;
}

Eigen::MatrixXd ObjectNodeSet::node_matrix() const {
  Eigen::MatrixXd m(patch_count(), 4 + features.cols());
  m.leftCols<3>() = centers;
  m.col(3).setConstant(scale);
  m.rightCols(features.cols()) = features;
  return m;
}

PatchFeaturizer PatchFeaturizer::make(std::uint64_t seed, int basis_points, int feature_dim) {
  PatchFeaturizer f;
  f.basis = BasisPointSet::generate(basis_points, seed);
  Rng rng = Rng::stream(seed, 1);
  f.projection.resize(basis_points, feature_dim);
  const double s = 1.0 / std::sqrt(static_cast<double>(basis_points));
  for (Eigen::Index i = 0; i < f.projection.size(); ++i) f.projection.data()[i] = s * rng.normal();
  return f;
}

ObjectNodeSet object_patch_features(const PointCloud& cloud, const Partition& partition,
                                    const PatchFeaturizer& featurizer) {
  if (partition.labels.size() != static_cast<std::size_t>(cloud.size())) {
    throw InvalidArgument("object_patch_features: partition does not match cloud");
  }
  const int patches = partition.patch_count();
  ObjectNodeSet nodes;
  nodes.centers = partition.centers;
  nodes.scale = unit_sphere_frame(cloud.points()).scale;
  nodes.features = Eigen::MatrixXd::Zero(patches, featurizer.feature_dim());
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(patches));
  for (std::size_t i = 0; i < partition.labels.size(); ++i) {
    const int label = partition.labels[i];
    if (label < 0 || label >= patches) throw InvalidArgument("object_patch_features: label out of range");
    members[static_cast<std::size_t>(label)].push_back(static_cast<Eigen::Index>(i));
  }
  for (int c = 0; c < patches; ++c) {
    const auto& idx = members[static_cast<std::size_t>(c)];
    if (idx.empty()) continue;  // empty patch keeps a zero feature
    Points patch(static_cast<Eigen::Index>(idx.size()), 3);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      patch.row(static_cast<Eigen::Index>(r)) = cloud.points().row(idx[r]);
    }
    nodes.features.row(c) = bps_encode(patch, featurizer.basis).transpose() * featurizer.projection;
  }
  return nodes;
}

}  // namespace tro::pc
