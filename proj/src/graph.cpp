#include "trograph/graph.hpp"

#include <cmath>
#include <fstream>

#include "trograph/errors.hpp"
#include "trograph/rng.hpp"

namespace tro::graph {

using nlohmann::json;

LinkGeometryEncoder LinkGeometryEncoder::make(std::uint64_t seed, int basis_points, int embed_dim) {
  LinkGeometryEncoder enc;
  enc.basis = pc::BasisPointSet::generate(basis_points, seed);
  Rng rng = Rng::stream(seed, 2);
  const int in = basis_points + 4;
  enc.w1.resize(in, embed_dim);
  enc.w2.resize(embed_dim, embed_dim);
  for (Eigen::Index i = 0; i < enc.w1.size(); ++i) enc.w1.data()[i] = rng.normal() / std::sqrt(double(in));
  for (Eigen::Index i = 0; i < enc.w2.size(); ++i) enc.w2.data()[i] = rng.normal() / std::sqrt(double(embed_dim));
  enc.b1 = Eigen::RowVectorXd::Zero(embed_dim);
  enc.b2 = Eigen::RowVectorXd::Zero(embed_dim);
  return enc;
}

Eigen::RowVectorXd LinkGeometryEncoder::encode(const pc::Points& local_cloud) const {
  if (local_cloud.rows() == 0) return Eigen::RowVectorXd::Zero(embed_dim());
  const pc::UnitSphereFrame frame = pc::unit_sphere_frame(local_cloud);
  Eigen::RowVectorXd x(w1.rows());
  x << pc::bps_encode(local_cloud, basis).transpose(), frame.centroid.transpose(), frame.scale;
  const Eigen::RowVectorXd h = (x * w1 + b1).array().tanh().matrix();
  return h * w2 + b2;
}

int LinkNodeSet::real_count() const {
  int n = 0;
  for (bool m : mask) n += m ? 1 : 0;
  return n;
}

std::vector<int> LinkNodeSet::real_rows() const {
  std::vector<int> rows;
  for (int i = 0; i < static_cast<int>(mask.size()); ++i) {
    if (mask[i]) rows.push_back(i);
  }
  return rows;
}

LinkNodeSet LinkNodeSet::with_poses(const PoseMatrix& p) const {
  if (p.rows() != poses.rows()) throw InvalidArgument("with_poses: row count mismatch");
  LinkNodeSet out = *this;
  out.poses = p;
  for (int i = 0; i < padded(); ++i) {
    if (!mask[i]) out.poses.row(i).setZero();
  }
  return out;
}

LinkNodeSet build_link_nodes(const kin::KinematicHand& hand, const LinkGeometryEncoder& encoder,
                             const std::vector<se3::Transform>& link_poses, int link_pad) {
  const int l = hand.link_count();
  if (static_cast<int>(link_poses.size()) != l) throw InvalidArgument("build_link_nodes: one pose per link required");
  if (link_pad < l) throw InvalidArgument("build_link_nodes: hand has more links than the padding");
  LinkNodeSet nodes;
  nodes.poses = PoseMatrix::Zero(link_pad, 6);
  nodes.geom = Eigen::MatrixXd::Zero(link_pad, encoder.embed_dim());
  nodes.centers = pc::Points::Zero(link_pad, 3);
  nodes.scales = Eigen::VectorXd::Zero(link_pad);
  nodes.mask.assign(static_cast<std::size_t>(link_pad), false);
  for (int i = 0; i < l; ++i) {
    const kin::Link& link = hand.links()[i];
    try {
      nodes.poses.row(i) = se3::log_map(link_poses[i]).vector().transpose();
    } catch (const SingularityError&) {
      throw SingularityError("build_link_nodes: singular log map for link '" + link.name + "'");
    }
    nodes.geom.row(i) = encoder.encode(link.cloud);
    if (link.cloud.rows() > 0) {
      const auto frame = pc::unit_sphere_frame(link.cloud);
      nodes.centers.row(i) = frame.centroid.transpose();
      nodes.scales[i] = frame.scale;
    }
    nodes.mask[i] = true;
  }
  return nodes;
}

LinkNodeSet build_link_nodes(const kin::KinematicHand& hand, const LinkGeometryEncoder& encoder,
                             const kin::JointVector& q, const se3::Transform& base, int link_pad) {
  auto poses = kin::forward_kinematics(hand, q);
  for (auto& p : poses) p = se3::compose(base, p);
  return build_link_nodes(hand, encoder, poses, link_pad);
}

int EdgeSet::upper_index(int j, int k, int link_pad) {
  // rows of the strict upper triangle, enumerated row by row
  return j * link_pad - j * (j + 1) / 2 + (k - j - 1);
}

se3::Vector6 EdgeSet::object_link_edge(int patch, int link) const {
  return object_link.row(patch * link_pad + link).transpose();
}

se3::Vector6 EdgeSet::link_link_edge(int j, int k) const {
  if (j == k) throw InvalidArgument("link_link_edge: self edges are not defined");
  if (j < k) return link_link.row(upper_index(j, k, link_pad)).transpose();
  // exp(-xi) = exp(xi)^-1
  return -link_link.row(upper_index(k, j, link_pad)).transpose();
}

EdgeSet build_edges(const pc::ObjectNodeSet& objects, const LinkNodeSet& links) {
  EdgeSet e;
  e.patches = objects.patch_count();
  e.link_pad = links.padded();
  const int lp = e.link_pad;
  e.object_link = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(e.patches) * lp, 6);
  e.link_link = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lp) * (lp - 1) / 2, 6);
  std::vector<se3::Transform> link_tf(static_cast<std::size_t>(lp));
  std::vector<se3::Transform> link_inv(static_cast<std::size_t>(lp));
  for (int j = 0; j < lp; ++j) {
    if (!links.mask[j]) continue;
    link_tf[j] = se3::exp_map(se3::Pose6::from_vector(links.poses.row(j).transpose()));
    link_inv[j] = se3::inverse(link_tf[j]);
  }
  for (int i = 0; i < e.patches; ++i) {
    // object patches carry identity rotation and their center as translation
    const se3::Transform obj_inv = se3::Transform::from_translation(-objects.centers.row(i).transpose());
    for (int j = 0; j < lp; ++j) {
      if (!links.mask[j]) continue;
      e.object_link.row(i * lp + j) = se3::log_map_nearest(se3::compose(obj_inv, link_tf[j])).vector().transpose();
    }
  }
  for (int j = 0; j < lp; ++j) {
    if (!links.mask[j]) continue;
    for (int k = j + 1; k < lp; ++k) {
      if (!links.mask[k]) continue;
      e.link_link.row(EdgeSet::upper_index(j, k, lp)) =
          se3::log_map_nearest(se3::compose(link_inv[j], link_tf[k])).vector().transpose();
    }
  }
  return e;
}

TroGraph TroGraph::make(pc::ObjectNodeSet objects, LinkNodeSet links, GraphMeta meta) {
  if (objects.patch_count() < 1) throw InvalidArgument("graph needs at least one object patch");
  if (static_cast<int>(links.mask.size()) != links.padded() || links.geom.rows() != links.padded() ||
      links.centers.rows() != links.padded() || links.scales.size() != links.padded()) {
    throw InvalidArgument("link node arrays disagree in length");
  }
  if (links.real_count() == 0) throw InvalidArgument("graph has no real links");
  if (!links.poses.allFinite()) throw InvalidArgument("link poses must be finite");
  for (int i = 0; i < links.padded(); ++i) {
    if (links.mask[i]) continue;
    links.poses.row(i).setZero();
    links.geom.row(i).setZero();
    links.centers.row(i).setZero();
    links.scales[i] = 0.0;
  }
  TroGraph g;
  g.edges_ = build_edges(objects, links);
  g.objects_ = std::move(objects);
  g.links_ = std::move(links);
  g.meta_ = std::move(meta);
  return g;
}

TroGraph TroGraph::with_link_poses(const PoseMatrix& poses) const {
  return make(objects_, links_.with_poses(poses), meta_);
}

namespace {

template <typename M>
json rows_to_json(const M& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd json_to_rows(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ParseError("graph: '" + what + "' must have " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError("graph: '" + what + "' row " + std::to_string(r) + " must have " +
                       std::to_string(cols) + " columns");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ParseError("graph: non-numeric entry in '" + what + "'");
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("graph: missing key '") + key + "'");
  return j.at(key);
}

}  // namespace

json serialize_graph(const TroGraph& g) {
  json doc;
  doc["schema_version"] = kGraphSchemaVersion;
  doc["meta"] = {{"hand_name", g.meta().hand_name},
                 {"P", g.patches()},
                 {"L_pad", g.link_pad()},
                 {"seed", g.meta().seed},
                 {"link_names", g.meta().link_names}};
  const auto& o = g.objects();
  doc["object_nodes"] = {{"centers", rows_to_json(o.centers)}, {"scale", o.scale}, {"features", rows_to_json(o.features)}};
  const auto& l = g.links();
  json mask = json::array();
  for (bool m : l.mask) mask.push_back(m);
  doc["link_nodes"] = {{"poses", rows_to_json(l.poses)},
                       {"geom_embed", rows_to_json(l.geom)},
                       {"centers", rows_to_json(l.centers)},
                       {"scales", std::vector<double>(l.scales.data(), l.scales.data() + l.scales.size())},
                       {"mask", mask}};
  json e_or = json::array();
  for (int i = 0; i < g.patches(); ++i) {
    e_or.push_back(rows_to_json(g.edges().object_link.middleRows(static_cast<Eigen::Index>(i) * g.link_pad(), g.link_pad())));
  }
  doc["edges"] = {{"e_or", e_or}, {"e_rr", rows_to_json(g.edges().link_link)}};
  return doc;
}

TroGraph deserialize_graph(const json& doc) {
  try {
    if (field(doc, "schema_version").get<int>() != kGraphSchemaVersion) throw ParseError("graph: unsupported schema_version");
    const json& meta = field(doc, "meta");
    const int p = field(meta, "P").get<int>();
    const int lp = field(meta, "L_pad").get<int>();
    if (p < 1 || lp < 1) throw ParseError("graph: P and L_pad must be positive");
    GraphMeta gm;
    gm.hand_name = field(meta, "hand_name").get<std::string>();
    gm.seed = field(meta, "seed").get<std::uint64_t>();
    if (meta.contains("link_names")) gm.link_names = meta.at("link_names").get<std::vector<std::string>>();

    const json& on = field(doc, "object_nodes");
    pc::ObjectNodeSet objects;
    objects.centers = json_to_rows(field(on, "centers"), p, 3, "object_nodes.centers");
    objects.scale = field(on, "scale").get<double>();
    const json& feats = field(on, "features");
    const Eigen::Index fdim = feats.is_array() && !feats.empty() && feats[0].is_array() ? static_cast<Eigen::Index>(feats[0].size()) : 0;
    objects.features = json_to_rows(feats, p, fdim, "object_nodes.features");

    const json& ln = field(doc, "link_nodes");
    LinkNodeSet links;
    links.poses = json_to_rows(field(ln, "poses"), lp, 6, "link_nodes.poses");
    const json& geom = field(ln, "geom_embed");
    const Eigen::Index gdim = geom.is_array() && !geom.empty() && geom[0].is_array() ? static_cast<Eigen::Index>(geom[0].size()) : 0;
    links.geom = json_to_rows(geom, lp, gdim, "link_nodes.geom_embed");
    links.centers = json_to_rows(field(ln, "centers"), lp, 3, "link_nodes.centers");
    const auto scales = field(ln, "scales").get<std::vector<double>>();
    const auto mask = field(ln, "mask").get<std::vector<bool>>();
    if (static_cast<int>(scales.size()) != lp || static_cast<int>(mask.size()) != lp) {
      throw ParseError("graph: link_nodes.scales and mask must have L_pad entries");
    }
    links.scales = Eigen::Map<const Eigen::VectorXd>(scales.data(), lp);
    links.mask = mask;

    const json& edges = field(doc, "edges");
    const json& e_or = field(edges, "e_or");
    if (!e_or.is_array() || static_cast<int>(e_or.size()) != p) throw ParseError("graph: edges.e_or must have P blocks");
    Eigen::MatrixXd stored_or(static_cast<Eigen::Index>(p) * lp, 6);
    for (int i = 0; i < p; ++i) {
      stored_or.middleRows(static_cast<Eigen::Index>(i) * lp, lp) = json_to_rows(e_or[i], lp, 6, "edges.e_or");
    }
    const Eigen::MatrixXd stored_rr = json_to_rows(field(edges, "e_rr"), static_cast<Eigen::Index>(lp) * (lp - 1) / 2, 6, "edges.e_rr");

    TroGraph g = TroGraph::make(std::move(objects), std::move(links), std::move(gm));
    const double err_or = (g.edges().object_link - stored_or).cwiseAbs().maxCoeff();
    const double err_rr = stored_rr.size() ? (g.edges().link_link - stored_rr).cwiseAbs().maxCoeff() : 0.0;
    if (!(err_or <= 1e-9) || !(err_rr <= 1e-9)) {
      throw IntegrityError("graph: stored edges disagree with node poses (max deviation " +
                           std::to_string(std::max(err_or, err_rr)) + ")");
    }
    return g;
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph: ") + e.what());
  }
}

void save_graph(const std::filesystem::path& path, const TroGraph& g) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_graph(g).dump() << '\n';
}

TroGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open graph " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return deserialize_graph(doc);
}

GraphBuilder GraphBuilder::make(int patches, int link_pad, std::uint64_t seed) {
  if (patches < 1) throw InvalidArgument("patch count must be positive");
  if (link_pad < 1) throw InvalidArgument("link padding must be positive");
  GraphBuilder b;
  b.patches = patches;
  b.link_pad = link_pad;
  b.seed = seed;
  b.featurizer = pc::PatchFeaturizer::make(seed);
  b.encoder = LinkGeometryEncoder::make(seed + 1);
  return b;
}

pc::ObjectNodeSet GraphBuilder::object_nodes(const pc::PointCloud& cloud) const {
  return pc::object_patch_features(cloud, pc::partition_patches(cloud, patches, seed), featurizer);
}

namespace {
GraphMeta meta_for(const kin::KinematicHand& hand, std::uint64_t seed) {
  GraphMeta m{hand.name(), seed, {}};
  for (const auto& l : hand.links()) m.link_names.push_back(l.name);
  return m;
}
}  // namespace

TroGraph GraphBuilder::build(const kin::KinematicHand& hand, const pc::ObjectNodeSet& objects,
                             const kin::JointVector& q, const se3::Transform& base) const {
  return TroGraph::make(objects, build_link_nodes(hand, encoder, q, base, link_pad), meta_for(hand, seed));
}

TroGraph GraphBuilder::build(const kin::KinematicHand& hand, const pc::ObjectNodeSet& objects,
                             const std::vector<se3::Transform>& link_poses) const {
  return TroGraph::make(objects, build_link_nodes(hand, encoder, link_poses, link_pad), meta_for(hand, seed));
}

}  // namespace tro::graph
