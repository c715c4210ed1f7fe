#include "trograph/kinematics.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

#include "json.hpp"
#include "trograph/errors.hpp"

namespace tro::kin {
namespace {

namespace pt = boost::property_tree;

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fmt3(const se3::Vector3& v) { return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z()); }

double parse_number(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  if (b < e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc{} || !std::all_of(r.ptr, e, [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
    throw ParseError("URDF: bad number '" + s + "' in " + context);
  }
  return v;
}

se3::Vector3 parse_triple(const std::string& s, const std::string& context) {
  std::istringstream ss(s);
  std::string a, b, c, extra;
  if (!(ss >> a >> b >> c) || (ss >> extra)) throw ParseError("URDF: expected three numbers in " + context);
  return {parse_number(a, context), parse_number(b, context), parse_number(c, context)};
}

}  // namespace

std::string_view to_string(JointType t) {
  switch (t) {
    case JointType::Revolute: return "revolute";
    case JointType::Prismatic: return "prismatic";
    case JointType::Fixed: return "fixed";
  }
  return "fixed";
}

bool Joint::operator==(const Joint& o) const {
  return name == o.name && type == o.type && parent_link == o.parent_link &&
         child_link == o.child_link && origin_xyz == o.origin_xyz && origin_rpy == o.origin_rpy &&
         origin.rotation == o.origin.rotation && origin.translation == o.origin.translation &&
         axis == o.axis && lower == o.lower && upper == o.upper && dof_index == o.dof_index;
}

KinematicHand KinematicHand::build(std::string name, std::vector<Link> links, std::vector<Joint> joints) {
  if (links.empty()) throw StructureError("hand has no links");
  const int nl = static_cast<int>(links.size());
  std::map<std::string, int> seen;
  for (int i = 0; i < nl; ++i) {
    if (!seen.emplace(links[i].name, i).second) throw StructureError("duplicate link '" + links[i].name + "'");
    links[i].parent_joint = -1;
  }
  KinematicHand h;
  std::vector<std::vector<int>> children(static_cast<std::size_t>(nl));
  for (int j = 0; j < static_cast<int>(joints.size()); ++j) {
    Joint& jt = joints[j];
    if (jt.parent_link < 0 || jt.parent_link >= nl || jt.child_link < 0 || jt.child_link >= nl) {
      throw StructureError("joint '" + jt.name + "' references an unknown link");
    }
    Link& child = links[jt.child_link];
    if (child.parent_joint != -1) {
      throw StructureError("link '" + child.name + "' has more than one parent joint");
    }
    child.parent_joint = j;
    children[jt.parent_link].push_back(j);
    jt.origin = {se3::rpy_to_matrix(jt.origin_rpy), jt.origin_xyz};
    jt.dof_index = -1;
    if (jt.actuated()) {
      const double n = jt.axis.norm();
      if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("joint '" + jt.name + "' has a zero axis");
      // renormalizing a unit vector is not idempotent in floating point
      if (std::abs(n - 1.0) > 1e-12) jt.axis /= n;
      if (!(jt.lower <= jt.upper)) throw ValidationError("joint '" + jt.name + "' has lower > upper");
      jt.dof_index = static_cast<int>(h.actuated_.size());
      h.actuated_.push_back(j);
    } else {
      jt.axis = se3::Vector3::UnitX();
      jt.lower = jt.upper = 0.0;
    }
  }
  std::vector<int> roots;
  for (int i = 0; i < nl; ++i) {
    if (links[i].parent_joint == -1) roots.push_back(i);
  }
  if (roots.size() != 1) {
    throw StructureError(roots.empty() ? "joint graph has no root (cycle)" : "joint graph is not a single tree");
  }
  h.root_ = roots.front();
  std::queue<int> frontier;
  frontier.push(h.root_);
  int reached = 0;
  while (!frontier.empty()) {
    const int l = frontier.front();
    frontier.pop();
    ++reached;
    for (int j : children[l]) {
      h.traversal_.push_back(j);
      frontier.push(joints[j].child_link);
    }
  }
  if (reached != nl) throw StructureError("joint graph contains a cycle");
  h.name_ = std::move(name);
  h.links_ = std::move(links);
  h.joints_ = std::move(joints);
  return h;
}

std::optional<int> KinematicHand::find_link(std::string_view name) const {
  for (int i = 0; i < link_count(); ++i) {
    if (links_[i].name == name) return i;
  }
  return std::nullopt;
}

int KinematicHand::link_index(std::string_view name) const {
  const auto i = find_link(name);
  if (!i) throw InvalidArgument("unknown link '" + std::string(name) + "'");
  return *i;
}

int KinematicHand::depth() const {
  int best = 0;
  for (int i = 0; i < link_count(); ++i) {
    int d = 1;
    for (int l = i; links_[l].parent_joint != -1; l = joints_[links_[l].parent_joint].parent_link) ++d;
    best = std::max(best, d);
  }
  return best;
}

Eigen::VectorXd KinematicHand::lower_limits() const {
  Eigen::VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints_[actuated_[i]].lower;
  return v;
}

Eigen::VectorXd KinematicHand::upper_limits() const {
  Eigen::VectorXd v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints_[actuated_[i]].upper;
  return v;
}

bool KinematicHand::within_limits(const JointVector& q) const {
  return q.size() == dof() && (q.array() >= lower_limits().array()).all() &&
         (q.array() <= upper_limits().array()).all();
}

JointVector KinematicHand::clamp(const JointVector& q) const {
  return q.cwiseMax(lower_limits()).cwiseMin(upper_limits());
}

KinematicHand KinematicHand::with_clouds(std::vector<pc::Points> clouds) const {
  if (static_cast<int>(clouds.size()) != link_count()) throw InvalidArgument("one cloud per link required");
  KinematicHand h = *this;
  for (int i = 0; i < link_count(); ++i) h.links_[i].cloud = std::move(clouds[i]);
  return h;
}

bool KinematicHand::has_all_clouds() const {
  return std::all_of(links_.begin(), links_.end(), [](const Link& l) { return l.cloud.rows() > 0; });
}

KinematicHand parse_urdf(const std::string& document) {
  pt::ptree tree;
  try {
    std::istringstream in(document);
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("URDF: " + e.message(), static_cast<int>(e.line()));
  }
  const auto robot = tree.get_child_optional("robot");
  if (!robot) throw ParseError("URDF: missing <robot> element");
  const std::string name = robot->get<std::string>("<xmlattr>.name", "hand");

  std::vector<Link> links;
  std::map<std::string, int> link_ids;
  for (const auto& [tag, node] : *robot) {
    if (tag != "link") continue;
    const auto lname = node.get_optional<std::string>("<xmlattr>.name");
    if (!lname || lname->empty()) throw ParseError("URDF: link without a name");
    if (link_ids.count(*lname)) throw StructureError("duplicate link '" + *lname + "'");
    link_ids[*lname] = static_cast<int>(links.size());
    links.push_back(Link{*lname, -1, {}});
  }

  std::vector<Joint> joints;
  for (const auto& [tag, node] : *robot) {
    if (tag != "joint") continue;
    Joint j;
    j.name = node.get<std::string>("<xmlattr>.name", "");
    const std::string type = node.get<std::string>("<xmlattr>.type", "");
    const std::string ctx = "joint '" + j.name + "'";
    if (type == "revolute") {
      j.type = JointType::Revolute;
    } else if (type == "prismatic") {
      j.type = JointType::Prismatic;
    } else if (type == "fixed") {
      j.type = JointType::Fixed;
    } else {
      throw ValidationError("URDF: unsupported joint type '" + type + "' for " + ctx);
    }
    const auto parent = node.get_optional<std::string>("parent.<xmlattr>.link");
    const auto child = node.get_optional<std::string>("child.<xmlattr>.link");
    if (!parent || !child) throw ParseError("URDF: " + ctx + " lacks parent or child");
    if (!link_ids.count(*parent) || !link_ids.count(*child)) {
      throw StructureError("URDF: " + ctx + " references an undeclared link");
    }
    j.parent_link = link_ids[*parent];
    j.child_link = link_ids[*child];
    if (const auto xyz = node.get_optional<std::string>("origin.<xmlattr>.xyz")) j.origin_xyz = parse_triple(*xyz, ctx);
    if (const auto rpy = node.get_optional<std::string>("origin.<xmlattr>.rpy")) j.origin_rpy = parse_triple(*rpy, ctx);
    if (j.actuated()) {
      if (const auto axis = node.get_optional<std::string>("axis.<xmlattr>.xyz")) j.axis = parse_triple(*axis, ctx);
      const auto lower = node.get_optional<std::string>("limit.<xmlattr>.lower");
      const auto upper = node.get_optional<std::string>("limit.<xmlattr>.upper");
      if (!lower || !upper) throw ValidationError("URDF: actuated " + ctx + " is missing limits");
      j.lower = parse_number(*lower, ctx);
      j.upper = parse_number(*upper, ctx);
    }
    joints.push_back(std::move(j));
  }
  return KinematicHand::build(name, std::move(links), std::move(joints));
}

std::string to_urdf(const KinematicHand& hand) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\"?>\n<robot name=\"" << hand.name() << "\">\n";
  for (const Link& l : hand.links()) out << "  <link name=\"" << l.name << "\"/>\n";
  for (const Joint& j : hand.joints()) {
    out << "  <joint name=\"" << j.name << "\" type=\"" << to_string(j.type) << "\">\n"
        << "    <parent link=\"" << hand.links()[j.parent_link].name << "\"/>\n"
        << "    <child link=\"" << hand.links()[j.child_link].name << "\"/>\n"
        << "    <origin xyz=\"" << fmt3(j.origin_xyz) << "\" rpy=\"" << fmt3(j.origin_rpy) << "\"/>\n";
    if (j.actuated()) {
      out << "    <axis xyz=\"" << fmt3(j.axis) << "\"/>\n"
          << "    <limit lower=\"" << fmt(j.lower) << "\" upper=\"" << fmt(j.upper) << "\"/>\n";
    }
    out << "  </joint>\n";
  }
  out << "</robot>\n";
  return out.str();
}

KinematicHand load_hand(const std::filesystem::path& urdf, const std::optional<std::filesystem::path>& link_dir) {
  std::ifstream in(urdf);
  if (!in) throw ValidationError("cannot open URDF " + urdf.string());
  std::stringstream ss;
  ss << in.rdbuf();
  KinematicHand hand = parse_urdf(ss.str());
  if (!link_dir) return hand;
  std::vector<pc::Points> clouds;
  for (const Link& l : hand.links()) {
    const auto path = *link_dir / (l.name + ".xyz");
    clouds.push_back(std::filesystem::exists(path) ? pc::read_xyz(path).points() : pc::Points(0, 3));
  }
  return hand.with_clouds(std::move(clouds));
}

namespace {

se3::Transform joint_motion(const Joint& j, double value) {
  switch (j.type) {
    case JointType::Revolute: return {se3::exp_so3(j.axis * value), se3::Vector3::Zero()};
    case JointType::Prismatic: return se3::Transform::from_translation(j.axis * value);
    case JointType::Fixed: return se3::Transform::identity();
  }
  return se3::Transform::identity();
}

void check_q(const KinematicHand& hand, const JointVector& q) {
  if (q.size() != hand.dof()) {
    throw InvalidArgument("joint vector has " + std::to_string(q.size()) + " entries, hand has " +
                          std::to_string(hand.dof()) + " actuated joints");
  }
}

}  // namespace

std::vector<se3::Transform> forward_kinematics(const KinematicHand& hand, const JointVector& q) {
  check_q(hand, q);
  std::vector<se3::Transform> poses(static_cast<std::size_t>(hand.link_count()));
  for (int id : hand.traversal()) {
    const Joint& j = hand.joints()[id];
    const double value = j.actuated() ? q[j.dof_index] : 0.0;
    poses[j.child_link] = se3::compose(se3::compose(poses[j.parent_link], j.origin), joint_motion(j, value));
  }
  return poses;
}

std::vector<Eigen::Matrix<double, 6, Eigen::Dynamic>> fk_jacobian(const KinematicHand& hand, const JointVector& q) {
  const auto poses = forward_kinematics(hand, q);
  std::vector<Eigen::Matrix<double, 6, Eigen::Dynamic>> jac;
  jac.reserve(poses.size());
  for (int i = 0; i < hand.link_count(); ++i) {
    Eigen::Matrix<double, 6, Eigen::Dynamic> m = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, hand.dof());
    const se3::Vector3 p = poses[i].translation;
    for (int l = i; hand.links()[l].parent_joint != -1;) {
      const Joint& j = hand.joints()[hand.links()[l].parent_joint];
      if (j.actuated()) {
        const se3::Transform frame = se3::compose(poses[j.parent_link], j.origin);
        const se3::Vector3 axis = frame.rotation * j.axis;
        if (j.type == JointType::Revolute) {
          m.block<3, 1>(0, j.dof_index) = axis.cross(p - frame.translation);
          m.block<3, 1>(3, j.dof_index) = axis;
        } else {
          m.block<3, 1>(0, j.dof_index) = axis;
        }
      }
      l = j.parent_link;
    }
    jac.push_back(std::move(m));
  }
  return jac;
}

double link_length(const Link& link) {
  if (link.cloud.rows() == 0) return 0.0;
  return (link.cloud.colwise().maxCoeff() - link.cloud.colwise().minCoeff()).norm();
}

EmbodimentSimilarity embodiment_similarity(const KinematicHand& original, const KinematicHand& modified) {
  if (original.link_count() != modified.link_count() || original.dof() != modified.dof()) {
    throw InvalidArgument("embodiment_similarity: hands differ in topology");
  }
  double sl = 0.0;
  for (int i = 0; i < original.link_count(); ++i) {
    if (original.links()[i].name != modified.links()[i].name) {
      throw InvalidArgument("embodiment_similarity: link order differs at index " + std::to_string(i));
    }
    const double l = link_length(original.links()[i]);
    if (!(l > 0.0)) {
      throw InvalidArgument("embodiment_similarity: link '" + original.links()[i].name + "' has zero length");
    }
    sl += std::abs(link_length(modified.links()[i]) - l) / l;
  }
  double sj = 0.0;
  const Eigen::VectorXd lo_a = original.lower_limits(), hi_a = original.upper_limits();
  const Eigen::VectorXd lo_b = modified.lower_limits(), hi_b = modified.upper_limits();
  for (int i = 0; i < original.dof(); ++i) {
    const double inter = std::max(0.0, std::min(hi_a[i], hi_b[i]) - std::max(lo_a[i], lo_b[i]));
    const double uni = std::max(hi_a[i], hi_b[i]) - std::min(lo_a[i], lo_b[i]);
    // degenerate intervals overlap fully only when equal
    sj += uni > 0.0 ? inter / uni : (lo_a[i] == lo_b[i] ? 1.0 : 0.0);
  }
  return {1.0 - sl / original.link_count(), original.dof() > 0 ? sj / original.dof() : 1.0};
}

HandMeta HandMeta::load(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ValidationError("cannot open hand metadata " + json_path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    HandMeta m;
    m.palm_link = j.value("palm_link", std::string{});
    for (const auto& f : j.value("fingertips", nlohmann::json::array())) {
      const auto off = f.at("offset").get<std::vector<double>>();
      if (off.size() != 3) throw ValidationError("fingertip offset must have 3 entries");
      m.fingertips.push_back({f.at("link").get<std::string>(), {off[0], off[1], off[2]}});
    }
    if (j.contains("palm_normal")) {
      const auto n = j.at("palm_normal").get<std::vector<double>>();
      if (n.size() != 3) throw ValidationError("palm_normal must have 3 entries");
      m.palm_normal = se3::Vector3(n[0], n[1], n[2]);
      if (!(m.palm_normal.norm() > 0.0)) throw ValidationError("palm_normal must be non-zero");
      m.palm_normal.normalize();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(json_path.string() + ": " + e.what());
  }
}

void HandMeta::save(const std::filesystem::path& json_path) const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["palm_link"] = palm_link;
  j["palm_normal"] = {palm_normal.x(), palm_normal.y(), palm_normal.z()};
  j["fingertips"] = nlohmann::json::array();
  for (const auto& f : fingertips) {
    j["fingertips"].push_back({{"link", f.link}, {"offset", {f.offset.x(), f.offset.y(), f.offset.z()}}});
  }
  std::ofstream(json_path) << j.dump(2) << '\n';
}

}  // namespace tro::kin
