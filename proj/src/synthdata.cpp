#include "trograph/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "trograph/errors.hpp"
#include "trograph/rng.hpp"

namespace tro::synth {

namespace fs = std::filesystem;
using se3::Vector3;

std::string to_string(HandTemplate t) {
  switch (t) {
    case HandTemplate::TwoFinger: return "two_finger";
    case HandTemplate::ThreeFinger: return "three_finger";
    case HandTemplate::PlanarChain3: return "planar_chain3";
  }
  return "unknown";
}

HandTemplate parse_template(const std::string& name) {
  if (name == "two_finger") return HandTemplate::TwoFinger;
  if (name == "three_finger") return HandTemplate::ThreeFinger;
  if (name == "planar_chain3") return HandTemplate::PlanarChain3;
  throw InvalidArgument("unknown hand template '" + name + "'");
}

std::string to_string(Shape s) {
  switch (s) {
    case Shape::Sphere: return "sphere";
    case Shape::Box: return "box";
    case Shape::Cylinder: return "cylinder";
  }
  return "unknown";
}

namespace {

constexpr double kPalmHalfThickness = 0.005;
constexpr double kPhalanxRadius = 0.008;
constexpr double kProximalLower = -1.2, kProximalUpper = 1.6;
constexpr double kDistalLower = 0.0, kDistalUpper = 1.6;
// demos keep link rotations clear of the log-map singularity at pi
constexpr double kMaxLinkTurn = 2.8;

// Surface samples of an axis-aligned box centred at `c`.
pc::Points box_surface(Rng& rng, const Vector3& c, const Vector3& h, int n) {
  const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  const double total = areas[0] + areas[1] + areas[2];
  pc::Points pts(n, 3);
  for (int i = 0; i < n; ++i) {
    double pick = rng.uniform(0.0, total);
    int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
    Vector3 p(rng.uniform(-h.x(), h.x()), rng.uniform(-h.y(), h.y()), rng.uniform(-h.z(), h.z()));
    p[axis] = rng.uniform() < 0.5 ? -h[axis] : h[axis];
    pts.row(i) = (c + p).transpose();
  }
  return pts;
}

// Tube of radius r from the origin down to z = -length.
pc::Points phalanx_surface(Rng& rng, double length, double r, int n) {
  pc::Points pts(n, 3);
  for (int i = 0; i < n; ++i) {
    double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    pts.row(i) << r * std::cos(a), r * std::sin(a), -rng.uniform(0.0, length);
  }
  return pts;
}

pc::Points bar_surface(Rng& rng, double length, double r, int n) {
  pc::Points pts(n, 3);
  for (int i = 0; i < n; ++i) {
    double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    pts.row(i) << rng.uniform(0.0, length), r * std::cos(a), r * std::sin(a);
  }
  return pts;
}

kin::Joint revolute(const std::string& name, int parent, int child, const Vector3& xyz, const Vector3& rpy,
                    const Vector3& axis, double lo, double hi) {
  kin::Joint j;
  j.name = name;
  j.type = kin::JointType::Revolute;
  j.parent_link = parent;
  j.child_link = child;
  j.origin_xyz = xyz;
  j.origin_rpy = rpy;
  j.axis = axis;
  j.lower = lo;
  j.upper = hi;
  return j;
}

struct Builder {
  std::vector<kin::Link> links;
  std::vector<kin::Joint> joints;
  std::vector<std::pair<std::string, pc::Points>> clouds;

  int add_link(const std::string& name, pc::Points cloud) {
    kin::Link l;
    l.name = name;
    links.push_back(l);
    clouds.emplace_back(name, std::move(cloud));
    return static_cast<int>(links.size()) - 1;
  }
};

void add_fingers(Builder& b, GeneratedHand& out, Rng& rng, int count, double radius, double s) {
  const double l1 = 0.045 * s, l2 = 0.035 * s;
  for (int k = 0; k < count; ++k) {
    const std::string f = "f" + std::to_string(k);
    const double yaw = 2.0 * std::numbers::pi * k / count;
    int prox = b.add_link(f + "_proximal", phalanx_surface(rng, l1, kPhalanxRadius * s, 48));
    int dist = b.add_link(f + "_distal", phalanx_surface(rng, l2, kPhalanxRadius * s, 48));
    Vector3 base(radius * s * std::cos(yaw), radius * s * std::sin(yaw), -kPalmHalfThickness * s);
    // finger frames stay aligned with the palm; flexing about the tangent
    // direction keeps every link rotation well away from pi
    Vector3 axis(-std::sin(yaw) + 0.0, std::cos(yaw) + 0.0, 0.0);
    if (std::abs(axis.x()) < 1e-15) axis.x() = 0.0;
    if (std::abs(axis.y()) < 1e-15) axis.y() = 0.0;
    b.joints.push_back(revolute(f + "_flex1", 0, prox, base, Vector3::Zero(), axis, kProximalLower, kProximalUpper));
    b.joints.push_back(
        revolute(f + "_flex2", prox, dist, Vector3(0, 0, -l1), Vector3::Zero(), axis, kDistalLower, kDistalUpper));
    out.meta.fingertips.push_back({f + "_distal", Vector3(0, 0, -l2)});
    out.fingers.push_back({f + "_flex1", f + "_flex2", f + "_distal", radius * s, kPalmHalfThickness * s, yaw, l1, l2});
  }
}

}  // namespace

kin::KinematicHand GeneratedHand::hand() const {
  kin::KinematicHand h = kin::parse_urdf(urdf);
  std::vector<pc::Points> clouds(static_cast<std::size_t>(h.link_count()));
  for (const auto& [name, pts] : link_clouds) clouds[h.link_index(name)] = pts;
  return h.with_clouds(std::move(clouds));
}

GeneratedHand generate_hand(HandTemplate kind, double scale, std::uint64_t seed, std::string name) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("hand scale must be positive");
  GeneratedHand out;
  out.kind = kind;
  out.scale = scale;
  Rng rng(seed);
  Builder b;
  const double s = scale;
  switch (kind) {
    case HandTemplate::TwoFinger:
      b.add_link("palm", box_surface(rng, Vector3::Zero(), Vector3(0.045, 0.012, kPalmHalfThickness) * s, 96));
      out.meta.palm_link = "palm";
      add_fingers(b, out, rng, 2, 0.03, s);
      break;
    case HandTemplate::ThreeFinger:
      b.add_link("palm", box_surface(rng, Vector3::Zero(), Vector3(0.035, 0.035, kPalmHalfThickness) * s, 96));
      out.meta.palm_link = "palm";
      add_fingers(b, out, rng, 3, 0.025, s);
      break;
    case HandTemplate::PlanarChain3: {
      const double len = 0.05 * s;
      int base = b.add_link("base", bar_surface(rng, len, 0.005 * s, 32));
      int prox = b.add_link("proximal", bar_surface(rng, len, 0.005 * s, 32));
      int dist = b.add_link("distal", bar_surface(rng, len, 0.005 * s, 32));
      const double lim = std::numbers::pi / 2;
      b.joints.push_back(revolute("j1", base, prox, Vector3::Zero(), Vector3::Zero(), Vector3::UnitZ(), -lim, lim));
      b.joints.push_back(revolute("j2", prox, dist, Vector3(len, 0, 0), Vector3::Zero(), Vector3::UnitZ(), -lim, lim));
      out.meta.palm_link = "base";
      out.meta.fingertips.push_back({"distal", Vector3(len, 0, 0)});
      break;
    }
  }
  out.link_clouds = b.clouds;
  if (name.empty()) name = to_string(kind);
  out.urdf = kin::to_urdf(kin::KinematicHand::build(name, b.links, b.joints));
  return out;
}

void ObjectSpec::validate() const {
  switch (shape) {
    case Shape::Sphere:
      if (!(radius > 0.0)) throw InvalidArgument("sphere radius must be positive");
      break;
    case Shape::Box:
      if (!(half_extents.minCoeff() > 0.0)) throw InvalidArgument("box half extents must be positive");
      break;
    case Shape::Cylinder:
      if (!(radius > 0.0) || !(half_height > 0.0)) throw InvalidArgument("cylinder dimensions must be positive");
      break;
  }
}

double ObjectSpec::surface_distance(const Vector3& p) const {
  switch (shape) {
    case Shape::Sphere:
      return std::abs(p.norm() - radius);
    case Shape::Box: {
      Vector3 q = p.cwiseAbs() - half_extents;
      double outside = q.cwiseMax(0.0).norm();
      return outside > 0.0 ? outside : -q.maxCoeff();
    }
    case Shape::Cylinder: {
      Eigen::Vector2d q(std::hypot(p.x(), p.z()) - radius, std::abs(p.y()) - half_height);
      double outside = q.cwiseMax(0.0).norm();
      return outside > 0.0 ? outside : -q.maxCoeff();
    }
  }
  return 0.0;
}

double ObjectSpec::ray_to_surface(const Vector3& d) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (shape) {
    case Shape::Sphere:
      return radius;
    case Shape::Box: {
      double t = inf;
      for (int k = 0; k < 3; ++k)
        if (d[k] != 0.0) t = std::min(t, half_extents[k] / std::abs(d[k]));
      return t;
    }
    case Shape::Cylinder: {
      double rho = std::hypot(d.x(), d.z());
      double t = rho > 0.0 ? radius / rho : inf;
      if (d.y() != 0.0) t = std::min(t, half_height / std::abs(d.y()));
      return t;
    }
  }
  return 0.0;
}

double ObjectSpec::top() const {
  switch (shape) {
    case Shape::Sphere: return radius;
    case Shape::Box: return half_extents.z();
    case Shape::Cylinder: return radius;
  }
  return 0.0;
}

nlohmann::json ObjectSpec::to_json() const {
  nlohmann::json j = {{"shape", to_string(shape)}};
  if (shape == Shape::Box)
    j["half_extents"] = {half_extents.x(), half_extents.y(), half_extents.z()};
  else
    j["radius"] = radius;
  if (shape == Shape::Cylinder) j["half_height"] = half_height;
  return j;
}

ObjectSpec ObjectSpec::from_json(const nlohmann::json& j) {
  ObjectSpec s;
  try {
    const std::string shape = j.at("shape").get<std::string>();
    if (shape == "sphere") {
      s.shape = Shape::Sphere;
      s.radius = j.at("radius").get<double>();
    } else if (shape == "box") {
      s.shape = Shape::Box;
      auto h = j.at("half_extents").get<std::vector<double>>();
      if (h.size() != 3) throw ParseError("box half_extents needs 3 entries", 0);
      s.half_extents = Vector3(h[0], h[1], h[2]);
    } else if (shape == "cylinder") {
      s.shape = Shape::Cylinder;
      s.radius = j.at("radius").get<double>();
      s.half_height = j.at("half_height").get<double>();
    } else {
      throw ParseError("unknown object shape '" + shape + "'", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("object spec: ") + e.what(), 0);
  }
  s.validate();
  return s;
}

pc::PointCloud sample_object(const ObjectSpec& spec, int points, std::uint64_t seed) {
  spec.validate();
  if (points < 1) throw InvalidArgument("object point count must be positive");
  Rng rng(seed);
  pc::Points pts(points, 3);
  switch (spec.shape) {
    case Shape::Sphere:
      for (int i = 0; i < points; ++i) {
        Vector3 v(rng.normal(), rng.normal(), rng.normal());
        while (v.norm() < 1e-9) v = Vector3(rng.normal(), rng.normal(), rng.normal());
        pts.row(i) = spec.radius * v.normalized().transpose();
      }
      break;
    case Shape::Box:
      pts = box_surface(rng, Vector3::Zero(), spec.half_extents, points);
      break;
    case Shape::Cylinder: {
      const double side = 2.0 * std::numbers::pi * spec.radius * 2.0 * spec.half_height;
      const double caps = 2.0 * std::numbers::pi * spec.radius * spec.radius;
      for (int i = 0; i < points; ++i) {
        double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        if (rng.uniform(0.0, side + caps) < side) {
          pts.row(i) << spec.radius * std::cos(a), rng.uniform(-spec.half_height, spec.half_height),
              spec.radius * std::sin(a);
        } else {
          double r = spec.radius * std::sqrt(rng.uniform());
          pts.row(i) << r * std::cos(a), rng.uniform() < 0.5 ? -spec.half_height : spec.half_height, r * std::sin(a);
        }
      }
      break;
    }
  }
  return pc::PointCloud(pts);
}

double fingertip_distance(const kin::KinematicHand& hand, const kin::HandMeta& meta,
                          const std::vector<se3::Transform>& link_poses, const ObjectSpec& object) {
  if (meta.fingertips.empty()) throw ConfigError("hand metadata lists no fingertips");
  double worst = 0.0;
  for (const auto& tip : meta.fingertips) {
    Vector3 p = link_poses[hand.link_index(tip.link)].apply(tip.offset);
    worst = std::max(worst, object.surface_distance(p));
  }
  return worst;
}

double fingertip_distance(const kin::KinematicHand& hand, const kin::HandMeta& meta, const kin::JointVector& q,
                          const se3::Transform& base, const ObjectSpec& object) {
  auto fk = kin::forward_kinematics(hand, q);
  for (auto& t : fk) t = se3::compose(base, t);
  return fingertip_distance(hand, meta, fk, object);
}

namespace {

// Two-link planar closure in the finger plane: u radial outward, z up.
// Phalanx direction at flexion g is (-sin g, -cos g).
bool finger_closure(const FingerGeometry& f, double u_target, double z_target, double& q1, double& q2) {
  const double vu = u_target - f.base_radius;
  const double vz = z_target + f.base_drop;
  const double d2 = vu * vu + vz * vz;
  const double c2 = (d2 - f.l1 * f.l1 - f.l2 * f.l2) / (2.0 * f.l1 * f.l2);
  if (c2 < -1.0 || c2 > 1.0) return false;
  q2 = std::acos(c2);
  const double gamma = std::atan2(-vu, -vz);
  q1 = gamma - std::atan2(f.l2 * std::sin(q2), f.l1 + f.l2 * std::cos(q2));
  return q1 >= kProximalLower && q1 <= kProximalUpper && q2 >= kDistalLower && q2 <= kDistalUpper;
}

}  // namespace

DemoBatch generate_demos(const GeneratedHand& gh, const ObjectSpec& object, const std::string& object_name, int n,
                         double yaw_range, std::uint64_t seed) {
  object.validate();
  if (gh.fingers.empty()) throw InvalidArgument("hand template " + to_string(gh.kind) + " has no grasp closure");
  if (n < 1) throw InvalidArgument("demo count must be >= 1");
  if (!(yaw_range >= 0.0)) throw InvalidArgument("yaw range must be non-negative");
  const kin::KinematicHand hand = gh.hand();
  DemoBatch batch;
  Rng rng(seed);
  for (int k = 0; k < n; ++k) {
    const double yaw = yaw_range > 0.0 ? rng.uniform(-yaw_range, yaw_range) : 0.0;
    std::vector<double> reach(gh.fingers.size());
    double widest = 0.0;
    for (std::size_t i = 0; i < gh.fingers.size(); ++i) {
      const double a = yaw + gh.fingers[i].yaw;
      reach[i] = object.ray_to_surface(Vector3(std::cos(a), std::sin(a), 0.0));
      widest = std::max(widest, std::abs(reach[i] - gh.fingers[i].base_radius));
    }
    // palm height: the widest finger reaches its contact at 85% extension,
    // relaxed toward full extension if the palm would touch the object
    const FingerGeometry& f0 = gh.fingers.front();
    bool placed = false;
    double h = 0.0;
    for (double ratio = 0.85; ratio <= 0.97 + 1e-12; ratio += 0.01) {
      const double span = ratio * (f0.l1 + f0.l2);
      if (span <= widest) continue;
      h = f0.base_drop + std::sqrt(span * span - widest * widest);
      if (h - f0.base_drop > object.top() + 0.005 * gh.scale) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      ++batch.skipped;
      continue;
    }
    kin::JointVector q(hand.dof());
    bool ok = true;
    for (std::size_t i = 0; i < gh.fingers.size() && ok; ++i) {
      double q1, q2;
      ok = finger_closure(gh.fingers[i], reach[i], -h, q1, q2);
      if (!ok) break;
      for (const auto& j : hand.joints()) {
        if (j.name == gh.fingers[i].proximal_joint) q[j.dof_index] = q1;
        if (j.name == gh.fingers[i].distal_joint) q[j.dof_index] = q2;
      }
    }
    if (!ok) {
      ++batch.skipped;
      continue;
    }
    se3::Transform base{se3::exp_so3(Vector3(0, 0, yaw)), Vector3(0, 0, h)};
    double dist = fingertip_distance(hand, gh.meta, q, base, object);
    double widest_turn = 0.0;
    for (const auto& t : kin::forward_kinematics(hand, q))
      widest_turn = std::max(widest_turn, se3::rotation_angle(base.rotation * t.rotation));
    if (!(dist < 0.002) || widest_turn > kMaxLinkTurn) {
      ++batch.skipped;
      continue;
    }
    batch.demos.push_back({object_name, q, base, dist});
  }
  return batch;
}

std::vector<NamedObject> default_objects(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<NamedObject> out;
  for (int i = 0; i < count; ++i) {
    ObjectSpec s;
    switch (i % 3) {
      case 0:
        s.shape = Shape::Sphere;
        s.radius = rng.uniform(0.02, 0.04);
        break;
      case 1:
        s.shape = Shape::Box;
        s.half_extents = Vector3(rng.uniform(0.02, 0.035), rng.uniform(0.015, 0.03), rng.uniform(0.015, 0.03));
        break;
      default:
        s.shape = Shape::Cylinder;
        s.radius = rng.uniform(0.02, 0.035);
        s.half_height = rng.uniform(0.02, 0.04);
        break;
    }
    char name[32];
    std::snprintf(name, sizeof name, "%s_%02d", to_string(s.shape).c_str(), i);
    out.push_back({name, s});
  }
  return out;
}

namespace {

nlohmann::json pose_json(const se3::Transform& t) {
  se3::Vector6 v = se3::log_map_nearest(t).vector();
  return std::vector<double>(v.data(), v.data() + 6);
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw InvalidArgument("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InvalidArgument("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), 0);
  }
}

}  // namespace

nlohmann::json demo_to_json(const Demo& d, const kin::KinematicHand& hand) {
  nlohmann::json names = nlohmann::json::array();
  for (int j : hand.actuated_joints()) names.push_back(hand.joints()[j].name);
  return {{"schema_version", kDemoSchemaVersion},
          {"hand", hand.name()},
          {"object", d.object},
          {"joint_names", names},
          {"q", std::vector<double>(d.q.data(), d.q.data() + d.q.size())},
          {"base", pose_json(d.base)},
          {"fingertip_distance", d.fingertip_distance}};
}

DemoRecord demo_from_json(const nlohmann::json& j, const kin::KinematicHand& hand) {
  try {
    if (j.at("schema_version").get<int>() != kDemoSchemaVersion) throw ParseError("unsupported demo schema_version", 0);
    DemoRecord r;
    r.object = j.at("object").get<std::string>();
    auto names = j.at("joint_names").get<std::vector<std::string>>();
    auto q = j.at("q").get<std::vector<double>>();
    if (names.size() != q.size() || static_cast<int>(q.size()) != hand.dof())
      throw ParseError("demo joint vector does not match the hand", 0);
    r.q = kin::JointVector::Zero(hand.dof());
    for (std::size_t i = 0; i < names.size(); ++i) {
      int dof = -1;
      for (const auto& jt : hand.joints())
        if (jt.name == names[i]) dof = jt.dof_index;
      if (dof < 0) throw ParseError("demo names unknown joint " + names[i], 0);
      r.q[dof] = q[i];
    }
    auto b = j.at("base").get<std::vector<double>>();
    if (b.size() != 6) throw ParseError("demo base must have 6 entries", 0);
    r.base = se3::exp_map(se3::Pose6::from_vector(Eigen::Map<const se3::Vector6>(b.data())));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("demo record: ") + e.what(), 0);
  }
}

DatasetSummary write_dataset(const fs::path& dir, const DatasetSpec& spec) {
  if (spec.objects.empty()) throw InvalidArgument("dataset needs at least one object");
  GeneratedHand gh = generate_hand(spec.hand, spec.hand_scale, spec.seed);
  kin::KinematicHand hand = gh.hand();
  DatasetSummary summary;
  summary.hand_name = hand.name();

  const fs::path hand_dir = dir / "hands" / hand.name();
  fs::create_directories(hand_dir / "links");
  fs::create_directories(dir / "objects");
  fs::create_directories(dir / "demos");
  {
    std::ofstream(hand_dir / "hand.urdf") << gh.urdf;
  }
  for (const auto& [name, pts] : gh.link_clouds) pc::write_xyz(hand_dir / "links" / (name + ".xyz"), pts);
  gh.meta.save(hand_dir / "hand.json");

  int index = 0;
  for (std::size_t o = 0; o < spec.objects.size(); ++o) {
    const auto& obj = spec.objects[o];
    auto cloud = sample_object(obj.spec, spec.object_points, spec.seed * 1000003u + o);
    pc::write_xyz(dir / "objects" / (obj.name + ".xyz"), cloud.points());
    write_json(dir / "objects" / (obj.name + ".json"), obj.spec.to_json());
    auto batch = generate_demos(gh, obj.spec, obj.name, spec.demos_per_object, spec.yaw_range, spec.seed + 7919u * (o + 1));
    summary.skipped += batch.skipped;
    for (const auto& d : batch.demos) {
      char file[32];
      std::snprintf(file, sizeof file, "%04d.json", index++);
      write_json(dir / "demos" / file, demo_to_json(d, hand));
    }
  }
  summary.demos = index;
  return summary;
}

Dataset load_dataset(const fs::path& dir, const std::string& hand_name) {
  if (!fs::is_directory(dir)) throw InvalidArgument("dataset directory not found: " + dir.string());
  fs::path hands = dir / "hands";
  if (!fs::is_directory(hands)) throw StructureError("dataset has no hands/ directory");
  fs::path hand_dir;
  if (!hand_name.empty()) {
    hand_dir = hands / hand_name;
  } else {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(hands))
      if (e.is_directory()) found.push_back(e.path());
    if (found.size() != 1) throw StructureError("dataset must hold exactly one hand, or name one");
    hand_dir = found.front();
  }
  if (!fs::exists(hand_dir / "hand.urdf")) throw StructureError("missing " + (hand_dir / "hand.urdf").string());
  Dataset ds{kin::load_hand(hand_dir / "hand.urdf", hand_dir / "links"), {}, {}, {}};
  if (fs::exists(hand_dir / "hand.json")) ds.meta = kin::HandMeta::load(hand_dir / "hand.json");

  std::vector<fs::path> object_files;
  if (fs::is_directory(dir / "objects"))
    for (const auto& e : fs::directory_iterator(dir / "objects"))
      if (e.path().extension() == ".xyz" || e.path().extension() == ".xyzb") object_files.push_back(e.path());
  std::sort(object_files.begin(), object_files.end());
  for (const auto& p : object_files) {
    DatasetObject obj{pc::load_cloud(p), std::nullopt};
    fs::path side = fs::path(p).replace_extension(".json");
    if (fs::exists(side)) obj.spec = ObjectSpec::from_json(read_json(side));
    ds.objects.emplace(p.stem().string(), std::move(obj));
  }

  std::vector<fs::path> demo_files;
  if (fs::is_directory(dir / "demos"))
    for (const auto& e : fs::directory_iterator(dir / "demos"))
      if (e.path().extension() == ".json") demo_files.push_back(e.path());
  std::sort(demo_files.begin(), demo_files.end());
  for (const auto& p : demo_files) {
    DemoRecord r = demo_from_json(read_json(p), ds.hand);
    if (!ds.objects.count(r.object)) throw StructureError(p.string() + " references unknown object " + r.object);
    ds.demos.push_back(std::move(r));
  }
  return ds;
}

}  // namespace tro::synth
