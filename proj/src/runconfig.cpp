#include <cmath>
#include <fstream>
#include <initializer_list>
#include <numbers>

#include "trograph/cli.hpp"
#include "trograph/errors.hpp"
#include "trograph/rng.hpp"

namespace tro::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Static: return "static";
    case ScenarioKind::ConstantVelocity: return "constant_velocity";
    case ScenarioKind::RandomPerturbation: return "random";
  }
  return "?";
}

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "static") return ScenarioKind::Static;
  if (name == "constant_velocity") return ScenarioKind::ConstantVelocity;
  if (name == "random") return ScenarioKind::RandomPerturbation;
  throw ConfigError("unknown scenario '" + name + "' (static, constant_velocity, random)");
}

void ClosedLoopScenario::validate() const {
  if (!(interval > 0.0) || !std::isfinite(interval)) throw ConfigError("closed_loop interval must be positive");
  if (steps < 1) throw ConfigError("closed_loop steps must be at least 1");
  if (!velocity.allFinite()) throw ConfigError("closed_loop velocity must be finite");
  if (!(translation_bound >= 0.0) || !(rotation_bound_deg >= 0.0) || rotation_bound_deg > 180.0)
    throw ConfigError("closed_loop perturbation bounds out of range");
}

std::vector<se3::Transform> ClosedLoopScenario::trajectory(std::uint64_t seed) const {
  validate();
  std::vector<se3::Transform> poses{se3::Transform::identity()};
  Rng rng = Rng::stream(seed, 0);
  for (int i = 1; i <= steps; ++i) {
    se3::Transform next = poses.back();
    switch (kind) {
      case ScenarioKind::Static: break;
      case ScenarioKind::ConstantVelocity: next.translation += velocity * interval; break;
      case ScenarioKind::RandomPerturbation: {
        // uniform in the translation ball, uniform angle about a uniform axis
        se3::Vector3 dir(rng.normal(), rng.normal(), rng.normal());
        se3::Vector3 axis(rng.normal(), rng.normal(), rng.normal());
        const double r = translation_bound * std::cbrt(rng.uniform());
        const double angle = rotation_bound_deg * std::numbers::pi / 180.0 * rng.uniform();
        se3::Transform delta{se3::exp_so3(axis.normalized() * angle), dir.normalized() * r};
        next = se3::compose(next, delta);
        break;
      }
    }
    poses.push_back(next);
  }
  return poses;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

json section(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json::object(); }

}  // namespace

void RunConfig::validate() const {
  if (schedule.T < 1) throw ConfigError("schedule.T must be positive");
  if (!(schedule.beta_min > 0.0) || !(schedule.beta_max < 1.0) || schedule.beta_min > schedule.beta_max)
    throw ConfigError("schedule beta bounds must satisfy 0 < beta_min <= beta_max < 1");
  if (schedule.ddim_steps < 1 || schedule.ddim_steps > schedule.T)
    throw ConfigError("schedule.ddim_steps must lie in [1, T]");
  if (!(schedule.lambda >= 0.0) || !std::isfinite(schedule.lambda)) throw ConfigError("schedule.lambda must be >= 0");
  if (graph.patches < 1) throw ConfigError("graph.patches must be positive");
  if (graph.link_pad < 1) throw ConfigError("graph.link_pad must be positive");
  if (graph.basis_points != graph::kLinkBasisPoints)
    throw ConfigError("graph.basis_points is fixed at " + std::to_string(graph::kLinkBasisPoints));
  if (model.link_embed_dim != graph::kLinkEmbedDim)
    throw ConfigError("model.link_embed_dim must equal the link encoder width " +
                      std::to_string(graph::kLinkEmbedDim));
  model.validate();
  train.validate();
  if (!(guidance.strength_max >= 0.0) || !std::isfinite(guidance.strength_max))
    throw ConfigError("guidance.strength_max must be >= 0");
  if (ik.max_iters < 1 || ik.restarts < 0 || !(ik.tol > 0.0) || ik.parallelism < 0)
    throw ConfigError("ik settings out of range");
  closed_loop.scenario.validate();
  if (!(closed_loop.t_star_fraction > 0.0) || closed_loop.t_star_fraction > 1.0)
    throw ConfigError("closed_loop.t_star_fraction must lie in (0, 1]");
  if (closed_loop.t_star < 0 || closed_loop.t_star > schedule.T) throw ConfigError("closed_loop.t_star out of range");
}

json RunConfig::to_json() const {
  const auto& sc = closed_loop.scenario;
  return {
      {"schema_version", kConfigSchemaVersion},
      {"seed", seed},
      {"schedule",
       {{"T", schedule.T},
        {"beta_min", schedule.beta_min},
        {"beta_max", schedule.beta_max},
        {"ddim_steps", schedule.ddim_steps},
        {"lambda", schedule.lambda}}},
      {"graph",
       {{"patches", graph.patches},
        {"link_pad", graph.link_pad},
        {"basis_points", graph.basis_points},
        {"seed", graph.seed}}},
      {"model", model.to_json()},
      {"train", train.to_json()},
      {"guidance", {{"strength_max", guidance.strength_max}}},
      {"ik",
       {{"max_iters", ik.max_iters},
        {"tol", ik.tol},
        {"restarts", ik.restarts},
        {"optimize_base", ik.optimize_base},
        {"parallelism", ik.parallelism}}},
      {"hand", {{"palm_link", palm_link}}},
      {"closed_loop",
       {{"scenario", to_string(sc.kind)},
        {"velocity", {sc.velocity.x(), sc.velocity.y(), sc.velocity.z()}},
        {"interval", sc.interval},
        {"steps", sc.steps},
        {"translation_bound", sc.translation_bound},
        {"rotation_bound_deg", sc.rotation_bound_deg},
        {"t_star_fraction", closed_loop.t_star_fraction},
        {"t_star", closed_loop.t_star},
        {"steer", closed_loop.steer}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j,
               {"schema_version", "seed", "schedule", "graph", "model", "train", "guidance", "ik", "hand",
                "closed_loop"},
               "config");
    const int version = j.value("schema_version", kConfigSchemaVersion);
    if (version != kConfigSchemaVersion)
      throw ConfigError("unsupported config schema_version " + std::to_string(version));
    c.seed = j.value("seed", c.seed);

    json s = section(j, "schedule");
    check_keys(s, {"T", "beta_min", "beta_max", "ddim_steps", "lambda"}, "schedule");
    c.schedule.T = s.value("T", c.schedule.T);
    c.schedule.beta_min = s.value("beta_min", c.schedule.beta_min);
    c.schedule.beta_max = s.value("beta_max", c.schedule.beta_max);
    c.schedule.ddim_steps = s.value("ddim_steps", c.schedule.ddim_steps);
    c.schedule.lambda = s.value("lambda", c.schedule.lambda);

    json g = section(j, "graph");
    check_keys(g, {"patches", "link_pad", "basis_points", "seed"}, "graph");
    c.graph.patches = g.value("patches", c.graph.patches);
    c.graph.link_pad = g.value("link_pad", c.graph.link_pad);
    c.graph.basis_points = g.value("basis_points", c.graph.basis_points);
    c.graph.seed = g.value("seed", c.graph.seed);

    json m = section(j, "model");
    check_keys(m, {"d", "layers", "object_feature_dim", "link_embed_dim", "seed"}, "model");
    c.model = denoise::ModelConfig::from_json(m);
    json t = section(j, "train");
    check_keys(t, {"gamma_p", "gamma_r", "epochs", "batch_size", "lr", "lr_decay", "decay_epochs", "max_steps", "seed"},
               "train");
    c.train = denoise::TrainConfig::from_json(t);

    json gd = section(j, "guidance");
    check_keys(gd, {"strength_max"}, "guidance");
    c.guidance.strength_max = gd.value("strength_max", c.guidance.strength_max);

    json ik = section(j, "ik");
    check_keys(ik, {"max_iters", "tol", "restarts", "optimize_base", "parallelism"}, "ik");
    c.ik.max_iters = ik.value("max_iters", c.ik.max_iters);
    c.ik.tol = ik.value("tol", c.ik.tol);
    c.ik.restarts = ik.value("restarts", c.ik.restarts);
    c.ik.optimize_base = ik.value("optimize_base", c.ik.optimize_base);
    c.ik.parallelism = ik.value("parallelism", c.ik.parallelism);

    json h = section(j, "hand");
    check_keys(h, {"palm_link"}, "hand");
    c.palm_link = h.value("palm_link", c.palm_link);

    json cl = section(j, "closed_loop");
    check_keys(cl,
               {"scenario", "velocity", "interval", "steps", "translation_bound", "rotation_bound_deg",
                "t_star_fraction", "t_star", "steer"},
               "closed_loop");
    auto& sc = c.closed_loop.scenario;
    if (cl.contains("scenario")) sc.kind = parse_scenario(cl.at("scenario").get<std::string>());
    if (cl.contains("velocity")) {
      auto v = cl.at("velocity").get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("closed_loop.velocity must have 3 entries");
      sc.velocity = se3::Vector3(v[0], v[1], v[2]);
    }
    sc.interval = cl.value("interval", sc.interval);
    sc.steps = cl.value("steps", sc.steps);
    sc.translation_bound = cl.value("translation_bound", sc.translation_bound);
    sc.rotation_bound_deg = cl.value("rotation_bound_deg", sc.rotation_bound_deg);
    c.closed_loop.t_star_fraction = cl.value("t_star_fraction", c.closed_loop.t_star_fraction);
    c.closed_loop.t_star = cl.value("t_star", c.closed_loop.t_star);
    c.closed_loop.steer = cl.value("steer", c.closed_loop.steer);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

diffusion::Schedule RunConfig::make_schedule() const {
  return diffusion::linear_schedule(schedule.T, schedule.beta_min, schedule.beta_max, schedule.ddim_steps,
                                    schedule.lambda);
}

graph::GraphBuilder RunConfig::make_builder() const {
  return graph::GraphBuilder::make(graph.patches, graph.link_pad, graph.seed);
}

int RunConfig::closed_loop_t_star(const diffusion::Schedule& s) const {
  if (closed_loop.t_star > 0) return s.nearest_grid_step(closed_loop.t_star);
  return s.nearest_grid_step(static_cast<int>(std::lround(closed_loop.t_star_fraction * s.T)));
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return RunConfig::from_json(j);
}

int HandBundle::palm_row(const std::string& override_name) const {
  std::string name = override_name;
  if (name.empty() && meta) name = meta->palm_link;
  if (name.empty()) return -1;
  return hand->link_index(name);
}

HandBundle load_hand_bundle(const fs::path& path) {
  fs::path dir, urdf;
  if (fs::is_directory(path)) {
    dir = path;
    urdf = path / "hand.urdf";
  } else {
    urdf = path;
    dir = path.parent_path();
  }
  if (!fs::exists(urdf)) throw InvalidArgument("hand URDF not found: " + urdf.string());
  std::optional<fs::path> links;
  if (fs::is_directory(dir / "links")) links = dir / "links";
  HandBundle b;
  b.hand = std::make_shared<const kin::KinematicHand>(kin::load_hand(urdf, links));
  if (fs::exists(dir / "hand.json")) b.meta = kin::HandMeta::load(dir / "hand.json");
  return b;
}

std::vector<se3::Transform> link_transforms(const graph::TroGraph& g) {
  std::vector<se3::Transform> out;
  for (int r : g.links().real_rows())
    out.push_back(se3::exp_map(se3::Pose6::from_vector(g.links().poses.row(r).transpose())));
  return out;
}

}  // namespace tro::cli
