#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "trograph/denoiser.hpp"
#include "trograph/diffusion.hpp"
#include "trograph/graph.hpp"
#include "trograph/kinematics.hpp"

namespace tro::cli {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

enum class ScenarioKind { Static, ConstantVelocity, RandomPerturbation };
std::string to_string(ScenarioKind k);
ScenarioKind parse_scenario(const std::string& name);

struct ClosedLoopScenario {
  ScenarioKind kind = ScenarioKind::ConstantVelocity;
  se3::Vector3 velocity{0.05, 0.0, 0.0};  // m/s
  double interval = 0.25;                 // s
  int steps = 30;
  double translation_bound = 0.0125;  // m, random perturbation per tick
  double rotation_bound_deg = 30.0;

  void validate() const;
  /// Object pose for ticks 0..steps; tick 0 is the identity.
  std::vector<se3::Transform> trajectory(std::uint64_t seed) const;
};

struct RunConfig {
  struct Schedule {
    int T = 1000;
    double beta_min = 1e-4, beta_max = 0.02;
    int ddim_steps = 20;
    double lambda = 0.2;
  } schedule;
  struct Graph {
    int patches = 25;
    int link_pad = graph::kDefaultLinkPad;
    int basis_points = graph::kLinkBasisPoints;
    std::uint64_t seed = 0;
  } graph;
  denoise::ModelConfig model;
  denoise::TrainConfig train;
  struct Guidance {
    double strength_max = 0.5;
  } guidance;
  struct Ik {
    int max_iters = 200;
    double tol = 1e-12;
    int restarts = 8;
    bool optimize_base = true;
    int parallelism = 0;
  } ik;
  std::string palm_link;  // overrides hand.json when set
  struct ClosedLoop {
    ClosedLoopScenario scenario;
    double t_star_fraction = 0.15;
    int t_star = 0;     // 0: grid step nearest t_star_fraction * T
    bool steer = true;  // pose guidance toward the previous palm on top of renoising
  } closed_loop;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys take defaults; unknown keys and bad values raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);

  diffusion::Schedule make_schedule() const;
  graph::GraphBuilder make_builder() const;
  int closed_loop_t_star(const diffusion::Schedule& s) const;
};

RunConfig load_config(const std::filesystem::path& path);

/// Hand URDF with optional link clouds and hand.json annotations. `path` is
/// either a directory holding hand.urdf (+ hand.json, links/) or a URDF file
/// whose siblings are searched the same way.
struct HandBundle {
  std::shared_ptr<const kin::KinematicHand> hand;
  std::optional<kin::HandMeta> meta;

  /// Config override first, then hand.json; -1 when neither names one.
  int palm_row(const std::string& override_name = "") const;
};
HandBundle load_hand_bundle(const std::filesystem::path& path);

/// Link poses of a graph's real rows as transforms.
std::vector<se3::Transform> link_transforms(const graph::TroGraph& g);

struct TickRecord {
  int tick = 0;
  double time = 0.0;
  double displacement = 0.0;    // object motion since the previous tick
  double tracking_error = 0.0;  // mean over links of geodesic angle + translation error
  bool ok = true;
  std::string error;
};

struct ClosedLoopReport {
  std::vector<TickRecord> ticks;
  std::vector<double> latency_ms;  // kept apart so reports stay reproducible
};

/// Builds the noise predictor for one tick given the analytically tracked
/// grasp graph (used by the oracle; a trained model ignores it).
using PredictorFactory = std::function<diffusion::NoisePredictor(const graph::TroGraph& tracked)>;

/// Per tick: move the object, renoise the previous link poses to t*, run the
/// conditioned chain and compare with the initial grasp carried rigidly along.
ClosedLoopReport run_closed_loop(const RunConfig& config, const HandBundle& hand, const pc::PointCloud& object,
                                 const std::vector<se3::Transform>& initial_links,
                                 const PredictorFactory& predictor, std::uint64_t seed);

void write_closed_loop_csv(std::ostream& os, const ClosedLoopReport& report);

/// Full command line entry point. Returns the process exit code: 0 success,
/// 1 runtime failure, 2 validation failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tro::cli
