#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"
#include "trograph/kinematics.hpp"
#include "trograph/se3.hpp"

namespace tro::ik {

struct IkProblem {
  std::shared_ptr<const kin::KinematicHand> hand;
  std::vector<se3::Transform> targets;  // per link, object frame
  std::vector<bool> mask;               // true = target active
  std::vector<double> weights;          // per link, default 1
  se3::Transform base = se3::Transform::identity();  // initial (or fixed) hand base
  bool optimize_base = true;
  int max_iters = 200;
  double tol = 1e-12;
  int restarts = 8;
  std::uint64_t seed = 0;

  /// All links active with unit weight.
  static IkProblem from_targets(std::shared_ptr<const kin::KinematicHand> hand, std::vector<se3::Transform> targets);
  void validate() const;
};

struct IkSolution {
  kin::JointVector q;
  se3::Transform base = se3::Transform::identity();
  double residual = 0.0;  // sum over active links of |log(target^-1 base FK)|
  int iterations = 0;
  int restarts_used = 0;
  bool converged = false;
};

/// Levenberg-Marquardt with box projection. Without q_init the solve starts
/// mid-range and retries from random configurations until one converges.
IkSolution solve_ik(const IkProblem& problem, const std::optional<kin::JointVector>& q_init = std::nullopt);

/// Worker count: `parallelism` (0 = hardware), capped by TROGRAPH_THREADS.
int worker_count(int parallelism);
std::vector<IkSolution> batch_solve(const std::vector<IkProblem>& problems, int parallelism = 0);

inline constexpr int kIkSchemaVersion = 1;

/// {"schema_version", "targets": [{"link", "pose": [6]}], "weights": {link: w},
///  "optimize_base", "base": [6], "max_iters", "seed"}
IkProblem problem_from_json(const nlohmann::json& doc, std::shared_ptr<const kin::KinematicHand> hand);
nlohmann::json problem_to_json(const IkProblem& p);
nlohmann::json solution_to_json(const IkSolution& s, const kin::KinematicHand& hand);

}  // namespace tro::ik
