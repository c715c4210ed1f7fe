#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "trograph/graph.hpp"
#include "trograph/rng.hpp"
#include "trograph/se3.hpp"

namespace tro::diffusion {

using graph::PoseMatrix;

/// Variance schedule plus the DDIM sub-sequence used at inference.
struct Schedule {
  int T = 0;
  std::vector<double> beta;       // index 1..T; beta[0] unused
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // alpha_bar[0] = 1
  std::vector<int> ddim_steps;    // ascending, last == T
  double lambda = 0.2;

  int steps() const { return static_cast<int>(ddim_steps.size()); }
  /// 1-based position of t in ddim_steps; throws if t is not on the grid.
  int grid_position(int t) const;
  bool on_grid(int t) const;
  /// Closest grid step (ties go to the smaller step).
  int nearest_grid_step(int t) const;
  /// Grid step preceding t, or 0 for the first grid entry.
  int previous_step(int t) const;
};

/// Linearly spaced betas (inclusive bounds), float64 cumulative products and
/// an evenly spaced M-step DDIM grid ending at T.
Schedule linear_schedule(int T = 1000, double beta_min = 1e-4, double beta_max = 0.02, int ddim_steps = 20,
                         double lambda = 0.2);

struct Noised {
  PoseMatrix psi_t;
  PoseMatrix epsilon;
};

/// psi_t = sqrt(abar_t) psi0 + sqrt(1 - abar_t) eps on real rows; masked rows stay zero.
Noised forward_noise(const PoseMatrix& psi0, const graph::LinkMask& mask, int t, const Schedule& s, Rng& rng);
Noised forward_noise(const PoseMatrix& psi0, const graph::LinkMask& mask, int t, const Schedule& s,
                     const PoseMatrix& epsilon);
/// One Markov step psi_{t-1} -> psi_t.
PoseMatrix forward_step(const PoseMatrix& psi_prev, const graph::LinkMask& mask, int t, const Schedule& s, Rng& rng);

/// Re-noises link poses to step t and rebuilds every edge.
graph::TroGraph renoise_graph(const graph::TroGraph& g0, int t, const Schedule& s, Rng& rng);

double ddim_sigma(int t, int t_prev, const Schedule& s);

enum class GuidanceKind { None, Pose, Contact };

struct ContactTarget {
  pc::Points points;        // K x 3, object frame
  Eigen::VectorXd heat;     // K, non-negative, at least one positive
  se3::Matrix3 rotation = se3::Matrix3::Identity();  // desired palm rotation
};

struct GuidanceSpec {
  GuidanceKind kind = GuidanceKind::None;
  se3::Matrix3 r_init = se3::Matrix3::Identity();
  int t_star = 0;
  double strength_max = 0.5;
  ContactTarget contact;
  int palm_row = -1;  // link row of the palm; required by every guided kind

  void validate(const Schedule& s) const;
};

/// s = g_s sin(i pi / 2M) for the i-th reverse step of an M-step chain.
double guidance_strength(int step_number, int total_steps, double strength_max);

double pose_guidance_loss(const PoseMatrix& psi, const GuidanceSpec& g);
PoseMatrix pose_guidance_gradient(const PoseMatrix& psi, const GuidanceSpec& g);

/// L_geo(palm, R_cont) + heat-weighted mean of squared distance from each
/// contact point to the closest real link center.
double contact_loss(const PoseMatrix& psi, const graph::LinkNodeSet& links, const GuidanceSpec& g);
PoseMatrix contact_loss_gradient(const PoseMatrix& psi, const graph::LinkNodeSet& links, const GuidanceSpec& g);

/// One gradient step on psi0_hat with strength s(step_number).
PoseMatrix apply_guidance(const PoseMatrix& psi0_hat, const graph::LinkNodeSet& links, int step_number,
                          int total_steps, const GuidanceSpec& g);

/// eps_theta(G_t, t); returns L_pad x 6 with masked rows zero.
using NoisePredictor = std::function<PoseMatrix(const graph::TroGraph&, int)>;

struct StepStats {
  long clamped_radicands = 0;
};

graph::TroGraph ddim_step(const graph::TroGraph& g_t, int t, int t_prev, const PoseMatrix& eps_pred,
                          const Schedule& s, Rng& rng, const GuidanceSpec* guidance = nullptr,
                          StepStats* stats = nullptr);

struct SampleOptions {
  int start_t = 0;  // 0 means T
  const GuidanceSpec* guidance = nullptr;
};

struct SampleResult {
  graph::TroGraph graph;
  int steps_run = 0;
  StepStats stats;
};

SampleResult sample(const graph::TroGraph& start, const Schedule& s, const NoisePredictor& predictor, Rng& rng,
                    const SampleOptions& options = {});

/// Link poses drawn from N(0, I) on the real rows.
graph::TroGraph unconditioned_start(const graph::TroGraph& like, Rng& rng);
/// Initial status re-noised to t_star.
graph::TroGraph conditioned_start(const graph::TroGraph& initial, int t_star, const Schedule& s, Rng& rng);

/// Outward unit normal at `center` from PCA over the k nearest cloud points.
se3::Vector3 estimate_normal(const pc::PointCloud& cloud, const se3::Vector3& center, int k = 16);
/// Minimal rotation taking `palm_normal` (hand frame) onto -object_normal.
se3::Matrix3 palm_rotation_facing(const se3::Vector3& palm_normal, const se3::Vector3& object_normal);
/// K nearest points around cloud point `center_index` with Gaussian heat.
ContactTarget contact_region(const pc::PointCloud& cloud, int center_index, int k, double sigma,
                             const se3::Vector3& palm_normal);

}  // namespace tro::diffusion
