#include "trograph/diffusion.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "trograph/errors.hpp"

namespace tro::diffusion {

namespace {

void check_step(const Schedule& s, int t, const char* what) {
  if (t < 0 || t > s.T) throw InvalidArgument(std::string(what) + " out of range: " + std::to_string(t));
}

void check_shape(const PoseMatrix& psi, const graph::LinkMask& mask) {
  if (psi.rows() != static_cast<Eigen::Index>(mask.size()))
    throw InvalidArgument("pose rows do not match mask length");
}

int check_palm(const GuidanceSpec& g, const graph::LinkNodeSet& links) {
  if (g.palm_row < 0) throw ConfigError("palm link is not set in the hand configuration");
  if (g.palm_row >= links.padded() || !links.mask[g.palm_row])
    throw ConfigError("palm link row " + std::to_string(g.palm_row) + " is not a real link");
  return g.palm_row;
}

int check_palm(const GuidanceSpec& g, const PoseMatrix& psi) {
  if (g.palm_row < 0) throw ConfigError("palm link is not set in the hand configuration");
  if (g.palm_row >= psi.rows()) throw ConfigError("palm link row out of range");
  return g.palm_row;
}

se3::Vector3 theta_of(const PoseMatrix& psi, int row) { return psi.row(row).tail<3>().transpose(); }

}  // namespace

int Schedule::grid_position(int t) const {
  auto it = std::lower_bound(ddim_steps.begin(), ddim_steps.end(), t);
  if (it == ddim_steps.end() || *it != t)
    throw InvalidArgument("step " + std::to_string(t) + " is not on the sampling grid");
  return static_cast<int>(it - ddim_steps.begin()) + 1;
}

bool Schedule::on_grid(int t) const { return std::binary_search(ddim_steps.begin(), ddim_steps.end(), t); }

int Schedule::nearest_grid_step(int t) const {
  int best = ddim_steps.front();
  for (int s : ddim_steps)
    if (std::abs(s - t) < std::abs(best - t)) best = s;
  return best;
}

int Schedule::previous_step(int t) const {
  int pos = grid_position(t);
  return pos == 1 ? 0 : ddim_steps[pos - 2];
}

Schedule linear_schedule(int T, double beta_min, double beta_max, int ddim_steps, double lambda) {
  if (T < 1) throw InvalidArgument("T must be positive");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw InvalidArgument("beta bounds must satisfy 0 < beta_min < beta_max < 1");
  if (ddim_steps < 1 || ddim_steps > T) throw InvalidArgument("ddim step count must be in [1, T]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be non-negative");
  Schedule s;
  s.T = T;
  s.lambda = lambda;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 1.0);
  s.alpha_bar.assign(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = T == 1 ? beta_min : beta_min + (beta_max - beta_min) * (t - 1) / static_cast<double>(T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  for (int i = 1; i <= ddim_steps; ++i) {
    int t = static_cast<int>(std::lround(static_cast<double>(i) * T / ddim_steps));
    s.ddim_steps.push_back(std::clamp(t, 1, T));
  }
  s.ddim_steps.erase(std::unique(s.ddim_steps.begin(), s.ddim_steps.end()), s.ddim_steps.end());
  return s;
}

Noised forward_noise(const PoseMatrix& psi0, const graph::LinkMask& mask, int t, const Schedule& s,
                     const PoseMatrix& epsilon) {
  check_shape(psi0, mask);
  if (t < 1 || t > s.T) throw InvalidArgument("forward_noise step out of range: " + std::to_string(t));
  if (epsilon.rows() != psi0.rows()) throw InvalidArgument("noise shape mismatch");
  const double a = std::sqrt(s.alpha_bar[t]);
  const double b = std::sqrt(1.0 - s.alpha_bar[t]);
  Noised out{PoseMatrix::Zero(psi0.rows(), 6), PoseMatrix::Zero(psi0.rows(), 6)};
  for (Eigen::Index r = 0; r < psi0.rows(); ++r) {
    if (!mask[r]) continue;
    out.epsilon.row(r) = epsilon.row(r);
    out.psi_t.row(r) = a * psi0.row(r) + b * epsilon.row(r);
  }
  return out;
}

namespace {
PoseMatrix draw_noise(const graph::LinkMask& mask, Rng& rng) {
  PoseMatrix eps = PoseMatrix::Zero(static_cast<Eigen::Index>(mask.size()), 6);
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (!mask[r]) continue;
    for (int c = 0; c < 6; ++c) eps(r, c) = rng.normal();
  }
  return eps;
}
}  // namespace

Noised forward_noise(const PoseMatrix& psi0, const graph::LinkMask& mask, int t, const Schedule& s, Rng& rng) {
  check_shape(psi0, mask);
  return forward_noise(psi0, mask, t, s, draw_noise(mask, rng));
}

PoseMatrix forward_step(const PoseMatrix& psi_prev, const graph::LinkMask& mask, int t, const Schedule& s,
                        Rng& rng) {
  check_shape(psi_prev, mask);
  if (t < 1 || t > s.T) throw InvalidArgument("forward_step step out of range");
  PoseMatrix eps = draw_noise(mask, rng);
  PoseMatrix out = PoseMatrix::Zero(psi_prev.rows(), 6);
  for (Eigen::Index r = 0; r < psi_prev.rows(); ++r)
    if (mask[r]) out.row(r) = std::sqrt(s.alpha[t]) * psi_prev.row(r) + std::sqrt(s.beta[t]) * eps.row(r);
  return out;
}

graph::TroGraph renoise_graph(const graph::TroGraph& g0, int t, const Schedule& s, Rng& rng) {
  auto noised = forward_noise(g0.links().poses, g0.links().mask, t, s, rng);
  return g0.with_link_poses(noised.psi_t);
}

double ddim_sigma(int t, int t_prev, const Schedule& s) {
  check_step(s, t, "t");
  check_step(s, t_prev, "t_prev");
  if (t_prev >= t) throw InvalidArgument("t_prev must be smaller than t");
  const double a = s.alpha_bar[t];
  const double ap = s.alpha_bar[t_prev];
  const double first = (1.0 - ap) / (1.0 - a);
  const double second = 1.0 - a / ap;
  return std::sqrt(std::max(0.0, first)) * std::sqrt(std::max(0.0, second));
}

void GuidanceSpec::validate(const Schedule& s) const {
  if (!(strength_max >= 0.0) || !std::isfinite(strength_max))
    throw ConfigError("guidance strength must be non-negative");
  if (t_star != 0 && !s.on_grid(t_star))
    throw ConfigError("t_star " + std::to_string(t_star) + " is not on the sampling grid");
  if (kind != GuidanceKind::None && !se3::is_rotation(r_init, 1e-6))
    throw ConfigError("r_init is not a rotation matrix");
  if (kind == GuidanceKind::Contact) {
    if (contact.points.rows() == 0) throw ConfigError("contact region is empty");
    if (contact.heat.size() != contact.points.rows()) throw ConfigError("heat length does not match points");
    if ((contact.heat.array() < 0.0).any() || !(contact.heat.array() > 0.0).any())
      throw ConfigError("heat must be non-negative with at least one positive value");
    if (!se3::is_rotation(contact.rotation, 1e-6)) throw ConfigError("r_cont is not a rotation matrix");
  }
}

double guidance_strength(int step_number, int total_steps, double strength_max) {
  if (total_steps < 1 || step_number < 1 || step_number > total_steps)
    throw InvalidArgument("guidance step index out of range");
  return strength_max * std::sin(step_number * std::numbers::pi / (2.0 * total_steps));
}

double pose_guidance_loss(const PoseMatrix& psi, const GuidanceSpec& g) {
  int palm = check_palm(g, psi);
  return se3::geodesic_so3(g.r_init, se3::exp_so3(theta_of(psi, palm)));
}

PoseMatrix pose_guidance_gradient(const PoseMatrix& psi, const GuidanceSpec& g) {
  int palm = check_palm(g, psi);
  PoseMatrix grad = PoseMatrix::Zero(psi.rows(), 6);
  grad.row(palm).tail<3>() = se3::geodesic_so3_gradient(g.r_init, theta_of(psi, palm)).transpose();
  return grad;
}

namespace {

struct CenterCache {
  std::vector<int> rows;
  std::vector<se3::Vector3> world;
};

CenterCache link_centers(const PoseMatrix& psi, const graph::LinkNodeSet& links) {
  CenterCache c;
  for (int r : links.real_rows()) {
    se3::Transform tf = se3::exp_map(se3::Pose6::from_vector(psi.row(r).transpose()));
    c.rows.push_back(r);
    c.world.push_back(tf.apply(links.centers.row(r).transpose()));
  }
  if (c.rows.empty()) throw InvalidArgument("graph has no real links");
  return c;
}

int closest(const CenterCache& c, const se3::Vector3& p, double& d2) {
  int best = 0;
  d2 = (p - c.world[0]).squaredNorm();
  for (std::size_t j = 1; j < c.world.size(); ++j) {
    double d = (p - c.world[j]).squaredNorm();
    if (d < d2) {
      d2 = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace

double contact_loss(const PoseMatrix& psi, const graph::LinkNodeSet& links, const GuidanceSpec& g) {
  int palm = check_palm(g, links);
  double geo = se3::geodesic_so3(g.contact.rotation, se3::exp_so3(theta_of(psi, palm)));
  CenterCache c = link_centers(psi, links);
  double num = 0.0;
  for (Eigen::Index i = 0; i < g.contact.points.rows(); ++i) {
    double d2;
    closest(c, g.contact.points.row(i).transpose(), d2);
    num += g.contact.heat[i] * d2;
  }
  return geo + num / g.contact.heat.sum();
}

PoseMatrix contact_loss_gradient(const PoseMatrix& psi, const graph::LinkNodeSet& links, const GuidanceSpec& g) {
  int palm = check_palm(g, links);
  PoseMatrix grad = PoseMatrix::Zero(psi.rows(), 6);
  grad.row(palm).tail<3>() = se3::geodesic_so3_gradient(g.contact.rotation, theta_of(psi, palm)).transpose();

  CenterCache c = link_centers(psi, links);
  // d center / d psi = R [I | -[c]x] J_r(psi)
  std::vector<Eigen::Matrix<double, 3, 6>> dcenter(c.rows.size());
  for (std::size_t j = 0; j < c.rows.size(); ++j) {
    int r = c.rows[j];
    se3::Pose6 p = se3::Pose6::from_vector(psi.row(r).transpose());
    se3::Matrix3 rot = se3::exp_so3(p.theta);
    Eigen::Matrix<double, 3, 6> local;
    local.leftCols<3>() = se3::Matrix3::Identity();
    local.rightCols<3>() = -se3::hat(links.centers.row(r).transpose());
    dcenter[j] = rot * local * se3::right_jacobian(p);
  }
  const double wsum = g.contact.heat.sum();
  for (Eigen::Index i = 0; i < g.contact.points.rows(); ++i) {
    if (g.contact.heat[i] == 0.0) continue;
    se3::Vector3 p = g.contact.points.row(i).transpose();
    double d2;
    int j = closest(c, p, d2);
    se3::Vector3 diff = c.world[j] - p;
    grad.row(c.rows[j]) += (2.0 * g.contact.heat[i] / wsum) * (diff.transpose() * dcenter[j]);
  }
  return grad;
}

PoseMatrix apply_guidance(const PoseMatrix& psi0_hat, const graph::LinkNodeSet& links, int step_number,
                          int total_steps, const GuidanceSpec& g) {
  if (g.kind == GuidanceKind::None) return psi0_hat;
  const double s = guidance_strength(step_number, total_steps, g.strength_max);
  PoseMatrix grad = g.kind == GuidanceKind::Pose ? (check_palm(g, links), pose_guidance_gradient(psi0_hat, g))
                                                 : contact_loss_gradient(psi0_hat, links, g);
  PoseMatrix out = psi0_hat - s * grad;
  for (int r = 0; r < links.padded(); ++r)
    if (!links.mask[r]) out.row(r).setZero();
  return out;
}

graph::TroGraph ddim_step(const graph::TroGraph& g_t, int t, int t_prev, const PoseMatrix& eps_pred,
                          const Schedule& s, Rng& rng, const GuidanceSpec* guidance, StepStats* stats) {
  const auto& links = g_t.links();
  if (eps_pred.rows() != links.padded()) throw InvalidArgument("noise prediction has wrong row count");
  if (!eps_pred.allFinite()) throw NumericError("noise prediction is not finite at step " + std::to_string(t));
  const double sigma = ddim_sigma(t, t_prev, s);
  const double a = s.alpha_bar[t];
  const double ap = s.alpha_bar[t_prev];
  const PoseMatrix& psi_t = links.poses;

  PoseMatrix eps = eps_pred;
  PoseMatrix psi0 = (psi_t - std::sqrt(1.0 - a) * eps) / std::sqrt(a);
  if (guidance && guidance->kind != GuidanceKind::None) {
    const int m = s.steps();
    const int step_number = m + 1 - s.grid_position(t);
    psi0 = apply_guidance(psi0, links, step_number, m, *guidance);
    eps = (psi_t - std::sqrt(a) * psi0) / std::sqrt(1.0 - a);
  }
  double radicand = 1.0 - ap - sigma * sigma;
  if (radicand < 0.0) {
    radicand = 0.0;
    if (stats) ++stats->clamped_radicands;
  }
  PoseMatrix fresh = draw_noise(links.mask, rng);
  PoseMatrix next = std::sqrt(ap) * psi0 + std::sqrt(radicand) * eps + (s.lambda * sigma) * fresh;
  for (int r = 0; r < links.padded(); ++r)
    if (!links.mask[r]) next.row(r).setZero();
  return g_t.with_link_poses(next);
}

SampleResult sample(const graph::TroGraph& start, const Schedule& s, const NoisePredictor& predictor, Rng& rng,
                    const SampleOptions& options) {
  const int start_t = options.start_t == 0 ? s.T : options.start_t;
  int pos = s.grid_position(start_t);
  if (options.guidance) options.guidance->validate(s);
  SampleResult result{start, 0, {}};
  for (int k = pos; k >= 1; --k) {
    const int t = s.ddim_steps[k - 1];
    const int t_prev = k == 1 ? 0 : s.ddim_steps[k - 2];
    PoseMatrix eps = predictor(result.graph, t);
    result.graph = ddim_step(result.graph, t, t_prev, eps, s, rng, options.guidance, &result.stats);
    ++result.steps_run;
  }
  return result;
}

graph::TroGraph unconditioned_start(const graph::TroGraph& like, Rng& rng) {
  return like.with_link_poses(draw_noise(like.links().mask, rng));
}

graph::TroGraph conditioned_start(const graph::TroGraph& initial, int t_star, const Schedule& s, Rng& rng) {
  s.grid_position(t_star);
  return renoise_graph(initial, t_star, s, rng);
}

se3::Vector3 estimate_normal(const pc::PointCloud& cloud, const se3::Vector3& center, int k) {
  const auto& pts = cloud.points();
  const int n = static_cast<int>(pts.rows());
  k = std::clamp(k, 1, n);
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) dist[i] = {(pts.row(i).transpose() - center).squaredNorm(), i};
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  se3::Vector3 mean = se3::Vector3::Zero();
  for (int i = 0; i < k; ++i) mean += pts.row(dist[i].second).transpose();
  mean /= k;
  se3::Matrix3 cov = se3::Matrix3::Zero();
  for (int i = 0; i < k; ++i) {
    se3::Vector3 d = pts.row(dist[i].second).transpose() - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<se3::Matrix3> es(cov);
  se3::Vector3 normal = es.eigenvectors().col(0);
  se3::Vector3 outward = center - pts.colwise().mean().transpose();
  if (outward.squaredNorm() < 1e-24) outward = center;
  if (normal.dot(outward) < 0.0) normal = -normal;
  return normal.normalized();
}

se3::Matrix3 palm_rotation_facing(const se3::Vector3& palm_normal, const se3::Vector3& object_normal) {
  se3::Vector3 a = palm_normal.normalized();
  se3::Vector3 b = -object_normal.normalized();
  return Eigen::Quaterniond::FromTwoVectors(a, b).toRotationMatrix();
}

ContactTarget contact_region(const pc::PointCloud& cloud, int center_index, int k, double sigma,
                             const se3::Vector3& palm_normal) {
  const auto& pts = cloud.points();
  const int n = static_cast<int>(pts.rows());
  if (center_index < 0 || center_index >= n) throw InvalidArgument("contact center index out of range");
  if (!(sigma > 0.0)) throw InvalidArgument("contact heat width must be positive");
  k = std::clamp(k, 1, n);
  se3::Vector3 center = pts.row(center_index).transpose();
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) dist[i] = {(pts.row(i).transpose() - center).squaredNorm(), i};
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  ContactTarget out;
  out.points.resize(k, 3);
  out.heat.resize(k);
  for (int i = 0; i < k; ++i) {
    out.points.row(i) = pts.row(dist[i].second);
    out.heat[i] = std::exp(-dist[i].first / (2.0 * sigma * sigma));
  }
  out.rotation = palm_rotation_facing(palm_normal, estimate_normal(cloud, center));
  return out;
}

}  // namespace tro::diffusion
