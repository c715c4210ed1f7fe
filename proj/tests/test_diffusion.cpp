#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "trograph/diffusion.hpp"
#include "trograph/errors.hpp"

using namespace tro;
using namespace tro::diffusion;
using graph::PoseMatrix;

namespace {

// Direct product oracle, independent of the cumulative table.
double alpha_bar_oracle(int t, int T = 1000) {
  double a = 1.0;
  for (int s = 1; s <= t; ++s) a *= 1.0 - (1e-4 + (0.02 - 1e-4) * (s - 1) / (T - 1.0));
  return a;
}

NoisePredictor oracle(const PoseMatrix& psi0, const Schedule& s) {
  return [psi0, &s](const graph::TroGraph& g, int t) -> PoseMatrix {
    const double a = s.alpha_bar[t];
    PoseMatrix eps = (g.links().poses - std::sqrt(a) * psi0) / std::sqrt(1.0 - a);
    for (int r = 0; r < g.link_pad(); ++r)
      if (!g.links().mask[r]) eps.row(r).setZero();
    return eps;
  };
}

template <class F>
PoseMatrix central_difference(const PoseMatrix& psi, F f, double h = 1e-6) {
  PoseMatrix g = PoseMatrix::Zero(psi.rows(), 6);
  for (Eigen::Index r = 0; r < psi.rows(); ++r)
    for (int c = 0; c < 6; ++c) {
      PoseMatrix p = psi, m = psi;
      p(r, c) += h;
      m(r, c) -= h;
      g(r, c) = (f(p) - f(m)) / (2 * h);
    }
  return g;
}

}  // namespace

TEST_CASE("linear schedule values") {
  Schedule s = linear_schedule();
  CHECK(s.T == 1000);
  CHECK(s.beta[1] == doctest::Approx(1e-4).epsilon(1e-14));
  CHECK(s.beta[1000] == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(s.alpha_bar[0] == 1.0);
  CHECK(std::abs(s.alpha_bar[1] - 0.9999) < 1e-15);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    if (t > 1) CHECK(s.beta[t] > s.beta[t - 1]);
  }
  for (int t : {1, 10, 500, 1000}) CHECK(std::abs(s.alpha_bar[t] - alpha_bar_oracle(t)) < 1e-12);
  REQUIRE(s.steps() == 20);
  CHECK(s.ddim_steps.front() == 50);
  CHECK(s.ddim_steps.back() == 1000);
  for (int i = 1; i < s.steps(); ++i) CHECK(s.ddim_steps[i] > s.ddim_steps[i - 1]);
  CHECK(s.lambda == 0.2);
  CHECK(s.nearest_grid_step(150) == 150);
  CHECK(s.nearest_grid_step(160) == 150);
  CHECK(s.previous_step(50) == 0);
  CHECK(s.previous_step(1000) == 950);
}

TEST_CASE("linear schedule rejects bad bounds") {
  CHECK_THROWS_AS(linear_schedule(1000, 0.0, 0.02), InvalidArgument);
  CHECK_THROWS_AS(linear_schedule(1000, 0.03, 0.02), InvalidArgument);
  CHECK_THROWS_AS(linear_schedule(1000, 1e-4, 1.0), InvalidArgument);
  CHECK_THROWS_AS(linear_schedule(0), InvalidArgument);
  CHECK_THROWS_AS(linear_schedule(10, 1e-4, 0.02, 11), InvalidArgument);
}

TEST_CASE("forward noise with zero epsilon is a pure scaling") {
  Schedule s = linear_schedule();
  Rng rng(3);
  auto links = testing::random_links(rng, 4, 6);
  for (int t : {1, 500, 1000}) {
    auto n = forward_noise(links.poses, links.mask, t, s, PoseMatrix::Zero(6, 6));
    CHECK((n.psi_t - std::sqrt(s.alpha_bar[t]) * links.poses).cwiseAbs().maxCoeff() == 0.0);
  }
  auto n = forward_noise(links.poses, links.mask, 300, s, rng);
  CHECK(n.psi_t.bottomRows(2).isZero(0));
  CHECK(n.epsilon.bottomRows(2).isZero(0));
  CHECK_THROWS_AS(forward_noise(links.poses, links.mask, 0, s, rng), InvalidArgument);
}

TEST_CASE("forward noise marginals match the closed form") {
  Schedule s = linear_schedule();
  graph::LinkMask mask{true};
  PoseMatrix psi0(1, 6);
  psi0 << 0.3, -0.2, 0.1, 0.5, -1.0, 0.8;
  const int n = 100000;
  for (int t : {1, 250, 500, 1000}) {
    Rng rng(100 + t);
    Eigen::Matrix<double, 1, 6> sum = Eigen::Matrix<double, 1, 6>::Zero(), sq = sum;
    for (int k = 0; k < n; ++k) {
      auto row = forward_noise(psi0, mask, t, s, rng).psi_t;
      sum += row;
      sq += row.cwiseProduct(row);
    }
    const double var = 1.0 - s.alpha_bar[t];
    for (int c = 0; c < 6; ++c) {
      double mean = sum[c] / n;
      double v = sq[c] / n - mean * mean;
      CHECK(std::abs(mean - std::sqrt(s.alpha_bar[t]) * psi0(0, c)) < 4.0 * std::sqrt(var / n));
      CHECK(std::abs(v - var) < 4.0 * var * std::sqrt(2.0 / n));
    }
  }
}

TEST_CASE("iterated single steps agree with the direct marginal") {
  Schedule s = linear_schedule();
  graph::LinkMask mask{true};
  PoseMatrix psi0(1, 6);
  psi0 << 1.0, -0.5, 0.25, 0.0, 2.0, -1.0;
  const int n = 100000, t = 100;
  Rng rng(9);
  Eigen::Matrix<double, 1, 6> sum = Eigen::Matrix<double, 1, 6>::Zero(), sq = sum;
  for (int k = 0; k < n; ++k) {
    PoseMatrix p = psi0;
    for (int step = 1; step <= t; ++step) p = forward_step(p, mask, step, s, rng);
    sum += p;
    sq += p.cwiseProduct(p);
  }
  const double var = 1.0 - s.alpha_bar[t];
  for (int c = 0; c < 6; ++c) {
    double mean = sum[c] / n;
    double v = sq[c] / n - mean * mean;
    CHECK(std::abs(mean - std::sqrt(s.alpha_bar[t]) * psi0(0, c)) < 4.0 * std::sqrt(var / n));
    CHECK(std::abs(v - var) < 4.0 * var * std::sqrt(2.0 / n));
  }
}

TEST_CASE("renoise at t=1 barely moves the graph") {
  Schedule s = linear_schedule();
  Rng rng(11);
  auto g = testing::random_graph(rng, 5, 4, 6);
  auto r = renoise_graph(g, 1, s, rng);
  double bound = 5.0 * std::sqrt(s.beta[1]) + (1.0 - std::sqrt(s.alpha_bar[1])) * 3.0;
  CHECK((r.links().poses - g.links().poses).cwiseAbs().maxCoeff() < bound);
  CHECK(r.links().poses.bottomRows(2).isZero(0));
  CHECK(r.links().geom == g.links().geom);
  auto rebuilt = graph::build_edges(r.objects(), r.links());
  CHECK(rebuilt.object_link == r.edges().object_link);
  CHECK(rebuilt.link_link == r.edges().link_link);
}

TEST_CASE("ddim sigma") {
  Schedule s = linear_schedule();
  for (int t : s.ddim_steps) CHECK(ddim_sigma(t, 0, s) == 0.0);
  for (int i = 1; i < s.steps(); ++i) {
    int t = s.ddim_steps[i], tp = s.ddim_steps[i - 1];
    double a = alpha_bar_oracle(t), ap = alpha_bar_oracle(tp);
    double direct = std::sqrt((1 - ap) / (1 - a)) * std::sqrt(1 - a / ap);
    CHECK(std::abs(ddim_sigma(t, tp, s) - direct) < 1e-12);
    CHECK(ddim_sigma(t, tp, s) >= 0.0);
    CHECK(1.0 - s.alpha_bar[tp] - std::pow(ddim_sigma(t, tp, s), 2) >= 0.0);
  }
  CHECK_THROWS_AS(ddim_sigma(50, 50, s), InvalidArgument);
}

TEST_CASE("ddim step with zero prediction to t'=0") {
  Schedule s = linear_schedule();
  Rng rng(5);
  auto g = testing::random_graph(rng, 3, 3, 5);
  auto out = ddim_step(g, 50, 0, PoseMatrix::Zero(5, 6), s, rng);
  PoseMatrix expect = g.links().poses / std::sqrt(s.alpha_bar[50]);
  CHECK((out.links().poses - expect).cwiseAbs().maxCoeff() < 1e-12);
  auto rebuilt = graph::build_edges(out.objects(), out.links());
  CHECK(rebuilt.object_link == out.edges().object_link);
  PoseMatrix bad = PoseMatrix::Zero(5, 6);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(ddim_step(g, 50, 0, bad, s, rng), NumericError);
}

TEST_CASE("oracle chain recovers the clean poses") {
  Schedule s = linear_schedule();
  s.lambda = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    Rng rng(seed);
    auto g0 = testing::random_graph(rng, 4, 5, 7);
    auto start = unconditioned_start(g0, rng);
    auto res = sample(start, s, oracle(g0.links().poses, s), rng);
    CHECK(res.steps_run == 20);
    CHECK((res.graph.links().poses - g0.links().poses).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(res.graph.links().poses.bottomRows(2).isZero(0));
  }
}

TEST_CASE("conditioned start skips steps above t_star") {
  Schedule s = linear_schedule();
  s.lambda = 0.0;
  Rng rng(8);
  auto g0 = testing::random_graph(rng, 4, 3, 4);
  auto start = conditioned_start(g0, 150, s, rng);
  SampleOptions opt;
  opt.start_t = 150;
  auto res = sample(start, s, oracle(g0.links().poses, s), rng, opt);
  CHECK(res.steps_run == 3);
  CHECK((res.graph.links().poses - g0.links().poses).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(conditioned_start(g0, 151, s, rng), InvalidArgument);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  Schedule s = linear_schedule();
  Rng setup(21);
  auto g0 = testing::random_graph(setup, 4, 3, 4);
  auto pred = [](const graph::TroGraph& g, int t) -> PoseMatrix { return 0.1 * g.links().poses * (t / 1000.0); };
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    auto start = unconditioned_start(g0, rng);
    return sample(start, s, pred, rng).graph.links().poses;
  };
  PoseMatrix a = run(99), b = run(99), c = run(100);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("guidance strength schedule") {
  CHECK(guidance_strength(20, 20, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(guidance_strength(10, 20, 0.5) == doctest::Approx(0.5 * std::sin(M_PI / 4)));
  CHECK(guidance_strength(1, 20, 0.5) < 0.04);
  CHECK_THROWS_AS(guidance_strength(0, 20, 0.5), InvalidArgument);
}

TEST_CASE("pose guidance gradient and descent") {
  Rng rng(31);
  auto links = testing::random_links(rng, 4, 5);
  GuidanceSpec g;
  g.kind = GuidanceKind::Pose;
  g.palm_row = 0;
  g.r_init = se3::exp_so3(se3::Vector3(0.3, -0.4, 0.2));
  PoseMatrix psi = links.poses;
  PoseMatrix analytic = pose_guidance_gradient(psi, g);
  PoseMatrix fd = central_difference(psi, [&](const PoseMatrix& p) { return pose_guidance_loss(p, g); });
  CHECK((analytic - fd).norm() / fd.norm() < 1e-4);

  double before = pose_guidance_loss(psi, g);
  PoseMatrix stepped = apply_guidance(psi, links, 20, 20, g);
  CHECK(pose_guidance_loss(stepped, g) < before);
  CHECK(stepped.bottomRows(4) == psi.bottomRows(4));

  PoseMatrix at_target = psi;
  at_target.row(0).tail<3>() = se3::log_so3(g.r_init).transpose();
  CHECK(apply_guidance(at_target, links, 20, 20, g) == at_target);

  g.palm_row = -1;
  CHECK_THROWS_AS(apply_guidance(psi, links, 5, 20, g), ConfigError);
}

TEST_CASE("contact guidance gradient matches finite differences") {
  for (std::uint64_t seed : {41u, 42u, 43u}) {
    Rng rng(seed);
    auto links = testing::random_links(rng, 5, 7);
    GuidanceSpec g;
    g.kind = GuidanceKind::Contact;
    g.palm_row = 1;
    g.contact.points.resize(12, 3);
    for (Eigen::Index i = 0; i < g.contact.points.size(); ++i) g.contact.points.data()[i] = rng.uniform(-0.15, 0.15);
    g.contact.heat = Eigen::VectorXd::NullaryExpr(12, [&](Eigen::Index) { return rng.uniform(0.1, 1.0); });
    g.contact.rotation = se3::exp_so3(se3::Vector3(rng.normal(), rng.normal(), rng.normal()) * 0.5);
    PoseMatrix psi = links.poses;
    PoseMatrix analytic = contact_loss_gradient(psi, links, g);
    PoseMatrix fd = central_difference(psi, [&](const PoseMatrix& p) { return contact_loss(p, links, g); });
    CHECK((analytic - fd).norm() / fd.norm() < 1e-4);
    CHECK(analytic.bottomRows(2).isZero(0));

    double before = contact_loss(psi, links, g);
    CHECK(contact_loss(psi - 0.01 * analytic, links, g) < before);
  }
}

TEST_CASE("guided oracle step keeps edge consistency") {
  Schedule s = linear_schedule();
  Rng rng(51);
  auto g0 = testing::random_graph(rng, 4, 4, 5);
  GuidanceSpec g;
  g.kind = GuidanceKind::Pose;
  g.palm_row = 0;
  g.t_star = 150;
  SampleOptions opt{150, &g};
  auto res = sample(conditioned_start(g0, 150, s, rng), s, oracle(g0.links().poses, s), rng, opt);
  auto rebuilt = graph::build_edges(res.graph.objects(), res.graph.links());
  CHECK(rebuilt.link_link == res.graph.edges().link_link);
  CHECK(pose_guidance_loss(res.graph.links().poses, g) < pose_guidance_loss(g0.links().poses, g));
}

TEST_CASE("guidance spec validation") {
  Schedule s = linear_schedule();
  GuidanceSpec g;
  g.kind = GuidanceKind::Contact;
  g.palm_row = 0;
  g.t_star = 150;
  g.contact.points = pc::Points::Zero(2, 3);
  g.contact.heat = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(g.validate(s), ConfigError);
  g.contact.heat[1] = 1.0;
  CHECK_NOTHROW(g.validate(s));
  g.t_star = 151;
  CHECK_THROWS_AS(g.validate(s), ConfigError);
  g.t_star = 150;
  g.strength_max = -1.0;
  CHECK_THROWS_AS(g.validate(s), ConfigError);
}

TEST_CASE("contact region from a sphere") {
  Rng rng(61);
  pc::Points pts(400, 3);
  for (int i = 0; i < 400; ++i) {
    se3::Vector3 v(rng.normal(), rng.normal(), rng.normal());
    pts.row(i) = 0.05 * v.normalized().transpose();
  }
  pc::PointCloud cloud(pts);
  auto region = contact_region(cloud, 7, 20, 0.01, se3::Vector3(0, 0, -1));
  CHECK(region.points.rows() == 20);
  CHECK(region.heat[0] == doctest::Approx(1.0));
  se3::Vector3 normal = estimate_normal(cloud, pts.row(7).transpose());
  CHECK(normal.dot(pts.row(7).transpose().normalized()) > 0.95);
  // palm normal ends up pointing into the object
  se3::Vector3 palm_dir = region.rotation * se3::Vector3(0, 0, -1);
  CHECK(palm_dir.dot(-normal) == doctest::Approx(1.0));
}
