#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "trograph/errors.hpp"
#include "trograph/iksolver.hpp"

using namespace tro;
using namespace tro::ik;

namespace {

std::shared_ptr<const kin::KinematicHand> load_fixture(const std::string& name) {
  std::ifstream in(testing::fixture(name));
  std::stringstream ss;
  ss << in.rdbuf();
  return std::make_shared<const kin::KinematicHand>(kin::parse_urdf(ss.str()));
}

se3::Transform random_base(Rng& rng) {
  se3::Vector6 v;
  for (int k = 0; k < 3; ++k) v[k] = rng.uniform(-0.2, 0.2);
  for (int k = 3; k < 6; ++k) v[k] = rng.uniform(-1.0, 1.0);
  return se3::exp_map(se3::Pose6::from_vector(v));
}

std::vector<se3::Transform> targets_for(const kin::KinematicHand& hand, const kin::JointVector& q,
                                        const se3::Transform& base) {
  auto fk = kin::forward_kinematics(hand, q);
  for (auto& t : fk) t = se3::compose(base, t);
  return fk;
}

// Residual recomputed independently of the solver.
double pose_residual(const IkProblem& p, const IkSolution& s) {
  auto fk = kin::forward_kinematics(*p.hand, s.q);
  double r = 0.0;
  for (std::size_t i = 0; i < fk.size(); ++i) {
    if (!p.mask[i]) continue;
    se3::Transform got = se3::compose(s.base, fk[i]);
    r += (got.translation - p.targets[i].translation).norm() + se3::geodesic_so3(got.rotation, p.targets[i].rotation);
  }
  return r;
}

}  // namespace

TEST_CASE("round trip on the three-link chain") {
  auto hand = load_fixture("planar_chain3.urdf");
  Rng rng(1);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    kin::JointVector q = testing::random_q(*hand, rng, 0.05);
    auto problem = IkProblem::from_targets(hand, targets_for(*hand, q, random_base(rng)));
    problem.seed = static_cast<std::uint64_t>(k);
    auto sol = solve_ik(problem);
    CHECK(sol.converged);
    CHECK(hand->within_limits(sol.q));
    CHECK(sol.residual >= 0.0);
    worst = std::max(worst, std::max(sol.residual, pose_residual(problem, sol)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("round trip on random spatial hands") {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    auto hand = std::make_shared<const kin::KinematicHand>(testing::random_hand(rng, 5));
    kin::JointVector q = testing::random_q(*hand, rng, 0.1);
    auto problem = IkProblem::from_targets(hand, targets_for(*hand, q, random_base(rng)));
    auto sol = solve_ik(problem);
    CHECK(hand->within_limits(sol.q));
    CHECK(pose_residual(problem, sol) < 1e-6);
  }
}

TEST_CASE("fixed base with a known base is solved without moving it") {
  auto hand = load_fixture("planar_chain3.urdf");
  Rng rng(3);
  kin::JointVector q = testing::random_q(*hand, rng, 0.05);
  se3::Transform base = random_base(rng);
  auto problem = IkProblem::from_targets(hand, targets_for(*hand, q, base));
  problem.optimize_base = false;
  problem.base = base;
  auto sol = solve_ik(problem);
  CHECK(sol.base.matrix() == base.matrix());
  CHECK((sol.q - q).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("target beyond a joint limit pins the joint and leaves the analytic shortfall") {
  const char* urdf = R"(<robot name="one">
    <link name="root"/><link name="arm"/>
    <joint name="hinge" type="revolute"><parent link="root"/><child link="arm"/>
      <origin xyz="0 0 0" rpy="0 0 0"/><axis xyz="0 0 1"/><limit lower="-0.5" upper="0.5"/></joint>
  </robot>)";
  auto hand = std::make_shared<const kin::KinematicHand>(kin::parse_urdf(urdf));
  kin::JointVector q(1);
  q << 0.8;
  auto problem = IkProblem::from_targets(hand, targets_for(*hand, q, se3::Transform::identity()));
  problem.optimize_base = false;
  auto sol = solve_ik(problem);
  CHECK(sol.q[0] == 0.5);
  CHECK(sol.residual == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(sol.converged);

  kin::JointVector start(1);
  start << -0.4;
  auto from_below = solve_ik(problem, start);
  CHECK(from_below.q[0] == 0.5);
  kin::JointVector bad(1);
  bad << 0.9;
  CHECK_THROWS_AS(solve_ik(problem, bad), InvalidArgument);
}

TEST_CASE("all-fixed hand solves only the base") {
  auto hand = load_fixture("two_link_fixed.urdf");
  REQUIRE(hand->dof() == 0);
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    se3::Transform base = random_base(rng);
    auto problem = IkProblem::from_targets(hand, targets_for(*hand, kin::JointVector(0), base));
    problem.mask[0] = false;  // only the child link constrains the base
    problem.base = random_base(rng);
    auto sol = solve_ik(problem);
    CHECK(sol.converged);
    CHECK((sol.base.matrix() - base.matrix()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("problem validation") {
  auto hand = load_fixture("planar_chain3.urdf");
  auto problem = IkProblem::from_targets(hand, targets_for(*hand, hand->mid_range(), se3::Transform::identity()));
  problem.mask.assign(3, false);
  CHECK_THROWS_AS(solve_ik(problem), InvalidArgument);
  problem.mask.assign(3, true);
  problem.weights[1] = -1.0;
  CHECK_THROWS_AS(solve_ik(problem), InvalidArgument);
  problem.weights.pop_back();
  CHECK_THROWS_AS(solve_ik(problem), InvalidArgument);
}

TEST_CASE("batch results are independent of order") {
  auto hand = load_fixture("planar_chain3.urdf");
  Rng rng(5);
  std::vector<IkProblem> problems;
  for (int k = 0; k < 12; ++k) {
    auto p = IkProblem::from_targets(hand, targets_for(*hand, testing::random_q(*hand, rng), random_base(rng)));
    p.seed = static_cast<std::uint64_t>(k);
    problems.push_back(p);
  }
  auto forward = batch_solve(problems, 3);
  std::vector<IkProblem> reversed(problems.rbegin(), problems.rend());
  auto backward = batch_solve(reversed, 2);
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto& a = forward[i];
    const auto& b = backward[problems.size() - 1 - i];
    CHECK(a.q == b.q);
    CHECK(a.base.matrix() == b.base.matrix());
    CHECK(a.residual == b.residual);
  }
  std::vector<IkProblem> same(4, problems[0]);
  auto dup = batch_solve(same, 4);
  for (const auto& s : dup) CHECK(s.q == dup[0].q);
}

TEST_CASE("thread cap from the environment") {
  setenv("TROGRAPH_THREADS", "2", 1);
  CHECK(worker_count(8) == 2);
  CHECK(worker_count(1) == 1);
  setenv("TROGRAPH_THREADS", "junk", 1);
  CHECK(worker_count(3) == 3);
  unsetenv("TROGRAPH_THREADS");
}

TEST_CASE("json round trip") {
  auto hand = load_fixture("planar_chain3.urdf");
  Rng rng(6);
  auto problem = IkProblem::from_targets(hand, targets_for(*hand, testing::random_q(*hand, rng), random_base(rng)));
  problem.weights[2] = 2.0;
  problem.mask[0] = false;
  auto doc = problem_to_json(problem);
  auto back = problem_from_json(doc, hand);
  CHECK(back.mask == problem.mask);
  CHECK(back.weights[2] == 2.0);
  for (int i = 1; i < 3; ++i)
    CHECK((back.targets[i].matrix() - problem.targets[i].matrix()).cwiseAbs().maxCoeff() < 1e-12);
  auto sol = solve_ik(back);
  auto js = solution_to_json(sol, *hand);
  CHECK(js["q"].size() == 2);
  CHECK(js["joint_names"][0] == "j1");
  CHECK(js["converged"].get<bool>() == sol.converged);

  nlohmann::json bad = doc;
  bad["targets"][0]["link"] = "nope";
  CHECK_THROWS_AS(problem_from_json(bad, hand), ParseError);
  bad = doc;
  bad["schema_version"] = 9;
  CHECK_THROWS_AS(problem_from_json(bad, hand), ParseError);
}
