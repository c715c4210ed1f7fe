#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "trograph/errors.hpp"
#include "trograph/graph.hpp"
#include "trograph/iksolver.hpp"
#include "trograph/synthdata.hpp"

using namespace tro;
using namespace tro::synth;

namespace {
int count_revolute(const kin::KinematicHand& h) {
  int n = 0;
  for (const auto& j : h.joints()) n += j.type == kin::JointType::Revolute;
  return n;
}

ObjectSpec sphere(double r) {
  ObjectSpec s;
  s.shape = Shape::Sphere;
  s.radius = r;
  return s;
}
}  // namespace

TEST_CASE("hand templates") {
  auto two = generate_hand(HandTemplate::TwoFinger).hand();
  CHECK(two.link_count() == 5);
  CHECK(two.dof() == 4);
  CHECK(count_revolute(two) == 4);
  CHECK(two.has_all_clouds());
  auto three = generate_hand(HandTemplate::ThreeFinger).hand();
  CHECK(three.link_count() == 7);
  CHECK(three.dof() == 6);
  auto chain = generate_hand(HandTemplate::PlanarChain3).hand();
  CHECK(chain.link_count() == 3);
  CHECK(chain.dof() == 2);
  CHECK_THROWS_AS(parse_template("four_finger"), InvalidArgument);
  CHECK(parse_template("three_finger") == HandTemplate::ThreeFinger);
}

TEST_CASE("generated hands are deterministic and reparse") {
  auto a = generate_hand(HandTemplate::ThreeFinger, 1.0, 5);
  auto b = generate_hand(HandTemplate::ThreeFinger, 1.0, 5);
  CHECK(a.urdf == b.urdf);
  CHECK(a.hand() == b.hand());
  CHECK(kin::parse_urdf(a.urdf) == kin::parse_urdf(kin::to_urdf(kin::parse_urdf(a.urdf))));
  auto c = generate_hand(HandTemplate::ThreeFinger, 1.0, 6);
  CHECK(c.link_clouds[1].second != a.link_clouds[1].second);
}

TEST_CASE("scaled hand similarity") {
  auto base = generate_hand(HandTemplate::TwoFinger, 1.0, 3).hand();
  auto big = generate_hand(HandTemplate::TwoFinger, 1.2, 3).hand();
  auto sim = kin::embodiment_similarity(base, big);
  CHECK(sim.link_alignment == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(sim.joint_overlap == 1.0);
  auto same = kin::embodiment_similarity(base, base);
  CHECK(same.link_alignment == 1.0);
  CHECK(same.joint_overlap == 1.0);
}

TEST_CASE("surface distance oracles") {
  auto s = sphere(0.03);
  CHECK(s.surface_distance({0.05, 0, 0}) == doctest::Approx(0.02));
  CHECK(s.surface_distance({0, 0.01, 0}) == doctest::Approx(0.02));
  ObjectSpec box;
  box.shape = Shape::Box;
  box.half_extents = {0.02, 0.03, 0.04};
  CHECK(box.surface_distance({0, 0, 0}) == doctest::Approx(0.02));
  CHECK(box.surface_distance({0.05, 0, 0}) == doctest::Approx(0.03));
  CHECK(box.surface_distance({0.05, 0.07, 0}) == doctest::Approx(0.05));
  CHECK(box.ray_to_surface({1, 0, 0}) == doctest::Approx(0.02));
  ObjectSpec cyl;
  cyl.shape = Shape::Cylinder;
  cyl.radius = 0.02;
  cyl.half_height = 0.05;
  CHECK(cyl.surface_distance({0, 0, 0.03}) == doctest::Approx(0.01));
  CHECK(cyl.surface_distance({0, 0.08, 0}) == doctest::Approx(0.03));
  CHECK(cyl.ray_to_surface({0, 1, 0}) == doctest::Approx(0.05));
  for (const auto& o : default_objects(9, 2)) {
    auto cloud = sample_object(o.spec, 300, 4);
    for (Eigen::Index i = 0; i < cloud.size(); ++i) CHECK(o.spec.surface_distance(cloud.points().row(i).transpose()) < 1e-12);
    CHECK(ObjectSpec::from_json(o.spec.to_json()).to_json() == o.spec.to_json());
  }
}

TEST_CASE("centred pinch on a sphere of half the fingertip span") {
  auto gh = generate_hand(HandTemplate::TwoFinger);
  const double span = 2.0 * gh.fingers[0].base_radius;
  auto batch = generate_demos(gh, sphere(span / 2.0), "ball", 5, 0.0, 1);
  REQUIRE(batch.demos.size() == 5);
  CHECK(batch.skipped == 0);
  for (const auto& d : batch.demos) {
    CHECK(d.fingertip_distance < 0.002);
    CHECK(std::abs(d.base.translation.x()) < 1e-15);
    CHECK(d.base.rotation.isIdentity(1e-15));
    CHECK(gh.hand().within_limits(d.q));
  }
}

TEST_CASE("closures on every primitive and both hands") {
  for (auto kind : {HandTemplate::TwoFinger, HandTemplate::ThreeFinger}) {
    auto gh = generate_hand(kind);
    auto hand = gh.hand();
    int made = 0;
    for (const auto& o : default_objects(9, 11)) {
      auto batch = generate_demos(gh, o.spec, o.name, 4, 0.4, 3);
      made += static_cast<int>(batch.demos.size());
      for (const auto& d : batch.demos) {
        CHECK(fingertip_distance(hand, gh.meta, d.q, d.base, o.spec) < 0.002);
        CHECK(hand.within_limits(d.q));
      }
    }
    CHECK(made == 36);
  }
}

TEST_CASE("demo generation is seeded and reports unreachable objects") {
  auto gh = generate_hand(HandTemplate::TwoFinger);
  auto a = generate_demos(gh, sphere(0.03), "s", 6, 0.5, 9);
  auto b = generate_demos(gh, sphere(0.03), "s", 6, 0.5, 9);
  REQUIRE(a.demos.size() == b.demos.size());
  for (std::size_t i = 0; i < a.demos.size(); ++i) {
    CHECK(a.demos[i].q == b.demos[i].q);
    CHECK(a.demos[i].base.matrix() == b.demos[i].base.matrix());
  }
  auto far = generate_demos(gh, sphere(0.2), "huge", 3, 0.0, 1);
  CHECK(far.demos.empty());
  CHECK(far.skipped == 3);
  CHECK_THROWS_AS(generate_demos(generate_hand(HandTemplate::PlanarChain3), sphere(0.03), "s", 1, 0.0, 1),
                  InvalidArgument);
}

TEST_CASE("demos convert to consistent graphs and survive an IK round trip") {
  auto gh = generate_hand(HandTemplate::ThreeFinger);
  auto hand = std::make_shared<const kin::KinematicHand>(gh.hand());
  auto builder = graph::GraphBuilder::make(16, 25, 3);
  for (const auto& o : default_objects(3, 5)) {
    auto cloud = sample_object(o.spec, 512, 1);
    auto objects = builder.object_nodes(cloud);
    for (const auto& d : generate_demos(gh, o.spec, o.name, 2, 0.3, 8).demos) {
      auto g = builder.build(*hand, objects, d.q, d.base);
      auto rebuilt = graph::build_edges(g.objects(), g.links());
      CHECK((rebuilt.object_link - g.edges().object_link).cwiseAbs().maxCoeff() == 0.0);
      CHECK(g.links().real_count() == 7);

      std::vector<se3::Transform> targets;
      for (int i = 0; i < hand->link_count(); ++i)
        targets.push_back(se3::exp_map(se3::Pose6::from_vector(g.links().poses.row(i).transpose())));
      auto sol = ik::solve_ik(ik::IkProblem::from_targets(hand, targets));
      CHECK((sol.q - d.q).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("dataset write and load") {
  auto dir = testing::scratch_dir("synth_dataset");
  DatasetSpec spec;
  spec.objects = default_objects(4, 1);
  spec.demos_per_object = 2;
  spec.yaw_range = 0.3;
  spec.object_points = 256;
  spec.seed = 12;
  auto summary = write_dataset(dir, spec);
  CHECK(summary.demos == 8);
  CHECK(summary.hand_name == "two_finger");
  auto ds = load_dataset(dir);
  CHECK(ds.hand.link_count() == 5);
  CHECK(ds.hand.has_all_clouds());
  CHECK(ds.meta.palm_link == "palm");
  CHECK(ds.meta.fingertips.size() == 2);
  CHECK(ds.objects.size() == 4);
  REQUIRE(ds.demos.size() == 8);
  for (const auto& d : ds.demos) {
    const auto& obj = ds.objects.at(d.object);
    REQUIRE(obj.spec.has_value());
    CHECK(fingertip_distance(ds.hand, ds.meta, d.q, d.base, *obj.spec) < 0.002);
  }
  auto again = testing::scratch_dir("synth_dataset_2");
  write_dataset(again, spec);
  auto ds2 = load_dataset(again);
  for (std::size_t i = 0; i < ds.demos.size(); ++i) CHECK(ds.demos[i].q == ds2.demos[i].q);
  CHECK_THROWS_AS(load_dataset(dir / "nope"), InvalidArgument);
}
