#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "trograph/cli.hpp"
#include "trograph/iksolver.hpp"

using namespace tro;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "trograph");
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// small two-finger dataset shared by several cases
fs::path dataset(const fs::path& dir) {
  auto r = invoke({"gen-data", "--out", (dir / "ds").string(), "--objects", "3", "--points", "300", "--seed", "4"});
  REQUIRE(r.code == 0);
  return dir / "ds";
}

}  // namespace

TEST_CASE("config dump carries the documented defaults") {
  auto r = invoke({"config"});
  REQUIRE(r.code == 0);
  json j = json::parse(r.out);
  CHECK(j["schema_version"] == cli::kConfigSchemaVersion);
  CHECK(j["schedule"]["T"] == 1000);
  CHECK(j["schedule"]["ddim_steps"] == 20);
  CHECK(j["schedule"]["lambda"] == 0.2);
  CHECK(j["graph"]["patches"] == 25);
  CHECK(j["graph"]["link_pad"] == 25);
  CHECK(j["graph"]["basis_points"] == 124);
  CHECK(j["train"]["gamma_p"] == 1.0);
  CHECK(j["train"]["gamma_r"] == 1.0);
  CHECK(j["closed_loop"]["interval"] == 0.25);
  CHECK(j["closed_loop"]["steps"] == 30);

  // round trip through a file
  auto dir = testing::scratch_dir("cli_config");
  write(dir / "c.json", r.out);
  auto again = invoke({"config", "--config", (dir / "c.json").string()});
  CHECK(again.out == r.out);
}

TEST_CASE("config validation maps to exit 2") {
  auto dir = testing::scratch_dir("cli_badcfg");
  write(dir / "unknown.json", R"({"schedule": {"T": 1000, "warp": 3}})");
  write(dir / "lambda.json", R"({"schedule": {"lambda": -1}})");
  write(dir / "type.json", R"({"graph": {"patches": "many"}})");
  write(dir / "broken.json", "{");
  for (auto f : {"unknown.json", "lambda.json", "type.json", "broken.json"}) {
    auto r = invoke({"config", "--config", (dir / f).string()});
    CHECK_MESSAGE(r.code == 2, f);
    CHECK(r.err.find("error") != std::string::npos);
  }
  CHECK(invoke({"no-such-command"}).code == 2);
  CHECK(invoke({}).code == 2);
}

TEST_CASE("build-graph writes a graph that passes integrity checks") {
  auto dir = testing::scratch_dir("cli_graph");
  auto ds = dataset(dir);
  auto demo = (ds / "demos" / "0000.json").string();
  auto r = invoke({"build-graph", "--object", (ds / "objects" / "sphere_00.xyz").string(), "--hand",
                (ds / "hands" / "two_finger").string(), "--grasp", demo, "--out", (dir / "g.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("warning") == std::string::npos);
  auto g = graph::load_graph(dir / "g.json");
  CHECK(g.links().real_count() == 5);
  CHECK(g.patches() == 25);

  SUBCASE("hand without palm annotation warns") {
    fs::copy_file(testing::fixture("planar_chain3.urdf"), dir / "chain.urdf");
    json poses{{"schema_version", 1}, {"link_poses", json::array()}};
    for (int i = 0; i < 3; ++i) poses["link_poses"].push_back({0.01 * i, 0, 0, 0, 0, 0.1 * i});
    write(dir / "poses.json", poses.dump());
    auto w = invoke({"build-graph", "--object", (ds / "objects" / "sphere_00.xyz").string(), "--hand",
                  (dir / "chain.urdf").string(), "--poses", (dir / "poses.json").string(), "--out",
                  (dir / "g2.json").string()});
    CHECK(w.code == 0);
    CHECK(w.err.find("warning") != std::string::npos);
    CHECK(w.err.find("palm_link") != std::string::npos);
  }
  SUBCASE("malformed URDF is a validation failure") {
    write(dir / "bad.urdf", "<robot name='x'><link name='a'/><joint name='j' type='revolute'>");
    auto b = invoke({"build-graph", "--object", (ds / "objects" / "sphere_00.xyz").string(), "--hand",
                  (dir / "bad.urdf").string(), "--grasp", demo, "--out", (dir / "g3.json").string()});
    CHECK(b.code == 2);
    CHECK_FALSE(fs::exists(dir / "g3.json"));
  }
}

TEST_CASE("oracle sampling returns the reference grasp every time") {
  auto dir = testing::scratch_dir("cli_sample");
  auto ds = dataset(dir);
  auto hand = (ds / "hands" / "two_finger").string();
  REQUIRE(invoke({"build-graph", "--object", (ds / "objects" / "box_01.xyz").string(), "--hand", hand, "--grasp",
               (ds / "demos" / "0001.json").string(), "--out", (dir / "g.json").string()})
              .code == 0);
  auto r = invoke({"sample", "--oracle", "--hand", hand, "--graph", (dir / "g.json").string(), "--n", "5", "--out",
                (dir / "s.json").string(), "--seed", "11"});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("lambda = 0") != std::string::npos);

  auto ref = graph::load_graph(dir / "g.json");
  json s = load(dir / "s.json");
  CHECK(s["lambda"] == 0.0);
  REQUIRE(s["grasps"].size() == 5);
  for (const auto& gr : s["grasps"]) {
    double worst = 0.0;
    for (int l = 0; l < 5; ++l)
      for (int c = 0; c < 6; ++c) worst = std::max(worst, std::abs(gr["link_poses"][l][c].get<double>() - ref.links().poses(l, c)));
    CHECK(worst < 1e-6);
    CHECK(gr["ik_residual"].get<double>() < 1e-6);
  }
}

TEST_CASE("guided sampling snaps t-star onto the grid") {
  auto dir = testing::scratch_dir("cli_tstar");
  auto ds = dataset(dir);
  auto hand = (ds / "hands" / "two_finger").string();
  REQUIRE(invoke({"build-graph", "--object", (ds / "objects" / "sphere_00.xyz").string(), "--hand", hand, "--grasp",
               (ds / "demos" / "0000.json").string(), "--out", (dir / "g.json").string()})
              .code == 0);
  write(dir / "pose.json", R"({"schema_version": 1, "rotvec": [0.0, 0.0, 0.3]})");
  auto r = invoke({"sample", "--oracle", "--hand", hand, "--graph", (dir / "g.json").string(), "--guide-pose",
                (dir / "pose.json").string(), "--t-star", "137", "--out", (dir / "s.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("not on the sampling grid; using 150") != std::string::npos);
  json s = load(dir / "s.json");
  CHECK(s["t_star"] == 150);
  CHECK(s["guidance"] == "pose");

  SUBCASE("guidance without a palm link is rejected") {
    fs::copy_file(testing::fixture("planar_chain3.urdf"), dir / "chain.urdf");
    json poses{{"schema_version", 1}, {"link_poses", json::array()}};
    for (int i = 0; i < 3; ++i) poses["link_poses"].push_back({0.01 * i, 0, 0, 0, 0, 0.1 * i});
    write(dir / "poses.json", poses.dump());
    REQUIRE(invoke({"build-graph", "--object", (ds / "objects" / "sphere_00.xyz").string(), "--hand",
                    (dir / "chain.urdf").string(), "--poses", (dir / "poses.json").string(), "--out",
                    (dir / "chain_g.json").string()})
                .code == 0);
    auto plain = invoke({"sample", "--oracle", "--hand", (dir / "chain.urdf").string(), "--graph",
                         (dir / "chain_g.json").string(), "--out", (dir / "s1.json").string()});
    CHECK(plain.code == 0);
    auto bad = invoke({"sample", "--oracle", "--hand", (dir / "chain.urdf").string(), "--graph",
                       (dir / "chain_g.json").string(), "--guide-pose", (dir / "pose.json").string(), "--out",
                       (dir / "s2.json").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("palm") != std::string::npos);
  }
}

TEST_CASE("train: checkpoint, loss trace, resume and failures") {
  auto dir = testing::scratch_dir("cli_train");
  auto ds = dataset(dir);
  write(dir / "tiny.json", R"({"model": {"d": 8, "layers": 1}, "graph": {"patches": 4},
                              "train": {"batch_size": 2, "max_steps": 6}})");
  auto cfg = (dir / "tiny.json").string();
  auto full = invoke({"--config", cfg, "train", "--dataset", ds.string(), "--out-checkpoint", (dir / "full.ck").string()});
  REQUIRE(full.code == 0);
  CHECK(fs::exists(dir / "full.ck"));
  CHECK(fs::exists(dir / "full.ck.json"));
  std::string trace = slurp(dir / "full.ck.loss.csv");
  CHECK(trace.rfind("step,epoch,lr,loss\n", 0) == 0);

  // four steps, then resume to six
  REQUIRE(invoke({"--config", cfg, "train", "--dataset", ds.string(), "--out-checkpoint", (dir / "half.ck").string(),
               "--max-steps", "4"})
              .code == 0);
  REQUIRE(invoke({"--config", cfg, "train", "--dataset", ds.string(), "--out-checkpoint", (dir / "rest.ck").string(),
               "--resume", (dir / "half.ck").string()})
              .code == 0);
  std::string rest = slurp(dir / "rest.ck.loss.csv");
  std::istringstream a(trace), b(rest);
  std::vector<std::string> la, lb;
  for (std::string l; std::getline(a, l);) la.push_back(l);
  for (std::string l; std::getline(b, l);) lb.push_back(l);
  REQUIRE(la.size() == 7);
  REQUIRE(lb.size() == 3);
  CHECK(lb[1] == la[5]);
  CHECK(lb[2] == la[6]);
  CHECK(slurp(dir / "rest.ck") == slurp(dir / "full.ck"));

  auto missing = invoke({"--config", cfg, "train", "--dataset", (dir / "nope").string(), "--out-checkpoint",
                      (dir / "x.ck").string()});
  CHECK(missing.code == 2);

  write(dir / "hot.json", R"({"model": {"d": 8, "layers": 1}, "graph": {"patches": 4},
                             "train": {"batch_size": 2, "max_steps": 40, "lr": 1e300}})");
  auto hot = invoke({"--config", (dir / "hot.json").string(), "train", "--dataset", ds.string(), "--out-checkpoint",
                  (dir / "hot.ck").string()});
  CHECK(hot.code == 1);
  CHECK(hot.err.find("diverged") != std::string::npos);
  CHECK(fs::exists(dir / "hot.ck.loss.csv"));
  CHECK_FALSE(fs::exists(dir / "hot.ck"));
}

TEST_CASE("ik round trip through the command line") {
  auto dir = testing::scratch_dir("cli_ik");
  fs::copy_file(testing::fixture("planar_chain3.urdf"), dir / "hand.urdf");
  auto hand = std::make_shared<const kin::KinematicHand>(kin::load_hand(dir / "hand.urdf"));
  kin::JointVector q(2);
  q << 0.4, -0.7;
  auto problem = ik::IkProblem::from_targets(hand, kin::forward_kinematics(*hand, q));
  problem.optimize_base = false;
  write(dir / "targets.json", ik::problem_to_json(problem).dump());
  auto r = invoke({"ik", "--hand", dir.string(), "--targets", (dir / "targets.json").string(), "--out",
                (dir / "sol.json").string()});
  REQUIRE(r.code == 0);
  json s = load(dir / "sol.json");
  CHECK(s["q"][0].get<double>() == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(s["q"][1].get<double>() == doctest::Approx(-0.7).epsilon(1e-9));
  CHECK(s["residual"].get<double>() < 1e-6);

  SUBCASE("limit-pinned target") {
    kin::JointVector far(2);
    far << 0.4, -2.5;  // beyond the distal limit
    auto p2 = ik::IkProblem::from_targets(hand, kin::forward_kinematics(*hand, far));
    p2.optimize_base = false;
    write(dir / "far.json", ik::problem_to_json(p2).dump());
    auto f = invoke({"ik", "--hand", dir.string(), "--targets", (dir / "far.json").string()});
    REQUIRE(f.code == 0);
    json fs_ = json::parse(f.out);
    CHECK(fs_["q"][1].get<double>() >= hand->lower_limits()[1]);
    CHECK(fs_["residual"].get<double>() > 1e-3);
  }
}

TEST_CASE("similarity of identical hands is one") {
  auto dir = testing::scratch_dir("cli_sim");
  auto ds = dataset(dir);
  auto h = (ds / "hands" / "two_finger").string();
  auto r = invoke({"similarity", "--hand-a", h, "--hand-b", h});
  REQUIRE(r.code == 0);
  json j = json::parse(r.out);
  CHECK(j["link_alignment"] == 1.0);
  CHECK(j["joint_overlap"] == 1.0);
}

TEST_CASE("closed-loop oracle tracking") {
  auto dir = testing::scratch_dir("cli_loop");
  auto ds = dataset(dir);
  std::vector<std::string> base{"closed-loop", "--oracle", "--hand", (ds / "hands" / "two_finger").string(),
                                "--object", (ds / "objects" / "sphere_00.xyz").string(), "--grasp",
                                (ds / "demos" / "0000.json").string()};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return invoke(a);
  };
  auto read_rows = [](const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
      std::vector<std::string> cols;
      std::istringstream ls(line);
      for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
      rows.push_back(cols);
    }
    return rows;
  };

  REQUIRE(with({"--scenario", "constant_velocity", "--report", (dir / "cv.csv").string(), "--timing",
                (dir / "lat.csv").string()})
              .code == 0);
  auto cv = read_rows(dir / "cv.csv");
  REQUIRE(cv.size() == 30);
  for (const auto& r : cv) {
    CHECK(r[4] == "ok");
    CHECK(std::stod(r[2]) == doctest::Approx(0.0125).epsilon(1e-9));
    CHECK(std::stod(r[3]) <= std::stod(r[2]) + 1e-6);
  }
  CHECK(fs::exists(dir / "lat.csv"));

  REQUIRE(with({"--scenario", "static", "--report", (dir / "st.csv").string()}).code == 0);
  for (const auto& r : read_rows(dir / "st.csv")) CHECK(std::stod(r[3]) < 1e-6);

  REQUIRE(with({"--scenario", "random", "--report", (dir / "rnd.csv").string()}).code == 0);
  auto rnd = read_rows(dir / "rnd.csv");
  REQUIRE(rnd.size() == 30);
  for (const auto& r : rnd) CHECK(std::stod(r[2]) <= 0.0125 + 30.0 * 3.14159265358979 / 180.0 + 1e-12);

  CHECK(with({"--scenario", "spiral", "--report", (dir / "x.csv").string()}).code == 2);
}

TEST_CASE("bench report schema") {
  auto dir = testing::scratch_dir("cli_bench");
  write(dir / "small.json", R"({"model": {"d": 8, "layers": 1}, "schedule": {"ddim_steps": 4}})");
  auto r = invoke({"--config", (dir / "small.json").string(), "bench", "--suite", "graph,sample,ik", "--repeats", "2",
                "--out", (dir / "b.json").string()});
  REQUIRE(r.code == 0);
  json j = load(dir / "b.json");
  CHECK(j["schema_version"] == cli::kReportSchemaVersion);
  REQUIRE(j["suite"].size() == 3);
  for (const auto& s : j["suite"]) {
    CHECK(s.contains("name"));
    CHECK(s.contains("unit"));
    CHECK(s["rates"].size() == 2);
    CHECK(s["mean"].get<double>() > 0.0);
    CHECK(s["stddev"].get<double>() >= 0.0);
  }
  CHECK(invoke({"bench", "--suite", ""}).code == 2);
  CHECK(invoke({"bench", "--suite", "warp"}).code == 2);
}
