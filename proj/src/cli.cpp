#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "trograph/cli.hpp"
#include "trograph/errors.hpp"
#include "trograph/iksolver.hpp"
#include "trograph/rng.hpp"
#include "trograph/synthdata.hpp"

namespace tro::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
}

std::vector<double> pose_json(const se3::Transform& t) {
  se3::Vector6 v = se3::log_map_nearest(t).vector();
  return {v.data(), v.data() + 6};
}

std::vector<double> row_json(const graph::PoseMatrix& m, int r) {
  return {m(r, 0), m(r, 1), m(r, 2), m(r, 3), m(r, 4), m(r, 5)};
}

se3::Matrix3 rotation_from_json(const json& j) {
  if (j.contains("rotation")) {
    auto rows = j.at("rotation").get<std::vector<std::vector<double>>>();
    if (rows.size() != 3) throw ParseError("rotation must be 3x3", 0);
    se3::Matrix3 r;
    for (int i = 0; i < 3; ++i) {
      if (rows[i].size() != 3) throw ParseError("rotation must be 3x3", 0);
      for (int k = 0; k < 3; ++k) r(i, k) = rows[i][k];
    }
    return r;
  }
  if (j.contains("rotvec")) {
    auto v = j.at("rotvec").get<std::vector<double>>();
    if (v.size() != 3) throw ParseError("rotvec must have 3 entries", 0);
    return se3::exp_so3(se3::Vector3(v[0], v[1], v[2]));
  }
  throw ParseError("expected 'rotation' or 'rotvec'", 0);
}

/// Demo-style grasp record; the object name is optional here.
synth::DemoRecord read_grasp(const fs::path& path, const kin::KinematicHand& hand) {
  json j = read_json(path);
  if (j.is_object() && !j.contains("object")) j["object"] = "";
  return synth::demo_from_json(j, hand);
}

std::vector<se3::Transform> read_link_poses(const fs::path& path, const kin::KinematicHand& hand) {
  json j = read_json(path);
  try {
    if (j.at("schema_version").get<int>() != graph::kGraphSchemaVersion)
      throw ParseError("unsupported poses schema_version", 0);
    auto rows = j.at("link_poses").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(rows.size()) != hand.link_count())
      throw ParseError("link_poses needs one entry per link (" + std::to_string(hand.link_count()) + ")", 0);
    std::vector<se3::Transform> out;
    for (const auto& r : rows) {
      if (r.size() != 6) throw ParseError("each link pose has 6 entries", 0);
      out.push_back(se3::exp_map(se3::Pose6::from_vector(Eigen::Map<const se3::Vector6>(r.data()))));
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

std::vector<se3::Transform> grasp_links(const kin::KinematicHand& hand, const synth::DemoRecord& g) {
  auto links = kin::forward_kinematics(hand, g.q);
  for (auto& l : links) l = se3::compose(g.base, l);
  return links;
}

ik::IkSolution solve_links(const HandBundle& b, const std::vector<se3::Transform>& targets, const RunConfig& cfg,
                           std::uint64_t seed) {
  auto p = ik::IkProblem::from_targets(b.hand, targets);
  p.max_iters = cfg.ik.max_iters;
  p.tol = cfg.ik.tol;
  p.restarts = cfg.ik.restarts;
  p.optimize_base = cfg.ik.optimize_base;
  p.seed = seed;
  // start the base where the sampled root link sits
  const int root = b.hand->root_link();
  auto fk = kin::forward_kinematics(*b.hand, b.hand->mid_range());
  p.base = se3::compose(targets[root], se3::inverse(fk[root]));
  return ik::solve_ik(p);
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  RunConfig load() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) {
      c.seed = *seed;
      c.train.seed = *seed;
      c.model.seed = *seed;
    }
    c.validate();
    return c;
  }
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
  bool verbose;
  void info(const std::string& s) const {
    if (verbose) err << s << "\n";
  }
};

// ---------------------------------------------------------------- commands

struct ConfigCmd {
  std::string out;
  int run(const RunConfig& cfg, const Streams& io) const {
    std::string text = cfg.to_json().dump(2) + "\n";
    if (out.empty())
      io.out << text;
    else
      write_text(out, text);
    return 0;
  }
};

struct GenDataCmd {
  std::string out, hand = "two_finger";
  double scale = 1.0, yaw_range = 0.0;
  int objects = 16, per_object = 1, points = 1024;
  int run(const RunConfig& cfg, const Streams& io) const {
    if (objects < 1 || per_object < 1 || points < 1) throw InvalidArgument("counts must be positive");
    synth::DatasetSpec spec;
    spec.hand = synth::parse_template(hand);
    spec.hand_scale = scale;
    spec.objects = synth::default_objects(objects, cfg.seed);
    spec.demos_per_object = per_object;
    spec.yaw_range = yaw_range;
    spec.object_points = points;
    spec.seed = cfg.seed;
    auto s = synth::write_dataset(out, spec);
    io.out << json{{"hand", s.hand_name}, {"demos", s.demos}, {"skipped", s.skipped}}.dump() << "\n";
    return 0;
  }
};

struct BuildGraphCmd {
  std::string object, hand, grasp, poses, out;
  int run(const RunConfig& cfg, const Streams& io) const {
    auto b = load_hand_bundle(hand);
    if (b.palm_row(cfg.palm_link) < 0)
      io.err << "warning: hand '" << b.hand->name() << "' has no palm_link; guided sampling will need one\n";
    auto builder = cfg.make_builder();
    auto objects = builder.object_nodes(pc::load_cloud(object));
    auto links = grasp.empty() ? read_link_poses(poses, *b.hand) : grasp_links(*b.hand, read_grasp(grasp, *b.hand));
    graph::save_graph(out, builder.build(*b.hand, objects, links));
    io.info("wrote " + out);
    return 0;
  }
};

struct SampleCmd {
  std::string checkpoint, hand, object, graph_path, guide_pose, guide_contact, out, timing;
  bool oracle = false;
  std::optional<int> t_star;
  int n = 1;

  int run(RunConfig cfg, const Streams& io) const {
    if (n < 1) throw InvalidArgument("--n must be >= 1");
    if (oracle && graph_path.empty()) throw InvalidArgument("--oracle needs the reference grasp (--graph)");
    if (object.empty() && graph_path.empty()) throw InvalidArgument("give --object or --graph");
    if (oracle && cfg.schedule.lambda != 0.0) {
      io.err << "notice: oracle mode forces lambda = 0\n";
      cfg.schedule.lambda = 0.0;
    }
    const auto schedule = cfg.make_schedule();
    const auto builder = cfg.make_builder();
    auto b = load_hand_bundle(hand);

    std::optional<pc::PointCloud> cloud;
    if (!object.empty()) cloud = pc::load_cloud(object);
    std::optional<graph::TroGraph> templ;
    if (!graph_path.empty()) {
      templ = graph::load_graph(graph_path);
      if (cloud) templ = graph::TroGraph::make(builder.object_nodes(*cloud), templ->links(), templ->meta());
    } else {
      templ = builder.build(*b.hand, builder.object_nodes(*cloud), b.hand->mid_range(), se3::Transform::identity());
    }
    if (templ->links().real_count() != b.hand->link_count())
      throw InvalidArgument("graph link count does not match the hand");

    int start_t = 0;
    if (t_star) {
      if (graph_path.empty()) throw InvalidArgument("--t-star needs an initial grasp (--graph)");
      if (*t_star < 1 || *t_star > schedule.T) throw InvalidArgument("--t-star out of range");
      start_t = schedule.nearest_grid_step(*t_star);
      if (start_t != *t_star)
        io.err << "notice: t-star " << *t_star << " is not on the sampling grid; using " << start_t << "\n";
    }

    diffusion::GuidanceSpec guide;
    if (!guide_pose.empty() || !guide_contact.empty()) {
      if (!guide_pose.empty() && !guide_contact.empty())
        throw InvalidArgument("--guide-pose and --guide-contact are exclusive");
      guide.palm_row = b.palm_row(cfg.palm_link);
      if (guide.palm_row < 0) throw ConfigError("guidance needs a palm link (hand.json or hand.palm_link)");
      guide.strength_max = cfg.guidance.strength_max;
      guide.t_star = start_t;
      if (!guide_pose.empty()) {
        guide.kind = diffusion::GuidanceKind::Pose;
        guide.r_init = rotation_from_json(read_json(guide_pose));
      } else {
        guide.kind = diffusion::GuidanceKind::Contact;
        guide.contact = read_contact(read_json(guide_contact), cloud, b);
      }
      guide.validate(schedule);
    }

    std::optional<denoise::DenoiserModel> model;
    diffusion::NoisePredictor predictor;
    if (oracle) {
      predictor = denoise::oracle_denoiser(templ->links().poses, schedule);
    } else {
      if (checkpoint.empty()) throw InvalidArgument("give --checkpoint or --oracle");
      auto ck = denoise::load_checkpoint(checkpoint);
      model = denoise::DenoiserModel::from_parameters(ck.model, std::move(ck.params));
      predictor = denoise::as_predictor(*model);
    }

    json names = json::array();
    for (const auto& l : b.hand->links()) names.push_back(l.name);
    json grasps = json::array();
    std::ostringstream times;
    times << "index,sample_ms,ik_ms\n";
    for (int k = 0; k < n; ++k) {
      Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(k) + 1);
      auto t0 = Clock::now();
      auto begin = start_t > 0 ? diffusion::conditioned_start(*templ, start_t, schedule, rng)
                               : diffusion::unconditioned_start(*templ, rng);
      diffusion::SampleOptions opts;
      opts.start_t = start_t;
      opts.guidance = guide.kind == diffusion::GuidanceKind::None ? nullptr : &guide;
      auto res = diffusion::sample(begin, schedule, predictor, rng, opts);
      const double sample_ms = ms_since(t0);
      t0 = Clock::now();
      auto sol = solve_links(b, link_transforms(res.graph), cfg, cfg.seed + static_cast<std::uint64_t>(k));
      const double ik_ms = ms_since(t0);
      times << k << ',' << sample_ms << ',' << ik_ms << '\n';
      io.err << "grasp " << k << ": " << sample_ms + ik_ms << " ms\n";

      json poses = json::array();
      for (int r : res.graph.links().real_rows()) poses.push_back(row_json(res.graph.links().poses, r));
      grasps.push_back({{"index", k},
                        {"link_poses", poses},
                        {"q", std::vector<double>(sol.q.data(), sol.q.data() + sol.q.size())},
                        {"base", pose_json(sol.base)},
                        {"ik_residual", sol.residual},
                        {"ik_converged", sol.converged},
                        {"clamped_radicands", res.stats.clamped_radicands}});
    }
    json joint_names = json::array();
    for (int j : b.hand->actuated_joints()) joint_names.push_back(b.hand->joints()[j].name);
    json doc{{"schema_version", kReportSchemaVersion},
             {"hand", b.hand->name()},
             {"mode", oracle ? "oracle" : "checkpoint"},
             {"lambda", schedule.lambda},
             {"t_star", start_t == 0 ? schedule.T : start_t},
             {"guidance", guide.kind == diffusion::GuidanceKind::None ? "none"
                          : guide.kind == diffusion::GuidanceKind::Pose ? "pose"
                                                                        : "contact"},
             {"seed", cfg.seed},
             {"link_names", names},
             {"joint_names", joint_names},
             {"grasps", grasps}};
    write_text(out, doc.dump(2) + "\n");
    if (!timing.empty()) write_text(timing, times.str());
    return 0;
  }

  static diffusion::ContactTarget read_contact(const json& j, const std::optional<pc::PointCloud>& cloud,
                                               const HandBundle& b) {
    const se3::Vector3 palm_normal = b.meta ? b.meta->palm_normal : se3::Vector3(0, 0, -1);
    try {
      if (j.contains("center_index")) {
        if (!cloud) throw InvalidArgument("contact region by center_index needs --object");
        return diffusion::contact_region(*cloud, j.at("center_index").get<int>(), j.value("k", 32),
                                         j.value("sigma", 0.01), palm_normal);
      }
      diffusion::ContactTarget c;
      auto pts = j.at("points").get<std::vector<std::vector<double>>>();
      auto heat = j.at("heat").get<std::vector<double>>();
      c.points = pc::Points(static_cast<Eigen::Index>(pts.size()), 3);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].size() != 3) throw ParseError("contact points need 3 coordinates", 0);
        c.points.row(static_cast<Eigen::Index>(i)) << pts[i][0], pts[i][1], pts[i][2];
      }
      c.heat = Eigen::Map<const Eigen::VectorXd>(heat.data(), static_cast<Eigen::Index>(heat.size()));
      c.rotation = rotation_from_json(j);
      return c;
    } catch (const json::exception& e) {
      throw ParseError(std::string("contact file: ") + e.what(), 0);
    }
  }
};

std::vector<graph::TroGraph> dataset_graphs(const synth::Dataset& ds, const graph::GraphBuilder& builder) {
  std::map<std::string, pc::ObjectNodeSet> nodes;
  for (const auto& [name, obj] : ds.objects) nodes.emplace(name, builder.object_nodes(obj.cloud));
  std::vector<graph::TroGraph> out;
  for (const auto& d : ds.demos) {
    auto it = nodes.find(d.object);
    if (it == nodes.end()) throw StructureError("demo refers to unknown object " + d.object);
    out.push_back(builder.build(ds.hand, it->second, d.q, d.base));
  }
  return out;
}

struct TrainCmd {
  std::string dataset, out, resume, loss_csv;
  std::optional<long> max_steps;
  int run(RunConfig cfg, const Streams& io) const {
    auto ds = synth::load_dataset(dataset);
    if (ds.demos.empty()) throw InvalidArgument("dataset has no demos");
    if (max_steps) cfg.train.max_steps = *max_steps;
    cfg.validate();
    auto graphs = dataset_graphs(ds, cfg.make_builder());

    denoise::AdamState state;
    std::optional<denoise::DenoiserModel> model;
    if (!resume.empty()) {
      auto ck = denoise::load_checkpoint(resume);
      model = denoise::DenoiserModel::from_parameters(ck.model, std::move(ck.params));
      if (!ck.adam) throw InvalidArgument("checkpoint has no optimizer state to resume from");
      state = *ck.adam;
    } else {
      model = denoise::DenoiserModel::init(cfg.model);
    }
    io.info("training on " + std::to_string(graphs.size()) + " graphs, " +
            std::to_string(model->parameter_count()) + " parameters");
    auto result = denoise::train(*model, state, graphs, cfg.make_schedule(), cfg.train);

    std::ostringstream csv;
    csv.precision(17);
    csv << "step,epoch,lr,loss\n";
    for (const auto& e : result.trace) csv << e.step << ',' << e.epoch << ',' << e.lr << ',' << e.loss << '\n';
    write_text(loss_csv.empty() ? out + ".loss.csv" : loss_csv, csv.str());
    if (result.diverged) {
      io.err << "error: training diverged: " << result.message << "\n";
      return 1;
    }
    denoise::save_checkpoint(out, *model, cfg.train, &state);
    json summary{{"steps", state.step}, {"trace_entries", result.trace.size()}};
    if (!result.trace.empty()) {
      summary["initial_smoothed_loss"] = denoise::smoothed_loss(result.trace, true);
      summary["final_smoothed_loss"] = denoise::smoothed_loss(result.trace, false);
    }
    io.out << summary.dump() << "\n";
    return 0;
  }
};

struct IkCmd {
  std::string hand, targets, out;
  int run(const RunConfig&, const Streams& io) const {
    auto b = load_hand_bundle(hand);
    auto problem = ik::problem_from_json(read_json(targets), b.hand);
    auto sol = ik::solve_ik(problem);
    json doc = ik::solution_to_json(sol, *b.hand);
    if (out.empty())
      io.out << doc.dump(2) << "\n";
    else
      write_text(out, doc.dump(2) + "\n");
    return 0;
  }
};

struct SimilarityCmd {
  std::string hand_a, hand_b, out;
  int run(const RunConfig&, const Streams& io) const {
    auto a = load_hand_bundle(hand_a);
    auto b = load_hand_bundle(hand_b);
    auto s = kin::embodiment_similarity(*a.hand, *b.hand);
    json doc{{"schema_version", kReportSchemaVersion},
             {"link_alignment", s.link_alignment},
             {"joint_overlap", s.joint_overlap}};
    if (out.empty())
      io.out << doc.dump(2) << "\n";
    else
      write_text(out, doc.dump(2) + "\n");
    return 0;
  }
};

struct ClosedLoopCmd {
  std::string scenario, checkpoint, hand, object, grasp, report, timing;
  bool oracle = false;
  int run(RunConfig cfg, const Streams& io) const {
    if (!scenario.empty()) cfg.closed_loop.scenario.kind = parse_scenario(scenario);
    if (cfg.closed_loop.scenario.kind == ScenarioKind::Static) cfg.closed_loop.scenario.velocity.setZero();
    if (oracle && cfg.schedule.lambda != 0.0) {
      io.err << "notice: oracle mode forces lambda = 0\n";
      cfg.schedule.lambda = 0.0;
    }
    cfg.validate();
    auto b = load_hand_bundle(hand);
    auto cloud = pc::load_cloud(object);
    auto links = grasp_links(*b.hand, read_grasp(grasp, *b.hand));
    const auto schedule = cfg.make_schedule();

    std::optional<denoise::DenoiserModel> model;
    PredictorFactory factory;
    if (oracle) {
      factory = [&](const graph::TroGraph& tracked) {
        return denoise::oracle_denoiser(tracked.links().poses, schedule);
      };
    } else {
      if (checkpoint.empty()) throw InvalidArgument("give --checkpoint or --oracle");
      auto ck = denoise::load_checkpoint(checkpoint);
      model = denoise::DenoiserModel::from_parameters(ck.model, std::move(ck.params));
      auto pred = denoise::as_predictor(*model);
      factory = [pred](const graph::TroGraph&) { return pred; };
    }
    io.info("closed loop: t* = " + std::to_string(cfg.closed_loop_t_star(schedule)));
    auto rep = run_closed_loop(cfg, b, cloud, links, factory, cfg.seed);
    std::ostringstream csv;
    write_closed_loop_csv(csv, rep);
    write_text(report, csv.str());
    if (!timing.empty()) {
      std::ostringstream t;
      t << "tick,latency_ms\n";
      for (std::size_t i = 0; i < rep.ticks.size(); ++i) t << rep.ticks[i].tick << ',' << rep.latency_ms[i] << '\n';
      write_text(timing, t.str());
    }
    double worst = 0.0;
    int failed = 0;
    for (const auto& r : rep.ticks) {
      worst = std::max(worst, r.tracking_error);
      failed += r.ok ? 0 : 1;
    }
    io.out << json{{"ticks", rep.ticks.size()}, {"failed_ticks", failed}, {"max_tracking_error", worst}}.dump()
           << "\n";
    return 0;
  }
};

struct BenchCmd {
  std::vector<std::string> requested{"graph", "sample", "ik"};
  int repeats = 3;
  std::string out;

  int run(const RunConfig& cfg, const Streams& io) const {
    std::vector<std::string> suite;
    for (const auto& s : requested)
      if (!s.empty()) suite.push_back(s);
    if (suite.empty()) throw InvalidArgument("benchmark suite is empty");
    if (repeats < 1) throw InvalidArgument("--repeats must be >= 1");
    for (const auto& s : suite)
      if (s != "graph" && s != "sample" && s != "ik") throw InvalidArgument("unknown benchmark '" + s + "'");

    auto gh = synth::generate_hand(synth::HandTemplate::TwoFinger, 1.0, cfg.seed);
    auto hand = std::make_shared<const kin::KinematicHand>(gh.hand());
    synth::ObjectSpec sphere;
    auto cloud = synth::sample_object(sphere, 1024, cfg.seed);
    auto builder = cfg.make_builder();
    auto g = builder.build(*hand, builder.object_nodes(cloud), hand->mid_range(), se3::Transform::identity());
    auto schedule = cfg.make_schedule();

    json results = json::array();
    for (const auto& name : suite) {
      std::vector<double> rates;
      std::string unit;
      for (int r = 0; r < repeats; ++r) {
        auto t0 = Clock::now();
        double ops = 0;
        if (name == "graph") {
          unit = "graph builds/s";
          for (int i = 0; i < 5; ++i, ++ops)
            builder.build(*hand, builder.object_nodes(cloud), hand->mid_range(), se3::Transform::identity());
        } else if (name == "sample") {
          unit = "denoising steps/s";
          auto model = denoise::DenoiserModel::init(cfg.model);
          Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(r));
          t0 = Clock::now();
          ops = diffusion::sample(diffusion::unconditioned_start(g, rng), schedule, denoise::as_predictor(model), rng)
                    .steps_run;
        } else {
          unit = "ik solves/s";
          Rng rng = Rng::stream(cfg.seed, 100 + static_cast<std::uint64_t>(r));
          for (int i = 0; i < 10; ++i, ++ops) {
            kin::JointVector q = hand->mid_range();
            for (Eigen::Index k = 0; k < q.size(); ++k)
              q[k] = rng.uniform(hand->lower_limits()[k], hand->upper_limits()[k]);
            auto targets = kin::forward_kinematics(*hand, q);
            ik::solve_ik(ik::IkProblem::from_targets(hand, targets));
          }
        }
        rates.push_back(ops / std::max(1e-9, ms_since(t0) / 1000.0));
      }
      const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / rates.size();
      double var = 0.0;
      for (double x : rates) var += (x - mean) * (x - mean);
      var = rates.size() > 1 ? var / (rates.size() - 1) : 0.0;
      results.push_back({{"name", name},
                         {"unit", unit},
                         {"repeats", repeats},
                         {"rates", rates},
                         {"mean", mean},
                         {"stddev", std::sqrt(var)}});
      io.info(name + ": " + std::to_string(mean) + " " + unit);
    }
    json doc{{"schema_version", kReportSchemaVersion},
             {"model", cfg.model.to_json()},
             {"ddim_steps", cfg.schedule.ddim_steps},
             {"suite", results}};
    if (out.empty())
      io.out << doc.dump(2) << "\n";
    else
      write_text(out, doc.dump(2) + "\n");
    return 0;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph diffusion grasp synthesis toolkit", "trograph"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "run configuration JSON");
  app.add_option("--seed", g.seed, "root seed (overrides the config)");
  app.add_flag("-v,--verbose", g.verbose, "log progress to stderr");

  ConfigCmd config_cmd;
  auto* c_config = app.add_subcommand("config", "print the effective configuration");
  c_config->add_option("--out", config_cmd.out);

  GenDataCmd gen;
  auto* c_gen = app.add_subcommand("gen-data", "write a synthetic demonstration dataset");
  c_gen->add_option("--out", gen.out)->required();
  c_gen->add_option("--hand", gen.hand, "two_finger, three_finger or planar_chain3");
  c_gen->add_option("--scale", gen.scale);
  c_gen->add_option("--objects", gen.objects);
  c_gen->add_option("--demos-per-object", gen.per_object);
  c_gen->add_option("--yaw-range", gen.yaw_range);
  c_gen->add_option("--points", gen.points);

  BuildGraphCmd bg;
  auto* c_bg = app.add_subcommand("build-graph", "build a T(R,O) graph from a grasp");
  c_bg->add_option("--object", bg.object)->required();
  c_bg->add_option("--hand", bg.hand)->required();
  auto* o_grasp = c_bg->add_option("--grasp", bg.grasp);
  auto* o_poses = c_bg->add_option("--poses", bg.poses);
  o_grasp->excludes(o_poses);
  c_bg->add_option("--out", bg.out)->required();

  SampleCmd sm;
  auto* c_sm = app.add_subcommand("sample", "sample grasps and solve IK");
  auto* o_ck = c_sm->add_option("--checkpoint", sm.checkpoint);
  auto* o_or = c_sm->add_flag("--oracle", sm.oracle);
  o_ck->excludes(o_or);
  c_sm->add_option("--hand", sm.hand)->required();
  c_sm->add_option("--object", sm.object);
  c_sm->add_option("--graph", sm.graph_path, "reference / initial grasp graph");
  c_sm->add_option("--guide-pose", sm.guide_pose);
  c_sm->add_option("--guide-contact", sm.guide_contact);
  c_sm->add_option("--t-star", sm.t_star);
  c_sm->add_option("--n", sm.n);
  c_sm->add_option("--out", sm.out)->required();
  c_sm->add_option("--timing", sm.timing, "per-grasp wall clock CSV");

  TrainCmd tr;
  auto* c_tr = app.add_subcommand("train", "train the denoiser on a dataset");
  c_tr->add_option("--dataset", tr.dataset)->required();
  c_tr->add_option("--out-checkpoint", tr.out)->required();
  c_tr->add_option("--resume", tr.resume);
  c_tr->add_option("--loss-csv", tr.loss_csv);
  c_tr->add_option("--max-steps", tr.max_steps);

  IkCmd ikc;
  auto* c_ik = app.add_subcommand("ik", "solve joint values for link targets");
  c_ik->add_option("--hand", ikc.hand)->required();
  c_ik->add_option("--targets", ikc.targets)->required();
  c_ik->add_option("--out", ikc.out);

  SimilarityCmd sim;
  auto* c_sim = app.add_subcommand("similarity", "embodiment similarity of two hands");
  c_sim->add_option("--hand-a", sim.hand_a)->required();
  c_sim->add_option("--hand-b", sim.hand_b)->required();
  c_sim->add_option("--out", sim.out);

  ClosedLoopCmd cl;
  auto* c_cl = app.add_subcommand("closed-loop", "track a moving object with conditioned sampling");
  c_cl->add_option("--scenario", cl.scenario, "static, constant_velocity or random");
  auto* o_cl_ck = c_cl->add_option("--checkpoint", cl.checkpoint);
  auto* o_cl_or = c_cl->add_flag("--oracle", cl.oracle);
  o_cl_ck->excludes(o_cl_or);
  c_cl->add_option("--hand", cl.hand)->required();
  c_cl->add_option("--object", cl.object)->required();
  c_cl->add_option("--grasp", cl.grasp)->required();
  c_cl->add_option("--report", cl.report)->required();
  c_cl->add_option("--timing", cl.timing, "per-tick latency CSV");

  BenchCmd bench;
  auto* c_bench = app.add_subcommand("bench", "throughput report");
  c_bench->add_option("--suite", bench.requested, "graph, sample, ik")->delimiter(',');
  c_bench->add_option("--repeats", bench.repeats);
  c_bench->add_option("--out", bench.out);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  Streams io{out, err, g.verbose};
  try {
    RunConfig cfg = g.load();
    if (c_config->parsed()) return config_cmd.run(cfg, io);
    if (c_gen->parsed()) return gen.run(cfg, io);
    if (c_bg->parsed()) return bg.run(cfg, io);
    if (c_sm->parsed()) return sm.run(cfg, io);
    if (c_tr->parsed()) return tr.run(cfg, io);
    if (c_ik->parsed()) return ikc.run(cfg, io);
    if (c_sim->parsed()) return sim.run(cfg, io);
    if (c_cl->parsed()) return cl.run(cfg, io);
    if (c_bench->parsed()) return bench.run(cfg, io);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace tro::cli
