#include <chrono>
#include <ostream>

#include "trograph/cli.hpp"
#include "trograph/errors.hpp"
#include "trograph/rng.hpp"

namespace tro::cli {

namespace {

pc::PointCloud moved(const pc::PointCloud& cloud, const se3::Transform& tf) {
  pc::Points pts = cloud.points();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) = tf.apply(pts.row(i).transpose()).transpose();
  return pc::PointCloud(std::move(pts));
}

double pose_error(const se3::Transform& a, const se3::Transform& b) {
  // atan2 form of the geodesic angle; acos loses ~1e-8 near zero
  return se3::rotation_angle(a.rotation.transpose() * b.rotation) + (a.translation - b.translation).norm();
}

double displacement(const se3::Transform& from, const se3::Transform& to) {
  return pose_error(from, to);
}

}  // namespace

ClosedLoopReport run_closed_loop(const RunConfig& config, const HandBundle& hand, const pc::PointCloud& object,
                                 const std::vector<se3::Transform>& initial_links,
                                 const PredictorFactory& predictor, std::uint64_t seed) {
  config.validate();
  const auto schedule = config.make_schedule();
  const auto builder = config.make_builder();
  const int t_star = config.closed_loop_t_star(schedule);
  const int palm = hand.palm_row(config.palm_link);
  if (config.closed_loop.steer && palm < 0)
    throw ConfigError("closed-loop steering needs a palm link (hand.json or hand.palm_link)");
  const auto path = config.closed_loop.scenario.trajectory(seed);

  const graph::TroGraph start = builder.build(*hand.hand, builder.object_nodes(object), initial_links);
  graph::PoseMatrix previous = start.links().poses;

  ClosedLoopReport report;
  for (int tick = 1; tick < static_cast<int>(path.size()); ++tick) {
    TickRecord rec;
    rec.tick = tick;
    rec.time = tick * config.closed_loop.scenario.interval;
    rec.displacement = displacement(path[tick - 1], path[tick]);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto objects = builder.object_nodes(moved(object, path[tick]));
      auto initial = graph::TroGraph::make(objects, start.links().with_poses(previous), start.meta());

      std::vector<se3::Transform> tracked_links;
      for (const auto& l : initial_links) tracked_links.push_back(se3::compose(path[tick], l));
      auto tracked = graph::TroGraph::make(objects, start.links(), start.meta());
      {
        graph::PoseMatrix p = graph::PoseMatrix::Zero(start.link_pad(), 6);
        for (std::size_t j = 0; j < tracked_links.size(); ++j)
          p.row(static_cast<Eigen::Index>(j)) = se3::log_map_nearest(tracked_links[j]).vector().transpose();
        tracked = tracked.with_link_poses(p);
      }

      diffusion::GuidanceSpec guide;
      if (config.closed_loop.steer) {
        guide.kind = diffusion::GuidanceKind::Pose;
        guide.palm_row = palm;
        guide.t_star = t_star;
        guide.strength_max = config.guidance.strength_max;
        guide.r_init = se3::exp_so3(previous.row(palm).tail<3>().transpose());
      }
      Rng rng = Rng::stream(seed, 1000 + static_cast<std::uint64_t>(tick));
      auto begin = diffusion::conditioned_start(initial, t_star, schedule, rng);
      diffusion::SampleOptions opts;
      opts.start_t = t_star;
      opts.guidance = config.closed_loop.steer ? &guide : nullptr;
      auto result = diffusion::sample(begin, schedule, predictor(tracked), rng, opts);

      auto got = link_transforms(result.graph);
      double err = 0.0;
      for (std::size_t j = 0; j < got.size(); ++j) err += pose_error(got[j], tracked_links[j]);
      rec.tracking_error = err / static_cast<double>(got.size());
      previous = result.graph.links().poses;
    } catch (const Error& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    report.latency_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    report.ticks.push_back(rec);
  }
  return report;
}

void write_closed_loop_csv(std::ostream& os, const ClosedLoopReport& report) {
  os << "tick,time,displacement,tracking_error,status\n";
  os.precision(17);
  for (const auto& r : report.ticks) {
    std::string status = r.ok ? "ok" : r.error;
    for (char& c : status)
      if (c == ',' || c == '\n') c = ';';
    os << r.tick << ',' << r.time << ',' << r.displacement << ',' << r.tracking_error << ',' << status << '\n';
  }
}

}  // namespace tro::cli
