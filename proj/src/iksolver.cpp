#include "trograph/iksolver.hpp"

#include <Eigen/Cholesky>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "trograph/errors.hpp"
#include "trograph/rng.hpp"

namespace tro::ik {

using Eigen::MatrixXd;
using Eigen::VectorXd;

IkProblem IkProblem::from_targets(std::shared_ptr<const kin::KinematicHand> hand,
                                  std::vector<se3::Transform> targets) {
  IkProblem p;
  const std::size_t n = targets.size();
  p.hand = std::move(hand);
  p.targets = std::move(targets);
  p.mask.assign(n, true);
  p.weights.assign(n, 1.0);
  return p;
}

void IkProblem::validate() const {
  if (!hand) throw InvalidArgument("IK problem has no hand");
  const std::size_t n = static_cast<std::size_t>(hand->link_count());
  if (targets.size() != n || mask.size() != n || weights.size() != n)
    throw InvalidArgument("IK targets, mask and weights must have one entry per link");
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    any = true;
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) throw InvalidArgument("IK weights must be non-negative");
    if (!targets[i].rotation.allFinite() || !targets[i].translation.allFinite())
      throw InvalidArgument("IK target is not finite");
  }
  if (!any) throw InvalidArgument("IK problem needs at least one active target");
  if (!(tol > 0.0)) throw InvalidArgument("IK tolerance must be positive");
  if (max_iters < 1) throw InvalidArgument("IK max_iters must be positive");
  if (restarts < 0) throw InvalidArgument("IK restart count must be non-negative");
}

namespace {

struct Evaluation {
  VectorXd r;  // stacked weighted residuals
  double cost = 0.0;
  double residual = 0.0;
};

class Solver {
 public:
  explicit Solver(const IkProblem& p) : p_(p), hand_(*p.hand), dof_(hand_.dof()) {
    for (int i = 0; i < hand_.link_count(); ++i)
      if (p.mask[i]) active_.push_back(i);
    lo_ = hand_.lower_limits();
    hi_ = hand_.upper_limits();
  }

  Evaluation evaluate(const kin::JointVector& q, const se3::Transform& base) const {
    auto fk = kin::forward_kinematics(hand_, q);
    Evaluation e;
    e.r.resize(6 * static_cast<Eigen::Index>(active_.size()));
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const int i = active_[a];
      se3::Transform err = se3::compose(se3::inverse(p_.targets[i]), se3::compose(base, fk[i]));
      se3::Vector6 log = se3::log_map_nearest(err).vector();
      e.residual += log.norm();
      e.r.segment<6>(6 * static_cast<Eigen::Index>(a)) = std::sqrt(p_.weights[i]) * log;
    }
    e.cost = 0.5 * e.r.squaredNorm();
    return e;
  }

  MatrixXd jacobian(const kin::JointVector& q, const Evaluation& e) const {
    const int nb = p_.optimize_base ? 6 : 0;
    MatrixXd j = MatrixXd::Zero(e.r.size(), dof_ + nb);
    auto fk = kin::forward_kinematics(hand_, q);
    auto geo = kin::fk_jacobian(hand_, q);
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const int i = active_[a];
      const double w = std::sqrt(p_.weights[i]);
      se3::Vector6 log = e.r.segment<6>(6 * static_cast<Eigen::Index>(a)) / (w > 0.0 ? w : 1.0);
      se3::Matrix6 jr_inv = se3::right_jacobian_inverse(se3::Pose6::from_vector(log));
      const Eigen::Index row = 6 * static_cast<Eigen::Index>(a);
      if (dof_ > 0) {
        // body twist of link i per joint: rotate the geometric Jacobian into the link frame
        Eigen::Matrix<double, 6, Eigen::Dynamic> body(6, dof_);
        const se3::Matrix3 rt = fk[i].rotation.transpose();
        body.topRows<3>() = rt * geo[i].topRows<3>();
        body.bottomRows<3>() = rt * geo[i].bottomRows<3>();
        j.block(row, 0, 6, dof_) = w * jr_inv * body;
      }
      if (nb) j.block(row, dof_, 6, 6) = w * jr_inv * se3::adjoint(se3::inverse(fk[i]));
    }
    return j;
  }

  struct Run {
    kin::JointVector q;
    se3::Transform base;
    Evaluation eval;
    int iterations = 0;
    bool converged = false;
  };

  Run run(kin::JointVector q, se3::Transform base) const {
    q = hand_.clamp(q);
    Run out{q, base, evaluate(q, base), 0, false};
    double mu = 1e-3;
    const int n = dof_ + (p_.optimize_base ? 6 : 0);
    for (int it = 0; it < p_.max_iters; ++it) {
      out.iterations = it + 1;
      MatrixXd j = jacobian(out.q, out.eval);
      VectorXd g = j.transpose() * out.eval.r;
      // variables held at a bound by the gradient are frozen for this step
      std::vector<int> free;
      for (int k = 0; k < n; ++k) {
        if (k < dof_) {
          const bool at_lo = out.q[k] <= lo_[k] && g[k] > 0.0;
          const bool at_hi = out.q[k] >= hi_[k] && g[k] < 0.0;
          if (at_lo || at_hi) continue;
        }
        free.push_back(k);
      }
      double gnorm = 0.0;
      for (int k : free) gnorm = std::max(gnorm, std::abs(g[k]));
      if (gnorm < p_.tol || out.eval.cost < 0.5 * p_.tol * p_.tol) {
        out.converged = true;
        break;
      }
      const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
      MatrixXd jf(j.rows(), nf);
      VectorXd gf(nf);
      for (Eigen::Index c = 0; c < nf; ++c) {
        jf.col(c) = j.col(free[c]);
        gf[c] = g[free[c]];
      }
      MatrixXd h = jf.transpose() * jf;
      bool accepted = false;
      while (mu < 1e14) {
        MatrixXd a = h;
        a.diagonal().array() += mu * (1.0 + h.diagonal().array());
        VectorXd step = a.ldlt().solve(-gf);
        VectorXd full = VectorXd::Zero(n);
        for (Eigen::Index c = 0; c < nf; ++c) full[free[c]] = step[c];
        kin::JointVector q2 = dof_ > 0 ? hand_.clamp(out.q + full.head(dof_)) : out.q;
        se3::Transform b2 = out.base;
        if (p_.optimize_base)
          b2 = se3::compose(out.base, se3::exp_map(se3::Pose6::from_vector(full.tail<6>())));
        Evaluation e2 = evaluate(q2, b2);
        if (std::isfinite(e2.cost) && e2.cost < out.eval.cost) {
          const double drop = std::sqrt(2.0 * out.eval.cost) - std::sqrt(2.0 * e2.cost);
          out.q = q2;
          out.base = b2;
          out.eval = e2;
          mu = std::max(mu / 3.0, 1e-12);
          accepted = true;
          if (drop < p_.tol) out.converged = true;
          break;
        }
        mu *= 4.0;
      }
      if (!accepted) {
        // no descent direction left at any damping: a stationary point
        out.converged = true;
        break;
      }
      if (out.converged) break;
    }
    return out;
  }

  se3::Transform initial_base(const kin::JointVector& q) const {
    if (!p_.optimize_base) return p_.base;
    const int root = hand_.root_link();
    if (!p_.mask[root]) return p_.base;
    auto fk = kin::forward_kinematics(hand_, q);
    return se3::compose(p_.targets[root], se3::inverse(fk[root]));
  }

  kin::JointVector random_q(Rng& rng) const {
    kin::JointVector q(dof_);
    for (int k = 0; k < dof_; ++k) q[k] = rng.uniform(lo_[k], hi_[k]);
    return q;
  }

 private:
  const IkProblem& p_;
  const kin::KinematicHand& hand_;
  int dof_;
  std::vector<int> active_;
  VectorXd lo_, hi_;
};

}  // namespace

IkSolution solve_ik(const IkProblem& problem, const std::optional<kin::JointVector>& q_init) {
  problem.validate();
  const auto& hand = *problem.hand;
  if (q_init) {
    if (q_init->size() != hand.dof()) throw InvalidArgument("q_init length does not match the hand");
    if (!hand.within_limits(*q_init)) throw InvalidArgument("q_init is outside the joint limits");
  }
  Solver solver(problem);
  kin::JointVector q0 = q_init ? *q_init : hand.mid_range();
  auto best = solver.run(q0, solver.initial_base(q0));
  int used = 0;
  Rng rng(problem.seed);
  for (int k = 0; k < problem.restarts && !best.converged; ++k) {
    kin::JointVector q = solver.random_q(rng);
    auto r = solver.run(q, solver.initial_base(q));
    ++used;
    if (r.converged || r.eval.cost < best.eval.cost) {
      r.iterations += best.iterations;
      best = std::move(r);
    }
  }
  IkSolution s;
  s.q = best.q;
  s.base = best.base;
  s.residual = best.eval.residual;
  s.iterations = best.iterations;
  s.restarts_used = used;
  s.converged = best.converged;
  return s;
}

int worker_count(int parallelism) {
  int n = parallelism > 0 ? parallelism : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("TROGRAPH_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<long>(n, cap);
  }
  return n;
}

std::vector<IkSolution> batch_solve(const std::vector<IkProblem>& problems, int parallelism) {
  std::vector<IkSolution> out(problems.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < problems.size(); i = next++) {
      try {
        out[i] = solve_ik(problems[i]);
      } catch (const Error&) {
        out[i] = IkSolution{};  // per-item failure: unconverged, empty q
      }
    }
  };
  const int n = std::min<int>(worker_count(parallelism), static_cast<int>(std::max<std::size_t>(problems.size(), 1)));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return out;
}

namespace {

se3::Vector6 read_pose(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 6) throw ParseError(what + " must be an array of 6 numbers", 0);
  se3::Vector6 v;
  for (int k = 0; k < 6; ++k) {
    if (!j[k].is_number()) throw ParseError(what + " must be an array of 6 numbers", 0);
    v[k] = j[k].get<double>();
  }
  if (!v.allFinite()) throw ParseError(what + " is not finite", 0);
  return v;
}

nlohmann::json pose_json(const se3::Transform& t) {
  se3::Vector6 v = se3::log_map_nearest(t).vector();
  return std::vector<double>(v.data(), v.data() + 6);
}

}  // namespace

IkProblem problem_from_json(const nlohmann::json& doc, std::shared_ptr<const kin::KinematicHand> hand) {
  if (!doc.is_object()) throw ParseError("IK problem must be a JSON object", 0);
  if (doc.value("schema_version", 0) != kIkSchemaVersion) throw ParseError("unsupported IK schema_version", 0);
  if (!doc.contains("targets") || !doc["targets"].is_array()) throw ParseError("IK problem needs a targets array", 0);
  const int n = hand->link_count();
  IkProblem p;
  p.targets.assign(n, se3::Transform::identity());
  p.mask.assign(n, false);
  p.weights.assign(n, 1.0);
  for (const auto& t : doc["targets"]) {
    if (!t.contains("link") || !t["link"].is_string()) throw ParseError("target entry needs a link name", 0);
    int i = hand->find_link(t["link"].get<std::string>()).value_or(-1);
    if (i < 0) throw ParseError("unknown link " + t["link"].get<std::string>(), 0);
    p.targets[i] = se3::exp_map(se3::Pose6::from_vector(read_pose(t.value("pose", nlohmann::json()), "target pose")));
    p.mask[i] = true;
  }
  if (doc.contains("weights")) {
    if (!doc["weights"].is_object()) throw ParseError("weights must be an object keyed by link", 0);
    for (const auto& [name, w] : doc["weights"].items()) {
      int i = hand->find_link(name).value_or(-1);
      if (i < 0 || !w.is_number()) throw ParseError("bad weight entry " + name, 0);
      p.weights[i] = w.get<double>();
    }
  }
  if (doc.contains("base")) p.base = se3::exp_map(se3::Pose6::from_vector(read_pose(doc["base"], "base")));
  p.optimize_base = doc.value("optimize_base", true);
  p.max_iters = doc.value("max_iters", p.max_iters);
  p.seed = doc.value("seed", p.seed);
  p.hand = std::move(hand);
  p.validate();
  return p;
}

nlohmann::json problem_to_json(const IkProblem& p) {
  nlohmann::json targets = nlohmann::json::array();
  nlohmann::json weights = nlohmann::json::object();
  for (int i = 0; i < p.hand->link_count(); ++i) {
    if (!p.mask[i]) continue;
    const std::string& name = p.hand->links()[i].name;
    targets.push_back({{"link", name}, {"pose", pose_json(p.targets[i])}});
    weights[name] = p.weights[i];
  }
  return {{"schema_version", kIkSchemaVersion}, {"targets", targets}, {"weights", weights},
          {"optimize_base", p.optimize_base},   {"base", pose_json(p.base)}, {"max_iters", p.max_iters},
          {"seed", p.seed}};
}

nlohmann::json solution_to_json(const IkSolution& s, const kin::KinematicHand& hand) {
  nlohmann::json names = nlohmann::json::array();
  for (int j : hand.actuated_joints()) names.push_back(hand.joints()[j].name);
  return {{"schema_version", kIkSchemaVersion},
          {"joint_names", names},
          {"q", std::vector<double>(s.q.data(), s.q.data() + s.q.size())},
          {"base", pose_json(s.base)},
          {"residual", s.residual},
          {"iterations", s.iterations},
          {"converged", s.converged}};
}

}  // namespace tro::ik
