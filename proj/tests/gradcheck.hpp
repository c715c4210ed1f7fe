#pragma once

#include <string>

#include "trograph/denoiser.hpp"

namespace tro::testing {

struct GradCheck {
  double worst_rel = 0.0;
  std::string worst_name;
  double worst_zero_abs = 0.0;  // tensors whose true gradient is below the noise floor
};

/// Central differences over every parameter scalar. Relative error is
/// |analytic - fd| / |fd| per tensor; tensors where both norms sit under
/// `floor` (gradient identically zero, e.g. key biases under softmax) are
/// compared in absolute terms instead.
inline GradCheck check_gradients(denoise::DenoiserModel& model, const graph::TroGraph& g, int t,
                                 const graph::PoseMatrix& eps, double h = 1e-5, double floor = 1e-7) {
  auto eval = [&] { return denoise::loss(eps, model.forward(g, t), g.links().mask); };
  auto lg = denoise::backward(model, g, t, eps);
  GradCheck out;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const std::string name = model.params().name(i);
    ad::Matrix& p = model.params().value(i);
    ad::Matrix fd(p.rows(), p.cols());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double keep = p.data()[k];
      p.data()[k] = keep + h;
      double up = eval();
      p.data()[k] = keep - h;
      double down = eval();
      p.data()[k] = keep;
      fd.data()[k] = (up - down) / (2 * h);
    }
    auto it = lg.grads.find(name);
    ad::Matrix an = it == lg.grads.end() ? ad::Matrix::Zero(p.rows(), p.cols()) : it->second;
    double diff = (an - fd).norm();
    if (fd.norm() < floor && an.norm() < floor) {
      out.worst_zero_abs = std::max(out.worst_zero_abs, diff);
      continue;
    }
    double rel = diff / fd.norm();
    if (rel > out.worst_rel) {
      out.worst_rel = rel;
      out.worst_name = name;
    }
  }
  return out;
}

}  // namespace tro::testing
