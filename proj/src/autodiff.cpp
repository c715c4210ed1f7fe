#include "trograph/autodiff.hpp"

#include <cmath>
#include <limits>

#include "trograph/errors.hpp"

namespace tro::ad {

void ParameterSet::add(const std::string& name, Matrix value) {
  if (contains(name)) throw InvalidArgument("duplicate parameter " + name);
  index_[name] = values_.size();
  names_.push_back(name);
  values_.push_back(std::move(value));
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter " + name);
  return it->second;
}

const Matrix& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter " + name);
  return values_[it->second];
}

Matrix& ParameterSet::get(const std::string& name) {
  return const_cast<Matrix&>(static_cast<const ParameterSet&>(*this).get(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& v : values_)
    if (!v.allFinite()) return false;
  return true;
}

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::push(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), {}, {}});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::on_back(Var out, std::function<void()> f) {
  if (record_) nodes_[out.id].back = std::move(f);
}

Var Tape::constant(Matrix value) { return push(std::move(value)); }

Var Tape::parameter(const ParameterSet& params, const std::string& name) {
  Var v = push(params.get(name));
  nodes_[v.id].param = name;
  return v;
}

void Tape::backward(Var out) {
  if (!record_) throw InvalidArgument("backward on a non-recording tape");
  if (nodes_[out.id].value.size() != 1) throw InvalidArgument("backward needs a scalar output");
  grad(out.id)(0, 0) = 1.0;
  for (int i = out.id; i >= 0; --i)
    if (nodes_[i].back && nodes_[i].grad.size() != 0) nodes_[i].back();
}

Gradients Tape::parameter_gradients() const {
  Gradients g;
  for (const auto& n : nodes_) {
    if (n.param.empty() || n.grad.size() == 0) continue;
    if (!n.grad.allFinite()) throw NumericError("non-finite gradient for parameter " + n.param);
    auto it = g.find(n.param);
    if (it == g.end())
      g.emplace(n.param, n.grad);
    else
      it->second += n.grad;
  }
  return g;
}

Var Tape::linear(Var x, Var w, Var b) {
  if (x.cols() != w.cols() || b.cols() != w.rows() || b.rows() != 1)
    throw InvalidArgument("linear: shape mismatch");
  Matrix y = x.value() * w.value().transpose();
  y.rowwise() += b.value().row(0);
  Var out = push(std::move(y));
  int o = out.id, xi = x.id, wi = w.id, bi = b.id;
  on_back(out, [this, o, xi, wi, bi] {
    const Matrix& gy = nodes_[o].grad;
    grad(xi).noalias() += gy * nodes_[wi].value;
    grad(wi).noalias() += gy.transpose() * nodes_[xi].value;
    grad(bi) += gy.colwise().sum();
  });
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw InvalidArgument("matmul_nt: shape mismatch");
  Var out = push(a.value() * b.value().transpose());
  int o = out.id, ai = a.id, bi = b.id;
  on_back(out, [this, o, ai, bi] {
    const Matrix& gy = nodes_[o].grad;
    grad(ai).noalias() += gy * nodes_[bi].value;
    grad(bi).noalias() += gy.transpose() * nodes_[ai].value;
  });
  return out;
}

Var Tape::add(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("add: shape mismatch");
  Var out = push(a.value() + b.value());
  int o = out.id, ai = a.id, bi = b.id;
  on_back(out, [this, o, ai, bi] {
    grad(ai) += nodes_[o].grad;
    grad(bi) += nodes_[o].grad;
  });
  return out;
}

Var Tape::add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw InvalidArgument("add_row: shape mismatch");
  Matrix y = x.value();
  y.rowwise() += row.value().row(0);
  Var out = push(std::move(y));
  int o = out.id, xi = x.id, ri = row.id;
  on_back(out, [this, o, xi, ri] {
    grad(xi) += nodes_[o].grad;
    grad(ri) += nodes_[o].grad.colwise().sum();
  });
  return out;
}

Var Tape::scale(Var x, double c) {
  Var out = push(c * x.value());
  int o = out.id, xi = x.id;
  on_back(out, [this, o, xi, c] { grad(xi) += c * nodes_[o].grad; });
  return out;
}

Var Tape::silu(Var x) {
  Matrix sig = (1.0 + (-x.value().array()).exp()).inverse().matrix();
  Var out = push((x.value().array() * sig.array()).matrix());
  int o = out.id, xi = x.id;
  on_back(out, [this, o, xi, sig = std::move(sig)] {
    const auto& xv = nodes_[xi].value.array();
    grad(xi).array() += nodes_[o].grad.array() * sig.array() * (1.0 + xv * (1.0 - sig.array()));
  });
  return out;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.cols() != n || bias.cols() != n) throw InvalidArgument("layer_norm: shape mismatch");
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mu = x.value().row(r).mean();
    auto c = x.value().row(r).array() - mu;
    double var = c.square().mean();
    inv[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = c * inv[r];
  }
  Matrix y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  Var out = push(std::move(y));
  int o = out.id, xi = x.id, gi = gain.id, bi = bias.id;
  on_back(out, [this, o, xi, gi, bi, n, xhat = std::move(xhat), inv = std::move(inv)] {
    const Matrix& gy = nodes_[o].grad;
    grad(gi) += (gy.array() * xhat.array()).colwise().sum().matrix();
    grad(bi) += gy.colwise().sum();
    Matrix dxhat = gy.array().rowwise() * nodes_[gi].value.row(0).array();
    Matrix& gx = grad(xi);
    for (Eigen::Index r = 0; r < gy.rows(); ++r) {
      double s1 = dxhat.row(r).sum();
      double s2 = dxhat.row(r).dot(xhat.row(r));
      gx.row(r).array() +=
          (inv[r] / static_cast<double>(n)) * (static_cast<double>(n) * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2);
    }
  });
  return out;
}

Var Tape::softmax_rows(Var s, const std::function<bool(Eigen::Index, Eigen::Index)>& blocked) {
  const Matrix& sv = s.value();
  Matrix y = Matrix::Zero(sv.rows(), sv.cols());
  for (Eigen::Index i = 0; i < sv.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < sv.cols(); ++j)
      if (!(blocked && blocked(i, j))) mx = std::max(mx, sv(i, j));
    if (!std::isfinite(mx)) continue;
    double total = 0.0;
    for (Eigen::Index j = 0; j < sv.cols(); ++j) {
      if (blocked && blocked(i, j)) continue;
      y(i, j) = std::exp(sv(i, j) - mx);
      total += y(i, j);
    }
    y.row(i) /= total;
  }
  Var out = push(std::move(y));
  int o = out.id, si = s.id;
  on_back(out, [this, o, si] {
    const Matrix& yv = nodes_[o].value;
    const Matrix& gy = nodes_[o].grad;
    Eigen::VectorXd dot = (gy.array() * yv.array()).rowwise().sum();
    grad(si).array() += yv.array() * (gy.colwise() - dot).array();
  });
  return out;
}

Var Tape::pair_aggregate(Var a, Var v) {
  const Eigen::Index nt = a.rows(), ns = a.cols();
  if (v.rows() != nt * ns) throw InvalidArgument("pair_aggregate: shape mismatch");
  Matrix y = Matrix::Zero(nt, v.cols());
  for (Eigen::Index i = 0; i < nt; ++i)
    y.row(i).noalias() = a.value().row(i) * v.value().middleRows(i * ns, ns);
  Var out = push(std::move(y));
  int o = out.id, ai = a.id, vi = v.id;
  on_back(out, [this, o, ai, vi, nt, ns] {
    const Matrix& gy = nodes_[o].grad;
    Matrix& ga = grad(ai);
    Matrix& gv = grad(vi);
    const Matrix& av = nodes_[ai].value;
    const Matrix& vv = nodes_[vi].value;
    for (Eigen::Index i = 0; i < nt; ++i) {
      ga.row(i).noalias() += gy.row(i) * vv.middleRows(i * ns, ns).transpose();
      gv.middleRows(i * ns, ns).noalias() += av.row(i).transpose() * gy.row(i);
    }
  });
  return out;
}

Var Tape::repeat_rows(Var x, Eigen::Index times) {
  const Eigen::Index n = x.rows();
  Matrix y(n * times, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) y.middleRows(i * times, times).rowwise() = x.value().row(i);
  Var out = push(std::move(y));
  int o = out.id, xi = x.id;
  on_back(out, [this, o, xi, n, times] {
    Matrix& gx = grad(xi);
    for (Eigen::Index i = 0; i < n; ++i) gx.row(i) += nodes_[o].grad.middleRows(i * times, times).colwise().sum();
  });
  return out;
}

Var Tape::tile_rows(Var x, Eigen::Index times) {
  const Eigen::Index n = x.rows();
  Matrix y(n * times, x.cols());
  for (Eigen::Index i = 0; i < times; ++i) y.middleRows(i * n, n) = x.value();
  Var out = push(std::move(y));
  int o = out.id, xi = x.id;
  on_back(out, [this, o, xi, n, times] {
    Matrix& gx = grad(xi);
    for (Eigen::Index i = 0; i < times; ++i) gx += nodes_[o].grad.middleRows(i * n, n);
  });
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != parts[0].rows()) throw InvalidArgument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix y(parts[0].rows(), cols);
  Eigen::Index c = 0;
  std::vector<std::pair<int, Eigen::Index>> spans;
  for (const Var& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id, c);
    c += p.cols();
  }
  Var out = push(std::move(y));
  int o = out.id;
  on_back(out, [this, o, spans = std::move(spans)] {
    for (const auto& [id, start] : spans) grad(id) += nodes_[o].grad.middleCols(start, nodes_[id].value.cols());
  });
  return out;
}

Var Tape::weighted_sq_error(Var x, const Matrix& target, const Eigen::RowVectorXd& col_weights) {
  if (x.rows() != target.rows() || x.cols() != target.cols() || col_weights.size() != x.cols())
    throw InvalidArgument("weighted_sq_error: shape mismatch");
  Matrix diff = x.value() - target;
  Matrix y(1, 1);
  y(0, 0) = (diff.array().square().rowwise() * col_weights.array()).sum();
  Var out = push(std::move(y));
  int o = out.id, xi = x.id;
  on_back(out, [this, o, xi, diff = std::move(diff), col_weights] {
    grad(xi).array() += 2.0 * nodes_[o].grad(0, 0) * (diff.array().rowwise() * col_weights.array());
  });
  return out;
}

}  // namespace tro::ad
