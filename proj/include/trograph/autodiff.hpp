#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tro::ad {

using Matrix = Eigen::MatrixXd;

/// Named parameter tensors in a fixed insertion order.
class ParameterSet {
 public:
  void add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;
  const Matrix& get(const std::string& name) const;
  Matrix& get(const std::string& name);
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  std::size_t scalar_count() const;
  bool all_finite() const;
  bool operator==(const ParameterSet& o) const { return names_ == o.names_ && values_ == o.values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients keyed by parameter name. Parameters that never influenced the
/// output have no entry.
using Gradients = std::unordered_map<std::string, Matrix>;

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape. With recording off the ops only evaluate values.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  Var constant(Matrix value);
  Var parameter(const ParameterSet& params, const std::string& name);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and runs every closure.
  void backward(Var out);
  /// Parameter gradients after backward(); throws NumericError naming the
  /// first parameter with a non-finite entry.
  Gradients parameter_gradients() const;

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool recording() const { return record_; }

  // ops
  Var linear(Var x, Var w, Var b);  // x w^T + b
  Var matmul_nt(Var a, Var b);      // a b^T
  Var add(Var a, Var b);
  Var add_row(Var x, Var row);      // row broadcast over x
  Var scale(Var x, double c);
  Var silu(Var x);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  /// Row softmax; entries with blocked(i, j) get zero weight. A fully
  /// blocked row yields zeros.
  Var softmax_rows(Var s, const std::function<bool(Eigen::Index, Eigen::Index)>& blocked = {});
  /// out_i = sum_j a_ij v_{i * ns + j} with a of shape nt x ns.
  Var pair_aggregate(Var a, Var v);
  Var repeat_rows(Var x, Eigen::Index times);  // row i*times + j = x_i
  Var tile_rows(Var x, Eigen::Index times);    // row i*n + j = x_j
  Var concat_cols(const std::vector<Var>& parts);
  /// sum_r sum_c w_c (x_rc - target_rc)^2
  Var weighted_sq_error(Var x, const Matrix& target, const Eigen::RowVectorXd& col_weights);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> back;
    std::string param;
  };
  Var push(Matrix value);
  Matrix& grad(int id);
  void on_back(Var out, std::function<void()> f);

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace tro::ad
