#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace vssf::ad {

using Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const MatrixXd& value() const;
  /// Accumulated gradient; zero matrix of the value's shape if nothing flowed in.
  MatrixXd grad() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear tape of matrix-valued nodes. Nodes are appended in evaluation
/// order, so reverse iteration is a reverse topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const MatrixXd& out_grad)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(MatrixXd value);
  /// Leaf that is treated as data.
  Var constant(MatrixXd value);
  Var constant(double value);

  /// Reverse sweep from a 1x1 root. Throws NotScalarRoot / AlreadyConsumed.
  void backward(const Var& root);
  /// Clears gradients so backward may run again on the same graph.
  void reset_gradients();

  std::size_t size() const { return nodes_.size(); }
  const MatrixXd& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  MatrixXd grad(std::size_t id) const;

  /// Adds `g` to the gradient slot of node `id` (no-op for data nodes).
  void accumulate(std::size_t id, const MatrixXd& g);

  /// Appends an op result. `backward` is dropped when no parent needs a gradient.
  Var push(MatrixXd value, std::span<const Var> parents, BackwardFn backward);
  Var push(MatrixXd value, std::initializer_list<Var> parents, BackwardFn backward) {
    return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
  }

 private:
  struct Node {
    MatrixXd value;
    MatrixXd grad;
    bool has_grad = false;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Elementwise / structural ops.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
/// Matrix product.
Var operator*(const Var& a, const Var& b);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var add_constant(const Var& a, double c);
/// Scalar (1x1) node times matrix.
Var scale(const Var& s, const Var& m);
Var hadamard(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sum(const Var& a);
Var squared_norm(const Var& a);
Var symmetrize(const Var& a);
Var tril(const Var& a);
/// m + 1 * row, where row is 1 x cols.
Var add_row_broadcast(const Var& m, const Var& row);
/// Row i of a matrix, returned as a column vector.
Var row(const Var& m, Eigen::Index i);
/// Stacks column vectors as the rows of a matrix.
Var stack_rows(const std::vector<Var>& columns);

Var gelu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

// Linear algebra.
/// Lower Cholesky factor of the symmetrized input. Throws NotPositiveDefinite.
Var cholesky(const Var& a);
/// L^-1 B for lower-triangular L.
Var solve_lower(const Var& l, const Var& b);
/// L^-T B for lower-triangular L.
Var solve_lower_transpose(const Var& l, const Var& b);
/// x^T M x for a column vector x.
Var quadratic_form(const Var& x, const Var& m);
/// log det of a symmetric PD matrix.
Var logdet(const Var& a);
/// sum_i log L_ii; half the log-determinant when L is a Cholesky factor.
Var sum_log_diag(const Var& l);
/// Inverse of a symmetric PD matrix.
Var spd_inverse(const Var& a);

/// Gaussian log-density log N(x; mean, cov) for column vectors.
Var gaussian_log_density(const Var& x, const Var& mean, const Var& cov);
/// Same density given the lower Cholesky factor of cov.
Var gaussian_log_density_chol(const Var& x, const Var& mean, const Var& chol);

}  // namespace vssf::ad
