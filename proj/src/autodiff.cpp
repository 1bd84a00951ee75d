#include "vssf/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "vssf/error.hpp"
#include "vssf/gaussian.hpp"

namespace vssf::ad {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShapeMismatch,
          std::string(op) + ": operand shapes differ");
}

void require_same_tape(const Var& a, const Var& b) {
  require(a.tape() == b.tape() && a.tape() != nullptr, ErrorKind::kShapeMismatch,
          "operands live on different tapes");
}

MatrixXd lower_part(const MatrixXd& m) { return m.triangularView<Eigen::Lower>(); }

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

const MatrixXd& Var::value() const { return tape_->value(id_); }
MatrixXd Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const MatrixXd& v = value();
  require(v.rows() == 1 && v.cols() == 1, ErrorKind::kNotScalarRoot, "node is not 1x1");
  return v(0, 0);
}

Var Tape::variable(MatrixXd value) {
  nodes_.push_back(Node{std::move(value), MatrixXd(), false, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(MatrixXd value) {
  nodes_.push_back(Node{std::move(value), MatrixXd(), false, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(double value) { return constant(MatrixXd::Constant(1, 1, value)); }

Var Tape::push(MatrixXd value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const Var& p : parents) {
    require(p.tape() == this, ErrorKind::kShapeMismatch, "operands live on different tapes");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), MatrixXd(), false, needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

MatrixXd Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.has_grad) return n.grad;
  return MatrixXd::Zero(n.value.rows(), n.value.cols());
}

void Tape::accumulate(std::size_t id, const MatrixXd& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

void Tape::backward(const Var& root) {
  require(root.tape() == this, ErrorKind::kNotScalarRoot, "root belongs to another tape");
  const MatrixXd& rv = nodes_[root.id()].value;
  require(rv.rows() == 1 && rv.cols() == 1, ErrorKind::kNotScalarRoot, "backward needs a 1x1 root");
  require(!consumed_, ErrorKind::kAlreadyConsumed, "backward already ran; reset_gradients first");
  consumed_ = true;
  accumulate(root.id(), MatrixXd::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::reset_gradients() {
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  consumed_ = false;
}

Var operator+(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var operator-(const Var& a) { return a * -1.0; }

Var operator*(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require(a.cols() == b.rows(), ErrorKind::kShapeMismatch, "matmul: inner dimensions differ");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, const MatrixXd& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var operator*(const Var& a, double s) {
  const std::size_t ia = a.id();
  return a.tape()->push(a.value() * s, {a}, [ia, s](Tape& t, const MatrixXd& g) { t.accumulate(ia, g * s); });
}

Var operator*(double s, const Var& a) { return a * s; }

Var add_constant(const Var& a, double c) {
  const std::size_t ia = a.id();
  return a.tape()->push(a.value().array() + c, {a}, [ia](Tape& t, const MatrixXd& g) { t.accumulate(ia, g); });
}

Var scale(const Var& s, const Var& m) {
  require_same_tape(s, m);
  require(s.rows() == 1 && s.cols() == 1, ErrorKind::kShapeMismatch, "scale: first operand must be 1x1");
  const std::size_t is = s.id(), im = m.id();
  return s.tape()->push(s.value()(0, 0) * m.value(), {s, m}, [is, im](Tape& t, const MatrixXd& g) {
    if (t.needs_grad(is)) t.accumulate(is, MatrixXd::Constant(1, 1, (g.array() * t.value(im).array()).sum()));
    if (t.needs_grad(im)) t.accumulate(im, t.value(is)(0, 0) * g);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "hadamard");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, const MatrixXd& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var transpose(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape()->push(a.value().transpose(), {a},
                        [ia](Tape& t, const MatrixXd& g) { t.accumulate(ia, g.transpose()); });
}

Var sum(const Var& a) {
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape()->push(MatrixXd::Constant(1, 1, a.value().sum()), {a}, [ia, r, c](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, MatrixXd::Constant(r, c, g(0, 0)));
  });
}

Var squared_norm(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape()->push(MatrixXd::Constant(1, 1, a.value().squaredNorm()), {a},
                        [ia](Tape& t, const MatrixXd& g) { t.accumulate(ia, 2.0 * g(0, 0) * t.value(ia)); });
}

Var symmetrize(const Var& a) {
  require(a.rows() == a.cols(), ErrorKind::kShapeMismatch, "symmetrize: matrix must be square");
  const std::size_t ia = a.id();
  return a.tape()->push(vssf::symmetrize(a.value()), {a},
                        [ia](Tape& t, const MatrixXd& g) { t.accumulate(ia, vssf::symmetrize(g)); });
}

Var tril(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape()->push(lower_part(a.value()), {a},
                        [ia](Tape& t, const MatrixXd& g) { t.accumulate(ia, lower_part(g)); });
}

Var add_row_broadcast(const Var& m, const Var& row_vec) {
  require_same_tape(m, row_vec);
  require(row_vec.rows() == 1 && row_vec.cols() == m.cols(), ErrorKind::kShapeMismatch,
          "add_row_broadcast: row must be 1 x cols");
  const std::size_t im = m.id(), ir = row_vec.id();
  MatrixXd out = m.value();
  out.rowwise() += row_vec.value().row(0);
  return m.tape()->push(std::move(out), {m, row_vec}, [im, ir](Tape& t, const MatrixXd& g) {
    t.accumulate(im, g);
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var row(const Var& m, Eigen::Index i) {
  require(i >= 0 && i < m.rows(), ErrorKind::kShapeMismatch, "row: index out of range");
  const std::size_t im = m.id();
  const Eigen::Index r = m.rows(), c = m.cols();
  return m.tape()->push(m.value().row(i).transpose(), {m}, [im, i, r, c](Tape& t, const MatrixXd& g) {
    MatrixXd full = MatrixXd::Zero(r, c);
    full.row(i) = g.col(0).transpose();
    t.accumulate(im, full);
  });
}

Var stack_rows(const std::vector<Var>& columns) {
  require(!columns.empty(), ErrorKind::kShapeMismatch, "stack_rows: no inputs");
  Tape* tape = columns.front().tape();
  const Eigen::Index width = columns.front().rows();
  MatrixXd out(static_cast<Eigen::Index>(columns.size()), width);
  std::vector<std::size_t> ids;
  ids.reserve(columns.size());
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const Var& c = columns[k];
    require(c.tape() == tape, ErrorKind::kShapeMismatch, "operands live on different tapes");
    require(c.cols() == 1 && c.rows() == width, ErrorKind::kShapeMismatch,
            "stack_rows: inputs must be equal-length columns");
    out.row(static_cast<Eigen::Index>(k)) = c.value().col(0).transpose();
    ids.push_back(c.id());
  }
  return tape->push(std::move(out), std::span<const Var>(columns), [ids = std::move(ids)](Tape& t, const MatrixXd& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      t.accumulate(ids[k], g.row(static_cast<Eigen::Index>(k)).transpose());
    }
  });
}

Var gelu(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape()->push(a.value().unaryExpr(&gelu_value), {a}, [ia](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ia).unaryExpr(&gelu_slope)));
  });
}

Var tanh(const Var& a) {
  MatrixXd out = a.value().array().tanh();
  const std::size_t ia = a.id();
  return a.tape()->push(out, {a}, [ia, out](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var exp(const Var& a) {
  MatrixXd out = a.value().array().exp();
  const std::size_t ia = a.id();
  return a.tape()->push(out, {a}, [ia, out](Tape& t, const MatrixXd& g) { t.accumulate(ia, g.cwiseProduct(out)); });
}

Var log(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape()->push(a.value().array().log(), {a}, [ia](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
  });
}

Var cholesky(const Var& a) {
  require(a.rows() == a.cols(), ErrorKind::kShapeMismatch, "cholesky: matrix must be square");
  MatrixXd l = cholesky_lower(a.value());
  const std::size_t ia = a.id();
  return a.tape()->push(l, {a}, [ia, l](Tape& t, const MatrixXd& g) {
    // P = Phi(L^T Lbar) with Phi = lower triangle, halved diagonal; S = L^-T P L^-1.
    MatrixXd p = lower_part(l.transpose() * lower_part(g));
    p.diagonal() *= 0.5;
    const auto lt = l.triangularView<Eigen::Lower>();
    MatrixXd s = lt.transpose().solve(p);
    s = lt.transpose().solve(s.transpose()).transpose();
    t.accumulate(ia, vssf::symmetrize(s));
  });
}

Var solve_lower(const Var& l, const Var& b) {
  require_same_tape(l, b);
  require(l.rows() == l.cols() && l.cols() == b.rows(), ErrorKind::kShapeMismatch, "solve_lower shapes");
  MatrixXd x = l.value().triangularView<Eigen::Lower>().solve(b.value());
  const std::size_t il = l.id(), ib = b.id();
  return l.tape()->push(x, {l, b}, [il, ib, x](Tape& t, const MatrixXd& g) {
    const MatrixXd bbar = t.value(il).triangularView<Eigen::Lower>().transpose().solve(g);
    t.accumulate(ib, bbar);
    if (t.needs_grad(il)) t.accumulate(il, lower_part(-bbar * x.transpose()));
  });
}

Var solve_lower_transpose(const Var& l, const Var& b) {
  require_same_tape(l, b);
  require(l.rows() == l.cols() && l.cols() == b.rows(), ErrorKind::kShapeMismatch, "solve_lower_transpose shapes");
  MatrixXd x = l.value().triangularView<Eigen::Lower>().transpose().solve(b.value());
  const std::size_t il = l.id(), ib = b.id();
  return l.tape()->push(x, {l, b}, [il, ib, x](Tape& t, const MatrixXd& g) {
    const MatrixXd bbar = t.value(il).triangularView<Eigen::Lower>().solve(g);
    t.accumulate(ib, bbar);
    if (t.needs_grad(il)) t.accumulate(il, lower_part(-x * bbar.transpose()));
  });
}

Var quadratic_form(const Var& x, const Var& m) {
  require_same_tape(x, m);
  require(x.cols() == 1 && m.rows() == x.rows() && m.cols() == x.rows(), ErrorKind::kShapeMismatch,
          "quadratic_form shapes");
  const double v = (x.value().transpose() * m.value() * x.value())(0, 0);
  const std::size_t ix = x.id(), im = m.id();
  return x.tape()->push(MatrixXd::Constant(1, 1, v), {x, m}, [ix, im](Tape& t, const MatrixXd& g) {
    const MatrixXd& xv = t.value(ix);
    const MatrixXd& mv = t.value(im);
    if (t.needs_grad(ix)) t.accumulate(ix, g(0, 0) * (mv + mv.transpose()) * xv);
    if (t.needs_grad(im)) t.accumulate(im, g(0, 0) * xv * xv.transpose());
  });
}

Var logdet(const Var& a) {
  require(a.rows() == a.cols(), ErrorKind::kShapeMismatch, "logdet: matrix must be square");
  const MatrixXd l = cholesky_lower(a.value());
  const double v = 2.0 * l.diagonal().array().log().sum();
  const std::size_t ia = a.id();
  return a.tape()->push(MatrixXd::Constant(1, 1, v), {a}, [ia](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g(0, 0) * vssf::spd_inverse(t.value(ia)));
  });
}

Var sum_log_diag(const Var& l) {
  require(l.rows() == l.cols(), ErrorKind::kShapeMismatch, "sum_log_diag: matrix must be square");
  const std::size_t il = l.id();
  const double v = l.value().diagonal().array().log().sum();
  return l.tape()->push(MatrixXd::Constant(1, 1, v), {l}, [il](Tape& t, const MatrixXd& g) {
    const MatrixXd& lv = t.value(il);
    MatrixXd d = MatrixXd::Zero(lv.rows(), lv.cols());
    d.diagonal() = g(0, 0) * lv.diagonal().cwiseInverse();
    t.accumulate(il, d);
  });
}

Var spd_inverse(const Var& a) {
  require(a.rows() == a.cols(), ErrorKind::kShapeMismatch, "spd_inverse: matrix must be square");
  MatrixXd inv = vssf::spd_inverse(a.value());
  const std::size_t ia = a.id();
  return a.tape()->push(inv, {a}, [ia, inv](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, vssf::symmetrize(-inv * g * inv));
  });
}

Var gaussian_log_density_chol(const Var& x, const Var& mean, const Var& chol) {
  const Var r = solve_lower(chol, x - mean);
  const double n = static_cast<double>(x.rows());
  return add_constant(squared_norm(r) * -0.5 - sum_log_diag(chol), -0.5 * n * std::log(2.0 * std::numbers::pi));
}

Var gaussian_log_density(const Var& x, const Var& mean, const Var& cov) {
  return gaussian_log_density_chol(x, mean, cholesky(cov));
}

}  // namespace vssf::ad
