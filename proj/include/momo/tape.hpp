#pragma once

// Reverse-mode gradients over a closed set of matrix primitives.
//
// A Tape records every primitive applied to its Vars. backward() zeroes the
// Parameter::grad buffers bound to the tape, then walks the records in exact
// reverse construction order and accumulates into them. A tape built with
// record=false keeps forward values only (inference).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "momo/matrix.hpp"

namespace momo::num {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Matrix value);
  // Leaf bound to a parameter; backward() adds into p.grad.
  Var param(Parameter& p);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Gradient of the last backward() target with respect to this node.
  const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }

  void backward(Var loss);
  // Node ids whose backward rule ran during the last backward(), in visit order.
  const std::vector<std::size_t>& visit_log() const noexcept { return visit_log_; }

  // Primitive plumbing.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward rule);
  Matrix& grad_accum(std::size_t id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    Backward rule;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_log_;
};

// ---- primitives ----------------------------------------------------------

Var matmul(Var a, Var b);            // A * B
Var matmul_nt(Var a, Var b);         // A * B^T
Var add(Var a, Var b);               // same shape
Var sub(Var a, Var b);               // same shape
Var add_row(Var a, Var row);         // broadcast a 1 x cols row over every row of a
Var scale(Var a, double s);
Var softmax_rows(Var a);
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
Var embedding(Var table, std::span<const std::size_t> ids);
Var transpose(Var a);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gelu(Var a);
Var mean_rows(Var a);                // 1 x cols column means
Var mse(Var prediction, Var target); // 1 x 1 mean squared error
Var sum_scalars(std::span<const Var> scalars);

// ---- plain-value helpers -------------------------------------------------

// Max-subtracted softmax; throws InvalidArgument on non-finite input.
std::vector<double> softmax(std::span<const double> row);
void softmax_rows_inplace(Matrix& m);
double gelu_value(double x);

// ---- gradient check ------------------------------------------------------

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates sampled uniformly across the listed parameters; 0 = all.
  std::size_t max_coords = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
};

// Builds the scalar loss on the given tape; must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;

GradCheckReport grad_check(const LossBuilder& loss_fn, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace momo::num
