#include "momo/tape.hpp"

#include <algorithm>
#include <cmath>

#include "momo/error.hpp"
#include "momo/kernels.hpp"

namespace momo::num {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, record_, record_ ? &p : nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward rule) {
  bool needs = false;
  if (record_)
    for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(rule) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_accum(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  require(record_, ErrorKind::InvalidArgument, "backward on a non-recording tape");
  require(loss.tape() == this, ErrorKind::InvalidArgument, "loss belongs to another tape");
  require(value(loss).rows() == 1 && value(loss).cols() == 1, ErrorKind::InvalidArgument,
          "backward needs a 1x1 loss");
  for (Node& n : nodes_) {
    n.grad = Matrix();
    if (n.param != nullptr) n.param->zero_grad();
  }
  visit_log_.clear();
  grad_accum(loss.id())(0, 0) = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.rule) {
      visit_log_.push_back(id);
      n.rule(*this, id);
    }
    if (n.param != nullptr) {
      Matrix& g = n.param->grad;
      if (!g.same_shape(n.value)) g = Matrix(n.value.rows(), n.value.cols());
      kernels::active().axpy(1.0, n.grad.data(), g.data(), g.size());
    }
  }
}

namespace {

const Matrix& G(Tape& t, std::size_t self) { return t.grad_accum(self); }

void check_same_tape(Var a, Var b) {
  require(a.tape() != nullptr && a.tape() == b.tape(), ErrorKind::InvalidArgument, "vars from different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(momo::matmul(a.value(), b.value()), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& dc = G(t, self);
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    const auto& k = kernels::active();
    if (t.needs_grad(ia)) k.gemm_nt(dc.data(), bv.data(), t.grad_accum(ia).data(), av.rows(), av.cols(), dc.cols(), true);
    if (t.needs_grad(ib)) k.gemm_tn(av.data(), dc.data(), t.grad_accum(ib).data(), bv.rows(), bv.cols(), av.rows(), true);
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(momo::matmul_nt(a.value(), b.value()), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& dc = G(t, self);  // m x n
    const Matrix& av = t.value(ia); // m x k
    const Matrix& bv = t.value(ib); // n x k
    const auto& k = kernels::active();
    if (t.needs_grad(ia)) k.gemm_nn(dc.data(), bv.data(), t.grad_accum(ia).data(), av.rows(), av.cols(), bv.rows(), true);
    if (t.needs_grad(ib)) k.gemm_tn(dc.data(), av.data(), t.grad_accum(ib).data(), bv.rows(), bv.cols(), av.rows(), true);
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  require(a.value().same_shape(b.value()), ErrorKind::InvalidArgument, "add shape mismatch");
  Matrix out = a.value();
  kernels::active().axpy(1.0, b.value().data(), out.data(), out.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    if (t.needs_grad(ia)) kernels::active().axpy(1.0, d.data(), t.grad_accum(ia).data(), d.size());
    if (t.needs_grad(ib)) kernels::active().axpy(1.0, d.data(), t.grad_accum(ib).data(), d.size());
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  require(a.value().same_shape(b.value()), ErrorKind::InvalidArgument, "sub shape mismatch");
  Matrix out = a.value();
  kernels::active().axpy(-1.0, b.value().data(), out.data(), out.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    if (t.needs_grad(ia)) kernels::active().axpy(1.0, d.data(), t.grad_accum(ia).data(), d.size());
    if (t.needs_grad(ib)) kernels::active().axpy(-1.0, d.data(), t.grad_accum(ib).data(), d.size());
  });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(), ErrorKind::InvalidArgument, "add_row shape mismatch");
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) kernels::active().axpy(1.0, rv.data(), out.data() + r * out.cols(), out.cols());
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape()->push(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    if (t.needs_grad(ia)) kernels::active().axpy(1.0, d.data(), t.grad_accum(ia).data(), d.size());
    if (t.needs_grad(ir)) {
      Matrix& g = t.grad_accum(ir);
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < d.cols(); ++c) g(0, c) += d(r, c);
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (double& v : out.values()) v *= s;
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    kernels::active().axpy(s, d.data(), t.grad_accum(ia).data(), d.size());
  });
}

std::vector<double> softmax(std::span<const double> row) {
  for (double v : row) require(std::isfinite(v), ErrorKind::InvalidArgument, "softmax input is not finite");
  std::vector<double> out(row.begin(), row.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

void softmax_rows_inplace(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    const double inv = 1.0 / sum;
    for (double& v : row) v *= inv;
  }
}

Var softmax_rows(Var a) {
  Matrix out = a.value();
  require(out.all_finite(), ErrorKind::NonFinite, "softmax input is not finite");
  softmax_rows_inplace(out);
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    const Matrix& y = t.value(self);
    Matrix& g = t.grad_accum(ia);
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double* yr = y.data() + r * y.cols();
      const double* dr = d.data() + r * d.cols();
      const double s = k.dot(yr, dr, y.cols());
      double* gr = g.data() + r * g.cols();
      for (std::size_t c = 0; c < y.cols(); ++c) gr[c] += yr[c] * (dr[c] - s);
    }
  });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  check_same_tape(a, gamma);
  check_same_tape(a, beta);
  const Matrix& x = a.value();
  const std::size_t n = x.cols();
  require(gamma.value().rows() == 1 && gamma.value().cols() == n && beta.value().same_shape(gamma.value()),
          ErrorKind::InvalidArgument, "layer_norm parameter shape mismatch");
  Matrix out(x.rows(), n);
  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) out(r, c) = gv(0, c) * (xr[c] - mu) * inv + bv(0, c);
  }
  const std::size_t ia = a.id(), ig = gamma.id(), ib = beta.id();
  return a.tape()->push(std::move(out), {a, gamma, beta}, [ia, ig, ib, eps](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    const Matrix& x = t.value(ia);
    const Matrix& gv = t.value(ig);
    const std::size_t n = x.cols();
    const double fn = static_cast<double>(n);
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto xr = x.row(r);
      double mu = 0.0;
      for (double v : xr) mu += v;
      mu /= fn;
      double var = 0.0;
      for (double v : xr) var += (v - mu) * (v - mu);
      var /= fn;
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_dx = 0.0, mean_dxx = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        xhat[c] = (xr[c] - mu) * inv;
        dxhat[c] = d(r, c) * gv(0, c);
        mean_dx += dxhat[c];
        mean_dxx += dxhat[c] * xhat[c];
      }
      mean_dx /= fn;
      mean_dxx /= fn;
      if (t.needs_grad(ia)) {
        Matrix& g = t.grad_accum(ia);
        for (std::size_t c = 0; c < n; ++c) g(r, c) += inv * (dxhat[c] - mean_dx - xhat[c] * mean_dxx);
      }
      if (t.needs_grad(ig)) {
        Matrix& g = t.grad_accum(ig);
        for (std::size_t c = 0; c < n; ++c) g(0, c) += d(r, c) * xhat[c];
      }
      if (t.needs_grad(ib)) {
        Matrix& g = t.grad_accum(ib);
        for (std::size_t c = 0; c < n; ++c) g(0, c) += d(r, c);
      }
    }
  });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < tv.rows(), ErrorKind::InvalidArgument, "embedding id out of range");
    std::copy_n(tv.data() + ids[i] * tv.cols(), tv.cols(), out.data() + i * tv.cols());
  }
  const std::size_t it = table.id();
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.tape()->push(std::move(out), {table}, [it, idv = std::move(idv)](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    Matrix& g = t.grad_accum(it);
    for (std::size_t i = 0; i < idv.size(); ++i)
      kernels::active().axpy(1.0, d.data() + i * d.cols(), g.data() + idv[i] * g.cols(), d.cols());
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape()->push(a.value().transposed(), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    Matrix& g = t.grad_accum(ia);
    for (std::size_t r = 0; r < d.rows(); ++r)
      for (std::size_t c = 0; c < d.cols(); ++c) g(c, r) += d(r, c);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const std::size_t ia = a.id();
  return a.tape()->push(a.value().cols_slice(begin, end), {a}, [ia, begin](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    Matrix& g = t.grad_accum(ia);
    for (std::size_t r = 0; r < d.rows(); ++r)
      kernels::active().axpy(1.0, d.data() + r * d.cols(), g.data() + r * g.cols() + begin, d.cols());
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const std::size_t ia = a.id();
  return a.tape()->push(a.value().rows_slice(begin, end), {a}, [ia, begin](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    Matrix& g = t.grad_accum(ia);
    kernels::active().axpy(1.0, d.data(), g.data() + begin * g.cols(), d.size());
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::InvalidArgument, "concat_cols of nothing");
  std::vector<Matrix> values;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    values.push_back(p.value());
    ids.push_back(p.id());
  }
  Tape& tape = *parts.front().tape();
  Matrix out = hstack(values);
  bool needs = false;
  for (const Var& p : parts) needs = needs || tape.needs_grad(p.id());
  // push() only inspects the first parent list; pass a representative that needs grad.
  Var rep = parts.front();
  for (const Var& p : parts)
    if (tape.needs_grad(p.id())) rep = p;
  return tape.push(std::move(out), {rep}, [ids](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t w = t.value(id).cols();
      if (t.needs_grad(id)) {
        Matrix& g = t.grad_accum(id);
        for (std::size_t r = 0; r < d.rows(); ++r)
          kernels::active().axpy(1.0, d.data() + r * d.cols() + offset, g.data() + r * w, w);
      }
      offset += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::InvalidArgument, "concat_rows of nothing");
  std::vector<Matrix> values;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    values.push_back(p.value());
    ids.push_back(p.id());
  }
  Tape& tape = *parts.front().tape();
  Matrix out = vstack(values);
  Var rep = parts.front();
  for (const Var& p : parts)
    if (tape.needs_grad(p.id())) rep = p;
  return tape.push(std::move(out), {rep}, [ids](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.needs_grad(id)) kernels::active().axpy(1.0, d.data() + offset, t.grad_accum(id).data(), n);
      offset += n;
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Var gelu(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = gelu_value(v);
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    const Matrix& x = t.value(ia);
    Matrix& g = t.grad_accum(ia);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double u = kGeluC * (v + kGeluA * v * v * v);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      const double dy = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
      g.data()[i] += d.data()[i] * dy;
    }
  });
}

Var mean_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(x.rows(), 1));
  for (double& v : out.values()) v *= inv;
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia, inv](Tape& t, std::size_t self) {
    const Matrix& d = G(t, self);
    Matrix& g = t.grad_accum(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) kernels::active().axpy(inv, d.data(), g.data() + r * g.cols(), g.cols());
  });
}

Var mse(Var prediction, Var target) {
  check_same_tape(prediction, target);
  const Matrix& p = prediction.value();
  const Matrix& q = target.value();
  require(p.same_shape(q), ErrorKind::InvalidArgument, "mse shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.data()[i] - q.data()[i];
    s += d * d;
  }
  const double inv = 1.0 / static_cast<double>(p.size());
  const std::size_t ip = prediction.id(), iq = target.id();
  return prediction.tape()->push(Matrix(1, 1, s * inv), {prediction, target}, [ip, iq, inv](Tape& t, std::size_t self) {
    const double d = G(t, self)(0, 0);
    const Matrix& p = t.value(ip);
    const Matrix& q = t.value(iq);
    const bool gp = t.needs_grad(ip), gq = t.needs_grad(iq);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = 2.0 * inv * d * (p.data()[i] - q.data()[i]);
      if (gp) t.grad_accum(ip).data()[i] += g;
      if (gq) t.grad_accum(iq).data()[i] -= g;
    }
  });
}

Var sum_scalars(std::span<const Var> scalars) {
  require(!scalars.empty(), ErrorKind::InvalidArgument, "sum of nothing");
  Var acc = scalars.front();
  for (std::size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
  return acc;
}

}  // namespace momo::num
