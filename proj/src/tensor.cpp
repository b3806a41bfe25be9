#include "nase/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nase {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

// Rows and columns of a tensor viewed as a matrix over its last axis.
std::pair<std::size_t, std::size_t> as_rows(const Tensor& x) {
  if (x.rank() == 0) return {1, 1};
  const std::size_t cols = x.shape().back();
  return {cols == 0 ? 0 : x.size() / cols, cols};
}

template <class F>
Tensor map_unary(const Tensor& x, F&& f) {
  Tensor out(x.shape());
  std::transform(x.data().begin(), x.data().end(), out.data().begin(), f);
  return out;
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(product(shape_), 0.0) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("Tensor: zero-sized dimension in " + shape_str(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw ShapeError("Tensor: shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("Tensor: zero-sized dimension in " + shape_str(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("Tensor::dim: axis out of range for " + shape_str(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("Tensor::item: not a scalar " + shape_str(shape_));
  return data_[0];
}

std::optional<std::size_t> Tensor::node() const {
  if (!tape_) return std::nullopt;
  return node_;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = 0;
  return t;
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::watch(const Tensor& value) {
  Tensor t = value.detached();
  nodes_.push_back(Node{"leaf", {}, t.shape(), nullptr, true});
  t.tape_ = this;
  t.node_ = nodes_.size() - 1;
  return t;
}

Tensor Tape::record(const char* op, Tensor out, std::initializer_list<const Tensor*> inputs,
                    BackwardFn backward) {
  return record_impl(op, std::move(out), std::vector<const Tensor*>(inputs), std::move(backward));
}

Tensor Tape::record(const char* op, Tensor out, std::span<const Tensor> inputs, BackwardFn backward) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(inputs.size());
  for (const Tensor& t : inputs) ptrs.push_back(&t);
  return record_impl(op, std::move(out), ptrs, std::move(backward));
}

Tensor Tape::record_impl(const char* op, Tensor out, const std::vector<const Tensor*>& inputs,
                         BackwardFn backward) {
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->tape_) continue;
    if (tape && tape != in->tape_) {
      throw std::logic_error(std::string(op) + ": inputs recorded on different tapes");
    }
    tape = in->tape_;
  }
  if (!tape) return out;
  Node node{op, {}, out.shape(), std::move(backward), false};
  node.parents.reserve(inputs.size());
  for (const Tensor* in : inputs) node.parents.push_back(in->tape_ ? in->node_ : kConstant);
  tape->nodes_.push_back(std::move(node));
  out.tape_ = tape;
  out.node_ = tape->nodes_.size() - 1;
  return out;
}

Gradients Tape::backward(const Tensor& loss) const {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (loss.tape_ != this) throw std::logic_error("backward: loss is not recorded on this tape");

  std::vector<std::vector<double>> grads(loss.node_ + 1);
  grads[loss.node_] = {1.0};
  for (std::size_t i = loss.node_ + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (grads[i].empty() || node.leaf) continue;
    GradSink sink;
    sink.slots_.reserve(node.parents.size());
    for (std::size_t p : node.parents) {
      if (p == kConstant) {
        sink.slots_.emplace_back();
        continue;
      }
      if (grads[p].empty()) grads[p].assign(product(nodes_[p].shape), 0.0);
      sink.slots_.emplace_back(grads[p]);
    }
    node.backward(grads[i], sink);
  }

  Gradients out;
  out.tape_ = this;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].leaf) continue;
    if (i < grads.size() && !grads[i].empty()) {
      out.grads_.emplace(i, Tensor(nodes_[i].shape, std::move(grads[i])));
    } else {
      out.grads_.emplace(i, Tensor(nodes_[i].shape));
    }
  }
  return out;
}

std::optional<Tensor> Gradients::of(const Tensor& leaf) const {
  if (leaf.tape() != tape_ || !leaf.node()) return std::nullopt;
  auto it = grads_.find(*leaf.node());
  if (it == grads_.end()) return std::nullopt;
  return it->second;
}

bool Gradients::contains(const Tensor& leaf) const { return of(leaf).has_value(); }

// ---------------------------------------------------------------------------
// Primitives

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a[i] + b[i];
  return Tape::record("add", std::move(out), {&a, &b}, [](std::span<const double> g, const GradSink& s) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (s[k].empty()) continue;
      for (std::size_t i = 0; i < g.size(); ++i) s[k][i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a[i] - b[i];
  return Tape::record("sub", std::move(out), {&a, &b}, [](std::span<const double> g, const GradSink& s) {
    if (!s[0].empty())
      for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i];
    if (!s[1].empty())
      for (std::size_t i = 0; i < g.size(); ++i) s[1][i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a[i] * b[i];
  return Tape::record("mul", std::move(out), {&a, &b},
                      [av = a.values(), bv = b.values()](std::span<const double> g, const GradSink& s) {
                        if (!s[0].empty())
                          for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i] * bv[i];
                        if (!s[1].empty())
                          for (std::size_t i = 0; i < g.size(); ++i) s[1][i] += g[i] * av[i];
                      });
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out = map_unary(x, [factor](double v) { return v * factor; });
  return Tape::record("scale", std::move(out), {&x}, [factor](std::span<const double> g, const GradSink& s) {
    for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i] * factor;
  });
}

Tensor shift(const Tensor& x, double offset) {
  Tensor out = map_unary(x, [offset](double v) { return v + offset; });
  return Tape::record("shift", std::move(out), {&x}, [](std::span<const double> g, const GradSink& s) {
    for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  if (b.rank() != 1 && b.rank() != 2) {
    throw ShapeError("matmul: right operand must be rank 1 or 2, got " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1);
  const std::size_t m = b.rank() == 2 ? b.dim(1) : 1;
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out(b.rank() == 2 ? Shape{n, m} : Shape{n});
  MapMatrix(out.data().data(), n, m).noalias() =
      ConstMapMatrix(a.data().data(), n, k) * ConstMapMatrix(b.data().data(), k, m);
  return Tape::record(
      "matmul", std::move(out), {&a, &b},
      [av = a.values(), bv = b.values(), n, k, m](std::span<const double> g, const GradSink& s) {
        ConstMapMatrix gm(g.data(), n, m);
        if (!s[0].empty()) {
          MapMatrix(s[0].data(), n, k).noalias() += gm * ConstMapMatrix(bv.data(), k, m).transpose();
        }
        if (!s[1].empty()) {
          MapMatrix(s[1].data(), k, m).noalias() += ConstMapMatrix(av.data(), n, k).transpose() * gm;
        }
      });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out({c, r});
  MapMatrix(out.data().data(), c, r) = ConstMapMatrix(x.data().data(), r, c).transpose();
  return Tape::record("transpose", std::move(out), {&x}, [r, c](std::span<const double> g, const GradSink& s) {
    MapMatrix(s[0].data(), r, c) += ConstMapMatrix(g.data(), c, r).transpose();
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (product(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), x.values());
  return Tape::record("reshape", std::move(out), {&x}, [](std::span<const double> g, const GradSink& s) {
    for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank("concat_cols", a, 2);
  require_rank("concat_cols", b, 2);
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_cols: row counts differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().begin() + r * ca, ca, out.data().begin() + r * (ca + cb));
    std::copy_n(b.data().begin() + r * cb, cb, out.data().begin() + r * (ca + cb) + ca);
  }
  return Tape::record("concat_cols", std::move(out), {&a, &b},
                      [rows, ca, cb](std::span<const double> g, const GradSink& s) {
                        for (std::size_t r = 0; r < rows; ++r) {
                          const double* row = g.data() + r * (ca + cb);
                          if (!s[0].empty())
                            for (std::size_t j = 0; j < ca; ++j) s[0][r * ca + j] += row[j];
                          if (!s[1].empty())
                            for (std::size_t j = 0; j < cb; ++j) s[1][r * cb + j] += row[ca + j];
                        }
                      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + std::min<std::size_t>(1, parts[0].rank()), parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) {
    if (p.rank() == 0 || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw ShapeError("concat_rows: incompatible part " + shape_str(p.shape()));
    }
    rows += p.dim(0);
    sizes.push_back(p.size());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + offset);
    offset += p.size();
  }
  return Tape::record("concat_rows", std::move(out), parts,
                      [sizes](std::span<const double> g, const GradSink& s) {
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < sizes.size(); ++k) {
                          if (!s[k].empty())
                            for (std::size_t i = 0; i < sizes[k]; ++i) s[k][i] += g[off + i];
                          off += sizes[k];
                        }
                      });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin >= end || end > x.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t stride = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> values(x.data().begin() + begin * stride, x.data().begin() + end * stride);
  Tensor out(std::move(shape), std::move(values));
  return Tape::record("slice_rows", std::move(out), {&x},
                      [offset = begin * stride](std::span<const double> g, const GradSink& s) {
                        for (std::size_t i = 0; i < g.size(); ++i) s[0][offset + i] += g[i];
                      });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_rank("gather_rows", x, 2);
  const std::size_t cols = x.dim(1);
  Tensor out({index.size(), cols});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.dim(0)) throw ShapeError("gather_rows: index out of range");
    std::copy_n(x.data().begin() + index[i] * cols, cols, out.data().begin() + i * cols);
  }
  return Tape::record("gather_rows", std::move(out), {&x},
                      [idx = std::vector<std::size_t>(index.begin(), index.end()), cols](
                          std::span<const double> g, const GradSink& s) {
                        for (std::size_t i = 0; i < idx.size(); ++i)
                          for (std::size_t j = 0; j < cols; ++j) s[0][idx[i] * cols + j] += g[i * cols + j];
                      });
}

Tensor tile_rows(const Tensor& x, std::size_t times) {
  if (times == 0) throw ShapeError("tile_rows: times must be positive");
  Shape shape = x.rank() == 1 ? Shape{times, x.dim(0)} : x.shape();
  if (x.rank() == 0) shape = {times};
  if (x.rank() >= 2) shape[0] *= times;
  Tensor out(shape);
  const std::size_t n = x.size();
  for (std::size_t k = 0; k < times; ++k) std::copy(x.data().begin(), x.data().end(), out.data().begin() + k * n);
  return Tape::record("tile_rows", std::move(out), {&x}, [n, times](std::span<const double> g, const GradSink& s) {
    for (std::size_t k = 0; k < times; ++k)
      for (std::size_t i = 0; i < n; ++i) s[0][i] += g[k * n + i];
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tape::record("sum", Tensor::scalar(total), {&x}, [](std::span<const double> g, const GradSink& s) {
    for (double& v : s[0]) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.size());
  return Tape::record("mean", Tensor::scalar(total / n), {&x}, [n](std::span<const double> g, const GradSink& s) {
    for (double& v : s[0]) v += g[0] / n;
  });
}

Tensor exp(const Tensor& x) {
  Tensor out = map_unary(x, [](double v) { return std::exp(v); });
  return Tape::record("exp", out, {&x}, [y = out.values()](std::span<const double> g, const GradSink& s) {
    for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i] * y[i];
  });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
  }
  Tensor out = map_unary(x, [](double v) { return std::log(v); });
  return Tape::record("log", std::move(out), {&x}, [xv = x.values()](std::span<const double> g, const GradSink& s) {
    for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i] / xv[i];
  });
}

Tensor tanh(const Tensor& x) {
  Tensor out = map_unary(x, [](double v) { return std::tanh(v); });
  return Tape::record("tanh", out, {&x}, [y = out.values()](std::span<const double> g, const GradSink& s) {
    for (std::size_t i = 0; i < g.size(); ++i) s[0][i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Tensor relu(const Tensor& x) {
  Tensor out = map_unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
  return Tape::record("relu", std::move(out), {&x}, [xv = x.values()](std::span<const double> g, const GradSink& s) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) s[0][i] += g[i];
  });
}

Tensor softmax(const Tensor& x) {
  const auto [rows, cols] = as_rows(x);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    const double hi = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (o[j] = std::exp(in[j] - hi));
    for (std::size_t j = 0; j < cols; ++j) o[j] /= z;
  }
  return Tape::record("softmax", out, {&x},
                      [y = out.values(), rows, cols](std::span<const double> g, const GradSink& s) {
                        for (std::size_t r = 0; r < rows; ++r) {
                          const double* yr = y.data() + r * cols;
                          const double* gr = g.data() + r * cols;
                          double dot = 0.0;
                          for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
                          for (std::size_t j = 0; j < cols; ++j) s[0][r * cols + j] += yr[j] * (gr[j] - dot);
                        }
                      });
}

Tensor layer_norm(const Tensor& x, double eps) {
  const auto [rows, cols] = as_rows(x);
  Tensor out(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += in[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) out.data()[r * cols + j] = (in[j] - mu) * inv_std[r];
  }
  return Tape::record("layer_norm", out, {&x},
                      [y = out.values(), inv_std, rows, cols](std::span<const double> g, const GradSink& s) {
                        const double n = static_cast<double>(cols);
                        for (std::size_t r = 0; r < rows; ++r) {
                          const double* yr = y.data() + r * cols;
                          const double* gr = g.data() + r * cols;
                          double gsum = 0.0, gydot = 0.0;
                          for (std::size_t j = 0; j < cols; ++j) {
                            gsum += gr[j];
                            gydot += gr[j] * yr[j];
                          }
                          for (std::size_t j = 0; j < cols; ++j) {
                            s[0][r * cols + j] += inv_std[r] * (gr[j] - gsum / n - yr[j] * gydot / n);
                          }
                        }
                      });
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  require_same_shape("l1_loss", a, b);
  const double n = static_cast<double>(a.size());
  double total = 0.0;
  std::vector<double> sign(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += std::abs(d);
    sign[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  }
  return Tape::record("l1_loss", Tensor::scalar(total / n), {&a, &b},
                      [sign = std::move(sign), n](std::span<const double> g, const GradSink& s) {
                        const double c = g[0] / n;
                        if (!s[0].empty())
                          for (std::size_t i = 0; i < sign.size(); ++i) s[0][i] += c * sign[i];
                        if (!s[1].empty())
                          for (std::size_t i = 0; i < sign.size(); ++i) s[1][i] -= c * sign[i];
                      });
}

Tensor gauss(Rng& rng, Shape shape) {
  Tensor out(std::move(shape));
  for (double& v : out.data()) v = rng.normal();
  return out;
}

}  // namespace nase
