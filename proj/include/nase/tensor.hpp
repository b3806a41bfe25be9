#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nase/rng.hpp"

namespace nase {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

// Dense row-major float64 array. A tensor is either a constant or a node on a
// Tape; operations on tracked inputs are recorded onto that tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  bool tracked() const noexcept { return tape_ != nullptr; }
  std::optional<std::size_t> node() const;
  Tape* tape() const noexcept { return tape_; }
  // Copy with the tape link dropped.
  Tensor detached() const;

 private:
  friend class Tape;

  Shape shape_;
  std::vector<double> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Gradient accumulation target handed to each node's backward function.
class GradSink {
 public:
  // Span to accumulate into for input `i`, empty when that input is constant.
  std::span<double> operator[](std::size_t i) const { return slots_[i]; }

 private:
  friend class Tape;
  std::vector<std::span<double>> slots_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSink& grads)>;

class Gradients {
 public:
  // Gradient for a watched leaf, or nullopt when the tensor is not a leaf of
  // the tape that produced this map.
  std::optional<Tensor> of(const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const;
  const std::map<std::size_t, Tensor>& by_node() const noexcept { return grads_; }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::map<std::size_t, Tensor> grads_;
};

// Linear record of primitive operations. Not thread-safe; one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as a differentiable leaf and returns the tracked copy.
  Tensor watch(const Tensor& value);

  Gradients backward(const Tensor& loss) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(std::size_t node) const { return nodes_.at(node).op; }

  // Used by primitives: appends a node when any input lives on a tape.
  static Tensor record(const char* op, Tensor out, std::initializer_list<const Tensor*> inputs,
                       BackwardFn backward);
  static Tensor record(const char* op, Tensor out, std::span<const Tensor> inputs,
                       BackwardFn backward);

 private:
  static constexpr std::size_t kConstant = static_cast<std::size_t>(-1);

  struct Node {
    const char* op;
    std::vector<std::size_t> parents;
    Shape shape;
    BackwardFn backward;
    bool leaf = false;
  };

  static Tensor record_impl(const char* op, Tensor out, const std::vector<const Tensor*>& inputs,
                            BackwardFn backward);

  std::vector<Node> nodes_;
};

// Primitives. Element-wise binaries require identical shapes; broadcasting is
// explicit through scale/shift (scalars) and tile_rows (row vectors).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor shift(const Tensor& x, double offset);
// [n,k] x [k,m] -> [n,m]; [n,k] x [k] -> [n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
// Concatenate rank-2 tensors along the last axis.
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Concatenate along the first axis; trailing dimensions must agree.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
// Row gather on a rank-2 tensor: out[i] = x[index[i]].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
// Stacks `times` copies of x along the first axis; a rank-1 x becomes a row.
Tensor tile_rows(const Tensor& x, std::size_t times);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
// Softmax over the last axis.
Tensor softmax(const Tensor& x);
// Normalisation over the last axis without affine terms.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);
// Mean absolute difference, reduced to a scalar.
Tensor l1_loss(const Tensor& a, const Tensor& b);

Tensor gauss(Rng& rng, Shape shape);

}  // namespace nase
