#pragma once

#include <functional>
#include <string>

#include "nase/rng.hpp"
#include "nase/tensor.hpp"

namespace nase {

using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;
using ConstParamVisitor = std::function<void(const std::string& name, const Tensor& value)>;

// y = x W + b with W stored [in, out]; an empty bias tensor means no bias.
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  bool has_bias() const noexcept { return bias.size() != 0; }
};

// Uniform(-k, k) with k = gain / sqrt(in).
Linear make_linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true, double gain = 1.0);
Tensor apply(const Linear& layer, const Tensor& x);

void visit(Linear& layer, const std::string& prefix, const ParamVisitor& fn);
void visit(const Linear& layer, const std::string& prefix, const ConstParamVisitor& fn);

// Row-broadcast helpers for per-feature vectors.
Tensor add_rowwise(const Tensor& x, const Tensor& row);
Tensor mul_rowwise(const Tensor& x, const Tensor& row);

// Sinusoidal encoding of `position` into `dim` features.
std::vector<double> sinusoidal(double position, std::size_t dim);

}  // namespace nase
