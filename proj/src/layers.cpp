#include "nase/layers.hpp"

#include <cmath>

namespace nase {

Linear make_linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(in));
  Linear layer;
  layer.weight = Tensor({in, out});
  for (double& v : layer.weight.data()) v = rng.uniform(-bound, bound);
  if (with_bias) {
    layer.bias = Tensor({out});
    for (double& v : layer.bias.data()) v = rng.uniform(-bound, bound);
  }
  return layer;
}

Tensor apply(const Linear& layer, const Tensor& x) {
  Tensor y = matmul(x, layer.weight);
  return layer.has_bias() ? add_rowwise(y, layer.bias) : y;
}

void visit(Linear& layer, const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", layer.weight);
  if (layer.has_bias()) fn(prefix + ".bias", layer.bias);
}

void visit(const Linear& layer, const std::string& prefix, const ConstParamVisitor& fn) {
  fn(prefix + ".weight", layer.weight);
  if (layer.has_bias()) fn(prefix + ".bias", layer.bias);
}

Tensor add_rowwise(const Tensor& x, const Tensor& row) {
  return add(x, tile_rows(row, x.size() / row.size()));
}

Tensor mul_rowwise(const Tensor& x, const Tensor& row) {
  return mul(x, tile_rows(row, x.size() / row.size()));
}

std::vector<double> sinusoidal(double position, std::size_t dim) {
  std::vector<double> out(dim);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[2 * i] = std::sin(position * freq);
    out[2 * i + 1] = std::cos(position * freq);
  }
  return out;
}

}  // namespace nase
