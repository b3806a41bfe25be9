#pragma once

#include "nase/conditioner.hpp"
#include "nase/denoiser.hpp"

namespace nase {

struct ModelConfig {
  EncoderConfig encoder;
  DenoiserConfig denoiser;
  // When false the denoiser runs with emb == 0 (no conditioner path).
  bool use_conditioner = true;

  // Propagates shared widths/lengths into both sub-configs.
  void sync();
  void validate() const;
};

struct Model {
  ModelConfig config;
  EncoderParams encoder;
  ClassifierParams classifier;
  DenoiserParams denoiser;
};

Model init_model(ModelConfig config, Rng rng);

// Parameter names are "encoder.*", "classifier.*" and "denoiser.*".
void visit(Model& m, const ParamVisitor& fn);
void visit(const Model& m, const ConstParamVisitor& fn);

std::size_t parameter_count(const Model& m);
std::size_t denoiser_parameter_count(const Model& m);

}  // namespace nase
