#include "nase/model.hpp"

namespace nase {

void ModelConfig::sync() {
  denoiser.signal_length = encoder.signal_length;
  denoiser.embedding_dim = encoder.embedding_dim;
  denoiser.conditioned = use_conditioner;
}

void ModelConfig::validate() const {
  encoder.validate();
  denoiser.validate();
  if (denoiser.signal_length != encoder.signal_length || denoiser.embedding_dim != encoder.embedding_dim) {
    throw std::invalid_argument("model: encoder and denoiser disagree on signal length or embedding width");
  }
  if (denoiser.conditioned != use_conditioner) throw std::invalid_argument("model: conditioner flag out of sync");
}

Model init_model(ModelConfig config, Rng rng) {
  config.sync();
  config.validate();
  Model m;
  m.config = config;
  Rng enc_rng = rng.substream("encoder");
  Rng cls_rng = rng.substream("classifier");
  Rng den_rng = rng.substream("denoiser");
  m.encoder = init_encoder(config.encoder, enc_rng);
  m.classifier = init_classifier(config.encoder, cls_rng);
  m.denoiser = init_denoiser(config.denoiser, den_rng);
  return m;
}

void visit(Model& m, const ParamVisitor& fn) {
  visit(m.encoder, "encoder", fn);
  visit(m.classifier, "classifier", fn);
  visit(m.denoiser, "denoiser", fn);
}

void visit(const Model& m, const ConstParamVisitor& fn) {
  visit(m.encoder, "encoder", fn);
  visit(m.classifier, "classifier", fn);
  visit(m.denoiser, "denoiser", fn);
}

std::size_t parameter_count(const Model& m) {
  std::size_t n = 0;
  visit(m, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::size_t denoiser_parameter_count(const Model& m) {
  std::size_t n = 0;
  visit(m.denoiser, "denoiser", [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

}  // namespace nase
