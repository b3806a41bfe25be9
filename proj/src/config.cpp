#include "nase/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "nase/errors.hpp"

namespace nase {

using nlohmann::json;

namespace {

// Reads a JSON object key by key and rejects anything it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw SchemaError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw SchemaError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T value{};
    get(key, value);
    out = value;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) throw SchemaError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

std::vector<std::string> family_names(const std::vector<NoiseFamily>& families) {
  std::vector<std::string> out;
  for (const auto& f : families) out.push_back(f.name);
  return out;
}

std::vector<NoiseFamily> families_from(const std::vector<std::string>& names, int first_index) {
  std::vector<NoiseFamily> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back(family_by_name(names[i], first_index + static_cast<int>(i)));
  return out;
}

void read_corpus(const json& doc, CorpusSpec& c) {
  ObjectReader r(doc, "corpus");
  r.get("signal_length", c.signal_length);
  r.get("sample_rate", c.sample_rate);
  r.get("train_per_family", c.train_per_family);
  r.get("test_per_family", c.test_per_family);
  r.get("unseen_per_cell", c.unseen_per_cell);
  r.get("train_snrs", c.train_snrs);
  r.get("unseen_snrs", c.unseen_snrs);
  std::vector<std::string> seen = family_names(c.seen), heldout = family_names(c.heldout);
  r.get("seen_families", seen);
  r.get("heldout_families", heldout);
  r.finish();
  c.seen = families_from(seen, 0);
  c.heldout = families_from(heldout, static_cast<int>(seen.size()));
}

void read_schedule(const json& doc, ScheduleConfig& s) {
  ObjectReader r(doc, "schedule");
  r.get("steps", s.steps);
  r.get("beta_start", s.beta_start);
  r.get("beta_end", s.beta_end);
  r.get_optional("kappa", s.kappa);
  r.finish();
}

void read_model(const json& doc, ModelConfig& m) {
  ObjectReader r(doc, "model");
  r.get("use_conditioner", m.use_conditioner);
  std::string inject = to_string(m.denoiser.inject);
  r.get("inject", inject);
  try {
    m.denoiser.inject = parse_inject_mode(inject);
  } catch (const std::exception& e) {
    throw SchemaError(std::string("model.inject: ") + e.what());
  }
  r.get("encoder_frame", m.encoder.frame);
  r.get("encoder_hop", m.encoder.hop);
  r.get("encoder_dim", m.encoder.model_dim);
  r.get("encoder_ff", m.encoder.ff_dim);
  r.get("encoder_blocks", m.encoder.blocks);
  r.get("embedding_dim", m.encoder.embedding_dim);
  r.get("denoiser_frame", m.denoiser.frame);
  r.get("denoiser_hidden", m.denoiser.hidden);
  r.get("denoiser_blocks", m.denoiser.blocks);
  r.get("time_dim", m.denoiser.time_dim);
  r.finish();
}

void read_train(const json& doc, TrainConfig& t) {
  ObjectReader r(doc, "train");
  r.get("lambda_nc", t.lambda_nc);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("learning_rate", t.learning_rate);
  r.get("adam_beta1", t.adam_beta1);
  r.get("adam_beta2", t.adam_beta2);
  r.get("adam_eps", t.adam_eps);
  r.get("clip_norm", t.clip_norm);
  r.get("pretrain_nc", t.pretrain_nc);
  r.get("pretrain_epochs", t.pretrain_epochs);
  r.get("freeze_encoder", t.freeze_encoder);
  r.get("checkpoint_every", t.checkpoint_every);
  r.finish();
}

void read_sampler(const json& doc, SamplerConfig& s) {
  ObjectReader r(doc, "sampler");
  r.get("steps_used", s.steps_used);
  r.get("stride", s.stride);
  r.get("deterministic_last_step", s.deterministic_last_step);
  r.get("batch_size", s.batch_size);
  r.finish();
}

void read_metrics(const json& doc, MetricsConfig& m) {
  ObjectReader r(doc, "metrics");
  r.get("seg_frame", m.seg_frame);
  r.get("seg_hop", m.seg_hop);
  r.finish();
}

}  // namespace

Schedule ScheduleConfig::build() const {
  return build_schedule(steps, BetaSpec::linear(beta_start, beta_end), WeightSpec::scaled_ratio(kappa));
}

void ExperimentConfig::resolve() {
  corpus.seed = seed;
  train.seed = seed;
  sampler.seed = seed;
  model.encoder.signal_length = corpus.signal_length;
  model.encoder.n_classes = corpus.seen.size();
  model.denoiser.steps = schedule.steps;
  model.sync();
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw SchemaError("name must be non-empty");
  corpus.validate();
  train.validate();
  sampler.validate();
  if (metrics.seg_frame == 0 || metrics.seg_hop == 0) throw SchemaError("metrics: frame and hop must be positive");
  try {
    model.validate();
    (void)schedule.build();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  if (model.encoder.signal_length != corpus.signal_length || model.denoiser.steps != schedule.steps ||
      model.encoder.n_classes != corpus.seen.size()) {
    throw SchemaError("config not resolved: shared values disagree");
  }
  if (!sampler.steps_used.empty() && sampler.steps_used.front() != schedule.steps) {
    throw SchemaError("sampler: steps_used must start at schedule.steps");
  }
}

json to_json(const ExperimentConfig& c) {
  json doc;
  doc["name"] = c.name;
  doc["seed"] = c.seed;
  doc["corpus_dir"] = c.corpus_dir;
  doc["corpus"] = {
      {"signal_length", c.corpus.signal_length},
      {"sample_rate", c.corpus.sample_rate},
      {"train_per_family", c.corpus.train_per_family},
      {"test_per_family", c.corpus.test_per_family},
      {"unseen_per_cell", c.corpus.unseen_per_cell},
      {"train_snrs", c.corpus.train_snrs},
      {"unseen_snrs", c.corpus.unseen_snrs},
      {"seen_families", family_names(c.corpus.seen)},
      {"heldout_families", family_names(c.corpus.heldout)},
  };
  doc["schedule"] = {
      {"steps", c.schedule.steps},
      {"beta_start", c.schedule.beta_start},
      {"beta_end", c.schedule.beta_end},
      {"kappa", c.schedule.kappa ? json(*c.schedule.kappa) : json(nullptr)},
  };
  doc["model"] = {
      {"use_conditioner", c.model.use_conditioner},
      {"inject", to_string(c.model.denoiser.inject)},
      {"encoder_frame", c.model.encoder.frame},
      {"encoder_hop", c.model.encoder.hop},
      {"encoder_dim", c.model.encoder.model_dim},
      {"encoder_ff", c.model.encoder.ff_dim},
      {"encoder_blocks", c.model.encoder.blocks},
      {"embedding_dim", c.model.encoder.embedding_dim},
      {"denoiser_frame", c.model.denoiser.frame},
      {"denoiser_hidden", c.model.denoiser.hidden},
      {"denoiser_blocks", c.model.denoiser.blocks},
      {"time_dim", c.model.denoiser.time_dim},
  };
  doc["train"] = {
      {"lambda_nc", c.train.lambda_nc},
      {"epochs", c.train.epochs},
      {"batch_size", c.train.batch_size},
      {"learning_rate", c.train.learning_rate},
      {"adam_beta1", c.train.adam_beta1},
      {"adam_beta2", c.train.adam_beta2},
      {"adam_eps", c.train.adam_eps},
      {"clip_norm", c.train.clip_norm},
      {"pretrain_nc", c.train.pretrain_nc},
      {"pretrain_epochs", c.train.pretrain_epochs},
      {"freeze_encoder", c.train.freeze_encoder},
      {"checkpoint_every", c.train.checkpoint_every},
  };
  doc["sampler"] = {
      {"steps_used", c.sampler.steps_used},
      {"stride", c.sampler.stride},
      {"deterministic_last_step", c.sampler.deterministic_last_step},
      {"batch_size", c.sampler.batch_size},
  };
  doc["metrics"] = {{"seg_frame", c.metrics.seg_frame}, {"seg_hop", c.metrics.seg_hop}};
  return doc;
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  ObjectReader r(doc, "config");
  r.get("name", c.name);
  r.get("seed", c.seed);
  r.get("corpus_dir", c.corpus_dir);
  if (const json* j = r.child("corpus")) read_corpus(*j, c.corpus);
  if (const json* j = r.child("schedule")) read_schedule(*j, c.schedule);
  if (const json* j = r.child("model")) read_model(*j, c.model);
  if (const json* j = r.child("train")) read_train(*j, c.train);
  if (const json* j = r.child("sampler")) read_sampler(*j, c.sampler);
  if (const json* j = r.child("metrics")) read_metrics(*j, c.metrics);
  r.finish();
  c.resolve();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw SchemaError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_json(cfg).dump(2) << '\n';
}

}  // namespace nase
