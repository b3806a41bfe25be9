#include "nase/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <map>

#include <nlohmann/json.hpp>

#include "nase/errors.hpp"
#include "nase/sampling.hpp"

namespace nase {

namespace fs = std::filesystem;

namespace {

constexpr int kEnhancedVersion = 1;

double mean_of(std::span<const UtteranceScore> scores, const std::string& system) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& s : scores) {
    if (s.system != system) continue;
    acc += s.si_sdr;
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace

std::vector<Record> records_from_manifest(const Manifest& m) { return m.records; }

Corpus obtain_corpus(const ExperimentConfig& cfg) {
  if (cfg.corpus_dir.empty()) return build_corpus(cfg.corpus);
  Corpus corpus;
  corpus.spec = cfg.corpus;
  const fs::path dir(cfg.corpus_dir);
  corpus.train = read_manifest(dir / "train.json").records;
  corpus.test = read_manifest(dir / "test.json").records;
  corpus.unseen = read_manifest(dir / "unseen.json").records;
  return corpus;
}

RunResult run_training(const ExperimentConfig& cfg, std::span<const Record> train_split, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_split.empty()) throw EmptyInputError("training split is empty");
  RunResult run;
  run.config = cfg;
  run.schedule = cfg.schedule.build();
  Model init = init_model(cfg.model, Rng(cfg.seed).substream("init"));
  const std::vector<TrainingExample> examples = examples_from(train_split);
  TrainResult result = train(cfg.train, std::move(init), run.schedule, examples, on_epoch);
  run.model = std::move(result.model);
  run.report = std::move(result.report);
  run.steps = result.steps;
  run.noise_rng = result.noise_rng;
  return run;
}

Checkpoint to_checkpoint(const RunResult& run) {
  Checkpoint c;
  c.config = run.config;
  c.schedule = run.schedule;
  c.model = run.model;
  c.epoch = static_cast<int>(run.report.epochs.size());
  c.steps = run.steps;
  c.rngs.emplace("diffusion-noise", run.noise_rng);
  return c;
}

RunResult from_checkpoint(const Checkpoint& ckpt) {
  RunResult run;
  run.config = ckpt.config;
  run.schedule = ckpt.schedule;
  run.model = ckpt.model;
  run.steps = ckpt.steps;
  if (auto it = ckpt.rngs.find("diffusion-noise"); it != ckpt.rngs.end()) run.noise_rng = it->second;
  return run;
}

std::vector<UtteranceScore> score(std::span<const Record> records, std::span<const Signal> estimates,
                                  const std::string& system, const MetricsConfig& metrics) {
  if (records.size() != estimates.size()) throw std::invalid_argument("score: record/estimate count mismatch");
  std::vector<UtteranceScore> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    out.push_back({r.id, system, r.family, r.label, r.snr_db, si_sdr(estimates[i], r.clean),
                   seg_snr(estimates[i], r.clean, metrics.seg_frame, metrics.seg_hop)});
  }
  return out;
}

EnhanceOutcome enhance_and_score(const RunResult& run, std::span<const Record> records, const std::string& system,
                                 std::size_t threads) {
  EnhanceOutcome out;
  out.enhanced = enhance_records(run.model, run.schedule, records, run.config.sampler, threads);
  std::vector<Signal> noisy;
  noisy.reserve(records.size());
  for (const Record& r : records) noisy.push_back(r.noisy);
  out.scores = score(records, noisy, kUnprocessed, run.config.metrics);
  auto enhanced_scores = score(records, out.enhanced, system, run.config.metrics);
  out.scores.insert(out.scores.end(), enhanced_scores.begin(), enhanced_scores.end());
  return out;
}

std::vector<std::vector<double>> embeddings(const Model& model, std::span<const Record> records) {
  const std::size_t L = model.config.encoder.signal_length;
  constexpr std::size_t kBatch = 64;
  std::vector<std::vector<double>> out;
  out.reserve(records.size());
  for (std::size_t lo = 0; lo < records.size(); lo += kBatch) {
    const std::size_t hi = std::min(records.size(), lo + kBatch);
    Tensor y({hi - lo, L});
    for (std::size_t r = lo; r < hi; ++r) {
      if (records[r].noisy.size() != L) throw ShapeError("embeddings: record " + records[r].id + " has the wrong length");
      std::copy(records[r].noisy.begin(), records[r].noisy.end(), y.data().begin() + (r - lo) * L);
    }
    const Tensor e = encode(model.encoder, model.classifier, model.config.encoder, y).embedding;
    const std::size_t d = e.dim(1);
    for (std::size_t r = 0; r < hi - lo; ++r) out.emplace_back(e.data().begin() + r * d, e.data().begin() + (r + 1) * d);
  }
  return out;
}

void write_embeddings_csv(const fs::path& path, const std::string& run_id, std::span<const Record> records,
                          const std::vector<std::vector<double>>& emb) {
  if (records.size() != emb.size()) throw std::invalid_argument("embeddings: count mismatch");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << std::setprecision(17) << "run_id,id,noise_class,family";
  const std::size_t d = emb.empty() ? 0 : emb.front().size();
  for (std::size_t c = 0; c < d; ++c) os << ",e" << c;
  os << '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    os << run_id << ',' << records[i].id << ',' << records[i].label << ',' << records[i].family;
    for (double v : emb[i]) os << ',' << v;
    os << '\n';
  }
}

void write_enhanced(const fs::path& dir, std::span<const Record> records, std::span<const Signal> enhanced) {
  if (records.size() != enhanced.size()) throw std::invalid_argument("write_enhanced: count mismatch");
  fs::create_directories(dir);
  nlohmann::json recs = nlohmann::json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string file = records[i].id + ".enhanced.f64";
    write_f64(dir / file, enhanced[i]);
    recs.push_back({{"id", records[i].id}, {"file", file}});
  }
  std::ofstream os(dir / "enhanced.json");
  os << nlohmann::json{{"format", "nase-enhanced"}, {"version", kEnhancedVersion}, {"records", recs}}.dump(1) << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "enhanced.json").string());
}

std::vector<Signal> read_enhanced(const fs::path& dir, std::span<const Record> records) {
  const fs::path index = dir / "enhanced.json";
  std::ifstream is(index);
  if (!is) throw MissingFileError("enhanced index not found: " + index.string());
  std::map<std::string, std::string> files;
  try {
    const auto doc = nlohmann::json::parse(is);
    if (doc.at("format").get<std::string>() != "nase-enhanced") throw SchemaError(index.string() + " has the wrong format");
    if (doc.at("version").get<int>() != kEnhancedVersion) {
      throw VersionError("enhanced index version " + doc.at("version").dump() + " unsupported");
    }
    for (const auto& r : doc.at("records")) files[r.at("id").get<std::string>()] = r.at("file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("enhanced index " + index.string() + " violates the schema: " + e.what());
  }
  std::vector<Signal> out;
  out.reserve(records.size());
  for (const Record& r : records) {
    auto it = files.find(r.id);
    if (it == files.end()) throw MissingFileError("no enhanced signal for " + r.id);
    out.push_back(read_f64(dir / it->second));
    if (out.back().size() != r.clean.size()) throw SchemaError("enhanced signal " + r.id + " has the wrong length");
  }
  return out;
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "lambda_nc") return SweepAxis::lambda_nc;
  if (name == "inject") return SweepAxis::inject;
  if (name == "pretrain-freeze") return SweepAxis::pretrain_freeze;
  throw SchemaError("unknown sweep axis '" + name + "' (expected lambda_nc, inject or pretrain-freeze)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::lambda_nc: return "lambda_nc";
    case SweepAxis::inject: return "inject";
    case SweepAxis::pretrain_freeze: return "pretrain-freeze";
  }
  return "?";
}

std::vector<std::pair<std::string, ExperimentConfig>> sweep_settings(const ExperimentConfig& base, SweepAxis axis) {
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  switch (axis) {
    case SweepAxis::lambda_nc:
      for (const auto& [label, value] : {std::pair{"0", 0.0}, std::pair{"0.1", 0.1}, std::pair{"0.3", 0.3},
                                         std::pair{"0.5", 0.5}, std::pair{"1.0", 1.0}}) {
        ExperimentConfig c = base;
        c.train.lambda_nc = value;
        out.emplace_back(label, c);
      }
      break;
    case SweepAxis::inject:
      for (InjectMode mode : {InjectMode::addition, InjectMode::concat, InjectMode::cross_attn}) {
        ExperimentConfig c = base;
        c.model.denoiser.inject = mode;
        out.emplace_back(to_string(mode), c);
      }
      break;
    case SweepAxis::pretrain_freeze: {
      ExperimentConfig joint = base;
      joint.train.pretrain_nc = false;
      joint.train.freeze_encoder = false;
      ExperimentConfig finetune = base;
      finetune.train.pretrain_nc = true;
      finetune.train.freeze_encoder = false;
      ExperimentConfig frozen = base;
      frozen.train.pretrain_nc = true;
      frozen.train.freeze_encoder = true;
      out.emplace_back("joint", joint);
      out.emplace_back("pretrain-finetune", finetune);
      out.emplace_back("pretrain-freeze", frozen);
      break;
    }
  }
  for (auto& [label, c] : out) {
    c.name = base.name + "-" + label;
    c.resolve();
    c.validate();
  }
  return out;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, SweepAxis axis, const Corpus& corpus,
                                const fs::path& out_dir, std::size_t threads) {
  std::vector<SweepRow> rows;
  for (const auto& [label, cfg] : sweep_settings(base, axis)) {
    const fs::path dir = out_dir / label;
    fs::create_directories(dir);
    save_config(cfg, dir / "resolved_config.json");
    const RunResult run = run_training(cfg, corpus.train);
    save_checkpoint(to_checkpoint(run), dir / "model.ckpt");
    run.report.write_csv(dir / "train_report.csv");

    SweepRow row;
    row.setting = label;
    row.nc_accuracy = run.report.epochs.empty() ? 0.0 : run.report.epochs.back().nc_accuracy;
    std::vector<UtteranceScore> all;
    for (const auto& [split, records] : {std::pair{"test", &corpus.test}, std::pair{"unseen", &corpus.unseen}}) {
      if (records->empty()) continue;
      const EnhanceOutcome e = enhance_and_score(run, *records, "enhanced", threads);
      const double before = mean_of(e.scores, kUnprocessed);
      const double after = mean_of(e.scores, "enhanced");
      if (std::string(split) == "test") {
        row.test_si_sdr = after;
        row.test_improvement = after - before;
      } else {
        row.unseen_si_sdr = after;
        row.unseen_improvement = after - before;
      }
      write_utterance_csv(dir / (std::string(split) + "_scores.csv"), e.scores);
    }
    rows.push_back(row);
  }
  write_sweep_csv(out_dir / ("sweep_" + to_string(axis) + ".csv"), axis, rows);
  return rows;
}

void write_sweep_csv(const fs::path& path, SweepAxis axis, std::span<const SweepRow> rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << std::setprecision(17) << to_string(axis)
     << ",nc_accuracy,test_si_sdr,test_improvement,unseen_si_sdr,unseen_improvement\n";
  for (const auto& r : rows) {
    os << r.setting << ',' << r.nc_accuracy << ',' << r.test_si_sdr << ',' << r.test_improvement << ','
       << r.unseen_si_sdr << ',' << r.unseen_improvement << '\n';
  }
}

}  // namespace nase
