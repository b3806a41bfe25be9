#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nase/checkpoint.hpp"
#include "nase/config.hpp"
#include "nase/datagen.hpp"
#include "nase/metrics.hpp"
#include "nase/training.hpp"

namespace nase {

inline constexpr const char* kUnprocessed = "unprocessed";

// Reads <corpus_dir>/{train,test,unseen}.json when corpus_dir is set,
// otherwise generates the corpus from cfg.corpus.
Corpus obtain_corpus(const ExperimentConfig& cfg);
std::vector<Record> records_from_manifest(const Manifest& m);

struct RunResult {
  ExperimentConfig config;
  Schedule schedule;
  Model model;
  TrainReport report;
  std::uint64_t steps = 0;
  Rng noise_rng;
};

RunResult run_training(const ExperimentConfig& cfg, std::span<const Record> train_split,
                       const EpochCallback& on_epoch = {});
Checkpoint to_checkpoint(const RunResult& run);
RunResult from_checkpoint(const Checkpoint& ckpt);

std::vector<UtteranceScore> score(std::span<const Record> records, std::span<const Signal> estimates,
                                  const std::string& system, const MetricsConfig& metrics);

// Scores of the unprocessed mixtures followed by those of the enhanced signals.
struct EnhanceOutcome {
  std::vector<Signal> enhanced;
  std::vector<UtteranceScore> scores;
};
EnhanceOutcome enhance_and_score(const RunResult& run, std::span<const Record> records, const std::string& system,
                                 std::size_t threads);

// Conditioner embeddings, one row per record.
std::vector<std::vector<double>> embeddings(const Model& model, std::span<const Record> records);
void write_embeddings_csv(const std::filesystem::path& path, const std::string& run_id,
                          std::span<const Record> records, const std::vector<std::vector<double>>& emb);

// Writes enhanced signals next to a manifest describing them.
void write_enhanced(const std::filesystem::path& dir, std::span<const Record> records,
                    std::span<const Signal> enhanced);
// Enhanced signals for `records` from a directory produced by write_enhanced.
std::vector<Signal> read_enhanced(const std::filesystem::path& dir, std::span<const Record> records);

enum class SweepAxis { lambda_nc, inject, pretrain_freeze };
SweepAxis parse_sweep_axis(const std::string& name);
std::string to_string(SweepAxis axis);

struct SweepRow {
  std::string setting;
  double nc_accuracy = 0.0;
  double test_si_sdr = 0.0;
  double test_improvement = 0.0;
  double unseen_si_sdr = 0.0;
  double unseen_improvement = 0.0;
};

// The configurations compared along one axis, labelled.
std::vector<std::pair<std::string, ExperimentConfig>> sweep_settings(const ExperimentConfig& base, SweepAxis axis);
// Trains and evaluates every setting with the shared seed. Each setting writes
// its artefacts under out_dir/<setting>.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, SweepAxis axis, const Corpus& corpus,
                                const std::filesystem::path& out_dir, std::size_t threads);
void write_sweep_csv(const std::filesystem::path& path, SweepAxis axis, std::span<const SweepRow> rows);

}  // namespace nase
