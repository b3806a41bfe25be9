#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "nase/datagen.hpp"
#include "nase/model.hpp"
#include "nase/sampling.hpp"
#include "nase/schedule.hpp"
#include "nase/training.hpp"

namespace nase {

struct ScheduleConfig {
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.035;
  std::optional<double> kappa;  // nullopt: w_T = 1

  Schedule build() const;
};

struct MetricsConfig {
  std::size_t seg_frame = 64;
  std::size_t seg_hop = 32;
};

// Everything a run needs. A single seed drives the corpus, initialisation,
// training noise, shuffling and sampling streams.
struct ExperimentConfig {
  std::string name = "nase";
  std::uint64_t seed = 0;
  std::string corpus_dir;  // empty: generate the corpus in memory
  CorpusSpec corpus;
  ScheduleConfig schedule;
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  MetricsConfig metrics;

  // Copies shared values (seed, lengths, class count, step count) into the
  // sub-configs. Idempotent.
  void resolve();
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Strict: unknown keys and ill-typed values raise SchemaError. Missing keys
// keep their defaults. The result is resolved and validated.
ExperimentConfig config_from_json(const nlohmann::json& doc);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace nase
