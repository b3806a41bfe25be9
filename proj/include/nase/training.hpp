#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nase/datagen.hpp"
#include "nase/model.hpp"
#include "nase/schedule.hpp"

namespace nase {

struct TrainConfig {
  double lambda_nc = 0.3;
  int epochs = 30;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  bool pretrain_nc = false;
  int pretrain_epochs = 5;
  bool freeze_encoder = false;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints

  void validate() const;
};

enum class Phase { pretrain, joint };

struct StepLosses {
  double diff = 0.0;
  double nc = 0.0;
  double total = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
};

struct EpochStats {
  std::string phase;
  int epoch = 0;
  double diff_loss = 0.0;
  double nc_loss = 0.0;
  double nc_accuracy = 0.0;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;

  // Equality on everything except wall-clock time.
  bool same_metrics(const TrainReport& other) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainingExample {
  std::span<const double> clean;
  std::span<const double> noisy;
  int label = 0;
};

std::vector<TrainingExample> examples_from(std::span<const Record> records);

// One optimiser owner holding the model, Adam moments and the noise stream.
class Trainer {
 public:
  Trainer(Model model, Schedule schedule, TrainConfig config);

  // One Adam step on L_diff + lambda * L_NC (joint) or L_NC alone (pretrain).
  StepLosses train_step(std::span<const TrainingExample> batch, Phase phase = Phase::joint);

  const Model& model() const noexcept { return model_; }
  Model& model() noexcept { return model_; }
  const Schedule& schedule() const noexcept { return schedule_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::uint64_t steps_taken() const noexcept { return step_; }
  const Rng& noise_rng() const noexcept { return noise_rng_; }

  // Names of parameters updated in the given phase.
  bool trainable(const std::string& name, Phase phase) const;

  // Gradients from the most recent step, keyed by parameter name.
  const std::map<std::string, Tensor>& last_gradients() const noexcept { return last_grads_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  Model model_;
  Schedule schedule_;
  TrainConfig config_;
  Rng noise_rng_;
  std::map<std::string, Moments> moments_;
  std::map<std::string, Tensor> last_grads_;
  std::uint64_t step_ = 0;
};

using EpochCallback = std::function<void(const Trainer&, const EpochStats&)>;

struct TrainResult {
  Model model;
  TrainReport report;
  std::uint64_t steps = 0;
  Rng noise_rng;
};

TrainResult train(const TrainConfig& config, Model init, const Schedule& schedule,
                  std::span<const TrainingExample> dataset, const EpochCallback& on_epoch = {});

}  // namespace nase
