#include "nase/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "nase/diffusion.hpp"
#include "nase/errors.hpp"

namespace nase {

namespace {

constexpr double kDivergenceLimit = 1e6;

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda_nc >= 0.0) || !std::isfinite(lambda_nc)) throw SchemaError("train: lambda_nc must be >= 0");
  if (batch_size < 1) throw SchemaError("train: batch_size must be >= 1");
  if (epochs < 0 || pretrain_epochs < 0) throw SchemaError("train: epoch counts must be >= 0");
  if (!(learning_rate > 0.0)) throw SchemaError("train: learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw SchemaError("train: Adam decay constants must lie in [0, 1)");
  }
  if (!(clip_norm > 0.0)) throw SchemaError("train: clip_norm must be positive");
  if (checkpoint_every < 0) throw SchemaError("train: checkpoint_every must be >= 0");
}

bool TrainReport::same_metrics(const TrainReport& other) const {
  if (epochs.size() != other.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const EpochStats& a = epochs[i];
    const EpochStats& b = other.epochs[i];
    if (a.phase != b.phase || a.epoch != b.epoch || a.diff_loss != b.diff_loss || a.nc_loss != b.nc_loss ||
        a.nc_accuracy != b.nc_accuracy) {
      return false;
    }
  }
  return true;
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << std::setprecision(17) << "phase,epoch,diff_loss,nc_loss,nc_accuracy,wall_seconds\n";
  for (const EpochStats& e : epochs) {
    os << e.phase << ',' << e.epoch << ',' << e.diff_loss << ',' << e.nc_loss << ',' << e.nc_accuracy << ','
       << e.wall_seconds << '\n';
  }
}

std::vector<TrainingExample> examples_from(std::span<const Record> records) {
  std::vector<TrainingExample> out;
  out.reserve(records.size());
  for (const Record& r : records) out.push_back({r.clean, r.noisy, r.label});
  return out;
}

Trainer::Trainer(Model model, Schedule schedule, TrainConfig config)
    : model_(std::move(model)),
      schedule_(std::move(schedule)),
      config_(config),
      noise_rng_(Rng(config.seed).substream("diffusion-noise")) {
  config_.validate();
  if (model_.config.denoiser.steps != schedule_.steps()) {
    throw std::invalid_argument("trainer: model step count differs from schedule");
  }
}

bool Trainer::trainable(const std::string& name, Phase phase) const {
  const bool encoder = starts_with(name, "encoder.");
  const bool classifier = starts_with(name, "classifier.");
  if (phase == Phase::pretrain) return encoder || classifier;
  if (encoder) return !config_.freeze_encoder;
  return true;
}

StepLosses Trainer::train_step(std::span<const TrainingExample> batch, Phase phase) {
  if (batch.empty()) throw EmptyInputError("train_step: empty batch");
  const std::size_t B = batch.size();
  const std::size_t L = model_.config.encoder.signal_length;
  const int T = schedule_.steps();

  Tensor y({B, L}), x_t({B, L}), target({B, L});
  std::vector<int> steps(B), labels(B);
  for (std::size_t b = 0; b < B; ++b) {
    if (batch[b].clean.size() != L || batch[b].noisy.size() != L) {
      throw ShapeError("train_step: example length differs from configured signal length");
    }
    labels[b] = batch[b].label;
    std::copy(batch[b].noisy.begin(), batch[b].noisy.end(), y.data().begin() + b * L);
    if (phase == Phase::pretrain) continue;
    const int t = 1 + static_cast<int>(noise_rng_.below(static_cast<std::uint64_t>(T)));
    steps[b] = t;
    const Tensor x0_row({L}, std::vector<double>(batch[b].clean.begin(), batch[b].clean.end()));
    const Tensor y_row({L}, std::vector<double>(batch[b].noisy.begin(), batch[b].noisy.end()));
    const Tensor eps = gauss(noise_rng_, {L});
    const Tensor xt_row = forward_state(schedule_, x0_row, y_row, eps, t);
    const Tensor c_row = build_target(schedule_, x0_row, y_row, eps, t);
    std::copy(xt_row.data().begin(), xt_row.data().end(), x_t.data().begin() + b * L);
    std::copy(c_row.data().begin(), c_row.data().end(), target.data().begin() + b * L);
  }

  Tape tape;
  Model tracked = model_;
  std::vector<std::pair<std::string, std::size_t>> watched;
  visit(tracked, [&](const std::string& name, Tensor& p) {
    if (!trainable(name, phase)) return;
    p = tape.watch(p);
    watched.emplace_back(name, *p.node());
  });

  const ConditionerOutput cond = encode(tracked.encoder, tracked.classifier, model_.config.encoder, y);
  for (double p : cond.probs.data()) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw NumericError("training diverged at step " + std::to_string(step_) +
                         ": classifier probabilities underflowed or are non-finite");
    }
  }
  const Tensor l_nc = nc_loss(cond, labels);
  StepLosses losses;
  Tensor total;
  if (phase == Phase::pretrain) {
    total = l_nc;
  } else {
    const Tensor* emb = model_.config.use_conditioner ? &cond.embedding : nullptr;
    const Tensor pred = predict_eps(tracked.denoiser, model_.config.denoiser, x_t, y, steps, emb);
    const Tensor l_diff = diff_loss(pred, target);
    total = add(l_diff, scale(l_nc, config_.lambda_nc));
    losses.diff = l_diff.item();
  }
  losses.nc = l_nc.item();
  losses.total = total.item();
  if (!std::isfinite(losses.total) || losses.total > kDivergenceLimit) {
    std::ostringstream msg;
    msg << "training " << (std::isfinite(losses.total) ? "diverged" : "produced a non-finite loss") << " at step "
        << step_ << ": diff=" << losses.diff << " nc=" << losses.nc << " total=" << losses.total;
    throw NumericError(msg.str());
  }
  const auto pred_cls = predicted_classes(cond);
  for (std::size_t b = 0; b < B; ++b) losses.correct += pred_cls[b] == labels[b];
  losses.count = B;

  const Gradients grads = tape.backward(total);
  last_grads_.clear();
  double norm2 = 0.0;
  for (const auto& [name, node] : watched) {
    const Tensor& g = grads.by_node().at(node);
    for (double v : g.data()) norm2 += v * v;
    last_grads_.emplace(name, g);
  }
  const double norm = std::sqrt(norm2);
  const double clip = norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;

  ++step_;
  const double bc1 = 1.0 - std::pow(config_.adam_beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.adam_beta2, static_cast<double>(step_));
  visit(model_, [&](const std::string& name, Tensor& p) {
    auto it = last_grads_.find(name);
    if (it == last_grads_.end()) return;
    Moments& mom = moments_[name];
    if (mom.m.empty()) {
      mom.m.assign(p.size(), 0.0);
      mom.v.assign(p.size(), 0.0);
    }
    const auto g = it->second.data();
    auto w = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * clip;
      mom.m[i] = config_.adam_beta1 * mom.m[i] + (1.0 - config_.adam_beta1) * gi;
      mom.v[i] = config_.adam_beta2 * mom.v[i] + (1.0 - config_.adam_beta2) * gi * gi;
      w[i] -= config_.learning_rate * (mom.m[i] / bc1) / (std::sqrt(mom.v[i] / bc2) + config_.adam_eps);
    }
  });
  return losses;
}

TrainResult train(const TrainConfig& config, Model init, const Schedule& schedule,
                  std::span<const TrainingExample> dataset, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw EmptyInputError("train: empty dataset");
  std::set<int> classes;
  for (const auto& ex : dataset) classes.insert(ex.label);
  if (classes.size() < 2) throw std::invalid_argument("train: dataset labels must cover at least two classes");

  Trainer trainer(std::move(init), schedule, config);
  Rng shuffle_rng = Rng(config.seed).substream("shuffle");
  TrainReport report;

  auto run_epoch = [&](Phase phase, int epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double diff_sum = 0.0, nc_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    std::vector<TrainingExample> batch;
    for (std::size_t lo = 0; lo < order.size(); lo += config.batch_size) {
      batch.clear();
      for (std::size_t i = lo; i < std::min(order.size(), lo + config.batch_size); ++i) batch.push_back(dataset[order[i]]);
      const StepLosses l = trainer.train_step(batch, phase);
      diff_sum += l.diff * static_cast<double>(l.count);
      nc_sum += l.nc * static_cast<double>(l.count);
      correct += l.correct;
      seen += l.count;
    }
    EpochStats stats;
    stats.phase = phase == Phase::pretrain ? "pretrain" : "joint";
    stats.epoch = epoch;
    stats.diff_loss = diff_sum / static_cast<double>(seen);
    stats.nc_loss = nc_sum / static_cast<double>(seen);
    stats.nc_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(trainer, stats);
  };

  if (config.pretrain_nc) {
    for (int e = 1; e <= config.pretrain_epochs; ++e) run_epoch(Phase::pretrain, e);
  }
  for (int e = 1; e <= config.epochs; ++e) run_epoch(Phase::joint, e);

  return TrainResult{trainer.model(), std::move(report), trainer.steps_taken(), trainer.noise_rng()};
}

}  // namespace nase
