// nase: corpus generation, training, enhancement, evaluation and ablation sweeps.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "nase/checkpoint.hpp"
#include "nase/config.hpp"
#include "nase/errors.hpp"
#include "nase/experiment.hpp"
#include "nase/metrics.hpp"

namespace fs = std::filesystem;
using namespace nase;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* opt = cmd->add_option("--config", o.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--seed", o.seed, "overrides the config seed");
  cmd->add_option("--threads", o.threads, "worker threads for enhancement")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.resolve();
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const CommonOptions& o, const ExperimentConfig& cfg) {
  const fs::path out(o.out);
  fs::create_directories(out);
  save_config(cfg, out / "resolved_config.json");
  return out;
}

int cmd_datagen(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  const fs::path out = prepare_out(o, cfg);
  const Corpus corpus = build_corpus(cfg.corpus);
  write_corpus(corpus, out);
  std::cout << "wrote " << corpus.train.size() << " train, " << corpus.test.size() << " test, " << corpus.unseen.size()
            << " unseen records to " << out.string() << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& corpus_dir) {
  ExperimentConfig cfg = resolve_config(o);
  if (!corpus_dir.empty()) cfg.corpus_dir = corpus_dir;
  const fs::path out = prepare_out(o, cfg);
  const Corpus corpus = obtain_corpus(cfg);

  auto on_epoch = [&](const Trainer& trainer, const EpochStats& stats) {
    std::cout << stats.phase << " epoch " << stats.epoch << ": diff " << stats.diff_loss << ", nc " << stats.nc_loss
              << ", acc " << stats.nc_accuracy << " (" << stats.wall_seconds << " s)\n";
    if (cfg.train.checkpoint_every > 0 && stats.phase == "joint" && stats.epoch % cfg.train.checkpoint_every == 0) {
      Checkpoint c;
      c.config = cfg;
      c.schedule = trainer.schedule();
      c.model = trainer.model();
      c.epoch = stats.epoch;
      c.steps = trainer.steps_taken();
      c.rngs.emplace("diffusion-noise", trainer.noise_rng());
      save_checkpoint(c, out / ("model_epoch" + std::to_string(stats.epoch) + ".ckpt"));
    }
  };
  const RunResult run = run_training(cfg, corpus.train, on_epoch);
  save_checkpoint(to_checkpoint(run), out / "model.ckpt");
  run.report.write_csv(out / "train_report.csv");
  std::cout << "checkpoint: " << (out / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_enhance(const CommonOptions& o, const std::string& checkpoint, const std::string& manifest_path,
                const std::string& system) {
  RunResult run = from_checkpoint(load_checkpoint(checkpoint));
  if (o.seed) {
    run.config.seed = *o.seed;
    run.config.sampler.seed = *o.seed;
  }
  const fs::path out = prepare_out(o, run.config);
  const Manifest manifest = read_manifest(manifest_path);
  if (manifest.records.empty()) throw EmptyInputError("manifest " + manifest_path + " has no records");
  const EnhanceOutcome e = enhance_and_score(run, manifest.records, system, o.threads);
  write_enhanced(out / "enhanced", manifest.records, e.enhanced);
  write_utterance_csv(out / "scores.csv", e.scores);
  write_embeddings_csv(out / "embeddings.csv", run.config.name, manifest.records, embeddings(run.model, manifest.records));
  const EvalReport report = aggregate(e.scores);
  std::cout << "mean SI-SDR " << kUnprocessed << ": " << report.mean_si_sdr(kUnprocessed) << " dB, " << system << ": "
            << report.mean_si_sdr(system) << " dB\n";
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& manifest_path, const std::string& enhanced_dir,
             const std::string& system) {
  const ExperimentConfig cfg = resolve_config(o);
  const fs::path out = prepare_out(o, cfg);
  const Manifest manifest = read_manifest(manifest_path);
  if (manifest.records.empty()) throw EmptyInputError("manifest " + manifest_path + " has no records");
  const std::vector<Signal> enhanced = read_enhanced(enhanced_dir, manifest.records);
  std::vector<Signal> noisy;
  for (const auto& r : manifest.records) noisy.push_back(r.noisy);
  std::vector<UtteranceScore> scores = score(manifest.records, noisy, kUnprocessed, cfg.metrics);
  const auto enhanced_scores = score(manifest.records, enhanced, system, cfg.metrics);
  scores.insert(scores.end(), enhanced_scores.begin(), enhanced_scores.end());
  const EvalReport report = aggregate(scores);
  write_utterance_csv(out / "utterances.csv", scores);
  write_cells_csv(out / "cells.csv", report);
  write_table_csv(out / "table.csv", report);
  std::cout << "mean SI-SDR " << kUnprocessed << ": " << report.mean_si_sdr(kUnprocessed) << " dB, " << system << ": "
            << report.mean_si_sdr(system) << " dB\n";
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& axis_name, const std::string& corpus_dir) {
  ExperimentConfig cfg = resolve_config(o);
  if (!corpus_dir.empty()) cfg.corpus_dir = corpus_dir;
  const SweepAxis axis = parse_sweep_axis(axis_name);
  const fs::path out = prepare_out(o, cfg);
  const Corpus corpus = obtain_corpus(cfg);
  const auto rows = run_sweep(cfg, axis, corpus, out, o.threads);
  std::cout << to_string(axis) << "  nc_acc  test_si_sdr  unseen_si_sdr\n";
  for (const auto& r : rows) {
    std::cout << r.setting << "  " << r.nc_accuracy << "  " << r.test_si_sdr << "  " << r.unseen_si_sdr << '\n';
  }
  return 0;
}

int exit_code(ExitCode c) { return static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-aware conditional diffusion speech enhancement on synthetic signals"};
  app.require_subcommand(1);

  CommonOptions datagen_opts, train_opts, enhance_opts, eval_opts, sweep_opts;
  std::string train_corpus, sweep_corpus, checkpoint, enhance_manifest, eval_manifest, enhanced_dir, axis;
  std::string enhance_system = "nase", eval_system = "nase";

  auto* datagen = app.add_subcommand("datagen", "generate the synthetic corpus");
  add_common(datagen, datagen_opts, false);

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train, train_opts, false);
  train->add_option("--corpus", train_corpus, "corpus directory (overrides corpus_dir)");

  auto* enhance = app.add_subcommand("enhance", "enhance every record of a manifest");
  add_common(enhance, enhance_opts, false);
  enhance->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  enhance->add_option("--manifest", enhance_manifest, "corpus manifest (JSON)")->required();
  enhance->add_option("--system", enhance_system, "system name used in the score tables");

  auto* eval = app.add_subcommand("eval", "score enhanced signals against a manifest");
  add_common(eval, eval_opts, false);
  eval->add_option("--manifest", eval_manifest, "corpus manifest (JSON)")->required();
  eval->add_option("--enhanced", enhanced_dir, "directory written by enhance")->required();
  eval->add_option("--system", eval_system, "system name used in the score tables");

  auto* sweep = app.add_subcommand("sweep", "run an ablation along one axis");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--axis", axis, "lambda_nc, inject or pretrain-freeze")->required();
  sweep->add_option("--corpus", sweep_corpus, "corpus directory (overrides corpus_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ExitCode::usage);
  }

  try {
    if (datagen->parsed()) return cmd_datagen(datagen_opts);
    if (train->parsed()) return cmd_train(train_opts, train_corpus);
    if (enhance->parsed()) {
      return cmd_enhance(enhance_opts, checkpoint, enhance_manifest, enhance_system);
    }
    if (eval->parsed()) return cmd_eval(eval_opts, eval_manifest, enhanced_dir, eval_system);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, axis, sweep_corpus);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return exit_code(ExitCode::schema);
  } catch (const MissingFileError& e) {
    std::cerr << "missing file: " << e.what() << '\n';
    return exit_code(ExitCode::missing_file);
  } catch (const VersionError& e) {
    std::cerr << "version mismatch: " << e.what() << '\n';
    return exit_code(ExitCode::version_mismatch);
  } catch (const EmptyInputError& e) {
    std::cerr << "empty input: " << e.what() << '\n';
    return exit_code(ExitCode::empty_input);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return exit_code(ExitCode::numeric);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ExitCode::failure);
  }
  return exit_code(ExitCode::usage);
}
