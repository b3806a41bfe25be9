#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace nase {

inline constexpr double kSiSdrClamp = 100.0;

// Scale-invariant SDR in dB, clamped to [-100, 100].
double si_sdr(std::span<const double> est, std::span<const double> ref);
// Unclamped value; +inf when est is an exact multiple of ref.
double si_sdr_unclamped(std::span<const double> est, std::span<const double> ref);

// Frame-wise SNR with each frame clamped to [-10, 35] dB, then averaged.
double seg_snr(std::span<const double> est, std::span<const double> ref, std::size_t frame = 64,
               std::size_t hop = 32);

double accuracy(std::span<const int> preds, std::span<const int> labels);

// Mean silhouette over points (rows of `embeddings`); in [-1, 1].
double separability(const std::vector<std::vector<double>>& embeddings, std::span<const int> labels);

struct UtteranceScore {
  std::string id;
  std::string system;
  std::string family;
  int label = 0;
  double snr_db = 0.0;
  double si_sdr = 0.0;
  double seg_snr = 0.0;
};

struct EvalCell {
  double mean_si_sdr = 0.0;
  double mean_seg_snr = 0.0;
  std::size_t count = 0;
};

// Per (system, family, snr) averages plus classifier statistics.
struct EvalReport {
  std::map<std::tuple<std::string, std::string, double>, EvalCell> cells;
  std::vector<std::string> systems;   // insertion order
  std::vector<std::string> families;  // insertion order
  std::vector<double> snrs;           // ascending
  double nc_accuracy = -1.0;          // negative when not computed
  double separability = 0.0;
  bool has_separability = false;

  double mean_si_sdr(const std::string& system) const;
  double mean_si_sdr(const std::string& system, const std::string& family) const;
};

EvalReport aggregate(std::span<const UtteranceScore> scores);

void write_utterance_csv(const std::filesystem::path& path, std::span<const UtteranceScore> scores);
std::vector<UtteranceScore> read_utterance_csv(const std::filesystem::path& path);
// Long form: system,family,snr_db,count,mean_si_sdr,mean_seg_snr.
void write_cells_csv(const std::filesystem::path& path, const EvalReport& report);
// Table layout: one block per family, one row per system, columns = SNR grid + Avg.
void write_table_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace nase
