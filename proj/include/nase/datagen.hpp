#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nase/rng.hpp"

namespace nase {

using Signal = std::vector<double>;

enum class NoiseKind {
  white,
  pink,
  band_limited,
  am_tone,
  fm_tone,
  impulse_train,
  chirp_sweep,
  two_tone_beat,
  gated_bursts,
  babble,
  helicopter,
  baby_cry,
  crowd_party,
};

struct NoiseFamily {
  std::string name;
  int class_index = 0;
  NoiseKind kind = NoiseKind::white;
  bool stationary = true;

  friend bool operator==(const NoiseFamily&, const NoiseFamily&) = default;
};

// Ten families used for training and in-distribution testing.
std::vector<NoiseFamily> default_seen_families();
// Three families never seen in training (helicopter, baby-cry, crowd-party analogues).
std::vector<NoiseFamily> default_heldout_families();
NoiseFamily family_by_name(const std::string& name, int class_index);

struct CorpusSpec {
  std::size_t signal_length = 256;
  double sample_rate = 16000.0;
  std::size_t train_per_family = 64;
  std::size_t test_per_family = 16;
  std::size_t unseen_per_cell = 8;  // per held-out family and SNR
  std::vector<double> train_snrs{0.0, 5.0, 10.0, 15.0};
  std::vector<double> unseen_snrs{-5.0, 0.0, 5.0, 10.0, 15.0};
  std::vector<NoiseFamily> seen = default_seen_families();
  std::vector<NoiseFamily> heldout = default_heldout_families();
  std::uint64_t seed = 0;

  void validate() const;
};

// Harmonic stand-in for a voiced speech segment, peak-normalised to 0.5.
Signal gen_clean(Rng& rng, std::size_t length, double sample_rate = 16000.0);
Signal gen_noise(const NoiseFamily& family, Rng& rng, std::size_t length, double sample_rate = 16000.0);
// clean + noise scaled so that the clean-to-noise power ratio equals snr_db.
Signal mix(const Signal& clean, const Signal& noise, double snr_db);
double power(const Signal& x);
double measured_snr_db(const Signal& clean, const Signal& noisy);

struct Record {
  std::string id;
  std::string split;
  std::string family;
  int label = 0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  Signal clean;
  Signal noisy;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<Record> train;
  std::vector<Record> test;
  std::vector<Record> unseen;
};

Corpus build_corpus(const CorpusSpec& spec);

// On-disk layout: <dir>/<split>.json manifests plus <dir>/<split>/<id>.{clean,noisy}.f64
// little-endian float64 vectors.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct Manifest {
  std::string split;
  std::size_t signal_length = 0;
  double sample_rate = 0.0;
  std::vector<NoiseFamily> families;
  std::vector<Record> records;
};

Manifest read_manifest(const std::filesystem::path& path);

void write_f64(const std::filesystem::path& path, const Signal& values);
Signal read_f64(const std::filesystem::path& path);

}  // namespace nase
