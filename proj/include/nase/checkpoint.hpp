#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "nase/config.hpp"
#include "nase/model.hpp"
#include "nase/rng.hpp"
#include "nase/schedule.hpp"

namespace nase {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: "NASECKPT", u32 version, u64 header length, UTF-8 JSON header
// (config, schedule, counters, RNG states, tensor names and shapes), then the
// tensors as little-endian float64 in header order.
struct Checkpoint {
  ExperimentConfig config;
  Schedule schedule;
  Model model;
  int epoch = 0;
  std::uint64_t steps = 0;
  std::map<std::string, Rng> rngs;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nase
