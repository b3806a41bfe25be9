#include "nase/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nase/errors.hpp"

namespace nase {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'N', 'A', 'S', 'E', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw SchemaError("checkpoint truncated in " + what);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["config"] = to_json(ckpt.config);
  header["schedule"] = ckpt.schedule.to_json();
  header["epoch"] = ckpt.epoch;
  header["steps"] = ckpt.steps;
  json rngs = json::object();
  for (const auto& [name, rng] : ckpt.rngs) {
    rngs[name] = {{"seed", rng.seed()}, {"stream", rng.stream()}, {"counter", rng.counter()}};
  }
  header["rngs"] = rngs;
  json tensors = json::array();
  visit(ckpt.model, [&](const std::string& name, const Tensor& t) { tensors.push_back({{"name", name}, {"shape", t.shape()}}); });
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  visit(ckpt.model, [&](const std::string&, const Tensor& t) {
    for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  });
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError("checkpoint not found: " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw SchemaError(path.string() + " is not a checkpoint");
  }
  const auto version = get_le<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get_le<std::uint64_t>(is, "header length");
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) throw SchemaError("checkpoint header truncated");

  Checkpoint ckpt;
  try {
    const json header = json::parse(text);
    ckpt.config = config_from_json(header.at("config"));
    ckpt.schedule = Schedule::from_json(header.at("schedule"));
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.steps = header.at("steps").get<std::uint64_t>();
    for (const auto& [name, r] : header.at("rngs").items()) {
      Rng rng(r.at("seed").get<std::uint64_t>(), r.at("stream").get<std::uint64_t>());
      rng.set_counter(r.at("counter").get<std::uint64_t>());
      ckpt.rngs.emplace(name, rng);
    }
    ckpt.model = init_model(ckpt.config.model, Rng(0));
    const json& tensors = header.at("tensors");
    std::size_t i = 0;
    visit(ckpt.model, [&](const std::string& name, Tensor& t) {
      if (i >= tensors.size()) throw SchemaError("checkpoint lists too few tensors");
      const json& entry = tensors[i++];
      if (entry.at("name").get<std::string>() != name || entry.at("shape").get<Shape>() != t.shape()) {
        throw SchemaError("checkpoint tensor " + entry.at("name").get<std::string>() + " does not match " + name);
      }
      for (double& v : t.data()) v = std::bit_cast<double>(get_le<std::uint64_t>(is, name));
    });
    if (i != tensors.size()) throw SchemaError("checkpoint lists unexpected tensors");
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ScheduleError& e) {
    throw SchemaError(std::string("checkpoint schedule: ") + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw SchemaError("trailing bytes after checkpoint tensors");
  return ckpt;
}

}  // namespace nase
