#include "nase/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>
#include <sstream>

#include "nase/errors.hpp"

namespace nase {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kManifestVersion = 1;
constexpr std::size_t kWarmup = 128;

struct FamilyInfo {
  const char* name;
  NoiseKind kind;
  bool stationary;
};

constexpr FamilyInfo kFamilies[] = {
    {"white", NoiseKind::white, true},
    {"pink", NoiseKind::pink, true},
    {"band-limited", NoiseKind::band_limited, true},
    {"am-tone", NoiseKind::am_tone, false},
    {"fm-tone", NoiseKind::fm_tone, false},
    {"impulse-train", NoiseKind::impulse_train, false},
    {"chirp-sweep", NoiseKind::chirp_sweep, false},
    {"two-tone-beat", NoiseKind::two_tone_beat, false},
    {"gated-bursts", NoiseKind::gated_bursts, false},
    {"babble", NoiseKind::babble, true},
    {"helicopter", NoiseKind::helicopter, false},
    {"baby-cry", NoiseKind::baby_cry, false},
    {"crowd-party", NoiseKind::crowd_party, true},
};

// RBJ band-pass biquad (0 dB peak) applied to a white excitation.
Signal bandpass_noise(Rng& rng, std::size_t length, double sr, double center, double q) {
  const double w0 = kTwoPi * center / sr;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  Signal out(length);
  for (std::size_t i = 0; i < length + kWarmup; ++i) {
    const double x = rng.normal();
    const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    if (i >= kWarmup) out[i - kWarmup] = y;
  }
  return out;
}

Signal pink_noise(Rng& rng, std::size_t length) {
  // Kellet's economy filter bank.
  double b[7] = {0, 0, 0, 0, 0, 0, 0};
  Signal out(length);
  for (std::size_t i = 0; i < length + kWarmup; ++i) {
    const double w = rng.normal();
    b[0] = 0.99886 * b[0] + w * 0.0555179;
    b[1] = 0.99332 * b[1] + w * 0.0750759;
    b[2] = 0.96900 * b[2] + w * 0.1538520;
    b[3] = 0.86650 * b[3] + w * 0.3104856;
    b[4] = 0.55000 * b[4] + w * 0.5329522;
    b[5] = -0.7616 * b[5] - w * 0.0168980;
    const double v = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
    b[6] = w * 0.115926;
    if (i >= kWarmup) out[i - kWarmup] = v;
  }
  return out;
}

std::string record_id(const std::string& split, const std::string& family, std::size_t index) {
  std::ostringstream os;
  os << split << '-' << family << '-' << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

nlohmann::json family_json(const NoiseFamily& f) {
  return {{"name", f.name}, {"class_index", f.class_index}, {"stationary", f.stationary}};
}

}  // namespace

std::vector<NoiseFamily> default_seen_families() {
  std::vector<NoiseFamily> out;
  for (int i = 0; i < 10; ++i) out.push_back({kFamilies[i].name, i, kFamilies[i].kind, kFamilies[i].stationary});
  return out;
}

std::vector<NoiseFamily> default_heldout_families() {
  std::vector<NoiseFamily> out;
  for (int i = 10; i < 13; ++i) out.push_back({kFamilies[i].name, i, kFamilies[i].kind, kFamilies[i].stationary});
  return out;
}

NoiseFamily family_by_name(const std::string& name, int class_index) {
  for (const auto& f : kFamilies) {
    if (name == f.name) return {f.name, class_index, f.kind, f.stationary};
  }
  throw SchemaError("unknown noise family '" + name + "'");
}

void CorpusSpec::validate() const {
  if (signal_length < 32) throw SchemaError("corpus: signal_length must be >= 32");
  if (!(sample_rate > 0.0)) throw SchemaError("corpus: sample_rate must be positive");
  if (seen.size() < 2) throw SchemaError("corpus: need at least two seen families");
  if (train_snrs.empty() || unseen_snrs.empty()) throw SchemaError("corpus: SNR grids must be non-empty");
  for (double s : train_snrs)
    if (!std::isfinite(s)) throw SchemaError("corpus: SNR values must be finite");
  for (double s : unseen_snrs)
    if (!std::isfinite(s)) throw SchemaError("corpus: SNR values must be finite");
  std::set<int> classes;
  std::set<std::string> names;
  for (const auto* group : {&seen, &heldout}) {
    for (const NoiseFamily& f : *group) {
      if (!classes.insert(f.class_index).second) throw SchemaError("corpus: duplicate class index");
      if (!names.insert(f.name).second) throw SchemaError("corpus: family '" + f.name + "' listed twice");
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i].class_index != static_cast<int>(i)) {
      throw SchemaError("corpus: seen families must carry class indices 0..n-1 in order");
    }
  }
}

Signal gen_clean(Rng& rng, std::size_t length, double sr) {
  const double f0 = rng.uniform(120.0, 280.0);
  const int harmonics = 2 + static_cast<int>(rng.below(3));
  const double env_rate = rng.uniform(5.0, 30.0);
  const double env_depth = rng.uniform(0.0, 0.3);
  const double env_phase = rng.uniform(0.0, kTwoPi);
  std::vector<double> amp(harmonics), phase(harmonics);
  for (int k = 0; k < harmonics; ++k) {
    amp[k] = rng.uniform(0.3, 1.0) / (k + 1);
    phase[k] = rng.uniform(0.0, kTwoPi);
  }
  Signal x(length);
  double peak = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) / sr;
    double v = 0.0;
    for (int k = 0; k < harmonics; ++k) v += amp[k] * std::sin(kTwoPi * f0 * (k + 1) * t + phase[k]);
    v *= 1.0 + env_depth * std::sin(kTwoPi * env_rate * t + env_phase);
    x[i] = v;
    peak = std::max(peak, std::abs(v));
  }
  for (double& v : x) v *= 0.5 / peak;
  return x;
}

Signal gen_noise(const NoiseFamily& family, Rng& rng, std::size_t n, double sr) {
  Signal x(n);
  auto time = [sr](std::size_t i) { return static_cast<double>(i) / sr; };
  switch (family.kind) {
    case NoiseKind::white:
      for (double& v : x) v = rng.normal();
      break;
    case NoiseKind::pink:
      x = pink_noise(rng, n);
      break;
    case NoiseKind::band_limited:
      x = bandpass_noise(rng, n, sr, rng.uniform(3000.0, 6000.0), 2.0);
      break;
    case NoiseKind::am_tone: {
      const double fc = rng.uniform(1500.0, 3000.0), fm = rng.uniform(50.0, 150.0);
      const double depth = rng.uniform(0.5, 1.0), p1 = rng.uniform(0.0, kTwoPi), p2 = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i)
        x[i] = std::sin(kTwoPi * fc * time(i) + p1) * (1.0 + depth * std::sin(kTwoPi * fm * time(i) + p2));
      break;
    }
    case NoiseKind::fm_tone: {
      const double fc = rng.uniform(3000.0, 5000.0), fm = rng.uniform(100.0, 300.0);
      const double index = rng.uniform(2.0, 5.0), p1 = rng.uniform(0.0, kTwoPi), p2 = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i)
        x[i] = std::sin(kTwoPi * fc * time(i) + p1 + index * std::sin(kTwoPi * fm * time(i) + p2));
      break;
    }
    case NoiseKind::impulse_train: {
      const std::size_t period = 16 + rng.below(25);
      const std::size_t offset = rng.below(period);
      for (std::size_t i = offset; i < n; i += period) x[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      break;
    }
    case NoiseKind::chirp_sweep: {
      const double f1 = rng.uniform(500.0, 2000.0), f2 = rng.uniform(5000.0, 7000.0);
      const double duration = time(n), p = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = time(i);
        x[i] = std::sin(kTwoPi * (f1 * t + 0.5 * (f2 - f1) / duration * t * t) + p);
      }
      break;
    }
    case NoiseKind::two_tone_beat: {
      const double f1 = rng.uniform(4000.0, 6000.0), df = rng.uniform(60.0, 200.0);
      const double p1 = rng.uniform(0.0, kTwoPi), p2 = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i)
        x[i] = std::sin(kTwoPi * f1 * time(i) + p1) + std::sin(kTwoPi * (f1 + df) * time(i) + p2);
      break;
    }
    case NoiseKind::gated_bursts: {
      constexpr std::size_t block = 32;
      const std::size_t blocks = (n + block - 1) / block;
      std::vector<bool> on(blocks);
      bool any = false;
      for (std::size_t b = 0; b < blocks; ++b) any |= (on[b] = rng.uniform() < 0.5);
      if (!any) on[rng.below(blocks)] = true;
      for (std::size_t i = 0; i < n; ++i) x[i] = on[i / block] ? rng.normal() : 0.0;
      break;
    }
    case NoiseKind::babble: {
      for (int voice = 0; voice < 4; ++voice) {
        const Signal band = bandpass_noise(rng, n, sr, rng.uniform(500.0, 2500.0), 4.0);
        for (std::size_t i = 0; i < n; ++i) x[i] += band[i];
      }
      break;
    }
    case NoiseKind::helicopter: {
      // Carrier chopped by a rectified low-rate rotor modulation.
      const double fc = rng.uniform(2000.0, 3500.0), rotor = rng.uniform(150.0, 300.0);
      const double p1 = rng.uniform(0.0, kTwoPi), p2 = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double chop = std::abs(std::sin(kTwoPi * rotor * time(i) + p2));
        x[i] = std::sin(kTwoPi * fc * time(i) + p1) * chop * chop * chop;
      }
      break;
    }
    case NoiseKind::baby_cry: {
      // Sparse rising chirp bursts with a second harmonic.
      const int bursts = 2 + static_cast<int>(rng.below(3));
      for (int k = 0; k < bursts; ++k) {
        const std::size_t len = 30 + rng.below(31);
        const std::size_t start = rng.below(n > len ? n - len : 1);
        const double f_lo = rng.uniform(1500.0, 2500.0), f_hi = f_lo + rng.uniform(800.0, 1500.0);
        const double dur = time(len);
        for (std::size_t j = 0; j < len && start + j < n; ++j) {
          const double t = time(j);
          const double phase = kTwoPi * (f_lo * t + 0.5 * (f_hi - f_lo) / dur * t * t);
          const double win = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(j) / static_cast<double>(len - 1));
          x[start + j] += win * (std::sin(phase) + 0.5 * std::sin(2.0 * phase));
        }
      }
      break;
    }
    case NoiseKind::crowd_party: {
      const Signal low = bandpass_noise(rng, n, sr, rng.uniform(1000.0, 2000.0), 0.7);
      const Signal high = bandpass_noise(rng, n, sr, rng.uniform(3000.0, 4500.0), 1.5);
      for (std::size_t i = 0; i < n; ++i) x[i] = low[i] + 0.5 * high[i];
      break;
    }
  }
  return x;
}

double power(const Signal& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

Signal mix(const Signal& clean, const Signal& noise, double snr_db) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("mix: SNR must be finite");
  if (clean.size() != noise.size()) throw std::invalid_argument("mix: length mismatch");
  const double pc = power(clean), pn = power(noise);
  if (!(pc > 0.0)) throw std::invalid_argument("mix: clean signal has zero power");
  if (!(pn > 0.0)) throw std::invalid_argument("mix: noise signal has zero power");
  const double gain = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  Signal y(clean.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = clean[i] + gain * noise[i];
  return y;
}

double measured_snr_db(const Signal& clean, const Signal& noisy) {
  Signal residual(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) residual[i] = noisy[i] - clean[i];
  return 10.0 * std::log10(power(clean) / power(residual));
}

Corpus build_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;
  const Rng root = Rng(spec.seed).substream("data");

  auto make = [&](const std::string& split, std::size_t index, const NoiseFamily& fam, double snr) {
    const Rng rec_rng = root.substream(split).substream(index);
    Rng clean_rng = rec_rng.substream("clean");
    Rng noise_rng = rec_rng.substream("noise");
    Record r;
    r.id = record_id(split, fam.name, index);
    r.split = split;
    r.family = fam.name;
    r.label = fam.class_index;
    r.snr_db = snr;
    r.seed = rec_rng.stream();
    r.clean = gen_clean(clean_rng, spec.signal_length, spec.sample_rate);
    r.noisy = mix(r.clean, gen_noise(fam, noise_rng, spec.signal_length, spec.sample_rate), snr);
    return r;
  };

  for (const auto& [split, per_family, out] :
       {std::tuple{std::string("train"), spec.train_per_family, &corpus.train},
        std::tuple{std::string("test"), spec.test_per_family, &corpus.test}}) {
    std::size_t index = 0;
    for (const NoiseFamily& fam : spec.seen)
      for (std::size_t i = 0; i < per_family; ++i)
        out->push_back(make(split, index++, fam, spec.train_snrs[i % spec.train_snrs.size()]));
  }
  std::size_t index = 0;
  for (const NoiseFamily& fam : spec.heldout)
    for (double snr : spec.unseen_snrs)
      for (std::size_t i = 0; i < spec.unseen_per_cell; ++i) corpus.unseen.push_back(make("unseen", index++, fam, snr));
  return corpus;
}

void write_f64(const std::filesystem::path& path, const Signal& values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Signal read_f64(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError("missing signal file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0) throw SchemaError("signal file " + path.string() + " is not a float64 vector");
  Signal out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<NoiseFamily> families = corpus.spec.seen;
  families.insert(families.end(), corpus.spec.heldout.begin(), corpus.spec.heldout.end());
  nlohmann::json fam_json = nlohmann::json::array();
  for (const auto& f : families) fam_json.push_back(family_json(f));

  for (const auto& [split, records] : {std::pair{std::string("train"), &corpus.train},
                                       std::pair{std::string("test"), &corpus.test},
                                       std::pair{std::string("unseen"), &corpus.unseen}}) {
    fs::create_directories(dir / split);
    nlohmann::json recs = nlohmann::json::array();
    for (const Record& r : *records) {
      const std::string clean_rel = split + "/" + r.id + ".clean.f64";
      const std::string noisy_rel = split + "/" + r.id + ".noisy.f64";
      write_f64(dir / clean_rel, r.clean);
      write_f64(dir / noisy_rel, r.noisy);
      recs.push_back({{"id", r.id},
                      {"family", r.family},
                      {"label", r.label},
                      {"snr_db", r.snr_db},
                      {"seed", r.seed},
                      {"clean", clean_rel},
                      {"noisy", noisy_rel}});
    }
    nlohmann::json manifest = {{"format", "nase-corpus"},
                               {"version", kManifestVersion},
                               {"split", split},
                               {"seed", corpus.spec.seed},
                               {"signal_length", corpus.spec.signal_length},
                               {"sample_rate", corpus.spec.sample_rate},
                               {"families", fam_json},
                               {"records", recs}};
    std::ofstream os(dir / (split + ".json"));
    os << manifest.dump(1) << '\n';
    if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("manifest not found: " + path.string());
  std::ifstream is(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "nase-corpus") throw SchemaError("not a corpus manifest");
    if (doc.at("version").get<int>() != kManifestVersion) {
      throw VersionError("manifest version " + doc.at("version").dump() + " unsupported (expected " +
                         std::to_string(kManifestVersion) + ")");
    }
    Manifest m;
    m.split = doc.at("split").get<std::string>();
    m.signal_length = doc.at("signal_length").get<std::size_t>();
    m.sample_rate = doc.at("sample_rate").get<double>();
    for (const auto& f : doc.at("families")) {
      NoiseFamily fam = family_by_name(f.at("name").get<std::string>(), f.at("class_index").get<int>());
      fam.stationary = f.at("stationary").get<bool>();
      m.families.push_back(fam);
    }
    const auto base = path.parent_path();
    for (const auto& r : doc.at("records")) {
      Record rec;
      rec.id = r.at("id").get<std::string>();
      rec.split = m.split;
      rec.family = r.at("family").get<std::string>();
      rec.label = r.at("label").get<int>();
      rec.snr_db = r.at("snr_db").get<double>();
      rec.seed = r.at("seed").get<std::uint64_t>();
      rec.clean = read_f64(base / r.at("clean").get<std::string>());
      rec.noisy = read_f64(base / r.at("noisy").get<std::string>());
      if (rec.clean.size() != m.signal_length || rec.noisy.size() != m.signal_length) {
        throw SchemaError("record " + rec.id + " does not match signal_length");
      }
      m.records.push_back(std::move(rec));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("manifest " + path.string() + " violates the schema: " + e.what());
  }
}

}  // namespace nase
