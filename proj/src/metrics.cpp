#include "nase/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "nase/errors.hpp"

namespace nase {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void require_pair(const char* op, std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw EmptyInputError(std::string(op) + ": empty input");
  if (a.size() != b.size()) throw std::invalid_argument(std::string(op) + ": length mismatch");
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << std::setprecision(17);
  return os;
}

}  // namespace

double si_sdr_unclamped(std::span<const double> est, std::span<const double> ref) {
  require_pair("si_sdr", est, ref);
  const double ref_energy = dot(ref, ref);
  if (!(ref_energy > 0.0)) throw std::invalid_argument("si_sdr: zero reference");
  const double alpha = dot(est, ref) / ref_energy;
  double target = 0.0, error = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double s = alpha * ref[i];
    const double e = est[i] - s;
    target += s * s;
    error += e * e;
  }
  if (error == 0.0) return target == 0.0 ? -std::numeric_limits<double>::infinity()
                                         : std::numeric_limits<double>::infinity();
  if (target == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(target / error);
}

double si_sdr(std::span<const double> est, std::span<const double> ref) {
  return std::clamp(si_sdr_unclamped(est, ref), -kSiSdrClamp, kSiSdrClamp);
}

double seg_snr(std::span<const double> est, std::span<const double> ref, std::size_t frame, std::size_t hop) {
  require_pair("seg_snr", est, ref);
  if (frame == 0 || hop == 0) throw std::invalid_argument("seg_snr: frame and hop must be positive");
  constexpr double lo = -10.0, hi = 35.0;
  const std::size_t len = std::min(frame, ref.size());
  double total = 0.0;
  std::size_t frames = 0;
  for (std::size_t start = 0; start + len <= ref.size(); start += hop) {
    double sig = 0.0, err = 0.0;
    for (std::size_t i = start; i < start + len; ++i) {
      sig += ref[i] * ref[i];
      err += (ref[i] - est[i]) * (ref[i] - est[i]);
    }
    double v;
    if (err == 0.0) {
      v = hi;
    } else if (sig == 0.0) {
      v = lo;
    } else {
      v = std::clamp(10.0 * std::log10(sig / err), lo, hi);
    }
    total += v;
    ++frames;
  }
  return total / static_cast<double>(frames);
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.empty()) throw EmptyInputError("accuracy: empty input");
  if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double separability(const std::vector<std::vector<double>>& x, std::span<const int> labels) {
  const std::size_t n = x.size();
  if (n == 0) throw EmptyInputError("separability: empty input");
  if (labels.size() != n) throw std::invalid_argument("separability: label count mismatch");
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw std::invalid_argument("separability: need at least two classes");
  const std::size_t k = classes.size();
  std::vector<std::size_t> cls(n), counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cls[i] = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
    ++counts[cls[i]];
  }

  double total = 0.0;
  std::vector<double> dist_sum(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < x[i].size(); ++c) d2 += (x[i][c] - x[j][c]) * (x[i][c] - x[j][c]);
      dist_sum[cls[j]] += std::sqrt(d2);
    }
    if (counts[cls[i]] < 2) continue;  // singleton clusters score 0
    const double a = dist_sum[cls[i]] / static_cast<double>(counts[cls[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != cls[i]) b = std::min(b, dist_sum[c] / static_cast<double>(counts[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

double EvalReport::mean_si_sdr(const std::string& system) const {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& [key, cell] : cells) {
    if (std::get<0>(key) != system) continue;
    acc += cell.mean_si_sdr * static_cast<double>(cell.count);
    count += cell.count;
  }
  if (count == 0) throw std::out_of_range("no scores for system " + system);
  return acc / static_cast<double>(count);
}

double EvalReport::mean_si_sdr(const std::string& system, const std::string& family) const {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& [key, cell] : cells) {
    if (std::get<0>(key) != system || std::get<1>(key) != family) continue;
    acc += cell.mean_si_sdr * static_cast<double>(cell.count);
    count += cell.count;
  }
  if (count == 0) throw std::out_of_range("no scores for " + system + "/" + family);
  return acc / static_cast<double>(count);
}

EvalReport aggregate(std::span<const UtteranceScore> scores) {
  if (scores.empty()) throw EmptyInputError("aggregate: no utterance scores");
  EvalReport report;
  for (const UtteranceScore& s : scores) {
    if (std::find(report.systems.begin(), report.systems.end(), s.system) == report.systems.end())
      report.systems.push_back(s.system);
    if (std::find(report.families.begin(), report.families.end(), s.family) == report.families.end())
      report.families.push_back(s.family);
    if (std::find(report.snrs.begin(), report.snrs.end(), s.snr_db) == report.snrs.end()) report.snrs.push_back(s.snr_db);
    EvalCell& cell = report.cells[{s.system, s.family, s.snr_db}];
    cell.mean_si_sdr += s.si_sdr;
    cell.mean_seg_snr += s.seg_snr;
    ++cell.count;
  }
  for (auto& [key, cell] : report.cells) {
    cell.mean_si_sdr /= static_cast<double>(cell.count);
    cell.mean_seg_snr /= static_cast<double>(cell.count);
  }
  std::sort(report.snrs.begin(), report.snrs.end());
  return report;
}

void write_utterance_csv(const std::filesystem::path& path, std::span<const UtteranceScore> scores) {
  auto os = open_csv(path);
  os << "id,system,family,label,snr_db,si_sdr,seg_snr\n";
  for (const auto& s : scores) {
    os << s.id << ',' << s.system << ',' << s.family << ',' << s.label << ',' << s.snr_db << ',' << s.si_sdr << ','
       << s.seg_snr << '\n';
  }
}

std::vector<UtteranceScore> read_utterance_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError("missing CSV " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "id,system,family,label,snr_db,si_sdr,seg_snr") throw SchemaError("unexpected CSV header in " + path.string());
  std::vector<UtteranceScore> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw SchemaError("malformed CSV row in " + path.string());
    out.push_back({f[0], f[1], f[2], std::stoi(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6])});
  }
  return out;
}

void write_cells_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto os = open_csv(path);
  os << "system,family,snr_db,count,mean_si_sdr,mean_seg_snr\n";
  for (const auto& system : report.systems)
    for (const auto& family : report.families)
      for (double snr : report.snrs) {
        auto it = report.cells.find({system, family, snr});
        if (it == report.cells.end()) continue;
        os << system << ',' << family << ',' << snr << ',' << it->second.count << ',' << it->second.mean_si_sdr << ','
           << it->second.mean_seg_snr << '\n';
      }
}

void write_table_csv(const std::filesystem::path& path, const EvalReport& report) {
  auto os = open_csv(path);
  os << "family,system";
  for (double snr : report.snrs) os << ',' << snr;
  os << ",avg\n";
  for (const auto& family : report.families) {
    for (const auto& system : report.systems) {
      os << family << ',' << system;
      for (double snr : report.snrs) {
        auto it = report.cells.find({system, family, snr});
        os << ',';
        if (it != report.cells.end()) os << it->second.mean_si_sdr;
      }
      os << ',' << report.mean_si_sdr(system, family) << '\n';
    }
  }
}

}  // namespace nase
