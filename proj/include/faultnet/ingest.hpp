#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "faultnet/errors.hpp"
#include "faultnet/mat5.hpp"
#include "faultnet/rng.hpp"

namespace faultnet {

// ---------------------------------------------------------------------------
// Domain types

// A raw labeled vibration signal.
struct SignalRecord {
  std::vector<double> samples;
  double sampling_rate_hz = 0.0;
  int label = 0;
  std::string source;  // file/variable provenance, or "synthetic"

  void validate() const {
    if (samples.empty()) throw InvalidSpec("SignalRecord: empty sample stream");
    if (!(sampling_rate_hz > 0.0)) {
      throw InvalidSpec("SignalRecord: sampling rate must be positive");
    }
    for (double v : samples) {
      if (!std::isfinite(v)) throw NonFinite("SignalRecord: non-finite sample");
    }
  }
};

// A fixed-length window cut from a record; the unit of classification.
struct Segment {
  std::vector<double> values;
  int label = 0;
  std::string parent;
};

enum class Scheme { kCwru10, kPaderborn3, kSynthetic };

inline std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kCwru10: return "cwru";
    case Scheme::kPaderborn3: return "paderborn";
    case Scheme::kSynthetic: return "synthetic";
  }
  return "?";
}

struct Dataset {
  std::vector<Segment> segments;
  std::map<int, std::string> class_names;
  Scheme scheme = Scheme::kSynthetic;

  std::size_t n_classes() const { return class_names.size(); }

  std::map<int, std::size_t> counts_per_class() const {
    std::map<int, std::size_t> counts;
    for (const auto& [label, name] : class_names) counts[label] = 0;
    for (const Segment& s : segments) ++counts.at(s.label);
    return counts;
  }
};

// Synthetic bearing-signal generator spec: a train of decaying resonant
// impulses at a class-specific fault frequency plus Gaussian noise. Stands in
// for the physical test-rig data when running offline.
struct SynthSpec {
  int n_classes = 3;
  std::vector<double> fault_freq_hz = {13.0, 29.0, 47.0};  // one per class
  double resonance_freq_hz = 2000.0;
  double decay_rate = 400.0;  // 1/s
  double impulse_amplitude = 1.0;
  double noise_std = 0.1;
  double duration_s = 1.0;
  double sampling_rate_hz = 25000.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_classes < 2) throw InvalidSpec("SynthSpec: need at least 2 classes");
    if (fault_freq_hz.size() != static_cast<std::size_t>(n_classes)) {
      throw InvalidSpec("SynthSpec: one fault frequency per class required");
    }
    for (std::size_t i = 0; i < fault_freq_hz.size(); ++i) {
      if (!(fault_freq_hz[i] > 0.0)) {
        throw InvalidSpec("SynthSpec: fault frequencies must be positive");
      }
      for (std::size_t j = i + 1; j < fault_freq_hz.size(); ++j) {
        if (fault_freq_hz[i] == fault_freq_hz[j]) {
          throw InvalidSpec("SynthSpec: fault frequencies must be pairwise distinct");
        }
      }
    }
    if (!(resonance_freq_hz > 0.0)) {
      throw InvalidSpec("SynthSpec: resonance frequency must be positive");
    }
    if (!(decay_rate > 0.0)) throw InvalidSpec("SynthSpec: decay rate must be positive");
    if (impulse_amplitude < 0.0) {
      throw InvalidSpec("SynthSpec: impulse amplitude must be >= 0");
    }
    if (noise_std < 0.0) throw InvalidSpec("SynthSpec: noise std must be >= 0");
    if (!(duration_s > 0.0)) throw InvalidSpec("SynthSpec: duration must be positive");
    if (!(sampling_rate_hz > 0.0)) {
      throw InvalidSpec("SynthSpec: sampling rate must be positive");
    }
    if (!(resonance_freq_hz < sampling_rate_hz / 2.0)) {
      throw InvalidSpec("SynthSpec: resonance frequency must be below Nyquist");
    }
  }
};

// ---------------------------------------------------------------------------
// CSV signals: one real number per line, LF or CRLF, optional single header.

inline SignalRecord read_csv_signal(const std::string& path, int label,
                                    double sampling_rate_hz,
                                    bool skip_header = false) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open signal file: " + path);

  SignalRecord rec;
  rec.sampling_rate_hz = sampling_rate_hz;
  rec.label = label;
  rec.source = path;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && skip_header) continue;
    if (line.empty()) continue;
    std::size_t consumed = 0;
    double v = 0.0;
    try {
      v = std::stod(line, &consumed);
    } catch (const std::exception&) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": not a number: '" + line + "'");
    }
    while (consumed < line.size() &&
           (line[consumed] == ' ' || line[consumed] == '\t')) {
      ++consumed;
    }
    if (consumed != line.size()) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": trailing garbage: '" + line + "'");
    }
    if (!std::isfinite(v)) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": non-finite value");
    }
    rec.samples.push_back(v);
  }
  if (rec.samples.empty()) throw EmptyFile(path + ": no samples");
  return rec;
}

inline void write_csv_signal(const std::string& path,
                             const std::vector<double>& samples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write signal file: " + path);
  char buf[64];
  for (double v : samples) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", v);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Segmentation

// CWRU scheme: consecutive 1670-point windows (one shaft revolution at
// 48 kHz / 1750 rpm), each trimmed by 35 points at both ends -> 1600 usable
// points per segment. Trailing remainder shorter than one window is dropped.
inline std::vector<Segment> segment_cwru(const SignalRecord& record,
                                         std::size_t seg_len = 1670,
                                         std::size_t trim = 35) {
  if (seg_len <= 2 * trim) throw InvalidSpec("segment_cwru: trim leaves nothing");
  if (record.samples.size() < seg_len) {
    throw TooShort("segment_cwru: record of " +
                   std::to_string(record.samples.size()) +
                   " samples is shorter than one window (" +
                   std::to_string(seg_len) + ")");
  }
  const std::size_t n_windows = record.samples.size() / seg_len;
  std::vector<Segment> out;
  out.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::size_t begin = w * seg_len + trim;
    const std::size_t end = (w + 1) * seg_len - trim;
    Segment s;
    s.values.assign(record.samples.begin() + begin, record.samples.begin() + end);
    s.label = record.label;
    s.parent = record.source + "[" + std::to_string(w) + "]";
    out.push_back(std::move(s));
  }
  return out;
}

// Paderborn scheme: clip the first and last 1/16th of the record, then split
// the middle into consecutive fixed windows; the remainder is dropped.
inline std::vector<Segment> segment_paderborn(const SignalRecord& record,
                                              std::size_t window = 2500,
                                              double clip_fraction = 1.0 / 16.0) {
  if (!(clip_fraction >= 0.0 && clip_fraction < 0.5)) {
    throw InvalidSpec("segment_paderborn: clip fraction must be in [0, 0.5)");
  }
  const std::size_t n = record.samples.size();
  const std::size_t clip = static_cast<std::size_t>(
      std::floor(clip_fraction * static_cast<double>(n)));
  if (n < 2 * clip + window) {
    throw TooShort("segment_paderborn: record of " + std::to_string(n) +
                   " samples leaves no full window after clipping");
  }
  const std::size_t usable = n - 2 * clip;
  const std::size_t n_windows = usable / window;
  std::vector<Segment> out;
  out.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::size_t begin = clip + w * window;
    Segment s;
    s.values.assign(record.samples.begin() + begin,
                    record.samples.begin() + begin + window);
    s.label = record.label;
    s.parent = record.source + "[" + std::to_string(w) + "]";
    out.push_back(std::move(s));
  }
  return out;
}

// Synthetic scheme: plain consecutive windows, no trimming.
inline std::vector<Segment> segment_plain(const SignalRecord& record,
                                          std::size_t window) {
  if (record.samples.size() < window) {
    throw TooShort("segment_plain: record of " +
                   std::to_string(record.samples.size()) +
                   " samples is shorter than one window (" +
                   std::to_string(window) + ")");
  }
  const std::size_t n_windows = record.samples.size() / window;
  std::vector<Segment> out;
  out.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    Segment s;
    s.values.assign(record.samples.begin() + w * window,
                    record.samples.begin() + (w + 1) * window);
    s.label = record.label;
    s.parent = record.source + "[" + std::to_string(w) + "]";
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation

// Deterministic signal for one class: impulses at t_k = k / fault_freq, each
// a decaying sinusoid at the resonance frequency, plus i.i.d. Gaussian noise.
inline SignalRecord synth_generate(const SynthSpec& spec, int class_label) {
  spec.validate();
  if (class_label < 0 || class_label >= spec.n_classes) {
    throw InvalidSpec("synth_generate: class label " +
                      std::to_string(class_label) + " out of range");
  }
  const double fs = spec.sampling_rate_hz;
  const std::size_t n =
      static_cast<std::size_t>(std::floor(spec.duration_s * fs));

  SignalRecord rec;
  rec.sampling_rate_hz = fs;
  rec.label = class_label;
  rec.source = "synthetic";
  rec.samples.assign(n, 0.0);

  const double fault_freq = spec.fault_freq_hz[static_cast<std::size_t>(class_label)];
  const double two_pi_res = 2.0 * 3.14159265358979323846 * spec.resonance_freq_hz;
  if (spec.impulse_amplitude > 0.0) {
    const std::size_t n_impulses =
        static_cast<std::size_t>(std::floor(spec.duration_s * fault_freq));
    for (std::size_t k = 0; k < n_impulses; ++k) {
      const double t_k = static_cast<double>(k) / fault_freq;
      const std::size_t start =
          static_cast<std::size_t>(std::ceil(t_k * fs - 1e-9));
      for (std::size_t i = start; i < n; ++i) {
        const double dt = static_cast<double>(i) / fs - t_k;
        const double env = spec.impulse_amplitude * std::exp(-spec.decay_rate * dt);
        if (env < 1e-12) break;  // decayed past relevance
        rec.samples[i] += env * std::sin(two_pi_res * dt);
      }
    }
  }

  if (spec.noise_std > 0.0) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(class_label)));
    for (std::size_t i = 0; i < n; ++i) {
      rec.samples[i] += rng.normal(0.0, spec.noise_std);
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Dataset assembly

inline std::map<int, std::string> cwru_class_names() {
  return {{0, "normal"},
          {1, "ball fault 0.18mm"},
          {2, "ball fault 0.36mm"},
          {3, "ball fault 0.53mm"},
          {4, "inner race fault 0.18mm"},
          {5, "inner race fault 0.36mm"},
          {6, "inner race fault 0.53mm"},
          {7, "outer race fault 0.18mm"},
          {8, "outer race fault 0.36mm"},
          {9, "outer race fault 0.53mm"}};
}

inline std::map<int, std::string> paderborn_class_names() {
  return {{0, "healthy"}, {1, "inner race fault"}, {2, "outer race fault"}};
}

struct DatasetOptions {
  std::size_t synthetic_window = 2500;   // plain windowing for synthetic data
  std::size_t paderborn_window = 2500;   // override point for the 50x50 default
};

inline Dataset build_dataset(const std::vector<SignalRecord>& records,
                             Scheme scheme, const DatasetOptions& opt = {}) {
  if (records.empty()) throw EmptyDataset("build_dataset: no records");

  Dataset ds;
  ds.scheme = scheme;
  switch (scheme) {
    case Scheme::kCwru10: ds.class_names = cwru_class_names(); break;
    case Scheme::kPaderborn3: ds.class_names = paderborn_class_names(); break;
    case Scheme::kSynthetic: break;  // filled from the labels seen
  }

  for (const SignalRecord& rec : records) {
    if (scheme == Scheme::kSynthetic) {
      if (rec.label < 0) throw UnknownLabel("build_dataset: negative label");
      ds.class_names.emplace(rec.label, "class " + std::to_string(rec.label));
    } else if (ds.class_names.find(rec.label) == ds.class_names.end()) {
      throw UnknownLabel("build_dataset: label " + std::to_string(rec.label) +
                         " not valid for scheme " + scheme_name(scheme));
    }
    std::vector<Segment> segs;
    switch (scheme) {
      case Scheme::kCwru10: segs = segment_cwru(rec); break;
      case Scheme::kPaderborn3:
        segs = segment_paderborn(rec, opt.paderborn_window);
        break;
      case Scheme::kSynthetic:
        segs = segment_plain(rec, opt.synthetic_window);
        break;
    }
    for (Segment& s : segs) ds.segments.push_back(std::move(s));
  }
  if (ds.segments.empty()) throw EmptyDataset("build_dataset: no segments");
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset manifest: a key-value text file naming one record per line.
//
//   # comment
//   record = <path>[#<mat-variable>] <label> <sampling_rate_hz>
//
// Paths are resolved relative to the manifest's directory and must not
// contain whitespace. For .mat paths the optional #variable suffix picks the
// matrix to read; otherwise a variable ending in "_DE_time" is preferred,
// falling back to the largest matrix in the file.

struct ManifestEntry {
  std::string path;
  std::string mat_variable;  // empty = auto
  int label = 0;
  double sampling_rate_hz = 0.0;
};

inline std::vector<ManifestEntry> parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      const std::size_t b = s.find_first_not_of(" \t");
      const std::size_t e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    strip(key);
    strip(value);
    if (key != "record") {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": unknown key '" + key + "'");
    }
    std::istringstream fields(value);
    ManifestEntry e;
    std::string pathfield;
    if (!(fields >> pathfield >> e.label >> e.sampling_rate_hz)) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": record needs '<path> <label> <rate>'");
    }
    std::string rest;
    if (fields >> rest) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": trailing fields after record");
    }
    const std::size_t hash = pathfield.find('#');
    if (hash != std::string::npos) {
      e.mat_variable = pathfield.substr(hash + 1);
      pathfield = pathfield.substr(0, hash);
    }
    std::filesystem::path p(pathfield);
    e.path = p.is_absolute() ? p.string() : (base / p).string();
    if (!(e.sampling_rate_hz > 0.0)) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": sampling rate must be positive");
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw EmptyFile(path + ": manifest lists no records");
  return entries;
}

// Flattens a MAT matrix to one sample stream, column-major (MATLAB order).
inline std::vector<double> matrix_to_samples(const Mat5Matrix& m) {
  std::vector<double> out;
  out.reserve(m.rows * m.cols);
  for (std::size_t c = 0; c < m.cols; ++c) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      out.push_back(m.at(r, c));
    }
  }
  return out;
}

inline SignalRecord load_manifest_entry(const ManifestEntry& e) {
  std::filesystem::path p(e.path);
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == ".mat") {
    Mat5File vars = parse_mat5_file(e.path);
    if (vars.empty()) throw EmptyFile(e.path + ": no matrices");
    const Mat5Matrix* chosen = nullptr;
    std::string chosen_name;
    if (!e.mat_variable.empty()) {
      auto it = vars.find(e.mat_variable);
      if (it == vars.end()) {
        throw UnsupportedElement(e.path + ": no variable named '" +
                                 e.mat_variable + "'");
      }
      chosen = &it->second;
      chosen_name = it->first;
    } else {
      for (const auto& [name, m] : vars) {
        const bool is_de = name.size() >= 8 &&
                           name.rfind("_DE_time") == name.size() - 8;
        if (is_de) {
          chosen = &m;
          chosen_name = name;
          break;
        }
        if (chosen == nullptr || m.values.size() > chosen->values.size()) {
          chosen = &m;
          chosen_name = name;
        }
      }
    }
    SignalRecord rec;
    rec.samples = matrix_to_samples(*chosen);
    rec.sampling_rate_hz = e.sampling_rate_hz;
    rec.label = e.label;
    rec.source = e.path + "#" + chosen_name;
    rec.validate();
    return rec;
  }
  SignalRecord rec = read_csv_signal(e.path, e.label, e.sampling_rate_hz);
  rec.validate();
  return rec;
}

inline std::vector<SignalRecord> load_manifest(const std::string& path) {
  std::vector<SignalRecord> records;
  for (const ManifestEntry& e : parse_manifest(path)) {
    records.push_back(load_manifest_entry(e));
  }
  return records;
}

}  // namespace faultnet
