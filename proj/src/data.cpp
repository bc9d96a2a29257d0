#include "mbrbf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "mbrbf/errors.hpp"
#include "mbrbf/rng.hpp"
#include "mbrbf/tensor_io.hpp"

namespace mbrbf {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::size_t round_count(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: break;
  }
  return "";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  if (text.empty()) return Split::unassigned;
  throw ValidationError("unknown split '" + text + "'");
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::string> DatasetManifest::sources() const {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (std::find(out.begin(), out.end(), r.source) == out.end()) out.push_back(r.source);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const Record& r) const {
  const std::filesystem::path p(r.path);
  return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest load_manifest(const std::filesystem::path& path,
                              std::optional<std::size_t> classes) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != kManifestHeader) {
    throw ValidationError("manifest " + path.string() + " must start with header '" +
                          kManifestHeader + "'");
  }

  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::vector<std::string> problems;
  std::set<std::string> ids, paths;
  std::size_t row = 1;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = "row " + std::to_string(row) + ": ";
    if (f.size() != 5) {
      problems.push_back(where + "expected 5 fields, got " + std::to_string(f.size()));
      continue;
    }
    Record r;
    r.sample_id = trim(f[0]);
    r.path = trim(f[1]);
    r.source = trim(f[4]);
    bool ok = true;
    if (r.sample_id.empty()) {
      problems.push_back(where + "empty sample_id");
      ok = false;
    } else if (!ids.insert(r.sample_id).second) {
      problems.push_back(where + "duplicate sample_id '" + r.sample_id + "'");
      ok = false;
    }
    if (!paths.insert(r.path).second) {
      problems.push_back(where + "duplicate path '" + r.path + "'");
      ok = false;
    }
    try {
      const std::string lt = trim(f[2]);
      std::size_t pos = 0;
      const long long v = std::stoll(lt, &pos);
      if (pos != lt.size() || v < 0) throw std::invalid_argument(lt);
      r.label = static_cast<std::size_t>(v);
      if (classes && r.label >= *classes) {
        problems.push_back(where + "label " + lt + " out of range for " +
                           std::to_string(*classes) + " classes");
        ok = false;
      }
    } catch (const std::exception&) {
      problems.push_back(where + "invalid label '" + f[2] + "'");
      ok = false;
    }
    try {
      r.split = parse_split(trim(f[3]));
    } catch (const ValidationError&) {
      problems.push_back(where + "unknown split '" + trim(f[3]) + "'");
      ok = false;
    }
    if (ok) {
      max_label = std::max(max_label, r.label);
      m.records.push_back(std::move(r));
    }
  }
  if (!problems.empty()) {
    std::string msg = "manifest " + path.string() + " failed validation:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  if (m.records.empty()) throw ValidationError("manifest " + path.string() + " has no records");
  m.classes = classes ? *classes : max_label + 1;
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write manifest " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.records) {
    out << r.sample_id << ',' << r.path << ',' << r.label << ',' << to_string(r.split) << ','
        << r.source << '\n';
  }
}

DatasetManifest split_dataset(std::vector<Record> records, std::uint64_t seed,
                              SplitFractions fractions) {
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_label[records[i].label].push_back(i);
    max_label = std::max(max_label, records[i].label);
  }
  if (records.empty()) throw ValidationError("cannot split an empty record list");
  for (auto& [label, idx] : by_label) {
    if (idx.size() < 3) {
      throw ValidationError("class " + std::to_string(label) + " has " +
                            std::to_string(idx.size()) + " samples; stratified split needs 3");
    }
    Rng rng(derive_seed(seed, label));
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t n = idx.size();
    const std::size_t n_test = std::max<std::size_t>(1, round_count(fractions.test * n));
    const std::size_t n_val = std::min(round_count(fractions.val * n), n - n_test - 1);
    for (std::size_t k = 0; k < n; ++k) {
      records[idx[k]].split = k < n_test ? Split::test : k < n_test + n_val ? Split::val : Split::train;
    }
  }
  DatasetManifest m;
  m.records = std::move(records);
  m.classes = max_label + 1;
  return m;
}

std::uint64_t epoch_seed(std::uint64_t run_seed, std::size_t epoch) {
  return derive_seed(run_seed, 0x5eed0000ULL + epoch);
}

std::vector<std::vector<std::size_t>> batch_iter(const DatasetManifest& manifest, Split split,
                                                 std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ArgumentError("batch size must be at least 1");
  auto idx = manifest.indices(split);
  if (idx.empty()) throw IterationError("split '" + to_string(split) + "' is empty");
  if (split == Split::train) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(idx));
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(idx.size(), start + batch_size);
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Dataset load_dataset(const DatasetManifest& manifest) {
  auto samples = std::make_shared<std::vector<Tensor>>();
  samples->reserve(manifest.records.size());
  for (const auto& r : manifest.records) samples->push_back(read_tensor(manifest.resolve(r)));
  return {manifest, std::move(samples)};
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (classes < 1) throw ConfigError("synth: classes must be positive");
  if (modes_per_class < 1) throw ConfigError("synth: modes_per_class must be at least 1");
  if (samples_per_mode < 1) throw ConfigError("synth: samples_per_mode must be at least 1");
  if (feature_shape.size() == 0) throw ConfigError("synth: feature shape must be positive");
  if (!(noise_scale > 0.0)) throw ConfigError("synth: noise_scale must be positive");
  if (!(mode_separation >= 0.0)) {
    throw ConfigError("synth: separations must be non-negative");
  }
}

SynthDataset gen_bimodal_synth(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.feature_shape.size();
  const Shape shape = cfg.feature_shape.shape();
  Rng rng(derive_seed(cfg.seed, 7));

  auto unit_direction = [&] {
    std::vector<double> u(n);
    double norm = 0.0;
    for (auto& v : u) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : u) v /= norm;
    return u;
  };

  std::vector<double> base(n);
  for (auto& v : base) v = rng.uniform();

  // Orthonormal pair spanning the plane of the ring.
  auto u = unit_direction();
  auto v = unit_direction();
  double dot = 0.0;
  for (std::size_t j = 0; j < n; ++j) dot += u[j] * v[j];
  double norm = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    v[j] -= dot * u[j];
    norm += v[j] * v[j];
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;

  // K*M prototypes evenly spaced on a circle; slot m*K + k holds mode m of
  // class k, so the modes of a class are spread around the ring with the
  // other classes in between.
  const std::size_t K = cfg.classes;
  const std::size_t M = cfg.modes_per_class;
  const double slots = static_cast<double>(K * M);
  const double pi = std::numbers::pi;
  double radius = cfg.mode_separation / 2.0;
  if (M > 1) {
    // Mean squared chord between two modes of one class on the unit circle.
    double chord2 = 0.0;
    std::size_t pairs = 0;
    for (std::size_t p = 0; p < M; ++p) {
      for (std::size_t q = p + 1; q < M; ++q) {
        const double c = 2.0 * std::sin(pi * static_cast<double>(q - p) / static_cast<double>(M));
        chord2 += c * c;
        ++pairs;
      }
    }
    radius = cfg.mode_separation / std::sqrt(chord2 / static_cast<double>(pairs));
  }

  SynthDataset out;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      const double angle = 2.0 * pi * static_cast<double>(m * K + k) / slots;
      const double cu = radius * std::cos(angle), cv = radius * std::sin(angle);
      std::vector<double> proto(n);
      for (std::size_t j = 0; j < n; ++j) proto[j] = base[j] + cu * u[j] + cv * v[j];
      out.prototypes.emplace_back(shape, std::move(proto));
    }
  }

  // Samples are drawn after all prototypes so the prototypes do not depend
  // on samples_per_mode or noise_scale.
  Rng noise(derive_seed(cfg.seed, 11));
  std::vector<Record> records;
  auto samples = std::make_shared<std::vector<Tensor>>();
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    for (std::size_t mi = 0; mi < cfg.modes_per_class; ++mi) {
      const Tensor& proto = out.prototypes[k * cfg.modes_per_class + mi];
      for (std::size_t s = 0; s < cfg.samples_per_mode; ++s) {
        Tensor t = proto;
        for (auto& v : t.data()) v += cfg.noise_scale * noise.normal();
        Record r;
        r.sample_id = "c" + std::to_string(k) + "_m" + std::to_string(mi) + "_" + std::to_string(s);
        r.path = "features/" + r.sample_id + ".mbrt";
        r.label = k;
        r.source = "mode" + std::to_string(mi);
        records.push_back(std::move(r));
        samples->push_back(std::move(t));
      }
    }
  }
  out.data.samples = std::move(samples);
  if (cfg.modes_per_class * cfg.samples_per_mode >= 3) {
    out.data.manifest = split_dataset(std::move(records), cfg.seed);
  } else {
    out.data.manifest.records = std::move(records);
  }
  out.data.manifest.classes = cfg.classes;
  return out;
}

DatasetManifest write_synth(const SynthDataset& synth, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  DatasetManifest m = synth.data.manifest;
  m.base_dir = dir;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    write_tensor(synth.data.input(i), dir / m.records[i].path);
  }
  write_manifest(m, dir / "manifest.csv");
  return m;
}

}  // namespace mbrbf
