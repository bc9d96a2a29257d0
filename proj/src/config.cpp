#include "mbrbf/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mbrbf/errors.hpp"

namespace mbrbf {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& origin) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_key_values(in, path.string());
}

void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_key_values(out, kv);
}

KeyValues parse_overrides(const std::vector<std::string>& items) {
  KeyValues kv;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override must be key=value, got '" + item + "'");
    }
    kv[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  return kv;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_commas(text)) {
    const auto v = to_size("list", item);
    if (v == 0) throw ConfigError("list values must be positive, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_commas(text)) {
    // "a..b" expands to the inclusive range.
    const auto dots = item.find("..");
    if (dots != std::string::npos) {
      const auto lo = to_u64("seeds", item.substr(0, dots));
      const auto hi = to_u64("seeds", item.substr(dots + 2));
      if (hi < lo) throw ConfigError("seed range '" + item + "' is reversed");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    } else {
      out.push_back(to_u64("seeds", item));
    }
  }
  if (out.empty()) throw ConfigError("empty seed list '" + text + "'");
  return out;
}

std::string format_list(const std::vector<std::size_t>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
  return s;
}

// ---------------------------------------------------------------------------

KeyValues model_config_to_kv(const ModelConfig& c) {
  return {{"head_kind", to_string(c.head_kind)},
          {"branches", std::to_string(c.branches)},
          {"units", std::to_string(c.units)},
          {"classes", std::to_string(c.classes)},
          {"sigma_init", fmt(c.sigma_init)},
          {"train_sigma", fmt(c.train_sigma)},
          {"feature_source", to_string(c.feature_source)},
          {"center_min", fmt(c.center_min)},
          {"center_max", fmt(c.center_max)},
          {"reduce_relu", fmt(c.reduce_relu)},
          {"model_seed", std::to_string(c.seed)}};
}

ModelConfig model_config_from_kv(const KeyValues& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "head_kind") c.head_kind = parse_head_kind(v);
    else if (k == "branches") c.branches = to_size(k, v);
    else if (k == "units") c.units = to_size(k, v);
    else if (k == "classes") c.classes = to_size(k, v);
    else if (k == "sigma_init") c.sigma_init = to_double(k, v);
    else if (k == "train_sigma") c.train_sigma = to_bool(k, v);
    else if (k == "feature_source") c.feature_source = parse_feature_source(v);
    else if (k == "center_min") c.center_min = to_double(k, v);
    else if (k == "center_max") c.center_max = to_double(k, v);
    else if (k == "reduce_relu") c.reduce_relu = to_bool(k, v);
    else if (k == "model_seed") c.seed = to_u64(k, v);
  }
  return c;
}

KeyValues backbone_config_to_kv(const BackboneConfig& c) {
  return {{"backbone_input", to_string(c.input_shape)},
          {"backbone_blocks", format_blocks(c.blocks)},
          {"backbone_frozen", fmt(c.frozen)},
          {"backbone_seed", std::to_string(c.seed)}};
}

BackboneConfig backbone_config_from_kv(const KeyValues& kv) {
  BackboneConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "backbone_input") c.input_shape = parse_feature_shape(v);
    else if (k == "backbone_blocks") c.blocks = parse_blocks(v);
    else if (k == "backbone_frozen") c.frozen = to_bool(k, v);
    else if (k == "backbone_seed") c.seed = to_u64(k, v);
  }
  return c;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = {"head_kind",      "branches",        "units",
                                  "classes",        "sigma_init",      "train_sigma",
                                  "feature_source", "center_min",      "center_max",
                                  "reduce_relu",    "epochs",          "batch_size",
                                  "optimizer",      "lr",              "seeds",
                                  "pin_splits",     "report_every",    "manifest",
                                  "backbone_input", "backbone_blocks", "backbone_frozen",
                                  "backbone_checkpoint", "grid_branches", "grid_units",
                                  "seed"};
    std::sort(k.begin(), k.end());
    return k;
  }();
  return keys;
}

void RunConfig::apply(const KeyValues& kv) {
  const auto& keys = known_keys();
  for (const auto& [k, v] : kv) {
    if (!std::binary_search(keys.begin(), keys.end(), k)) {
      throw ConfigError("unknown config key '" + k + "'");
    }
    if (k == "epochs") train.epochs = to_size(k, v);
    else if (k == "batch_size") train.batch_size = to_size(k, v);
    else if (k == "optimizer") train.optimizer = parse_optimizer(v);
    else if (k == "lr") train.lr = to_double(k, v);
    else if (k == "seeds") train.seeds = parse_seed_list(v);
    else if (k == "pin_splits") train.pin_splits = to_bool(k, v);
    else if (k == "report_every") train.report_every = to_size(k, v);
    else if (k == "manifest") manifest = v;
    else if (k == "backbone_checkpoint") backbone_checkpoint = v;
    else if (k == "grid_branches") grid_branches = parse_size_list(v);
    else if (k == "grid_units") grid_units = parse_size_list(v);
    else if (k == "seed") seed = to_u64(k, v);
    else if (k.starts_with("backbone_")) {
      KeyValues one{{k, v}};
      const auto b = backbone_config_from_kv(one);
      if (k == "backbone_input") backbone.input_shape = b.input_shape;
      if (k == "backbone_blocks") backbone.blocks = b.blocks;
      if (k == "backbone_frozen") backbone.frozen = b.frozen;
    } else {
      // Model keys: start from the current values so unrelated fields survive.
      KeyValues merged = model_config_to_kv(model);
      merged[k] = v;
      model = model_config_from_kv(merged);
    }
  }
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = model_config_to_kv(model);
  kv.erase("model_seed");
  kv["epochs"] = std::to_string(train.epochs);
  kv["batch_size"] = std::to_string(train.batch_size);
  kv["optimizer"] = to_string(train.optimizer);
  kv["lr"] = fmt(train.lr);
  kv["seeds"] = format_list(train.seeds);
  kv["pin_splits"] = fmt(train.pin_splits);
  kv["report_every"] = std::to_string(train.report_every);
  kv["manifest"] = manifest;
  kv["backbone_input"] = to_string(backbone.input_shape);
  kv["backbone_blocks"] = format_blocks(backbone.blocks);
  kv["backbone_frozen"] = fmt(backbone.frozen);
  kv["backbone_checkpoint"] = backbone_checkpoint;
  kv["grid_branches"] = format_list(grid_branches);
  kv["grid_units"] = format_list(grid_units);
  kv["seed"] = std::to_string(seed);
  return kv;
}

}  // namespace mbrbf
