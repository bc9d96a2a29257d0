#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "mbrbf/backbone.hpp"
#include "mbrbf/data.hpp"
#include "mbrbf/model.hpp"
#include "mbrbf/train.hpp"

namespace mbrbf {

/// Ordered key -> value pairs of a flat `key = value` file.
using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
KeyValues parse_key_values(std::istream& in, const std::string& origin = "<input>");
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(std::ostream& out, const KeyValues& kv);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

/// Parses "key=value" override strings.
KeyValues parse_overrides(const std::vector<std::string>& items);

std::vector<std::size_t> parse_size_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::string format_list(const std::vector<std::size_t>& values);
template <class T>
  requires(std::is_unsigned_v<T> && !std::is_same_v<T, std::size_t>)
std::string format_list(const std::vector<T>& values) {
  return format_list(std::vector<std::size_t>(values.begin(), values.end()));
}

/// Everything a CLI run can be configured with. Keys:
///
///   model:    head_kind branches units classes sigma_init train_sigma
///             feature_source center_min center_max reduce_relu
///   training: epochs batch_size optimizer lr seeds pin_splits report_every
///   data:     manifest
///   backbone: backbone_input backbone_blocks backbone_frozen backbone_checkpoint
///   grid:     grid_branches grid_units
///   root:     seed
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  BackboneConfig backbone;
  std::string manifest;
  std::string backbone_checkpoint;
  std::vector<std::size_t> grid_branches{1, 2, 4, 8, 16};
  std::vector<std::size_t> grid_units{1, 2, 4, 8, 16};
  std::uint64_t seed = 0;

  /// Applies values; unknown keys and malformed values throw ConfigError.
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
  static const std::vector<std::string>& known_keys();
};

KeyValues model_config_to_kv(const ModelConfig& cfg);
ModelConfig model_config_from_kv(const KeyValues& kv);
KeyValues backbone_config_to_kv(const BackboneConfig& cfg);
BackboneConfig backbone_config_from_kv(const KeyValues& kv);

}  // namespace mbrbf
