#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbrbf/config.hpp"
#include "mbrbf/model.hpp"
#include "mbrbf/train.hpp"

namespace mbrbf {

/// Binary PGM: "P5\n<w> <h>\n255\n" followed by w*h bytes, row-major.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels);
std::vector<std::uint8_t> encode_pgm(std::size_t width, std::size_t height,
                                     std::span<const std::uint8_t> pixels);

/// Min-max maps values onto 0..255 (rounded); a constant input maps to 0.
std::vector<std::uint8_t> to_gray(std::span<const double> values);

/// One PGM per RBF unit, branch<b>_unit<u>.pgm, each the unit's center
/// reshaped to the reduced map's H x W. Initial centers go to initial/.
/// Throws UnsupportedError for a dense head.
std::vector<std::filesystem::path> export_centers(const MBModel& model,
                                                  const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> export_centers(const std::filesystem::path& checkpoint,
                                                  const std::filesystem::path& out_dir);

std::string history_csv(const RunHistory& history);

/// Inputs of a run report; CSV sections are rendered as markdown tables.
struct ReportInputs {
  std::optional<KeyValues> config;
  std::optional<std::string> history_csv;
  std::optional<std::string> confusion_csv;
  std::optional<std::string> grid_csv;
  std::optional<std::string> compare_csv;
  std::optional<double> test_accuracy;
};

/// Markdown report. Throws ArgumentError when every input is absent.
std::string write_report(const ReportInputs& in);
/// Collects whichever of history.csv, confusion.csv, grid_agg.csv,
/// compare.csv and provenance.txt exist in `dir`.
ReportInputs report_inputs_from_dir(const std::filesystem::path& dir);

/// Flat key = value record of a run: the effective config, the command, and
/// FNV-1a checksums of the produced artifacts.
void write_provenance(const std::filesystem::path& out_dir, const std::string& command,
                      const KeyValues& config,
                      const std::vector<std::filesystem::path>& artifacts);
inline constexpr const char* kProvenanceFile = "provenance.txt";

}  // namespace mbrbf
