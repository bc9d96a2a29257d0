#include "mbrbf/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "mbrbf/checkpoint.hpp"
#include "mbrbf/errors.hpp"
#include "mbrbf/tensor_io.hpp"

namespace mbrbf {

namespace {

std::optional<std::string> slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(line);
  while (std::getline(is, item, ',')) out.push_back(item);
  return out;
}

std::string markdown_table(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  std::ostringstream os;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_line(line);
    os << '|';
    for (const auto& c : cells) os << ' ' << c << " |";
    os << '\n';
    if (header) {
      os << '|';
      for (std::size_t i = 0; i < cells.size(); ++i) os << "---|";
      os << '\n';
      header = false;
    }
  }
  return os.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

std::vector<std::uint8_t> encode_pgm(std::size_t width, std::size_t height,
                                     std::span<const std::uint8_t> pixels) {
  if (pixels.size() != width * height) throw ShapeError("pgm: pixel count does not match size");
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels) {
  const auto bytes = encode_pgm(width, height, pixels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> to_gray(std::span<const double> values) {
  std::vector<std::uint8_t> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double g = std::round(255.0 * (values[i] - *lo) / range);
    out[i] = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
  }
  return out;
}

std::vector<std::filesystem::path> export_centers(const MBModel& model,
                                                  const std::filesystem::path& out_dir) {
  if (model.config().head_kind != HeadKind::rbf) {
    throw UnsupportedError("export_centers needs an RBF head; this model has a dense head");
  }
  const std::size_t H = model.feature_shape().height, W = model.feature_shape().width;
  std::vector<std::filesystem::path> written;
  auto dump = [&](const std::vector<const Tensor*>& centers, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t b = 0; b < centers.size(); ++b) {
      for (std::size_t u = 0; u < centers[b]->dim(0); ++u) {
        const auto path =
            dir / ("branch" + std::to_string(b) + "_unit" + std::to_string(u) + ".pgm");
        write_pgm(path, W, H, to_gray(centers[b]->row(u)));
        written.push_back(path);
      }
    }
  };
  std::vector<const Tensor*> learned;
  for (const auto& br : model.rbf_branches) learned.push_back(&br.centers);
  dump(learned, out_dir);
  if (!model.initial_centers.empty()) {
    std::vector<const Tensor*> initial;
    for (const auto& c : model.initial_centers) initial.push_back(&c);
    dump(initial, out_dir / "initial");
  }
  return written;
}

std::vector<std::filesystem::path> export_centers(const std::filesystem::path& checkpoint,
                                                  const std::filesystem::path& out_dir) {
  return export_centers(load_checkpoint(checkpoint), out_dir);
}

std::string history_csv(const RunHistory& history) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,val_acc\n";
  os << std::setprecision(10);
  for (const auto& e : history.epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',';
    if (std::isnan(e.val_acc)) {
      os << "nan";
    } else {
      os << e.val_acc;
    }
    os << '\n';
  }
  return os.str();
}

std::string write_report(const ReportInputs& in) {
  if (!in.config && !in.history_csv && !in.confusion_csv && !in.grid_csv && !in.compare_csv &&
      !in.test_accuracy) {
    throw ArgumentError("report: no inputs (expected history, confusion, grid or compare data)");
  }
  std::ostringstream os;
  os << "# Run report\n\n";
  if (in.config) {
    os << "## Configuration\n\n```\n";
    write_key_values(os, *in.config);
    os << "```\n\n";
  }
  if (in.test_accuracy) {
    os << "## Final accuracy\n\nTest top-1 accuracy: " << std::fixed << std::setprecision(4)
       << *in.test_accuracy << "\n\n";
  }
  if (in.history_csv) os << "## Training curve\n\n" << markdown_table(*in.history_csv) << '\n';
  if (in.confusion_csv) {
    os << "## Confusion matrix (rows: true class, columns: predicted)\n\n"
       << markdown_table(*in.confusion_csv) << '\n';
  }
  if (in.grid_csv) os << "## Branches x units grid\n\n" << markdown_table(*in.grid_csv) << '\n';
  if (in.compare_csv) os << "## Head comparison\n\n" << markdown_table(*in.compare_csv) << '\n';
  return os.str();
}

ReportInputs report_inputs_from_dir(const std::filesystem::path& dir) {
  ReportInputs in;
  in.history_csv = slurp(dir / "history.csv");
  in.confusion_csv = slurp(dir / "confusion.csv");
  in.grid_csv = slurp(dir / "grid_agg.csv");
  in.compare_csv = slurp(dir / "compare.csv");
  if (std::filesystem::exists(dir / kProvenanceFile)) in.config = read_key_values(dir / kProvenanceFile);
  return in;
}

void write_provenance(const std::filesystem::path& out_dir, const std::string& command,
                      const KeyValues& config,
                      const std::vector<std::filesystem::path>& artifacts) {
  KeyValues kv = config;
  kv["command"] = command;
  for (const auto& a : artifacts) {
    if (!std::filesystem::is_regular_file(a)) continue;
    const auto rel = std::filesystem::relative(a, out_dir).generic_string();
    kv["artifact." + rel] = hex64(file_checksum(a));
  }
  write_key_values(out_dir / kProvenanceFile, kv);
}

}  // namespace mbrbf
