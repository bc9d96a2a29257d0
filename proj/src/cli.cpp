#include "mbrbf/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "mbrbf/checkpoint.hpp"
#include "mbrbf/config.hpp"
#include "mbrbf/data.hpp"
#include "mbrbf/errors.hpp"
#include "mbrbf/model.hpp"
#include "mbrbf/report.hpp"
#include "mbrbf/tensor_io.hpp"
#include "mbrbf/train.hpp"

namespace fs = std::filesystem;

namespace mbrbf {

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::string manifest;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool out_required = true) {
  cmd->add_option("--config", a.config, "flat key = value config file")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", a.out, "output directory");
  if (out_required) out->required();
  cmd->add_option("--manifest", a.manifest, "dataset manifest CSV (overrides config)");
  cmd->add_option("--set", a.overrides, "config override key=value (repeatable)");
  cmd->add_option("--seed", a.seed, "root seed for all randomness");
}

/// Config file, then --set overrides, then dedicated flags.
RunConfig resolve_config(const CommonArgs& a, KeyValues* explicit_keys = nullptr) {
  KeyValues kv;
  if (!a.config.empty()) kv = read_key_values(a.config);
  for (const auto& [k, v] : parse_overrides(a.overrides)) kv[k] = v;
  if (!a.manifest.empty()) kv["manifest"] = a.manifest;
  if (a.seed) kv["seed"] = std::to_string(*a.seed);
  RunConfig rc;
  rc.apply(kv);
  rc.model.seed = rc.seed;
  rc.backbone.seed = rc.seed;
  if (explicit_keys) *explicit_keys = kv;
  return rc;
}

/// Loads the manifest and samples, and builds the backbone when features
/// come from one. Sets the class count from the data unless configured.
struct Prepared {
  Dataset data;
  std::optional<Backbone> backbone;
  FeatureShape feature_shape;
};

Prepared prepare(RunConfig& rc, const KeyValues& explicit_keys) {
  if (rc.manifest.empty()) throw ConfigError("no manifest given (use --manifest or manifest = ...)");
  Prepared p;
  const auto manifest = load_manifest(rc.manifest);
  if (!explicit_keys.contains("classes")) rc.model.classes = std::max<std::size_t>(2, manifest.classes);
  p.data = load_dataset(manifest);
  if (rc.model.feature_source == FeatureSource::backbone) {
    if (!rc.backbone_checkpoint.empty()) {
      p.backbone.emplace(load_backbone(rc.backbone_checkpoint));
      p.backbone->set_frozen(rc.backbone.frozen);
    } else {
      p.backbone.emplace(backbone_init(rc.backbone));
    }
    p.feature_shape = p.backbone->output_shape();
  } else {
    const Tensor& first = p.data.input(0);
    if (first.rank() != 3) throw FormatError("feature blocks must be rank 3 (C,H,W)");
    p.feature_shape = {first.dim(0), first.dim(1), first.dim(2)};
  }
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> class_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != kProvenanceFile) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string fixed(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_gen_synth(const SynthConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const auto synth = gen_bimodal_synth(cfg);
  const auto m = write_synth(synth, out_dir);
  KeyValues kv{{"classes", std::to_string(cfg.classes)},
               {"modes_per_class", std::to_string(cfg.modes_per_class)},
               {"samples_per_mode", std::to_string(cfg.samples_per_mode)},
               {"feature_shape", to_string(cfg.feature_shape)},
               {"mode_separation", fixed(cfg.mode_separation)},
               {"noise_scale", fixed(cfg.noise_scale)},
               {"seed", std::to_string(cfg.seed)}};
  write_provenance(out_dir, "gen-synth", kv, files_under(out_dir));
  out << "wrote " << m.records.size() << " samples to " << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const CommonArgs& a, std::ostream& out) {
  KeyValues explicit_keys;
  RunConfig rc = resolve_config(a, &explicit_keys);
  Prepared p = prepare(rc, explicit_keys);
  const fs::path dir = a.out;
  fs::create_directories(dir);

  MBModel model = model_build(rc.model, p.feature_shape, p.backbone);
  const Dataset data = dataset_for_seed(p.data, rc.seed, rc.train.pin_splits);
  TrainConfig tc = rc.train;
  auto result = train(model, data, tc, rc.seed);

  write_text(dir / "history.csv", history_csv(result.history));
  save_checkpoint(model, dir / "checkpoint", &result.adam);
  std::optional<double> test_acc;
  if (data.manifest.count(Split::test) > 0) {
    const auto eval = evaluate(model, data, Split::test);
    write_text(dir / "confusion.csv", eval.confusion.to_csv(class_names(rc.model.classes)));
    test_acc = eval.accuracy;
  }
  KeyValues prov = rc.to_key_values();
  prov["best_epoch"] = std::to_string(result.history.best_epoch);
  if (test_acc) prov["test_acc"] = fixed(*test_acc);
  write_provenance(dir, "train", prov, files_under(dir));

  ReportInputs ri = report_inputs_from_dir(dir);
  ri.test_accuracy = test_acc;
  write_text(dir / "report.md", write_report(ri));

  out << "trained " << result.history.epochs.size() << " epochs, best epoch "
      << result.history.best_epoch;
  if (test_acc) out << ", test accuracy " << fixed(*test_acc);
  out << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& split_name, const std::string& out_dir, std::ostream& out) {
  const MBModel model = load_checkpoint(checkpoint);
  const auto manifest = load_manifest(manifest_path);
  const Dataset data = load_dataset(manifest);
  const Split split = parse_split(split_name);
  const auto eval = evaluate(model, data, split);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "confusion.csv",
               eval.confusion.to_csv(class_names(model.config().classes)));
    KeyValues kv{{"checkpoint", checkpoint},
                 {"manifest", manifest_path},
                 {"split", split_name},
                 {"accuracy", fixed(eval.accuracy)}};
    write_provenance(out_dir, "eval", kv, files_under(out_dir));
  }
  out << "accuracy " << fixed(eval.accuracy) << " on " << eval.confusion.total() << " "
      << split_name << " samples\n";
  return kExitOk;
}

int cmd_ablate(const CommonArgs& a, const std::string& branches, const std::string& units,
               const std::string& seeds, std::ostream& out) {
  KeyValues explicit_keys;
  RunConfig rc = resolve_config(a, &explicit_keys);
  if (!branches.empty()) rc.grid_branches = parse_size_list(branches);
  if (!units.empty()) rc.grid_units = parse_size_list(units);
  if (!seeds.empty()) rc.train.seeds = parse_seed_list(seeds);
  Prepared p = prepare(rc, explicit_keys);
  const fs::path dir = a.out;
  fs::create_directories(dir);

  std::vector<std::uint64_t> run_seeds;
  for (auto s : rc.train.seeds) run_seeds.push_back(rc.seed + s);
  const auto grid = ablation_grid(rc.grid_branches, rc.grid_units, run_seeds, p.data, rc.model,
                                  rc.train, p.backbone);
  write_text(dir / "grid.csv", grid.runs_csv());
  write_text(dir / "grid_agg.csv", grid.cells_csv());
  KeyValues prov = rc.to_key_values();
  write_provenance(dir, "ablate", prov, files_under(dir));
  write_text(dir / "report.md", write_report(report_inputs_from_dir(dir)));

  std::size_t failed = 0;
  for (const auto& r : grid.runs) failed += r.failed ? 1 : 0;
  out << "grid of " << grid.cells.size() << " cells, " << grid.runs.size() << " runs, " << failed
      << " failed\n";
  return kExitOk;
}

int cmd_compare(const CommonArgs& a, const std::string& seeds, std::ostream& out) {
  KeyValues explicit_keys;
  RunConfig rc = resolve_config(a, &explicit_keys);
  if (!seeds.empty()) rc.train.seeds = parse_seed_list(seeds);
  Prepared p = prepare(rc, explicit_keys);
  const fs::path dir = a.out;
  fs::create_directories(dir);

  TrainConfig tc = rc.train;
  for (auto& s : tc.seeds) s += rc.seed;
  const auto cmp = compare_heads(p.data, rc.model, tc, p.backbone);
  write_text(dir / "compare.csv", cmp.csv());
  write_provenance(dir, "compare", rc.to_key_values(), files_under(dir));
  write_text(dir / "report.md", write_report(report_inputs_from_dir(dir)));
  out << "median test accuracy: mb-rbf " << fixed(cmp.median(HeadKind::rbf)) << ", mb-cnn "
      << fixed(cmp.median(HeadKind::dense)) << "; minority mode: mb-rbf "
      << fixed(cmp.minority_accuracy(HeadKind::rbf)) << ", mb-cnn "
      << fixed(cmp.minority_accuracy(HeadKind::dense)) << '\n';
  return kExitOk;
}

int cmd_export_centers(const std::string& checkpoint, const std::string& out_dir,
                       std::ostream& out) {
  const auto files = export_centers(fs::path(checkpoint), fs::path(out_dir));
  write_provenance(out_dir, "export-centers", {{"checkpoint", checkpoint}}, files);
  out << "wrote " << files.size() << " center images to " << out_dir << '\n';
  return kExitOk;
}

int cmd_pretrain_backbone(const CommonArgs& a, std::ostream& out) {
  KeyValues explicit_keys;
  RunConfig rc = resolve_config(a, &explicit_keys);
  rc.model.feature_source = FeatureSource::backbone;
  rc.backbone.frozen = false;
  rc.backbone_checkpoint.clear();
  Prepared p = prepare(rc, explicit_keys);
  const fs::path dir = a.out;
  fs::create_directories(dir);

  // Plain softmax head: one branch of dense units wide enough to carry the
  // whole block, trained end to end with the backbone unfrozen.
  ModelConfig mc = rc.model;
  mc.head_kind = HeadKind::dense;
  MBModel model = model_build(mc, p.feature_shape, p.backbone);
  const Dataset data = dataset_for_seed(p.data, rc.seed, rc.train.pin_splits);
  auto result = train(model, data, rc.train, rc.seed);
  model.backbone->set_frozen(true);
  save_backbone(*model.backbone, dir / "backbone");
  write_text(dir / "history.csv", history_csv(result.history));
  write_provenance(dir, "pretrain-backbone", rc.to_key_values(), files_under(dir));
  out << "pretrained backbone saved to " << (dir / "backbone").string() << '\n';
  return kExitOk;
}

int cmd_report(const std::string& in_dir, const std::string& out_file, std::ostream& out) {
  const auto text = write_report(report_inputs_from_dir(in_dir));
  const fs::path target = out_file.empty() ? fs::path(in_dir) / "report.md" : fs::path(out_file);
  write_text(target, text);
  out << "wrote " << target.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-branch RBF network heads: training, ablation, evaluation and export",
               "mbrbf"};
  app.require_subcommand(1);

  CommonArgs common;

  SynthConfig synth;
  std::string synth_out, synth_shape = to_string(synth.feature_shape);
  auto* gen = app.add_subcommand("gen-synth", "generate a multi-mode synthetic feature dataset");
  gen->add_option("--out", synth_out, "output directory")->required();
  gen->add_option("--classes", synth.classes, "number of classes");
  gen->add_option("--modes", synth.modes_per_class, "sub-populations per class");
  gen->add_option("--samples-per-mode", synth.samples_per_mode, "samples per sub-population");
  gen->add_option("--shape", synth_shape, "feature block shape C,H,W");
  gen->add_option("--separation", synth.mode_separation, "RMS distance between modes of a class");
  gen->add_option("--noise", synth.noise_scale, "per-element noise standard deviation");
  gen->add_option("--seed", synth.seed, "root seed");

  auto* train_cmd = app.add_subcommand("train", "train one model and write history and checkpoint");
  add_common(train_cmd, common);

  std::string eval_ckpt, eval_manifest, eval_split = "test", eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "manifest CSV")->required();
  eval_cmd->add_option("--split", eval_split, "train, val or test");
  eval_cmd->add_option("--out", eval_out, "directory for confusion.csv");

  std::string grid_branches, grid_units, grid_seeds;
  auto* ablate = app.add_subcommand("ablate", "sweep branches x units over several seeds");
  add_common(ablate, common);
  ablate->add_option("--branches", grid_branches, "comma-separated branch counts");
  ablate->add_option("--units", grid_units, "comma-separated units per branch");
  ablate->add_option("--seeds", grid_seeds, "comma-separated seeds or a..b range");

  std::string cmp_seeds;
  auto* compare = app.add_subcommand("compare", "train RBF and dense heads on matched seeds");
  add_common(compare, common);
  compare->add_option("--seeds", cmp_seeds, "comma-separated seeds or a..b range");

  std::string exp_ckpt, exp_out;
  auto* exp = app.add_subcommand("export-centers", "write RBF centers as PGM images");
  exp->add_option("--checkpoint", exp_ckpt, "checkpoint directory")->required();
  exp->add_option("--out", exp_out, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain-backbone", "train the substitute backbone with a softmax head");
  add_common(pre, common);

  std::string rep_in, rep_out;
  auto* rep = app.add_subcommand("report", "render a markdown report from a results directory");
  rep->add_option("--in", rep_in, "results directory")->required();
  rep->add_option("--out", rep_out, "report file (default <in>/report.md)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (gen->parsed()) {
      synth.feature_shape = parse_feature_shape(synth_shape);
      return cmd_gen_synth(synth, synth_out, out);
    }
    if (train_cmd->parsed()) return cmd_train(common, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_manifest, eval_split, eval_out, out);
    if (ablate->parsed()) return cmd_ablate(common, grid_branches, grid_units, grid_seeds, out);
    if (compare->parsed()) return cmd_compare(common, cmp_seeds, out);
    if (exp->parsed()) return cmd_export_centers(exp_ckpt, exp_out, out);
    if (pre->parsed()) return cmd_pretrain_backbone(common, out);
    if (rep->parsed()) return cmd_report(rep_in, rep_out, out);
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace mbrbf
