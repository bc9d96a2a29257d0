#include "mbrbf/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "mbrbf/config.hpp"
#include "mbrbf/errors.hpp"
#include "mbrbf/tensor_io.hpp"

namespace mbrbf {

namespace {

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

void load_into(const std::vector<ParamRef>& targets, const std::vector<NamedTensor>& stored,
               const std::filesystem::path& dir) {
  for (const auto& t : targets) {
    const NamedTensor* found = nullptr;
    for (const auto& s : stored) {
      if (s.name == t.name) found = &s;
    }
    if (!found) throw FormatError("checkpoint " + dir.string() + " lacks tensor '" + t.name + "'");
    if (found->tensor.shape() != t.tensor->shape()) {
      throw FormatError("checkpoint tensor '" + t.name + "' has shape " +
                        shape_string(found->tensor.shape()) + ", model expects " +
                        shape_string(t.tensor->shape()));
    }
    *t.tensor = found->tensor;
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void save_tensor_set(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / kCheckpointManifest, std::ios::trunc);
  if (!manifest) throw FormatError("cannot write " + (dir / kCheckpointManifest).string());
  manifest << "# name file shape\n";
  for (const auto& [name, t] : tensors) {
    const std::string file = name + ".mbrt";
    write_tensor(*t, dir / file);
    manifest << name << ' ' << file << ' ' << shape_token(t->shape()) << '\n';
  }
}

std::vector<NamedTensor> load_tensor_set(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / kCheckpointManifest);
  if (!manifest) throw FormatError("no " + std::string(kCheckpointManifest) + " in " + dir.string());
  std::vector<NamedTensor> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string name, file, shape;
    if (!(is >> name >> file >> shape)) throw FormatError("bad checkpoint manifest line: " + line);
    Tensor t = read_tensor(dir / file);
    if (shape_token(t.shape()) != shape) {
      throw FormatError("tensor file " + file + " has shape " + shape_token(t.shape()) +
                        ", manifest says " + shape);
    }
    out.push_back({name, std::move(t)});
  }
  return out;
}

void save_checkpoint(const MBModel& model, const std::filesystem::path& dir, const AdamState* adam) {
  KeyValues cfg = model_config_to_kv(model.config());
  cfg["feature_shape"] = to_string(model.feature_shape());
  if (model.backbone) {
    for (auto& [k, v] : backbone_config_to_kv(model.backbone->config())) cfg[k] = v;
  }
  auto tensors = model.state();
  if (adam && adam->t > 0) {
    cfg["adam_t"] = std::to_string(adam->t);
    cfg["adam_lr"] = fmt(adam->hyper.lr);
    cfg["adam_beta1"] = fmt(adam->hyper.beta1);
    cfg["adam_beta2"] = fmt(adam->hyper.beta2);
    cfg["adam_eps"] = fmt(adam->hyper.eps);
    for (const auto& m : adam->m) tensors.emplace_back("adam.m." + m.name, &m.tensor);
    for (const auto& v : adam->v) tensors.emplace_back("adam.v." + v.name, &v.tensor);
  }
  save_tensor_set(dir, tensors);
  write_key_values(dir / kCheckpointConfig, cfg);
}

MBModel load_checkpoint(const std::filesystem::path& dir) {
  const KeyValues cfg = read_key_values(dir / kCheckpointConfig);
  const ModelConfig mc = model_config_from_kv(cfg);
  const auto shape_it = cfg.find("feature_shape");
  if (shape_it == cfg.end()) throw FormatError("checkpoint config lacks feature_shape");
  std::optional<Backbone> backbone;
  if (mc.feature_source == FeatureSource::backbone) backbone.emplace(backbone_config_from_kv(cfg));
  MBModel model(mc, parse_feature_shape(shape_it->second), std::move(backbone));
  load_into(model.mutable_state(), load_tensor_set(dir), dir);
  return model;
}

AdamState load_adam_state(const std::filesystem::path& dir) {
  const KeyValues cfg = read_key_values(dir / kCheckpointConfig);
  AdamState state;
  const auto t = cfg.find("adam_t");
  if (t == cfg.end()) return state;
  state.t = std::stoull(t->second);
  state.hyper.lr = std::stod(cfg.at("adam_lr"));
  state.hyper.beta1 = std::stod(cfg.at("adam_beta1"));
  state.hyper.beta2 = std::stod(cfg.at("adam_beta2"));
  state.hyper.eps = std::stod(cfg.at("adam_eps"));
  for (auto& nt : load_tensor_set(dir)) {
    if (nt.name.starts_with("adam.m.")) state.m.push_back({nt.name.substr(7), std::move(nt.tensor)});
    else if (nt.name.starts_with("adam.v.")) state.v.push_back({nt.name.substr(7), std::move(nt.tensor)});
  }
  return state;
}

void save_backbone(const Backbone& bb, const std::filesystem::path& dir) {
  save_tensor_set(dir, bb.parameters());
  write_key_values(dir / kCheckpointConfig, backbone_config_to_kv(bb.config()));
}

Backbone load_backbone(const std::filesystem::path& dir) {
  Backbone bb(backbone_config_from_kv(read_key_values(dir / kCheckpointConfig)));
  load_into(bb.parameters(), load_tensor_set(dir), dir);
  return bb;
}

}  // namespace mbrbf
