#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mbrbf/backbone.hpp"
#include "mbrbf/model.hpp"
#include "mbrbf/optim.hpp"
#include "mbrbf/params.hpp"

namespace mbrbf {

// A checkpoint directory holds one <name>.mbrt per tensor, a manifest.txt
// with one "name file shape" line per tensor, and model.cfg with the
// configuration needed to rebuild the model.
inline constexpr const char* kCheckpointManifest = "manifest.txt";
inline constexpr const char* kCheckpointConfig = "model.cfg";

void save_tensor_set(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::vector<NamedTensor> load_tensor_set(const std::filesystem::path& dir);

/// Writes every model tensor (including frozen and initial-center tensors)
/// and, when given, the Adam moments and step count.
void save_checkpoint(const MBModel& model, const std::filesystem::path& dir,
                     const AdamState* adam = nullptr);
MBModel load_checkpoint(const std::filesystem::path& dir);
/// Adam state stored alongside a checkpoint; empty state when none was saved.
AdamState load_adam_state(const std::filesystem::path& dir);

void save_backbone(const Backbone& bb, const std::filesystem::path& dir);
Backbone load_backbone(const std::filesystem::path& dir);

}  // namespace mbrbf
