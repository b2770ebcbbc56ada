#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xrnet/model.hpp"

namespace xrnet {

// Binary model snapshot: magic "CXR1", a format version, the ModelConfig,
// the class names, then every parameter as a length-prefixed name, shape and
// raw little-endian float32 values. Round-trips are bit-exact.
void save_checkpoint(Model<float>& model, const std::vector<std::string>& class_names,
                     const std::filesystem::path& path);

struct LoadedModel {
    Model<float> model;
    std::vector<std::string> class_names;
};

// Rebuilds the model from the stored config and restores every parameter.
// Distinct ArtifactErrors for bad magic, version mismatch, truncation and
// shape mismatch; nothing is returned on failure.
LoadedModel load_checkpoint(const std::filesystem::path& path);

// Throws ArtifactError when a stored config cannot serve a run configured
// with `expected` (used by eval before touching any data).
void require_compatible(const ModelConfig& stored, const ModelConfig& expected);

}  // namespace xrnet
