#pragma once

#include <string>
#include <utility>
#include <vector>

#include "svga/layers.hpp"
#include "svga/tensor.hpp"

namespace svga {

// Single-file checkpoint: magic, version, the flat config text the model was
// built from, then every named tensor (trainable parameters and buffers) in
// registration order. All integers and doubles are little-endian.
void save_checkpoint(const std::string& path, const std::string& config_text,
                     const std::vector<Tensor>& tensors);

struct CheckpointData {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

CheckpointData load_checkpoint(const std::string& path);

// Strict: the checkpoint must carry exactly the registry's tensors, matching
// by name and shape.
void load_into_registry(const CheckpointData& ckpt, ParamRegistry& reg);

}  // namespace svga
