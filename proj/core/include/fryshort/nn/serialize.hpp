#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fryshort/nn/module.hpp"
#include "fryshort/nn/optim.hpp"
#include "fryshort/nn/tensor.hpp"

namespace fryshort::nn {

/// Checkpoint container: named tensors plus free-form string metadata.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;
  AdamW::State optimizer;
  bool has_optimizer = false;
};

/// Binary format: magic, JSON index (names/shapes/offsets/meta), then a raw
/// little-endian double blob. Throws std::runtime_error on I/O failure.
void save_checkpoint(const std::string& path, const Module& module,
                     const std::map<std::string, std::string>& meta,
                     const AdamW* optimizer = nullptr);

Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint tensors into the module's state by name; throws on
/// missing names or shape mismatches.
void load_into(Module& module, const Checkpoint& ck);

}  // namespace fryshort::nn
