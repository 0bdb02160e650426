#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaclab/tensor.hpp"

// Checkpoint directory layout:
//   index.json   { "arch": {...}, "tensors": { name: {shape, dtype, offset} } }
//   weights.bin  little-endian f64 values, concatenated in index order
namespace gaclab::checkpoint {

using Json = nlohmann::ordered_json;

void save(const std::string& dir, const std::vector<const Param*>& params, const Json& arch);

struct Loaded {
  Json arch;
  std::vector<Param> params;  // in index order

  const Param* find(const std::string& name) const;
};

Loaded load(const std::string& dir);

}  // namespace gaclab::checkpoint
