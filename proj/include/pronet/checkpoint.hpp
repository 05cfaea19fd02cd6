#ifndef PRONET_CHECKPOINT_HPP
#define PRONET_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pronet/common.hpp"

namespace pronet {

// On-disk container: a directory with manifest.json plus one raw
// little-endian row-major binary file per array (float32 or int32).
// Used for both training checkpoints and exported feature matrices.

struct ArrayEntry {
  std::string name;
  std::vector<int> shape;
  std::string dtype = "float32";  // or "int32"
  VecF f32;                       // valid when dtype == float32
  std::vector<std::int32_t> i32;  // valid when dtype == int32
};

struct Container {
  int format_version = 1;
  nlohmann::json meta;  // epoch, seed, rng states, config snapshot, ...
  std::vector<ArrayEntry> arrays;

  const ArrayEntry& require(const std::string& name) const;
  bool has(const std::string& name) const;
};

void save_container(const Container& c, const std::string& dir);
Container load_container(const std::string& dir);

}  // namespace pronet

#endif
