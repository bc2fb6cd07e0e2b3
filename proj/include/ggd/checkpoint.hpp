#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ggd/data.hpp"
#include "ggd/model.hpp"

namespace ggd {

// Binary container, all integers u64 and all reals f64, little-endian:
//
//   "GGDCKPT1"
//   config:  source_vocab target_vocab embed hidden attention seed
//   vocabs:  source then target; ordinary-token count, then per token its
//            byte length followed by the bytes
//   params:  tensor count; per tensor rank, dims..., values (ModelParams order)
//   meta:    byte length + JSON text with training metadata
inline constexpr char kCheckpointMagic[9] = "GGDCKPT1";

struct Checkpoint {
  ModelParams params;
  Vocab source_vocab;
  Vocab target_vocab;
  std::string metadata = "{}";
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError on bad magic, truncation or inconsistent contents.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ggd
