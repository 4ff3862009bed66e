#pragma once

#include <string>

#include "rlwav/nn/tensor.hpp"

namespace rlwav::nn {

// File layout (little-endian throughout):
//   magic "RLWVCKPT" (8 bytes)
//   u32 format version (currently 1)
//   u32 manifest entry count
//   per entry: u16 name length, name bytes, u8 rank, u32 dim per axis
//   float32 values (count = sum of manifest volumes)
//   u32 meta length, meta bytes
// Round-trips bit-exactly.
void save_checkpoint(const std::string &path, const Checkpoint &ck);
Checkpoint load_checkpoint(const std::string &path);

}  // namespace rlwav::nn
