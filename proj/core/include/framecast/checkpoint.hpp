#pragma once

#include <string>

#include "framecast/train.hpp"

namespace framecast {

// Single-file training snapshot: a JSON header (config, step counter, RNG
// states, per-group digests, block directory) followed by raw little-endian
// float64 blocks for every parameter and optimizer moment. Round trips
// bit-exactly; load verifies digests and rejects mismatched directories.

void save_checkpoint(const TrainState& st, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace framecast
