#pragma once

#include <string>

#include "framecast/tensor.hpp"

namespace framecast {

// 8-bit PNG <-> [H, W, C] tensor with values in [0,1]. C is 1 or 3;
// palette/alpha/16-bit inputs are converted down on read.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

}  // namespace framecast
