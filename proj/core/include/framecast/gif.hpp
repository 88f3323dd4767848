#pragma once

#include <string>
#include <vector>

#include "framecast/tensor.hpp"

namespace framecast {

// Animated GIF for qualitative inspection of predictions. Frames are
// [H, W, C] in [0,1]; grayscale uses a 256-level ramp, color a 6x6x6 cube.
// delay_cs is the per-frame delay in hundredths of a second.
void write_gif(const std::string& path, const std::vector<Tensor>& frames, int delay_cs = 12);

}  // namespace framecast
