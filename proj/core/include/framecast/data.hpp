#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framecast/rng.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

// The universal currency between modules: frames [T, H, W, C] in [0,1].
struct VideoSequence {
  Tensor frames;
  std::string id;

  std::int64_t length() const { return frames.ndim() == 4 ? frames.dim(0) : 0; }
  std::int64_t height() const { return frames.dim(1); }
  std::int64_t width() const { return frames.dim(2); }
  std::int64_t channels() const { return frames.dim(3); }
};

void validate(const VideoSequence& seq);

// One frame as a channel-first [C, H, W] map (the model-side layout).
Tensor frame_chw(const VideoSequence& seq, std::int64_t t);
Tensor frame_hwc(const Tensor& chw);  // [C,H,W] -> [H,W,C]
VideoSequence sequence_from_chw(const std::vector<Tensor>& frames, const std::string& id);

struct MovingSpriteSpec {
  std::int64_t canvas_h = 64, canvas_w = 64;
  int n_sprites = 2;
  double speed = 3.0;                // pixels per step
  std::vector<Tensor> glyphs;        // [h_g, w_g] grayscale stamps; empty -> built-in digits
  std::uint64_t seed = 0;
  // "bimodal" holds every sprite still for `hold` frames, then releases it
  // horizontally left or right with equal probability (mode-coverage testbed).
  std::string mode = "bounce";
  std::int64_t hold = 5;
};

void validate(const MovingSpriteSpec& spec);

// Anti-aliased procedural digit stamps 0..9, 28x28, values in [0,1].
const std::vector<Tensor>& builtin_glyphs();

// Trajectory-level form, exposed so tests and special datasets can pin
// positions and velocities exactly. Positions are continuous; rendering
// rounds to the nearest pixel and composites overlaps by per-pixel max.
struct Sprite {
  int glyph = 0;
  double y = 0, x = 0;   // top-left offset
  double vy = 0, vx = 0;
};

std::vector<Sprite> advance_sprites(const std::vector<Sprite>& sprites, std::int64_t canvas_h,
                                    std::int64_t canvas_w, const std::vector<Tensor>& glyphs);
VideoSequence render_trajectory(std::int64_t canvas_h, std::int64_t canvas_w,
                                const std::vector<Tensor>& glyphs, std::vector<Sprite> sprites,
                                std::int64_t length, const std::string& id,
                                std::int64_t hold_first = 0);

VideoSequence generate_moving_sprites(const MovingSpriteSpec& spec, std::int64_t length);

// Frame-directory interchange: frame_%05d.png, 1-based, all same size.
VideoSequence load_frame_dir(const std::string& path);
void save_frame_dir(const VideoSequence& seq, const std::string& path);

struct WindowSpec {
  std::int64_t context_len = 10;  // n
  std::int64_t horizon = 10;      // m
  std::int64_t stride = 1;
};

void validate(const WindowSpec& spec);

struct Window {
  VideoSequence context;  // n frames
  VideoSequence target;   // m frames
};

struct WindowSet {
  std::vector<Window> windows;
  int skipped = 0;  // sequences too short to window
};

WindowSet make_windows(const VideoSequence& seq, const WindowSpec& spec);

// Dataset = directory of sequence subdirectories plus manifest.json.
struct DatasetEntry {
  std::string id;
  std::int64_t length = 0;
};

void write_dataset(const std::string& dir, const MovingSpriteSpec& spec, std::int64_t length,
                   std::int64_t count);
std::vector<DatasetEntry> read_manifest(const std::string& dir);
VideoSequence load_dataset_sequence(const std::string& dir, const std::string& id);

}  // namespace framecast
