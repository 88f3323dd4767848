#include "framecast/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>

#include <nlohmann/json.hpp>

#include "framecast/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace framecast {

void validate(const VideoSequence& seq) {
  if (seq.frames.ndim() != 4)
    fail(ErrorKind::shape_mismatch, "sequence must be [T,H,W,C], got " + shape_str(seq.frames.shape()));
  const std::int64_t t = seq.frames.dim(0), h = seq.frames.dim(1), w = seq.frames.dim(2),
                     c = seq.frames.dim(3);
  if (t < 1 || h < 8 || w < 8 || (c != 1 && c != 3))
    fail(ErrorKind::invalid_spec, "sequence dims out of range: " + shape_str(seq.frames.shape()));
  const double* p = seq.frames.data();
  for (std::int64_t i = 0; i < seq.frames.size(); ++i)
    if (!std::isfinite(p[i]) || p[i] < 0.0 || p[i] > 1.0)
      fail(ErrorKind::invalid_spec, "sequence pixel out of [0,1] at flat index " + std::to_string(i));
}

Tensor frame_chw(const VideoSequence& seq, std::int64_t t) {
  const std::int64_t h = seq.height(), w = seq.width(), c = seq.channels();
  Tensor out({c, h, w});
  const double* src = seq.frames.data() + t * h * w * c;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t ch = 0; ch < c; ++ch) out[(ch * h + y) * w + x] = src[(y * w + x) * c + ch];
  return out;
}

Tensor frame_hwc(const Tensor& chw) {
  if (chw.ndim() != 3) fail(ErrorKind::shape_mismatch, "frame_hwc expects [C,H,W]");
  const std::int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out({h, w, c});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) out[(y * w + x) * c + ch] = chw[(ch * h + y) * w + x];
  return out;
}

VideoSequence sequence_from_chw(const std::vector<Tensor>& frames, const std::string& id) {
  if (frames.empty()) fail(ErrorKind::invalid_spec, "empty frame list");
  const std::int64_t c = frames[0].dim(0), h = frames[0].dim(1), w = frames[0].dim(2);
  VideoSequence seq;
  seq.id = id;
  seq.frames = Tensor({static_cast<std::int64_t>(frames.size()), h, w, c});
  for (std::size_t t = 0; t < frames.size(); ++t) {
    require_same_shape(frames[0], frames[t], "sequence_from_chw");
    Tensor hwc = frame_hwc(frames[t]);
    std::copy(hwc.data(), hwc.data() + hwc.size(),
              seq.frames.data() + static_cast<std::int64_t>(t) * h * w * c);
  }
  return seq;
}

void validate(const MovingSpriteSpec& spec) {
  if (spec.canvas_h < 8 || spec.canvas_w < 8)
    fail(ErrorKind::invalid_spec, "canvas must be at least 8x8");
  if (spec.n_sprites < 1) fail(ErrorKind::invalid_spec, "need at least one sprite");
  if (spec.speed <= 0.0) fail(ErrorKind::invalid_spec, "sprite speed must be positive");
  if (spec.mode != "bounce" && spec.mode != "bimodal")
    fail(ErrorKind::invalid_spec, "unknown sprite mode: " + spec.mode);
  if (spec.mode == "bimodal" && spec.hold < 1)
    fail(ErrorKind::invalid_spec, "bimodal mode needs hold >= 1");
  const auto& glyphs = spec.glyphs.empty() ? builtin_glyphs() : spec.glyphs;
  for (const auto& g : glyphs) {
    if (g.ndim() != 2) fail(ErrorKind::invalid_spec, "glyph stamps must be 2-D");
    if (g.dim(0) > spec.canvas_h || g.dim(1) > spec.canvas_w)
      fail(ErrorKind::invalid_spec, "glyph " + shape_str(g.shape()) + " larger than canvas");
  }
}

namespace {

struct Seg {
  double y0, x0, y1, x1;
};

double dist_to_segment(double py, double px, const Seg& s) {
  const double dy = s.y1 - s.y0, dx = s.x1 - s.x0;
  const double len2 = dy * dy + dx * dx;
  double t = len2 > 0 ? ((py - s.y0) * dy + (px - s.x0) * dx) / len2 : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  const double cy = s.y0 + t * dy, cx = s.x0 + t * dx;
  return std::hypot(py - cy, px - cx);
}

Tensor render_glyph(const std::vector<Seg>& segs) {
  const double r = 1.7;  // stroke radius
  Tensor g({28, 28});
  for (std::int64_t y = 0; y < 28; ++y)
    for (std::int64_t x = 0; x < 28; ++x) {
      double best = 1e9;
      for (const auto& s : segs) best = std::min(best, dist_to_segment(y + 0.5, x + 0.5, s));
      g[y * 28 + x] = std::min(1.0, std::max(0.0, r + 0.5 - best));
    }
  return g;
}

}  // namespace

const std::vector<Tensor>& builtin_glyphs() {
  static const std::vector<Tensor> glyphs = [] {
    // seven-segment digits: T, TL, TR, M, BL, BR, B
    const Seg T{5, 8, 5, 19}, TL{5, 8, 13.5, 8}, TR{5, 19, 13.5, 19}, M{13.5, 8, 13.5, 19},
        BL{13.5, 8, 22, 8}, BR{13.5, 19, 22, 19}, B{22, 8, 22, 19};
    const std::vector<std::vector<Seg>> digit_segs = {
        {T, TL, TR, BL, BR, B},     // 0
        {TR, BR},                   // 1
        {T, TR, M, BL, B},          // 2
        {T, TR, M, BR, B},          // 3
        {TL, TR, M, BR},            // 4
        {T, TL, M, BR, B},          // 5
        {T, TL, M, BL, BR, B},      // 6
        {T, TR, BR},                // 7
        {T, TL, TR, M, BL, BR, B},  // 8
        {T, TL, TR, M, BR, B},      // 9
    };
    std::vector<Tensor> out;
    out.reserve(digit_segs.size());
    for (const auto& segs : digit_segs) out.push_back(render_glyph(segs));
    return out;
  }();
  return glyphs;
}

namespace {

// One reflection step on a single axis: specular bounce keeping |v| constant.
void bounce_axis(double& p, double& v, double limit) {
  p += v;
  while (p < 0.0 || p > limit) {
    if (p < 0.0) {
      p = -p;
      v = -v;
    } else {
      p = 2.0 * limit - p;
      v = -v;
    }
    if (limit <= 0.0) {  // glyph fills the axis; nothing to bounce within
      p = 0.0;
      v = 0.0;
      break;
    }
  }
}

}  // namespace

std::vector<Sprite> advance_sprites(const std::vector<Sprite>& sprites, std::int64_t canvas_h,
                                    std::int64_t canvas_w, const std::vector<Tensor>& glyphs) {
  std::vector<Sprite> out = sprites;
  for (auto& s : out) {
    const Tensor& g = glyphs[static_cast<std::size_t>(s.glyph)];
    bounce_axis(s.y, s.vy, static_cast<double>(canvas_h - g.dim(0)));
    bounce_axis(s.x, s.vx, static_cast<double>(canvas_w - g.dim(1)));
  }
  return out;
}

VideoSequence render_trajectory(std::int64_t canvas_h, std::int64_t canvas_w,
                                const std::vector<Tensor>& glyphs, std::vector<Sprite> sprites,
                                std::int64_t length, const std::string& id, std::int64_t hold_first) {
  if (length < 1) fail(ErrorKind::invalid_spec, "sequence length must be >= 1");
  for (const auto& s : sprites)
    if (s.glyph < 0 || static_cast<std::size_t>(s.glyph) >= glyphs.size())
      fail(ErrorKind::invalid_spec, "sprite glyph index out of range");

  VideoSequence seq;
  seq.id = id;
  seq.frames = Tensor({length, canvas_h, canvas_w, 1});
  for (std::int64_t t = 0; t < length; ++t) {
    double* frame = seq.frames.data() + t * canvas_h * canvas_w;
    for (const auto& s : sprites) {
      const Tensor& g = glyphs[static_cast<std::size_t>(s.glyph)];
      const std::int64_t oy = std::lround(s.y), ox = std::lround(s.x);
      for (std::int64_t gy = 0; gy < g.dim(0); ++gy) {
        const std::int64_t y = oy + gy;
        if (y < 0 || y >= canvas_h) continue;
        for (std::int64_t gx = 0; gx < g.dim(1); ++gx) {
          const std::int64_t x = ox + gx;
          if (x < 0 || x >= canvas_w) continue;
          double& px = frame[y * canvas_w + x];
          px = std::max(px, g[gy * g.dim(1) + gx]);
        }
      }
    }
    if (t + 1 < length && t + 1 >= hold_first)
      sprites = advance_sprites(sprites, canvas_h, canvas_w, glyphs);
  }
  return seq;
}

VideoSequence generate_moving_sprites(const MovingSpriteSpec& spec, std::int64_t length) {
  validate(spec);
  if (length < 1) fail(ErrorKind::invalid_spec, "sequence length must be >= 1");
  const auto& glyphs = spec.glyphs.empty() ? builtin_glyphs() : spec.glyphs;

  RngStream rng(derive_seed(spec.seed, "sprites"));
  std::vector<Sprite> sprites;
  sprites.reserve(static_cast<std::size_t>(spec.n_sprites));
  for (int i = 0; i < spec.n_sprites; ++i) {
    Sprite s;
    // bimodal keeps the context identical across the whole set: fixed glyph,
    // pinned center start; direction is the only latent factor.
    s.glyph = spec.mode == "bimodal" ? 0 : static_cast<int>(rng.below(glyphs.size()));
    const Tensor& g = glyphs[static_cast<std::size_t>(s.glyph)];
    const double max_y = static_cast<double>(spec.canvas_h - g.dim(0));
    const double max_x = static_cast<double>(spec.canvas_w - g.dim(1));
    if (spec.mode == "bimodal") {
      s.y = max_y / 2.0;
      s.x = max_x / 2.0;
      s.vy = 0.0;
      s.vx = rng.uniform() <= 0.5 ? -spec.speed : spec.speed;
    } else {
      s.y = rng.uniform(0.0, max_y);
      s.x = rng.uniform(0.0, max_x);
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      s.vy = spec.speed * std::sin(angle);
      s.vx = spec.speed * std::cos(angle);
    }
    sprites.push_back(s);
  }
  const std::int64_t hold = spec.mode == "bimodal" ? spec.hold : 0;
  return render_trajectory(spec.canvas_h, spec.canvas_w, glyphs, sprites, length,
                           "sprites-" + std::to_string(spec.seed), hold);
}

VideoSequence load_frame_dir(const std::string& path) {
  if (!fs::is_directory(path)) fail(ErrorKind::io, "not a directory: " + path);
  const std::regex name_re("frame_([0-9]{5})\\.png");
  std::vector<std::pair<int, std::string>> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, name_re)) files.emplace_back(std::stoi(m[1]), entry.path().string());
  }
  if (files.empty()) fail(ErrorKind::missing_frame, "no frame_%05d.png files in " + path);
  std::sort(files.begin(), files.end());
  for (std::size_t i = 0; i < files.size(); ++i)
    if (files[i].first != static_cast<int>(i) + 1)
      fail(ErrorKind::missing_frame, "frame numbering gap in " + path + ": expected index " +
                                         std::to_string(i + 1) + ", found " +
                                         std::to_string(files[i].first));

  VideoSequence seq;
  seq.id = fs::path(path).filename().string();
  for (std::size_t i = 0; i < files.size(); ++i) {
    Tensor img = read_png(files[i].second);
    if (i == 0) {
      seq.frames = Tensor({static_cast<std::int64_t>(files.size()), img.dim(0), img.dim(1), img.dim(2)});
    } else if (img.dim(0) != seq.height() || img.dim(1) != seq.width() ||
               img.dim(2) != seq.channels()) {
      fail(ErrorKind::shape_mismatch,
           "frame " + files[i].second + " has shape " + shape_str(img.shape()) +
               ", expected " + shape_str({seq.height(), seq.width(), seq.channels()}));
    }
    std::copy(img.data(), img.data() + img.size(),
              seq.frames.data() + static_cast<std::int64_t>(i) * img.size());
  }
  return seq;
}

void save_frame_dir(const VideoSequence& seq, const std::string& path) {
  fs::create_directories(path);
  const std::int64_t per = seq.height() * seq.width() * seq.channels();
  for (std::int64_t t = 0; t < seq.length(); ++t) {
    Tensor img({seq.height(), seq.width(), seq.channels()});
    std::copy(seq.frames.data() + t * per, seq.frames.data() + (t + 1) * per, img.data());
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05d.png", static_cast<int>(t + 1));
    write_png((fs::path(path) / name).string(), img);
  }
}

void validate(const WindowSpec& spec) {
  if (spec.context_len < 1 || spec.horizon < 1 || spec.stride < 1)
    fail(ErrorKind::invalid_spec, "window spec requires n, m, stride >= 1");
}

WindowSet make_windows(const VideoSequence& seq, const WindowSpec& spec) {
  validate(spec);
  const std::int64_t t = seq.length(), n = spec.context_len, m = spec.horizon;
  const std::int64_t h = seq.height(), w = seq.width(), c = seq.channels();
  const std::int64_t per = h * w * c;
  WindowSet out;
  if (t < n + m) {
    out.skipped = 1;
    return out;
  }
  for (std::int64_t off = 0; off + n + m <= t; off += spec.stride) {
    Window win;
    win.context.id = seq.id + "@" + std::to_string(off);
    win.context.frames = Tensor({n, h, w, c});
    std::copy(seq.frames.data() + off * per, seq.frames.data() + (off + n) * per,
              win.context.frames.data());
    win.target.id = win.context.id;
    win.target.frames = Tensor({m, h, w, c});
    std::copy(seq.frames.data() + (off + n) * per, seq.frames.data() + (off + n + m) * per,
              win.target.frames.data());
    out.windows.push_back(std::move(win));
  }
  return out;
}

void write_dataset(const std::string& dir, const MovingSpriteSpec& spec, std::int64_t length,
                   std::int64_t count) {
  validate(spec);
  if (count < 0) fail(ErrorKind::invalid_spec, "sequence count must be >= 0");
  fs::create_directories(dir);

  json manifest;
  manifest["spec"] = {{"canvas", {spec.canvas_h, spec.canvas_w}},
                      {"n_sprites", spec.n_sprites},
                      {"speed", spec.speed},
                      {"seed", spec.seed},
                      {"mode", spec.mode},
                      {"hold", spec.hold}};
  manifest["length"] = length;
  manifest["sequences"] = json::array();
  for (std::int64_t i = 0; i < count; ++i) {
    MovingSpriteSpec per_seq = spec;
    per_seq.seed = derive_seed(spec.seed, "sequence", static_cast<std::uint64_t>(i));
    VideoSequence seq = generate_moving_sprites(per_seq, length);
    char id[32];
    std::snprintf(id, sizeof(id), "seq_%05d", static_cast<int>(i));
    seq.id = id;
    save_frame_dir(seq, (fs::path(dir) / id).string());
    manifest["sequences"].push_back({{"id", id}, {"length", seq.length()}});
  }

  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) fail(ErrorKind::io, "cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

std::vector<DatasetEntry> read_manifest(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) fail(ErrorKind::io, "no manifest.json in " + dir);
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    fail(ErrorKind::io, "unreadable manifest in " + dir + ": " + e.what());
  }
  std::vector<DatasetEntry> out;
  for (const auto& item : manifest.at("sequences")) {
    DatasetEntry e;
    e.id = item.at("id").get<std::string>();
    e.length = item.at("length").get<std::int64_t>();
    out.push_back(std::move(e));
  }
  return out;
}

VideoSequence load_dataset_sequence(const std::string& dir, const std::string& id) {
  VideoSequence seq = load_frame_dir((fs::path(dir) / id).string());
  seq.id = id;
  return seq;
}

}  // namespace framecast
