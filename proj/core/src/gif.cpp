#include "framecast/gif.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <unordered_map>

#include "framecast/error.hpp"

namespace framecast {

namespace {

void put_u16(std::string& out, unsigned v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

// LZW with variable code width, giflib-style width/reset bookkeeping.
class LzwEncoder {
 public:
  std::string encode(const std::vector<std::uint8_t>& pixels) {
    reset_dict();
    put_code(kClear);
    std::int32_t current = pixels.empty() ? 0 : pixels[0];
    for (std::size_t i = 1; i < pixels.size(); ++i) {
      const std::uint8_t px = pixels[i];
      const std::uint32_t key = (static_cast<std::uint32_t>(current) << 8) | px;
      auto it = dict_.find(key);
      if (it != dict_.end()) {
        current = it->second;
        continue;
      }
      put_code(current);
      if (next_code_ >= kMaxCode) {
        put_code(kClear);
        reset_dict();
      } else {
        dict_.emplace(key, next_code_++);
      }
      current = px;
    }
    put_code(current);
    put_code(kEof);
    flush_bits();
    return std::move(out_);
  }

 private:
  static constexpr std::int32_t kClear = 256, kEof = 257, kMaxCode = 4095;

  void reset_dict() {
    dict_.clear();
    next_code_ = kEof + 1;
    code_bits_ = 9;
    width_limit_ = 1 << code_bits_;
  }

  void put_code(std::int32_t code) {
    bit_buf_ |= static_cast<std::uint32_t>(code) << bit_count_;
    bit_count_ += code_bits_;
    while (bit_count_ >= 8) {
      out_.push_back(static_cast<char>(bit_buf_ & 0xFF));
      bit_buf_ >>= 8;
      bit_count_ -= 8;
    }
    if (next_code_ >= width_limit_ && code_bits_ < 12) {
      ++code_bits_;
      width_limit_ = 1 << code_bits_;
    }
  }

  void flush_bits() {
    if (bit_count_ > 0) out_.push_back(static_cast<char>(bit_buf_ & 0xFF));
    bit_buf_ = 0;
    bit_count_ = 0;
  }

  std::unordered_map<std::uint32_t, std::int32_t> dict_;
  std::int32_t next_code_ = 0;
  int code_bits_ = 9;
  std::int32_t width_limit_ = 0;
  std::uint32_t bit_buf_ = 0;
  int bit_count_ = 0;
  std::string out_;
};

int quant6(double v) {
  return static_cast<int>(std::lround(std::min(std::max(v, 0.0), 1.0) * 5.0));
}

}  // namespace

void write_gif(const std::string& path, const std::vector<Tensor>& frames, int delay_cs) {
  if (frames.empty()) fail(ErrorKind::misuse, "write_gif needs at least one frame");
  const Shape& s0 = frames[0].shape();
  if (frames[0].ndim() != 3 || (s0[2] != 1 && s0[2] != 3))
    fail(ErrorKind::shape_mismatch, "write_gif expects [H, W, 1|3] frames");
  const std::int64_t h = s0[0], w = s0[1], c = s0[2];
  for (const auto& f : frames) require_same_shape(frames[0], f, "write_gif");

  std::string out;
  out += "GIF89a";
  put_u16(out, static_cast<unsigned>(w));
  put_u16(out, static_cast<unsigned>(h));
  out.push_back(static_cast<char>(0xF7));  // global 256-color table
  out.push_back(0);                        // background index
  out.push_back(0);                        // aspect

  if (c == 1) {
    for (int i = 0; i < 256; ++i)
      for (int k = 0; k < 3; ++k) out.push_back(static_cast<char>(i));
  } else {
    for (int i = 0; i < 256; ++i) {
      if (i < 216) {
        out.push_back(static_cast<char>((i / 36) * 51));
        out.push_back(static_cast<char>(((i / 6) % 6) * 51));
        out.push_back(static_cast<char>((i % 6) * 51));
      } else {
        for (int k = 0; k < 3; ++k) out.push_back(0);
      }
    }
  }

  // loop forever
  out += "\x21\xFF\x0B";
  out += "NETSCAPE2.0";
  out += "\x03\x01";
  put_u16(out, 0);
  out.push_back(0);

  std::vector<std::uint8_t> indices(static_cast<std::size_t>(h * w));
  for (const auto& frame : frames) {
    out += "\x21\xF9\x04\x04";  // graphic control, disposal = do not dispose
    put_u16(out, static_cast<unsigned>(delay_cs));
    out.push_back(0);
    out.push_back(0);

    out.push_back(0x2C);  // image descriptor
    put_u16(out, 0);
    put_u16(out, 0);
    put_u16(out, static_cast<unsigned>(w));
    put_u16(out, static_cast<unsigned>(h));
    out.push_back(0);

    const double* p = frame.data();
    for (std::int64_t i = 0; i < h * w; ++i) {
      if (c == 1) {
        double v = std::min(std::max(p[i], 0.0), 1.0);
        indices[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      } else {
        indices[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(
            36 * quant6(p[3 * i]) + 6 * quant6(p[3 * i + 1]) + quant6(p[3 * i + 2]));
      }
    }

    out.push_back(8);  // LZW minimum code size
    std::string data = LzwEncoder().encode(indices);
    for (std::size_t off = 0; off < data.size(); off += 255) {
      const std::size_t len = std::min<std::size_t>(255, data.size() - off);
      out.push_back(static_cast<char>(len));
      out.append(data, off, len);
    }
    out.push_back(0);
  }
  out.push_back(0x3B);

  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::io, "short write to " + path);
}

}  // namespace framecast
