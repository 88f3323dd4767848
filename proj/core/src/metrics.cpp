#include "framecast/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "framecast/error.hpp"
#include "framecast/image.hpp"

namespace framecast {

namespace {

constexpr double kMseFloor = 1e-10;
constexpr double kPsnrCap = 100.0;
constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (k1*L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

void require_comparable(const VideoSequence& a, const VideoSequence& b) {
  require_same_shape(a.frames, b.frames, "metric sequences");
  if (a.length() < 1) fail(ErrorKind::shape_mismatch, "cannot score an empty sequence");
}

// Pointer to the start of frame t within a [T,H,W,C] block.
const double* frame_ptr(const VideoSequence& s, int64_t t) {
  return s.frames.data() + t * s.height() * s.width() * s.channels();
}

double frame_mse(const double* x, const double* y, int64_t n) {
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    double d = x[i] - y[i];
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

double psnr_of_mse(double m, double peak) {
  if (m < kMseFloor) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / m);
}

const std::array<double, kWin>& gauss_window() {
  static const std::array<double, kWin> w = [] {
    std::array<double, kWin> g{};
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - (kWin - 1) / 2.0;
      g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
  }();
  return w;
}

// Mean SSIM over valid window placements of one [H,W,C] frame pair.
double frame_ssim(const double* x, const double* y, int64_t h, int64_t w, int64_t c) {
  if (h < kWin || w < kWin)
    fail(ErrorKind::shape_mismatch,
         "ssim needs frames of at least " + std::to_string(kWin) + "x" + std::to_string(kWin));
  const auto& g = gauss_window();
  auto px = [&](const double* t, int64_t i, int64_t j, int64_t ch) {
    return t[(i * w + j) * c + ch];
  };
  double total = 0;
  int64_t count = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t i0 = 0; i0 + kWin <= h; ++i0) {
      for (int64_t j0 = 0; j0 + kWin <= w; ++j0) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int a = 0; a < kWin; ++a) {
          for (int b = 0; b < kWin; ++b) {
            double wt = g[a] * g[b];
            double vx = px(x, i0 + a, j0 + b, ch);
            double vy = px(y, i0 + a, j0 + b, ch);
            mx += wt * vx;
            my += wt * vy;
            xx += wt * vx * vx;
            yy += wt * vy * vy;
            xy += wt * vx * vy;
          }
        }
        double sx = xx - mx * mx, sy = yy - my * my, sxy = xy - mx * my;
        double num = (2 * mx * my + kC1) * (2 * sxy + kC2);
        double den = (mx * mx + my * my + kC1) * (sx + sy + kC2);
        total += num / den;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

double mse(const VideoSequence& pred, const VideoSequence& target) {
  require_comparable(pred, target);
  return frame_mse(pred.frames.data(), target.frames.data(), pred.frames.size());
}

double psnr(const VideoSequence& pred, const VideoSequence& target, double peak, MetricMode mode) {
  require_comparable(pred, target);
  if (mode == MetricMode::whole_clip) return psnr_of_mse(mse(pred, target), peak);
  const int64_t fsz = pred.height() * pred.width() * pred.channels();
  double acc = 0;
  for (int64_t t = 0; t < pred.length(); ++t)
    acc += psnr_of_mse(frame_mse(frame_ptr(pred, t), frame_ptr(target, t), fsz), peak);
  return acc / static_cast<double>(pred.length());
}

double ssim(const VideoSequence& pred, const VideoSequence& target) {
  require_comparable(pred, target);
  double acc = 0;
  for (int64_t t = 0; t < pred.length(); ++t)
    acc += frame_ssim(frame_ptr(pred, t), frame_ptr(target, t), pred.height(), pred.width(),
                      pred.channels());
  return acc / static_cast<double>(pred.length());
}

std::vector<double> per_frame_mse(const VideoSequence& pred, const VideoSequence& target) {
  require_comparable(pred, target);
  const int64_t fsz = pred.height() * pred.width() * pred.channels();
  std::vector<double> out;
  for (int64_t t = 0; t < pred.length(); ++t)
    out.push_back(frame_mse(frame_ptr(pred, t), frame_ptr(target, t), fsz));
  return out;
}

std::vector<double> per_frame_psnr(const VideoSequence& pred, const VideoSequence& target,
                                   double peak) {
  std::vector<double> out = per_frame_mse(pred, target);
  for (auto& v : out) v = psnr_of_mse(v, peak);
  return out;
}

std::vector<double> per_frame_ssim(const VideoSequence& pred, const VideoSequence& target) {
  require_comparable(pred, target);
  std::vector<double> out;
  for (int64_t t = 0; t < pred.length(); ++t)
    out.push_back(frame_ssim(frame_ptr(pred, t), frame_ptr(target, t), pred.height(),
                             pred.width(), pred.channels()));
  return out;
}

MetricsReport evaluate(const std::vector<VideoSequence>& preds,
                       const std::vector<VideoSequence>& targets, const std::string& task_label) {
  if (preds.size() != targets.size())
    fail(ErrorKind::shape_mismatch, "prediction/target counts differ: " +
                                        std::to_string(preds.size()) + " vs " +
                                        std::to_string(targets.size()));
  if (preds.empty()) fail(ErrorKind::misuse, "evaluate needs at least one sequence");
  MetricsReport rep;
  rep.task = task_label;
  int64_t min_t = preds[0].length();
  for (const auto& p : preds) min_t = std::min(min_t, p.length());
  rep.timestep_mse.assign(min_t, 0.0);
  rep.timestep_psnr.assign(min_t, 0.0);
  rep.timestep_ssim.assign(min_t, 0.0);
  for (size_t i = 0; i < preds.size(); ++i) {
    SequenceMetrics row;
    row.id = preds[i].id.empty() ? targets[i].id : preds[i].id;
    if (row.id.empty()) row.id = "seq_" + std::to_string(i);
    row.mse = mse(preds[i], targets[i]);
    row.psnr = psnr(preds[i], targets[i]);
    row.ssim = ssim(preds[i], targets[i]);
    auto fm = per_frame_mse(preds[i], targets[i]);
    auto fp = per_frame_psnr(preds[i], targets[i]);
    auto fs = per_frame_ssim(preds[i], targets[i]);
    for (int64_t t = 0; t < min_t; ++t) {
      rep.timestep_mse[t] += fm[t];
      rep.timestep_psnr[t] += fp[t];
      rep.timestep_ssim[t] += fs[t];
    }
    rep.per_sequence.push_back(row);
  }
  double n = static_cast<double>(preds.size());
  for (int64_t t = 0; t < min_t; ++t) {
    rep.timestep_mse[t] /= n;
    rep.timestep_psnr[t] /= n;
    rep.timestep_ssim[t] /= n;
  }
  rep.aggregate.id = "mean";
  for (const auto& row : rep.per_sequence) {
    rep.aggregate.mse += row.mse / n;
    rep.aggregate.psnr += row.psnr / n;
    rep.aggregate.ssim += row.ssim / n;
  }
  return rep;
}

std::string format_table(const std::vector<std::pair<std::string, SequenceMetrics>>& rows) {
  size_t name_w = 5;  // "Model"
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  os << "Model";
  os << std::string(name_w - 5 + 2, ' ') << "MSE        PSNR     SSIM\n";
  for (const auto& [name, m] : rows) {
    os << name << std::string(name_w - name.size() + 2, ' ');
    os << fmt(m.mse, "%.6f") << "   " << fmt(m.psnr, "%6.3f") << "   " << fmt(m.ssim, "%.4f")
       << "\n";
  }
  return os.str();
}

void write_report_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << "# task," << report.task << "\n";
  out << "id,mse,psnr,ssim,mse_x1e3\n";
  auto row = [&](const SequenceMetrics& m) {
    out << m.id << "," << fmt(m.mse, "%.12g") << "," << fmt(m.psnr, "%.12g") << ","
        << fmt(m.ssim, "%.12g") << "," << fmt(m.mse * 1e3, "%.12g") << "\n";
  };
  for (const auto& m : report.per_sequence) row(m);
  row(report.aggregate);
  if (!report.timestep_mse.empty()) {
    out << "# timestep,mse,psnr,ssim\n";
    for (size_t t = 0; t < report.timestep_mse.size(); ++t)
      out << t << "," << fmt(report.timestep_mse[t], "%.12g") << ","
          << fmt(report.timestep_psnr[t], "%.12g") << ","
          << fmt(report.timestep_ssim[t], "%.12g") << "\n";
  }
  if (!out) fail(ErrorKind::io, "failed writing " + path);
}

MetricsReport read_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  MetricsReport rep;
  std::string line;
  int section = 0;  // 0 header comment, 1 rows, 2 timestep rows
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# task,", 0) == 0) {
      rep.task = line.substr(7);
      continue;
    }
    if (line.rfind("id,", 0) == 0) {
      section = 1;
      continue;
    }
    if (line.rfind("# timestep", 0) == 0) {
      section = 2;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (section == 1) {
      if (cells.size() < 4) fail(ErrorKind::io, "malformed metrics row in " + path);
      SequenceMetrics m;
      m.id = cells[0];
      m.mse = std::stod(cells[1]);
      m.psnr = std::stod(cells[2]);
      m.ssim = std::stod(cells[3]);
      if (m.id == "mean")
        rep.aggregate = m;
      else
        rep.per_sequence.push_back(m);
    } else if (section == 2) {
      if (cells.size() < 4) fail(ErrorKind::io, "malformed timestep row in " + path);
      rep.timestep_mse.push_back(std::stod(cells[1]));
      rep.timestep_psnr.push_back(std::stod(cells[2]));
      rep.timestep_ssim.push_back(std::stod(cells[3]));
    }
  }
  if (rep.per_sequence.empty() && rep.aggregate.id.empty())
    fail(ErrorKind::io, "no metric rows found in " + path);
  return rep;
}

namespace {

// 3x5 glyphs for plot annotations, rows top to bottom, 3 bits each (MSB left).
const std::map<char, std::array<uint8_t, 5>>& tiny_font() {
  static const std::map<char, std::array<uint8_t, 5>> f = {
      {'0', {0b111, 0b101, 0b101, 0b101, 0b111}}, {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
      {'2', {0b111, 0b001, 0b111, 0b100, 0b111}}, {'3', {0b111, 0b001, 0b111, 0b001, 0b111}},
      {'4', {0b101, 0b101, 0b111, 0b001, 0b001}}, {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
      {'6', {0b111, 0b100, 0b111, 0b101, 0b111}}, {'7', {0b111, 0b001, 0b001, 0b010, 0b010}},
      {'8', {0b111, 0b101, 0b111, 0b101, 0b111}}, {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
      {'.', {0b000, 0b000, 0b000, 0b000, 0b010}}, {'-', {0b000, 0b000, 0b111, 0b000, 0b000}},
      {'+', {0b000, 0b010, 0b111, 0b010, 0b000}}, {'e', {0b000, 0b111, 0b110, 0b100, 0b111}},
      {'m', {0b000, 0b000, 0b111, 0b111, 0b101}}, {'s', {0b000, 0b011, 0b010, 0b001, 0b110}},
      {'p', {0b000, 0b111, 0b101, 0b111, 0b100}}, {'n', {0b000, 0b000, 0b110, 0b101, 0b101}},
      {'r', {0b000, 0b000, 0b011, 0b100, 0b100}}, {'i', {0b010, 0b000, 0b010, 0b010, 0b010}},
  };
  return f;
}

void draw_text(Tensor& img, int64_t y, int64_t x, const std::string& text, int scale) {
  const auto& font = tiny_font();
  const int64_t h = img.shape()[0], w = img.shape()[1];
  int64_t cx = x;
  for (char ch : text) {
    auto it = font.find(ch);
    if (it == font.end()) {
      cx += 4 * scale;
      continue;
    }
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 3; ++c)
        if (it->second[r] & (1 << (2 - c)))
          for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) {
              int64_t py = y + r * scale + dy, px = cx + c * scale + dx;
              if (py >= 0 && py < h && px >= 0 && px < w) img.at({py, px, 0}) = 0.0;
            }
    cx += 4 * scale;
  }
}

void draw_line(Tensor& img, double y0, double x0, double y1, double x1, double shade) {
  const int64_t h = img.shape()[0], w = img.shape()[1];
  int steps = static_cast<int>(std::max(std::abs(y1 - y0), std::abs(x1 - x0))) + 1;
  for (int s = 0; s <= steps; ++s) {
    double t = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
    int64_t py = llround(y0 + t * (y1 - y0));
    int64_t px = llround(x0 + t * (x1 - x0));
    if (py >= 0 && py < h && px >= 0 && px < w) img.at({py, px, 0}) = shade;
  }
}

}  // namespace

void render_line_plot(const std::vector<double>& values, const std::string& label,
                      const std::string& path) {
  if (values.empty()) fail(ErrorKind::misuse, "cannot plot an empty series");
  const int64_t kH = 320, kW = 480;
  const int64_t left = 64, right = 16, top = 20, bottom = 32;
  Tensor img({kH, kW, 1});
  img.fill(1.0);
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  if (hi - lo < 1e-12) {
    double pad = std::max(1e-6, std::abs(hi) * 0.05);
    lo -= pad;
    hi += pad;
  }
  double span = hi - lo;
  lo -= 0.05 * span;
  hi += 0.05 * span;
  auto ypix = [&](double v) {
    return top + (hi - v) / (hi - lo) * static_cast<double>(kH - top - bottom);
  };
  auto xpix = [&](size_t i) {
    double t = values.size() == 1 ? 0.0 : static_cast<double>(i) / (values.size() - 1);
    return static_cast<double>(left) + t * static_cast<double>(kW - left - right);
  };
  // axes + quartile gridlines
  draw_line(img, top, left, kH - bottom, left, 0.0);
  draw_line(img, kH - bottom, left, kH - bottom, kW - right, 0.0);
  for (int q = 1; q <= 3; ++q) {
    double gy = top + q * (kH - top - bottom) / 4.0;
    draw_line(img, gy, left, gy, kW - right, 0.85);
  }
  for (size_t i = 0; i + 1 < values.size(); ++i)
    draw_line(img, ypix(values[i]), xpix(i), ypix(values[i + 1]), xpix(i + 1), 0.15);
  for (size_t i = 0; i < values.size(); ++i) {
    int64_t py = llround(ypix(values[i])), px = llround(xpix(i));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (py + dy >= 0 && py + dy < kH && px + dx >= 0 && px + dx < kW)
          img.at({py + dy, px + dx, 0}) = 0.15;
  }
  draw_text(img, 6, left, label, 2);
  draw_text(img, top - 3, 4, fmt(hi, "%.3g"), 2);
  draw_text(img, kH - bottom - 8, 4, fmt(lo, "%.3g"), 2);
  draw_text(img, kH - bottom + 6, left, "0", 2);
  std::string last = std::to_string(values.size() - 1);
  draw_text(img, kH - bottom + 6, kW - right - 8 * static_cast<int64_t>(last.size()), last, 2);
  write_png(path, img);
}

void write_report_plots(const MetricsReport& report, const std::string& dir) {
  if (report.timestep_mse.empty()) fail(ErrorKind::misuse, "report carries no timestep curves");
  std::filesystem::create_directories(dir);
  render_line_plot(report.timestep_mse, "mse", dir + "/mse.png");
  render_line_plot(report.timestep_psnr, "psnr", dir + "/psnr.png");
  render_line_plot(report.timestep_ssim, "ssim", dir + "/ssim.png");
}

}  // namespace framecast
