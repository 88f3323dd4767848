#pragma once

#include <string>
#include <vector>

#include "framecast/data.hpp"

namespace framecast {

enum class MetricMode { per_frame, whole_clip };

double mse(const VideoSequence& pred, const VideoSequence& target);
// 10*log10(peak^2/mse), capped at 100 dB when mse < 1e-10.
double psnr(const VideoSequence& pred, const VideoSequence& target, double peak = 1.0,
            MetricMode mode = MetricMode::per_frame);
// Single-scale SSIM: 11x11 Gaussian window, sigma 1.5, C1=(0.01L)^2, C2=(0.03L)^2, L=1,
// valid windows only, averaged over windows, channels, and time.
double ssim(const VideoSequence& pred, const VideoSequence& target);

std::vector<double> per_frame_mse(const VideoSequence& pred, const VideoSequence& target);
std::vector<double> per_frame_psnr(const VideoSequence& pred, const VideoSequence& target,
                                   double peak = 1.0);
std::vector<double> per_frame_ssim(const VideoSequence& pred, const VideoSequence& target);

struct SequenceMetrics {
  std::string id;
  double mse = 0, psnr = 0, ssim = 0;
};

struct MetricsReport {
  std::vector<SequenceMetrics> per_sequence;
  SequenceMetrics aggregate;  // arithmetic mean of the rows, id = "mean"
  std::string task;           // e.g. "10 -> 10"
  // averaged across sequences, indexed by prediction timestep (may be empty)
  std::vector<double> timestep_mse, timestep_psnr, timestep_ssim;
};

MetricsReport evaluate(const std::vector<VideoSequence>& preds,
                       const std::vector<VideoSequence>& targets, const std::string& task_label);

// Aligned text table in the (Model, MSE, PSNR, SSIM) layout.
std::string format_table(const std::vector<std::pair<std::string, SequenceMetrics>>& rows);

void write_report_csv(const MetricsReport& report, const std::string& path);
MetricsReport read_report_csv(const std::string& path);
// One PNG per metric: metric value vs prediction timestep.
void write_report_plots(const MetricsReport& report, const std::string& dir);

void render_line_plot(const std::vector<double>& values, const std::string& label,
                      const std::string& path);

}  // namespace framecast
