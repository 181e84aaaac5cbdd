#pragma once

#include <string>
#include <vector>

namespace nervboost {

/// One row per (video, variant, size/bpp, task).
struct RunRecord {
  std::string video;
  std::string variant;
  std::string task;
  long long params = 0;
  double bpp = 0.0;
  double psnr = 0.0;
  double ms_ssim = 0.0;
  int epochs = 0;
  double wall_seconds = 0.0;
};

inline constexpr const char* kReportColumns =
    "video,variant,task,params,bpp,psnr,ms_ssim,epochs,wall_seconds";

std::string to_csv(const std::vector<RunRecord>& runs);
std::string to_json(const std::vector<RunRecord>& runs);
std::vector<RunRecord> runs_from_json(const std::string& text);
std::vector<RunRecord> runs_from_csv(const std::string& text);

/// Points of one variant's RD curve, ascending in bpp.
std::vector<RunRecord> rd_curve(const std::vector<RunRecord>& runs, const std::string& variant);

/// PSNR-vs-bpp line plot, one colour per variant, written as PNG.
void write_rd_plot(const std::string& path, const std::vector<RunRecord>& runs, int width = 640,
                   int height = 480);

}  // namespace nervboost
