#include "nervboost/report.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "nervboost/errors.hpp"
#include "nervboost/kv_text.hpp"

namespace nervboost {
namespace {

using nlohmann::json;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Non-finite doubles (an infinite PSNR) are kept as strings in JSON.
json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::string to_csv(const std::vector<RunRecord>& runs) {
  std::string out = std::string(kReportColumns) + "\n";
  for (const auto& r : runs) {
    out += csv_field(r.video) + ',' + csv_field(r.variant) + ',' + csv_field(r.task) + ',' +
           std::to_string(r.params) + ',' + format_double(r.bpp) + ',' + format_double(r.psnr) +
           ',' + format_double(r.ms_ssim) + ',' + std::to_string(r.epochs) + ',' +
           format_double(r.wall_seconds) + '\n';
  }
  return out;
}

std::string to_json(const std::vector<RunRecord>& runs) {
  json rows = json::array();
  for (const auto& r : runs) {
    rows.push_back({{"video", r.video},
                    {"variant", r.variant},
                    {"task", r.task},
                    {"params", r.params},
                    {"bpp", number(r.bpp)},
                    {"psnr", number(r.psnr)},
                    {"ms_ssim", number(r.ms_ssim)},
                    {"epochs", r.epochs},
                    {"wall_seconds", number(r.wall_seconds)}});
  }
  return json{{"runs", rows}}.dump(2) + "\n";
}

std::vector<RunRecord> runs_from_json(const std::string& text) {
  std::vector<RunRecord> runs;
  try {
    const auto doc = json::parse(text);
    for (const auto& j : doc.at("runs")) {
      RunRecord r;
      r.video = j.at("video").get<std::string>();
      r.variant = j.at("variant").get<std::string>();
      r.task = j.at("task").get<std::string>();
      r.params = j.at("params").get<long long>();
      r.bpp = from_json(j.at("bpp"));
      r.psnr = from_json(j.at("psnr"));
      r.ms_ssim = from_json(j.at("ms_ssim"));
      r.epochs = j.at("epochs").get<int>();
      r.wall_seconds = from_json(j.at("wall_seconds"));
      runs.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run report: ") + e.what());
  }
  return runs;
}

std::vector<RunRecord> runs_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportColumns) {
    throw ConfigError("run CSV must start with the header '" + std::string(kReportColumns) + "'");
  }
  std::vector<RunRecord> runs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw ConfigError("run CSV row has " + std::to_string(f.size()) + " fields");
    RunRecord r;
    r.video = f[0];
    r.variant = f[1];
    r.task = f[2];
    try {
      r.params = std::stoll(f[3]);
      r.bpp = parse_double(f[4]);
      r.psnr = parse_double(f[5]);
      r.ms_ssim = parse_double(f[6]);
      r.epochs = std::stoi(f[7]);
      r.wall_seconds = parse_double(f[8]);
    } catch (const std::logic_error&) {
      throw ConfigError("bad number in run CSV row: " + line);
    }
    runs.push_back(std::move(r));
  }
  return runs;
}

std::vector<RunRecord> rd_curve(const std::vector<RunRecord>& runs, const std::string& variant) {
  std::vector<RunRecord> pts;
  for (const auto& r : runs) {
    if (r.variant == variant && std::isfinite(r.bpp) && std::isfinite(r.psnr)) pts.push_back(r);
  }
  std::stable_sort(pts.begin(), pts.end(),
                   [](const RunRecord& a, const RunRecord& b) { return a.bpp < b.bpp; });
  return pts;
}

void write_rd_plot(const std::string& path, const std::vector<RunRecord>& runs, int width,
                   int height) {
  if (width < 64 || height < 64) throw ConfigError("plot must be at least 64x64");
  std::vector<uint8_t> img(static_cast<size_t>(width * height * 3), 255);
  const auto set = [&](int x, int y, std::array<uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    auto* p = &img[static_cast<size_t>((y * width + x) * 3)];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  };
  const auto line = [&](int x0, int y0, int x1, int y1, std::array<uint8_t, 3> c) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  };

  const int left = 48;
  const int right = width - 16;
  const int top = 16;
  const int bottom = height - 40;
  const std::array<uint8_t, 3> black{0, 0, 0};
  line(left, bottom, right, bottom, black);
  line(left, top, left, bottom, black);

  std::map<std::string, std::vector<RunRecord>> curves;
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& r : runs) {
    if (!curves.count(r.variant)) curves[r.variant] = rd_curve(runs, r.variant);
  }
  for (const auto& [name, pts] : curves) {
    for (const auto& p : pts) {
      x_lo = std::min(x_lo, p.bpp);
      x_hi = std::max(x_hi, p.bpp);
      y_lo = std::min(y_lo, p.psnr);
      y_hi = std::max(y_hi, p.psnr);
    }
  }
  if (std::isfinite(x_lo)) {
    if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
    if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
    const auto px = [&](double v) {
      return left + 8 + static_cast<int>((v - x_lo) / (x_hi - x_lo) * (right - left - 16));
    };
    const auto py = [&](double v) {
      return bottom - 8 - static_cast<int>((v - y_lo) / (y_hi - y_lo) * (bottom - top - 16));
    };
    constexpr std::array<std::array<uint8_t, 3>, 6> palette{{{214, 39, 40},
                                                             {31, 119, 180},
                                                             {44, 160, 44},
                                                             {255, 127, 14},
                                                             {148, 103, 189},
                                                             {140, 86, 75}}};
    size_t k = 0;
    for (const auto& [name, pts] : curves) {
      const auto colour = palette[k++ % palette.size()];
      for (size_t i = 0; i < pts.size(); ++i) {
        const int x = px(pts[i].bpp);
        const int y = py(pts[i].psnr);
        if (i > 0) line(px(pts[i - 1].bpp), py(pts[i - 1].psnr), x, y, colour);
        for (int d = -3; d <= 3; ++d) {
          line(x - 3, y + d, x + 3, y + d, colour);
        }
      }
      // Legend swatch per variant along the bottom margin.
      const int lx = left + static_cast<int>(k - 1) * 40;
      for (int d = 0; d < 8; ++d) line(lx, bottom + 20 + d, lx + 24, bottom + 20 + d, colour);
    }
  }

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data(), 0, nullptr)) {
    throw IoError("cannot write " + path + ": " + image.message);
  }
}

}  // namespace nervboost
