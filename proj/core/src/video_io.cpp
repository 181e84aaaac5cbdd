#include "nervboost/video_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "nervboost/errors.hpp"
#include "nervboost/kv_text.hpp"

namespace nervboost {

namespace fs = std::filesystem;

torch::Tensor read_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read " + path + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode " + path + ": " + image.message);
  }
  const auto h = static_cast<int64_t>(image.height);
  const auto w = static_cast<int64_t>(image.width);
  auto t = torch::from_blob(pixels.data(), {h, w, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

void save_png(const std::string& path, const torch::Tensor& frame) {
  auto f = frame.dim() == 4 ? frame.squeeze(0) : frame;
  if (f.dim() != 3 || f.size(0) != 3) throw ShapeError("save_png expects [3, H, W]");
  auto bytes = f.detach()
                   .to(torch::kFloat32)
                   .clamp(0.0, 1.0)
                   .mul(255.0)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(f.size(2));
  image.height = static_cast<png_uint_32>(f.size(1));
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data_ptr<uint8_t>(), 0, nullptr)) {
    throw IoError("cannot write " + path + ": " + image.message);
  }
}

VideoClip load_video(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("video directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
  }
  if (files.empty()) throw IoError("no PNG frames in " + dir);
  std::sort(files.begin(), files.end());

  std::vector<torch::Tensor> frames;
  for (const auto& f : files) {
    auto t = read_png(f.string());
    if (!frames.empty() && t.sizes() != frames.front().sizes()) {
      throw IoError("frame " + f.filename().string() + " is " + std::to_string(t.size(1)) + "x" +
                    std::to_string(t.size(2)) + ", expected " +
                    std::to_string(frames.front().size(1)) + "x" +
                    std::to_string(frames.front().size(2)));
    }
    frames.push_back(std::move(t));
  }
  return {torch::stack(frames), fs::path(dir).filename().string()};
}

VideoClip synth_video(const SynthSpec& spec, uint64_t seed) {
  if (spec.frames < 1 || spec.height < 1 || spec.width < 1) {
    throw ConfigError("synthetic clip needs positive T, H, W");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto T = spec.frames;
  const auto H = spec.height;
  const auto W = spec.width;
  constexpr double kTau = 2.0 * std::numbers::pi;

  struct Wave {
    double fx, fy, speed, phase;
  };
  std::array<Wave, 3> waves;
  for (auto& w : waves) {
    w = {1.0 + 2.0 * unit(rng), 0.5 + 1.5 * unit(rng), 0.05 + 0.1 * unit(rng), kTau * unit(rng)};
  }
  struct Sprite {
    double x, y, vx, vy, radius;
    std::array<double, 3> color;
    double stripe;
    bool disc;
  };
  std::vector<Sprite> sprites;
  for (int i = 0; i < spec.sprites; ++i) {
    Sprite s;
    s.radius = (0.12 + 0.1 * unit(rng)) * static_cast<double>(std::min(H, W));
    s.x = unit(rng) * W;
    s.y = unit(rng) * H;
    s.vx = (unit(rng) - 0.5) * 0.08 * W;
    s.vy = (unit(rng) - 0.5) * 0.08 * H;
    s.color = {unit(rng), unit(rng), unit(rng)};
    s.stripe = 3.0 + 5.0 * unit(rng);
    s.disc = unit(rng) < 0.5;
    sprites.push_back(s);
  }

  std::vector<float> data(static_cast<size_t>(T * 3 * H * W));
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const double u = static_cast<double>(x) / W;
        const double v = static_cast<double>(y) / H;
        std::array<double, 3> rgb;
        for (int c = 0; c < 3; ++c) {
          const auto& wv = waves[static_cast<size_t>(c)];
          rgb[static_cast<size_t>(c)] =
              0.5 + 0.3 * std::sin(kTau * (wv.fx * u + wv.fy * v + wv.speed * t) + wv.phase);
        }
        for (const auto& s : sprites) {
          const double cx = std::fmod(s.x + s.vx * t + 4.0 * W, static_cast<double>(W));
          const double cy = std::fmod(s.y + s.vy * t + 4.0 * H, static_cast<double>(H));
          const double dx = x - cx;
          const double dy = y - cy;
          const bool inside = s.disc ? (dx * dx + dy * dy <= s.radius * s.radius)
                                     : (std::abs(dx) <= s.radius && std::abs(dy) <= 0.6 * s.radius);
          if (!inside) continue;
          const double texture = 0.5 + 0.5 * std::sin(kTau * (dx + dy) / s.stripe);
          for (int c = 0; c < 3; ++c) {
            rgb[static_cast<size_t>(c)] = s.color[static_cast<size_t>(c)] * (0.6 + 0.4 * texture);
          }
        }
        for (int c = 0; c < 3; ++c) {
          const auto idx = ((t * 3 + c) * H + y) * W + x;
          data[static_cast<size_t>(idx)] =
              static_cast<float>(std::clamp(rgb[static_cast<size_t>(c)], 0.0, 1.0));
        }
      }
    }
  }
  auto frames = torch::from_blob(data.data(), {T, 3, H, W}, torch::kFloat32).clone();
  return {frames, "synth_s" + std::to_string(seed)};
}

VideoClip open_video(const std::string& source) {
  constexpr std::string_view kPrefix = "synth:";
  if (source.rfind(kPrefix, 0) != 0) return load_video(source);
  std::string text(source.substr(kPrefix.size()));
  std::replace(text.begin(), text.end(), ',', '\n');
  const auto kv = KeyValues::parse(text);
  SynthSpec spec;
  spec.frames = kv.get_int("T", spec.frames);
  spec.height = kv.get_int("H", spec.height);
  spec.width = kv.get_int("W", spec.width);
  spec.sprites = static_cast<int>(kv.get_int("sprites", spec.sprites));
  return synth_video(spec, static_cast<uint64_t>(kv.get_int("seed", 7)));
}

}  // namespace nervboost
