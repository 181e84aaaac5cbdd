// nervboost: regress | compress | inpaint | interpolate | report | decode
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "nervboost/checkpoint.hpp"
#include "nervboost/compression.hpp"
#include "nervboost/errors.hpp"
#include "nervboost/pipeline.hpp"
#include "nervboost/report.hpp"

namespace fs = std::filesystem;
using namespace nervboost;

namespace {

struct FlagKey {
  const char* flag;
  const char* key;
  const char* help;
};

// Flags that map one-to-one onto RunConfig keys.
constexpr FlagKey kRunFlags[] = {
    {"--video", "video", "PNG directory or synth:T=8,H=120,W=240,seed=7"},
    {"--variant", "variant", "nerv_boost | enerv_boost | hnerv_boost"},
    {"--target-params", "target_params", "decoder + z_t network parameter budget"},
    {"--strides", "strides", "comma-separated decoder strides"},
    {"--epochs", "epochs", "training epochs"},
    {"--lr", "lr", "peak learning rate (default per variant)"},
    {"--warmup", "warmup", "warm-up fraction of epochs"},
    {"--pe-base", "pe_base", "positional encoding base b"},
    {"--pe-bands", "pe_bands", "positional encoding bands l"},
    {"--lambda", "lambda", "distortion mix weight"},
    {"--alpha", "alpha", "L1 share of the spatial loss"},
    {"--kappa", "kappa", "rate penalty weight (default per variant)"},
    {"--bits", "bit_width", "average bit width B_avg"},
    {"--compress-epochs", "compress_epochs", "CEM fine-tuning epochs"},
    {"--compress-lr", "compress_lr", "CEM fine-tuning learning rate"},
    {"--mask", "mask", "disperse | central"},
    {"--mask-size", "mask_size", "side of each disperse square"},
    {"--seed", "seed", "run seed"},
    {"--eval-every", "eval_every", "evaluate PSNR every N epochs (0 = last only)"},
};

struct Common {
  std::string config_file;
  std::map<std::string, std::string> flags;
  std::vector<std::string> sets;
  bool baseline = false;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "key=value config file");
  for (const auto& f : kRunFlags) cmd->add_option(f.flag, c.flags[f.key], f.help);
  cmd->add_option("--set", c.sets, "extra key=value overrides")->take_all();
  cmd->add_flag("--baseline", c.baseline, "ablated baseline: no TAT, GELU, MSE loss");
  cmd->add_option("-o,--out", c.out_dir, "run directory (default $NERVBOOST_OUTPUT_ROOT/<run>)");
}

// Later sources win: base, config file, flags, --set.
RunConfig resolve(const Common& c, const std::string& task, KeyValues kv = {}) {
  if (!c.config_file.empty()) {
    const auto file = KeyValues::load(c.config_file);
    for (const auto& [k, v] : file.entries()) kv.set(k, v);
  }
  kv.set("task", task);
  for (const auto& [k, v] : c.flags) {
    if (!v.empty()) kv.set(k, v);
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.baseline) kv.set("boosted", "0");
  return RunConfig::from_kv(kv);
}

std::string output_root() {
  const char* env = std::getenv("NERVBOOST_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? env : "runs";
}

fs::path run_dir(const Common& c, const RunConfig& cfg) {
  fs::path dir = c.out_dir;
  if (dir.empty()) {
    dir = fs::path(output_root()) / (cfg.task + "_" + std::string(to_string(cfg.variant)) +
                                     (cfg.boosted ? "" : "_baseline") + "_s" +
                                     std::to_string(cfg.seed));
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_history(const fs::path& path, const std::vector<EpochMetrics>& history) {
  std::ostringstream os;
  os << "epoch,loss,lr,psnr,ms_ssim\n";
  for (const auto& e : history) {
    os << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.lr) << ','
       << format_double(e.psnr) << ',' << format_double(e.ms_ssim) << '\n';
  }
  write_text(path, os.str());
}

EpochCallback progress() {
  return [](const EpochMetrics& e) {
    std::fprintf(stderr, "epoch %4d  loss %.5f  lr %.2e", e.epoch, e.loss, e.lr);
    if (e.psnr == e.psnr) std::fprintf(stderr, "  psnr %.3f dB", e.psnr);
    std::fprintf(stderr, "\n");
  };
}

RunRecord base_record(const VideoClip& clip, const RunConfig& cfg, const FittedModel& m) {
  RunRecord r;
  r.video = clip.name;
  r.variant = std::string(to_string(cfg.variant)) + (cfg.boosted ? "" : "_baseline");
  r.task = cfg.task;
  r.params = m.decoder->numel();
  return r;
}

void finish(const fs::path& dir, const RunConfig& cfg, const RunRecord& rec) {
  write_text(dir / "config.txt", cfg.to_kv().to_text());
  write_text(dir / "result.json", to_json({rec}));
  std::printf("%s", to_csv({rec}).c_str());
  std::printf("run directory: %s\n", dir.string().c_str());
}

int cmd_regress(const Common& c) {
  const auto cfg = resolve(c, "regress");
  const auto clip = open_video(cfg.video);
  const auto dir = run_dir(c, cfg);
  TrainSetup setup;
  setup.on_epoch = progress();
  auto res = train_model(clip, cfg, setup);
  save_checkpoint((dir / "model.nrvc").string(), res.model, cfg);
  write_history(dir / "history.csv", res.history);
  auto rec = base_record(clip, cfg, res.model);
  rec.psnr = res.psnr;
  rec.ms_ssim = res.ms_ssim;
  rec.epochs = cfg.epochs;
  rec.wall_seconds = res.seconds;
  finish(dir, cfg, rec);
  return 0;
}

int cmd_compress(const Common& c, const std::string& checkpoint) {
  FittedModel model;
  double train_seconds = 0.0;
  RunConfig cfg;
  if (checkpoint.empty()) {
    cfg = resolve(c, "compress");
  } else {
    auto loaded = load_checkpoint(checkpoint);
    model = loaded.model;
    cfg = resolve(c, "compress", loaded.cfg.to_kv());
    // The checkpoint fixes the architecture; compression settings come from this run.
    cfg.variant = loaded.cfg.variant;
    cfg.boosted = loaded.cfg.boosted;
    cfg.strides = loaded.cfg.strides;
    cfg.pe = loaded.cfg.pe;
    cfg.target_params = loaded.cfg.target_params;
  }
  const auto clip = open_video(cfg.video);
  const auto dir = run_dir(c, cfg);
  if (checkpoint.empty()) {
    TrainSetup setup;
    setup.on_epoch = progress();
    auto res = train_model(clip, cfg, setup);
    model = res.model;
    train_seconds = res.seconds;
    save_checkpoint((dir / "model.nrvc").string(), model, cfg);
  }
  const auto res = finetune_compress(model, clip, cfg);
  write_file((dir / "video.nrvb").string(), res.bitstream);
  auto rec = base_record(clip, cfg, model);
  rec.bpp = res.bpp;
  rec.psnr = res.psnr;
  rec.ms_ssim = res.ms_ssim;
  rec.epochs = cfg.compress_epochs;
  rec.wall_seconds = train_seconds + res.seconds;
  std::fprintf(stderr, "bitstream %zu bytes, %.5f bpp (estimate %.5f, target %.5f), psnr %.3f dB\n",
               res.bitstream.size(), res.bpp, res.estimated_bpp, res.rate_target_bpp, res.psnr);
  finish(dir, cfg, rec);
  return 0;
}

int cmd_inpaint(const Common& c) {
  const auto cfg = resolve(c, "inpaint");
  const auto clip = open_video(cfg.video);
  const auto dir = run_dir(c, cfg);
  auto res = run_inpainting(clip, cfg);
  save_png((dir / "mask.png").string(), res.mask.expand({3, -1, -1}));
  write_history(dir / "history.csv", res.train.history);
  auto rec = base_record(clip, cfg, res.train.model);
  rec.psnr = res.masked_psnr;
  rec.ms_ssim = res.train.ms_ssim;
  rec.epochs = cfg.epochs;
  rec.wall_seconds = res.train.seconds;
  std::fprintf(stderr, "masked-region psnr %.3f dB, full-frame psnr %.3f dB\n", res.masked_psnr,
               res.full_psnr);
  finish(dir, cfg, rec);
  return 0;
}

int cmd_interpolate(const Common& c) {
  const auto cfg = resolve(c, "interpolate");
  const auto clip = open_video(cfg.video);
  const auto dir = run_dir(c, cfg);
  auto res = run_interpolation(clip, cfg);
  write_history(dir / "history.csv", res.train.history);
  auto rec = base_record(clip, cfg, res.train.model);
  rec.psnr = res.test_psnr;
  rec.ms_ssim = res.test_ms_ssim;
  rec.epochs = cfg.epochs;
  rec.wall_seconds = res.train.seconds;
  std::fprintf(stderr, "train psnr %.3f dB, held-out psnr %.3f dB\n", res.train_psnr, res.test_psnr);
  finish(dir, cfg, rec);
  return 0;
}

int cmd_decode(const std::string& bitstream, const std::string& out_dir) {
  auto video = deserialize_compressed(read_file(bitstream));
  fs::create_directories(out_dir);
  for (int64_t t = 0; t < video.frames; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04lld.png", static_cast<long long>(t + 1));
    save_png((fs::path(out_dir) / name).string(), video.decode(t));
  }
  std::printf("decoded %lld frames into %s\n", static_cast<long long>(video.frames), out_dir.c_str());
  return 0;
}

int cmd_report(const std::vector<std::string>& roots, const std::string& out_dir) {
  std::vector<RunRecord> runs;
  for (const auto& root : roots) {
    if (!fs::exists(root)) throw IoError("no such run directory: " + root);
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.path().filename() != "result.json") continue;
      std::ifstream in(entry.path());
      std::stringstream buf;
      buf << in.rdbuf();
      for (auto& r : runs_from_json(buf.str())) runs.push_back(std::move(r));
    }
  }
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "report.csv", to_csv(runs));
  write_text(fs::path(out_dir) / "report.json", to_json(runs));
  write_rd_plot((fs::path(out_dir) / "rd.png").string(), runs);
  std::printf("%zu runs -> %s/report.{csv,json}, rd.png\n", runs.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Boosted video implicit neural representations"};
  app.require_subcommand(1);

  Common regress_opts, compress_opts, inpaint_opts, interp_opts;
  auto* regress = app.add_subcommand("regress", "overfit a model to a video");
  add_common(regress, regress_opts);

  auto* compress = app.add_subcommand("compress", "CEM fine-tuning and bitstream export");
  add_common(compress, compress_opts);
  std::string checkpoint;
  compress->add_option("--checkpoint", checkpoint, "start from a regress checkpoint");

  auto* inpaint = app.add_subcommand("inpaint", "fit with masked pixels, score the hidden region");
  add_common(inpaint, inpaint_opts);

  auto* interpolate = app.add_subcommand("interpolate", "fit odd frames, score even frames");
  add_common(interpolate, interp_opts);

  auto* report = app.add_subcommand("report", "collect result.json files into CSV/JSON/RD plot");
  std::vector<std::string> roots;
  std::string report_out = "report";
  report->add_option("runs", roots, "run directories to scan")->required();
  report->add_option("-o,--out", report_out, "output directory");

  auto* decode = app.add_subcommand("decode", "decode a .nrvb bitstream to PNG frames");
  std::string bitstream;
  std::string decode_out = "decoded";
  decode->add_option("bitstream", bitstream, ".nrvb file")->required()->check(CLI::ExistingFile);
  decode->add_option("-o,--out", decode_out, "output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*regress) return cmd_regress(regress_opts);
    if (*compress) return cmd_compress(compress_opts, checkpoint);
    if (*inpaint) return cmd_inpaint(inpaint_opts);
    if (*interpolate) return cmd_interpolate(interp_opts);
    if (*report) return cmd_report(roots, report_out);
    if (*decode) return cmd_decode(bitstream, decode_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
