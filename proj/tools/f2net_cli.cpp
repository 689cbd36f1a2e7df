#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "f2net/f2net.hpp"

namespace fs = std::filesystem;
using namespace f2net;

namespace {

struct NamedFrames {
  std::string name;
  std::vector<Image> frames;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

// A dataset root (with frames/) or a directory holding one sequence's PNGs.
std::vector<NamedFrames> load_frames(const fs::path& dir) {
  std::vector<NamedFrames> out;
  if (fs::is_directory(dir / "frames")) {
    for (const auto& name : list_subdirs(dir / "frames")) {
      NamedFrames s{name, {}};
      for (const auto& p : list_pngs(dir / "frames" / name)) s.frames.push_back(read_frame(p));
      if (!s.frames.empty()) out.push_back(std::move(s));
    }
  } else {
    NamedFrames s{fs::absolute(dir).lexically_normal().filename().string(), {}};
    for (const auto& p : list_pngs(dir)) s.frames.push_back(read_frame(p));
    if (!s.frames.empty()) out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("no frames under " + dir.string());
  for (const auto& s : out) {
    for (const auto& f : s.frames) {
      if (f.height != s.frames[0].height || f.width != s.frames[0].width)
        throw DataError("sequence " + s.name + ": frames differ in size");
    }
    if (s.frames[0].height % 8 || s.frames[0].width % 8)
      throw DataError("sequence " + s.name + ": frame size must be divisible by 8");
  }
  return out;
}

void append_metrics(const fs::path& path, const std::vector<EpochLog>& rows) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write " + path.string());
  if (fresh) out << metrics_csv_header();
  for (const auto& r : rows) out << metrics_csv_row(r);
}

template <typename T>
int run_train(const TrainConfig& cfg, const fs::path& data, const fs::path& val_dir, const fs::path& out,
              const fs::path& metrics, bool resume) {
  const auto videos = load_dataset(data);
  const auto validation = val_dir.empty() ? std::vector<SequenceSample>{} : load_dataset(val_dir);
  for (const auto& s : videos) {
    if (s.frames[0].height % 8 || s.frames[0].width % 8)
      throw DataError("sequence " + s.name + ": frame size must be divisible by 8");
  }
  const auto statics = static_samples(videos);

  Model<T> model = Model<T>::create(cfg.model, cfg.seed);
  std::size_t start = 0;
  if (resume && fs::exists(out)) {
    CheckpointHeader header;
    model = load_checkpoint<T>(out, &header);
    if (header.digest != cfg.model.digest()) throw DataError("resume: checkpoint model config differs from config file");
    start = header.epoch;
    std::cerr << "resuming from epoch " << start << "\n";
  } else if (fs::exists(metrics)) {
    fs::remove(metrics);
  }

  const auto t0 = std::chrono::steady_clock::now();
  train<T>(model, statics, videos, validation, cfg, start, [&](std::size_t epoch, const std::vector<EpochLog>& rows) {
    save_checkpoint(out, model, static_cast<std::uint32_t>(epoch));
    append_metrics(metrics, rows);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "epoch %zu/%zu  loss_f %.4f  loss_b %.4f", epoch, cfg.epochs, rows[1].loss_f,
                 rows[1].loss_b);
    if (!std::isnan(rows[1].val_j)) std::fprintf(stderr, "  val_J %.4f", rows[1].val_j);
    std::fprintf(stderr, "  (%.1fs)\n", secs);
  });
  if (cfg.epochs == 0 || start >= cfg.epochs) save_checkpoint(out, model, static_cast<std::uint32_t>(start));
  return 0;
}

template <typename T>
int run_infer(const fs::path& ckpt, const fs::path& seq_dir, const fs::path& out) {
  const auto model = load_checkpoint<T>(ckpt);
  std::ofstream centers;
  fs::create_directories(out);
  centers.open(out / "centers.csv");
  if (!centers) throw DataError("cannot write " + (out / "centers.csv").string());
  centers << "sequence,frame,x,y\n";
  for (const auto& s : load_frames(seq_dir)) {
    const auto preds = infer_sequence(model, s.frames);
    for (std::size_t t = 0; t < preds.size(); ++t) {
      write_mask(out / "masks" / s.name / frame_filename(t), preds[t].mask);
      write_heatmap_png(out / "heatmaps" / s.name / frame_filename(t), preds[t].heatmap);
      const Point px = rescale_point(preds[t].center, 4, 1);
      centers << s.name << ',' << t << ',' << px.x << ',' << px.y << '\n';
    }
    std::cerr << s.name << ": " << preds.size() << " frames\n";
  }
  return 0;
}

template <typename T>
int run_viz(const fs::path& ckpt, const fs::path& seq_dir, const fs::path& out) {
  const auto model = load_checkpoint<T>(ckpt);
  for (const auto& s : load_frames(seq_dir)) {
    const auto preds = infer_sequence(model, s.frames);
    for (std::size_t t = 0; t < preds.size(); ++t) {
      const auto& frame = s.frames[t];
      const auto& heat = preds[t].heatmap;
      RawImage img{frame.height, frame.width, 3, std::vector<std::uint8_t>(frame.pixels.size())};
      const Point c = rescale_point(preds[t].center, 4, 1);
      for (std::size_t y = 0; y < frame.height; ++y)
        for (std::size_t x = 0; x < frame.width; ++x) {
          const double h = std::clamp(static_cast<double>(heat.at(y / 4, x / 4, 0)), 0.0, 1.0);
          const double a = 0.65 * h;
          const bool cross = (std::abs(double(x) - c.x) < 0.6 && std::abs(double(y) - c.y) < 3.6) ||
                             (std::abs(double(y) - c.y) < 0.6 && std::abs(double(x) - c.x) < 3.6);
          for (std::size_t ch = 0; ch < 3; ++ch) {
            double v = frame.at(y, x, ch) * (1 - a) + (ch == 0 ? a : 0.0);
            if (cross) v = ch == 1 ? 1.0 : 0.0;
            img.bytes[(y * frame.width + x) * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255));
          }
        }
      write_png(out / s.name / frame_filename(t), img);
    }
    std::cerr << s.name << ": " << preds.size() << " overlays\n";
  }
  return 0;
}

bool checkpoint_is_float(const fs::path& ckpt) {
  return read_checkpoint_header(read_file_bytes(ckpt)).scalar_bytes == sizeof(float);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Center-guided video object segmentation toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic video dataset");
  std::string gen_out, scenarios = "plain,similarity,occlusion,appearance-change";
  std::uint64_t gen_seed = 0;
  SyntheticConfig syn;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--scenarios", scenarios, "Comma-separated scenario list")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--count", syn.count, "Number of sequences")->capture_default_str();
  gen->add_option("--height", syn.height, "Frame height")->capture_default_str();
  gen->add_option("--width", syn.width, "Frame width")->capture_default_str();
  gen->add_option("--length", syn.length, "Frames per sequence")->capture_default_str();
  gen->add_option("--max-speed", syn.max_speed, "Maximum object speed in pixels per frame")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  std::string data_dir, config_file, ckpt_out, val_dir, metrics_file;
  bool resume = false;
  tr->add_option("--data", data_dir, "Training dataset directory")->required();
  tr->add_option("--config", config_file, "Training config file")->required();
  tr->add_option("--out", ckpt_out, "Checkpoint path")->required();
  tr->add_option("--val", val_dir, "Validation dataset directory");
  tr->add_option("--metrics", metrics_file, "Metrics CSV (default: <out>.metrics.csv)");
  tr->add_flag("--resume", resume, "Continue from the checkpoint at --out if present");

  auto* inf = app.add_subcommand("infer", "Predict masks and heatmaps for sequences");
  std::string ckpt, seq_dir, infer_out;
  inf->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  inf->add_option("--seq", seq_dir, "Dataset root or directory of frames")->required();
  inf->add_option("--out", infer_out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Score predicted masks against ground truth");
  std::string pred_dir, gt_dir, report_file;
  ev->add_option("--pred", pred_dir, "Predicted mask tree")->required();
  ev->add_option("--gt", gt_dir, "Ground-truth mask tree or dataset root")->required();
  ev->add_option("--report", report_file, "CSV report path")->required();

  auto* viz = app.add_subcommand("viz", "Render heatmap overlays");
  std::string viz_ckpt, viz_seq, viz_out;
  viz->add_option("--ckpt", viz_ckpt, "Checkpoint path")->required();
  viz->add_option("--seq", viz_seq, "Dataset root or directory of frames")->required();
  viz->add_option("--out", viz_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
    if (*gen) {
      syn.scenarios.clear();
      for (const auto& s : split(scenarios, ',')) syn.scenarios.push_back(parse_scenario(s));
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*gen) {
      const auto seqs = gen_synthetic(syn, gen_seed);
      save_dataset(gen_out, seqs);
      std::cerr << "wrote " << seqs.size() << " sequences to " << gen_out << "\n";
      return 0;
    }
    if (*tr) {
      const auto cfg = load_train_config(config_file);
      const fs::path metrics = metrics_file.empty() ? fs::path(ckpt_out + ".metrics.csv") : fs::path(metrics_file);
      return cfg.precision == Precision::kFloat
                 ? run_train<float>(cfg, data_dir, val_dir, ckpt_out, metrics, resume)
                 : run_train<double>(cfg, data_dir, val_dir, ckpt_out, metrics, resume);
    }
    if (*inf) {
      return checkpoint_is_float(ckpt) ? run_infer<float>(ckpt, seq_dir, infer_out)
                                       : run_infer<double>(ckpt, seq_dir, infer_out);
    }
    if (*ev) {
      const auto pred = load_mask_tree(pred_dir);
      const auto gt = load_mask_tree(gt_dir);
      std::map<std::string, std::pair<std::vector<Mask>, std::vector<Mask>>> pairs;
      for (const auto& [name, masks] : gt) {
        const auto it = pred.find(name);
        if (it == pred.end()) throw DataError("no predictions for sequence " + name);
        if (it->second.size() != masks.size()) {
          throw DataError("sequence " + name + ": " + std::to_string(it->second.size()) + " predicted vs " +
                          std::to_string(masks.size()) + " ground-truth frames");
        }
        for (std::size_t t = 0; t < masks.size(); ++t) {
          if (it->second[t].height != masks[t].height || it->second[t].width != masks[t].width)
            throw DataError("sequence " + name + " frame " + std::to_string(t) + ": mask sizes differ");
        }
        pairs[name] = {it->second, masks};
      }
      const auto report = evaluate(pairs);
      const fs::path report_path(report_file);
      if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
      std::ofstream out(report_path);
      if (!out) throw DataError("cannot write " + report_file);
      out << report_csv(report);
      std::cout << report_table(report);
      return 0;
    }
    if (*viz) {
      return checkpoint_is_float(viz_ckpt) ? run_viz<float>(viz_ckpt, viz_seq, viz_out)
                                           : run_viz<double>(viz_ckpt, viz_seq, viz_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
