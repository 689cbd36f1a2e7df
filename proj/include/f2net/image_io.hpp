#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2net/data.hpp"
#include "f2net/metrics.hpp"

// PNG files for frames (RGB), masks (0/255 gray) and heatmaps (gray), plus
// the on-disk dataset layout frames/SEQ/%05d.png, masks/SEQ/%05d.png.

namespace f2net {

/// Unreadable, missing or malformed input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;  // 1 or 3
  std::vector<std::uint8_t> bytes;
};

inline void write_png(const std::filesystem::path& path, const RawImage& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels");
  if (img.bytes.size() != img.height * img.width * img.channels) throw std::invalid_argument("write_png: size");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, img.bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot write " + path.string() + ": " + msg);
  }
}

/// Reads a PNG as 8-bit gray (1 channel) or RGB (3 channels); alpha is composited on black.
inline RawImage read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot read " + path.string() + ": " + msg);
  }
  RawImage img;
  img.width = png.width;
  img.height = png.height;
  img.channels = (png.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  img.bytes.resize(PNG_IMAGE_SIZE(png));
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&png, &black, img.bytes.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot read " + path.string() + ": " + msg);
  }
  return img;
}

inline void write_mask(const std::filesystem::path& path, const Mask& m) {
  RawImage img{m.height, m.width, 1, std::vector<std::uint8_t>(m.bits.size())};
  for (std::size_t i = 0; i < m.bits.size(); ++i) img.bytes[i] = m.bits[i] ? 255 : 0;
  write_png(path, img);
}

/// Any pixel brighter than 127 (mean over channels) is foreground.
inline Mask read_mask(const std::filesystem::path& path) {
  const auto img = read_png(path);
  Mask m(img.height, img.width);
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    unsigned sum = 0;
    for (std::size_t c = 0; c < img.channels; ++c) sum += img.bytes[i * img.channels + c];
    m.bits[i] = sum > 127u * img.channels ? 1 : 0;
  }
  return m;
}

/// Linear [0, 1] -> [0, 255] grayscale with rounding; values are clamped.
template <typename T>
void write_heatmap_png(const std::filesystem::path& path, const Tensor<T>& heatmap) {
  RawImage img{heatmap.dim(0), heatmap.dim(1), 1, std::vector<std::uint8_t>(heatmap.dim(0) * heatmap.dim(1))};
  for (std::size_t i = 0; i < img.bytes.size(); ++i) {
    const double v = std::clamp(static_cast<double>(heatmap[i * heatmap.dim(2)]), 0.0, 1.0);
    img.bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_png(path, img);
}

inline void write_frame(const std::filesystem::path& path, const Image& frame) {
  RawImage img{frame.height, frame.width, frame.channels, std::vector<std::uint8_t>(frame.pixels.size())};
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    img.bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(frame.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  write_png(path, img);
}

/// Reads a frame as 3-channel floats in [0, 1]; gray files are replicated.
inline Image read_frame(const std::filesystem::path& path) {
  const auto raw = read_png(path);
  Image img{raw.height, raw.width, 3, std::vector<float>(raw.height * raw.width * 3)};
  for (std::size_t p = 0; p < raw.height * raw.width; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      img.pixels[p * 3 + c] = static_cast<float>(raw.bytes[p * raw.channels + (raw.channels == 3 ? c : 0)]) / 255.0f;
  return img;
}

inline std::string frame_filename(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu.png", t);
  return buf;
}

/// Sorted *.png paths of a directory.
inline std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Sorted names of the sub-directories of `dir`.
inline std::vector<std::string> list_subdirs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

/// Writes frames/, masks/ and a sequences.csv index under `root`.
inline void save_dataset(const std::filesystem::path& root, const std::vector<SequenceSample>& seqs) {
  std::filesystem::create_directories(root);
  std::ofstream index(root / "sequences.csv");
  if (!index) throw DataError("cannot write " + (root / "sequences.csv").string());
  index << "sequence,scenario,seed,frames\n";
  for (const auto& s : seqs) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      write_frame(root / "frames" / s.name / frame_filename(t), s.frames[t]);
      write_mask(root / "masks" / s.name / frame_filename(t), s.masks[t]);
    }
    index << s.name << ',' << to_string(s.scenario) << ',' << s.seed << ',' << s.length() << '\n';
  }
}

/// Masks of every sequence under `dir` (or `dir`/masks when present).
inline std::map<std::string, std::vector<Mask>> load_mask_tree(const std::filesystem::path& dir) {
  const auto base = std::filesystem::is_directory(dir / "masks") ? dir / "masks" : dir;
  std::map<std::string, std::vector<Mask>> out;
  for (const auto& name : list_subdirs(base)) {
    auto& masks = out[name];
    for (const auto& p : list_pngs(base / name)) masks.push_back(read_mask(p));
  }
  if (out.empty()) throw DataError("no sequences found under " + base.string());
  return out;
}

/// Loads a dataset written by save_dataset (or any DAVIS-style tree with
/// frames/ and masks/). GT centers are recomputed as mask centroids.
inline std::vector<SequenceSample> load_dataset(const std::filesystem::path& root) {
  std::map<std::string, std::pair<std::string, std::uint64_t>> meta;
  if (std::ifstream index(root / "sequences.csv"); index) {
    std::string line;
    std::getline(index, line);
    while (std::getline(index, line)) {
      std::stringstream ss(line);
      std::string name, scenario, seed;
      std::getline(ss, name, ',');
      std::getline(ss, scenario, ',');
      std::getline(ss, seed, ',');
      if (!name.empty()) meta[name] = {scenario, seed.empty() ? 0 : std::stoull(seed)};
    }
  }
  std::vector<SequenceSample> out;
  for (const auto& name : list_subdirs(root / "frames")) {
    SequenceSample s;
    s.name = name;
    if (auto it = meta.find(name); it != meta.end()) {
      s.scenario = parse_scenario(it->second.first);
      s.seed = it->second.second;
    }
    for (const auto& p : list_pngs(root / "frames" / name)) s.frames.push_back(read_frame(p));
    for (const auto& p : list_pngs(root / "masks" / name)) s.masks.push_back(read_mask(p));
    if (s.frames.empty() || s.frames.size() != s.masks.size()) {
      throw DataError("sequence " + name + ": " + std::to_string(s.frames.size()) + " frames vs " +
                      std::to_string(s.masks.size()) + " masks");
    }
    for (const auto& m : s.masks) {
      if (m.count() == 0) throw DataError("sequence " + name + " has an empty ground-truth mask");
      s.centers.push_back(mask_centroid(m));
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("no sequences under " + (root / "frames").string());
  return out;
}

/// CSV rows `sequence,metric,mean,recall,decay`, one per sequence and metric,
/// followed by the dataset averages under the name "ALL".
inline std::string report_csv(const MetricReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "sequence,metric,mean,recall,decay\n";
  auto row = [&](const std::string& name, const char* metric, const StatSummary& s) {
    os << name << ',' << metric << ',' << s.mean << ',' << s.recall << ',' << s.decay << '\n';
  };
  for (const auto& s : r.sequences) {
    row(s.name, "J", s.j_stats);
    row(s.name, "F", s.f_stats);
  }
  row("ALL", "J", r.j);
  row("ALL", "F", r.f);
  return os.str();
}

/// Text table with Mean / Recall / Decay rows under J and F.
inline std::string report_table(const MetricReport& r) {
  std::ostringstream os;
  char buf[128];
  os << "Measure            Value\n";
  os << "-------------------------\n";
  auto line = [&](const char* label, double v) {
    std::snprintf(buf, sizeof(buf), "%-18s %6.1f\n", label, v * 100.0);
    os << buf;
  };
  line("J Mean   (up)", r.j.mean);
  line("J Recall (up)", r.j.recall);
  line("J Decay  (down)", r.j.decay);
  line("F Mean   (up)", r.f.mean);
  line("F Recall (up)", r.f.recall);
  line("F Decay  (down)", r.f.decay);
  return os.str();
}

}  // namespace f2net
