#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "f2net/checkpoint.hpp"
#include "f2net/config.hpp"
#include "f2net/image_io.hpp"

using namespace f2net;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("f2net_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.stage2_channels = 4;
  m.stage4_channels = 4;
  m.channels = 8;
  m.center_channels = 4;
  m.decoder_channels = 4;
  m.fusion = FusionMode::kSpatial;
  return m;
}

class EnvGuard {
 public:
  explicit EnvGuard(const char* value) {
    if (value) setenv("F2NET_SEED", value, 1);
    else unsetenv("F2NET_SEED");
  }
  ~EnvGuard() { unsetenv("F2NET_SEED"); }
};

}  // namespace

TEST(Png, RgbAndGrayRoundTripExactly) {
  TempDir dir;
  RawImage rgb{3, 5, 3, {}};
  for (std::size_t i = 0; i < 45; ++i) rgb.bytes.push_back(static_cast<std::uint8_t>(i * 37 % 256));
  write_png(dir.path() / "rgb.png", rgb);
  const auto back = read_png(dir.path() / "rgb.png");
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.bytes, rgb.bytes);

  RawImage gray{4, 2, 1, {0, 1, 2, 127, 128, 200, 254, 255}};
  write_png(dir.path() / "sub" / "gray.png", gray);
  const auto g = read_png(dir.path() / "sub" / "gray.png");
  EXPECT_EQ(g.channels, 1u);
  EXPECT_EQ(g.bytes, gray.bytes);
  EXPECT_THROW(write_png(dir.path() / "bad.png", RawImage{2, 2, 2, std::vector<std::uint8_t>(8)}),
               std::invalid_argument);
}

TEST(Png, UnreadableInputsAreDataErrors) {
  TempDir dir;
  EXPECT_THROW(read_png(dir.path() / "missing.png"), DataError);
  write_text(dir.path() / "junk.png", "definitely not a png");
  EXPECT_THROW(read_png(dir.path() / "junk.png"), DataError);
  EXPECT_THROW(read_frame(dir.path() / "junk.png"), DataError);
  EXPECT_THROW(list_pngs(dir.path() / "nowhere"), DataError);
}

TEST(Png, MasksFramesAndHeatmaps) {
  TempDir dir;
  Mask m(6, 7);
  m.at(2, 3) = m.at(5, 6) = 1;
  write_mask(dir.path() / "m.png", m);
  EXPECT_EQ(read_mask(dir.path() / "m.png"), m);
  EXPECT_EQ(read_png(dir.path() / "m.png").bytes[2 * 7 + 3], 255);

  Image img{4, 4, 3, {}};
  for (std::size_t i = 0; i < 48; ++i) img.pixels.push_back(static_cast<float>(i) / 47.0f);
  write_frame(dir.path() / "f.png", img);
  const auto back = read_frame(dir.path() / "f.png");
  ASSERT_EQ(back.pixels.size(), img.pixels.size());
  for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 0.5 / 255 + 1e-6);

  RawImage gray{2, 2, 1, {0, 51, 102, 255}};
  write_png(dir.path() / "g.png", gray);
  const auto replicated = read_frame(dir.path() / "g.png");
  EXPECT_EQ(replicated.channels, 3u);
  EXPECT_FLOAT_EQ(replicated.at(0, 1, 2), 0.2f);

  write_heatmap_png(dir.path() / "h.png", Tensor<double>::from({1, 3, 1}, {-1.0, 0.5, 2.0}));
  EXPECT_EQ(read_png(dir.path() / "h.png").bytes, (std::vector<std::uint8_t>{0, 128, 255}));
  EXPECT_EQ(frame_filename(12), "00012.png");
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir;
  SyntheticConfig cfg;
  cfg.count = 3;
  cfg.height = 24;
  cfg.width = 32;
  cfg.length = 3;
  const auto seqs = gen_synthetic(cfg, 7);
  save_dataset(dir.path(), seqs);
  const auto back = load_dataset(dir.path());
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].name, seqs[i].name);
    EXPECT_EQ(back[i].scenario, seqs[i].scenario);
    EXPECT_EQ(back[i].seed, seqs[i].seed);
    EXPECT_EQ(back[i].masks, seqs[i].masks);
    EXPECT_EQ(back[i].centers, seqs[i].centers);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t k = 0; k < back[i].frames[t].pixels.size(); ++k)
        EXPECT_NEAR(back[i].frames[t].pixels[k], seqs[i].frames[t].pixels[k], 0.5 / 255 + 1e-6);
  }
  const auto tree = load_mask_tree(dir.path());
  EXPECT_EQ(tree.size(), 3u);
  EXPECT_EQ(tree.at("seq001"), seqs[1].masks);
}

TEST(Dataset, MalformedTreesAreDataErrors) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.path()), DataError);
  fs::create_directories(dir.path() / "frames");
  EXPECT_THROW(load_dataset(dir.path()), DataError);
  write_frame(dir.path() / "frames" / "s" / "00000.png", Image{16, 16, 3, std::vector<float>(768, 0.5f)});
  fs::create_directories(dir.path() / "masks" / "s");
  EXPECT_THROW(load_dataset(dir.path()), DataError);
  write_mask(dir.path() / "masks" / "s" / "00000.png", Mask(16, 16));
  EXPECT_THROW(load_dataset(dir.path()), DataError);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto m = Model<double>::create(tiny_model(), 3);
  const auto bytes = serialize_checkpoint(m, 17);
  CheckpointHeader h;
  const auto back = deserialize_checkpoint<double>(bytes, &h);
  EXPECT_EQ(h.epoch, 17u);
  EXPECT_EQ(h.scalar_bytes, 8);
  EXPECT_EQ(h.digest, m.config.digest());
  EXPECT_EQ(back.config.to_text(), m.config.to_text());
  for (const auto& [name, t] : m.params()) EXPECT_EQ(back.params().at(name).values(), t.values()) << name;

  const auto f = Model<float>::create(tiny_model(), 3);
  const auto fb = deserialize_checkpoint<float>(serialize_checkpoint(f, 0));
  for (const auto& [name, t] : f.params()) EXPECT_EQ(fb.params().at(name).values(), t.values());
  EXPECT_THROW(deserialize_checkpoint<float>(bytes), DataError);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto bytes = serialize_checkpoint(Model<double>::create(tiny_model(), 4), 1);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint<double>(bad_magic), DataError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_checkpoint<double>(bad_version), DataError);
  EXPECT_THROW(deserialize_checkpoint<double>(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(deserialize_checkpoint<double>(bytes + "x"), DataError);
  auto tampered = bytes;
  const auto pos = tampered.find("fusion = sa");
  ASSERT_NE(pos, std::string::npos);
  tampered.replace(pos, 11, "fusion = ca");
  EXPECT_THROW(deserialize_checkpoint<double>(tampered), DataError);
  EXPECT_THROW(deserialize_checkpoint<double>(std::string("F2")), DataError);
}

TEST(Checkpoint, FilesRoundTrip) {
  TempDir dir;
  const auto m = Model<double>::create(tiny_model(), 5);
  save_checkpoint(dir.path() / "ck" / "model.bin", m, 2);
  EXPECT_FALSE(fs::exists(dir.path() / "ck" / "model.bin.tmp"));
  const auto back = load_checkpoint<double>(dir.path() / "ck" / "model.bin");
  EXPECT_EQ(back.params().at("decoder.out.bias").values(), m.params().at("decoder.out.bias").values());
  EXPECT_EQ(read_checkpoint_header(read_file_bytes(dir.path() / "ck" / "model.bin")).epoch, 2u);
  EXPECT_THROW(load_checkpoint<double>(dir.path() / "none.bin"), DataError);
  EXPECT_EQ(model_config_from_text(m.config.to_text()).digest(), m.config.digest());
}

TEST(Config, ParsesEveryKey) {
  const auto cfg = parse_train_config(R"(# training
lr = 0.01
batch_size = 2
epochs = 12   # inline comment
gt_center_epochs = 8
static_per_dynamic = 3
seed = 99
precision = float
static_loss = lf_only
focal_alpha = 1.5
focal_beta = 3
val_every = 4
grad_clip = 100

channels = 16
center_channels = 24
matching = uniform
fusion = sca
strategy = maximum
top_k = 3
history = 5
nms_window = 5
sigma_gt = 1.5
sigma_match = 2
)");
  EXPECT_EQ(cfg.lr, 0.01);
  EXPECT_EQ(cfg.batch_size, 2u);
  EXPECT_EQ(cfg.epochs, 12u);
  EXPECT_EQ(cfg.gt_center_epochs, 8u);
  EXPECT_EQ(cfg.static_per_dynamic, 3u);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.precision, Precision::kFloat);
  EXPECT_EQ(cfg.static_loss, StaticLoss::kFocalOnly);
  EXPECT_EQ(cfg.focal_alpha, 1.5);
  EXPECT_EQ(cfg.focal_beta, 3);
  EXPECT_EQ(cfg.val_every, 4u);
  EXPECT_EQ(cfg.grad_clip, 100);
  EXPECT_EQ(cfg.model.channels, 16u);
  EXPECT_EQ(cfg.model.center_channels, 24u);
  EXPECT_EQ(cfg.model.matching, MatchingMode::kUniform);
  EXPECT_EQ(cfg.model.fusion, FusionMode::kSpatialChannel);
  EXPECT_EQ(cfg.model.strategy, CenterStrategy::kMaximum);
  EXPECT_EQ(cfg.model.center.top_k, 3u);
  EXPECT_EQ(cfg.model.center.history, 5u);
  EXPECT_EQ(cfg.model.center.nms_window, 5u);
  EXPECT_EQ(cfg.model.center.sigma_gt, 1.5);
  EXPECT_EQ(cfg.model.sigma_match, 2);
  EXPECT_EQ(to_string(Precision::kDouble), "double");
  EXPECT_EQ(to_string(StaticLoss::kFull), "full");
}

TEST(Config, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      parse_train_config(text);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("lr = 0.1\nwidth = 3\n").find("line 2: unknown config key 'width'"), std::string::npos);
  EXPECT_NE(message("lr = 0.1\n\nepochs = many\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("precision = half\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("just words\n").find("line 1"), std::string::npos);
}

TEST(Config, LoadAppliesSeedOverrideAndValidates) {
  TempDir dir;
  const auto path = dir.path() / "train.conf";
  write_text(path, "seed = 5\nepochs = 4\ngt_center_epochs = 2\n");
  {
    EnvGuard env(nullptr);
    EXPECT_EQ(load_train_config(path).seed, 5u);
  }
  {
    EnvGuard env("1234");
    EXPECT_EQ(load_train_config(path).seed, 1234u);
  }
  {
    EnvGuard env("abc");
    EXPECT_THROW(load_train_config(path), DataError);
  }
  write_text(path, "epochs = 2\ngt_center_epochs = 3\n");
  EXPECT_THROW(load_train_config(path), std::invalid_argument);
  EXPECT_THROW(load_train_config(dir.path() / "missing.conf"), DataError);
}
