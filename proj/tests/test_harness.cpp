#include <gtest/gtest.h>

#include <fstream>

#include "havt/errors.hpp"
#include "havt/harness/ablation.hpp"
#include "model_util.hpp"
#include "test_util.hpp"

namespace havt {
namespace {

RunConfig tiny_run_config() {
  RunConfig c;
  c.model = testing::mini_model_config();
  c.mel.n_fft = 256;
  c.mel.hop = 128;
  c.mel.n_mels = 16;
  c.train.batch = 4;
  c.train.max_epochs = 3;
  c.train.patience = 3;
  return c;
}

const PreparedCorpus& tiny_corpus() {
  static const PreparedCorpus corpus =
      generate_prepared_corpus(testing::tiny_scene_config(), 24, {0.5, 0.25, 0.25}, tiny_run_config().mel);
  return corpus;
}

TEST(RunConfig, PaperDefaults) {
  const RunConfig c;
  EXPECT_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.train.batch, 16);
  EXPECT_EQ(c.train.max_epochs, 100);
  EXPECT_EQ(c.train.patience, 50);
  EXPECT_EQ(c.model.scales, (std::vector<int>{8, 16, 32}));
  EXPECT_EQ(c.model.n_scaq, 49);
  EXPECT_EQ(c.model.mics, 6);
  EXPECT_EQ(c.model.head, HeadKind::kDecoupled);
  EXPECT_EQ(c.model.fusion, FusionMode::kHavt);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c = desk_run_config();
  c.model.head = HeadKind::kCoupled;
  c.model.scales = {32, 16};
  c.model.mics = 3;
  c.train.lr = 3.5e-4;
  c.mel.normalization = MelConfig::Normalization::kPerChannel;
  const RunConfig back = run_config_from(ConfigFile::parse(to_config_text(c)));
  EXPECT_EQ(to_config_text(back), to_config_text(c));
  EXPECT_EQ(back.train.lr, 3.5e-4);
  EXPECT_EQ(back.model.scales, (std::vector<int>{32, 16}));
}

TEST(RunConfig, Errors) {
  EXPECT_THROW(run_config_from(ConfigFile::parse("model.depth=3")), ConfigError);
  EXPECT_THROW(run_config_from(ConfigFile::parse("model.head=shared")), ConfigError);
  EXPECT_THROW(run_config_from(ConfigFile::parse("model.scales=")), ConfigError);
  EXPECT_THROW(run_config_from(ConfigFile::parse("model.scales=8,12")), ConfigError);
  EXPECT_THROW(run_config_from(ConfigFile::parse("model.mics=4")), ConfigError);
  EXPECT_THROW(run_config_from(ConfigFile::parse("model.n_scaq=50")), ConfigError);
  EXPECT_THROW(run_config_from(ConfigFile::parse("train.lr=0")), ConfigError);
  EXPECT_THROW(run_config_from(ConfigFile::parse("train.batch=abc")), ConfigError);
}

TEST(CorpusConfig, TextRoundTrip) {
  CorpusConfig c = desk_corpus_config();
  c.scene.seed = 77;
  c.scene.mic_positions = default_mic_layout(3, c.scene.scene_extent_m);
  const CorpusConfig back = corpus_config_from(ConfigFile::parse(to_config_text(c)));
  EXPECT_EQ(to_config_text(back), to_config_text(c));
  EXPECT_EQ(back.scene.num_mics(), 3);
  EXPECT_EQ(back.n, 4000u);
}

TEST(Batching, EpochOrderIsSeededPermutation) {
  const auto a = epoch_batches(50, 16, 3, 1), b = epoch_batches(50, 16, 3, 1), c = epoch_batches(50, 16, 3, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a.back().size(), 2u);
  std::vector<size_t> all;
  for (const auto& x : a) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (size_t i = 0; i < 50; ++i) EXPECT_EQ(all[i], i);
}

TEST(Batching, MicrophoneSubsets) {
  const auto& set = tiny_corpus().train;
  const std::vector<size_t> idx{0, 1};
  const auto b6 = make_batch(set, idx, 6), b3 = make_batch(set, idx, 3), b1 = make_batch(set, idx, 1);
  EXPECT_EQ(b6.video.sizes().vec(), (std::vector<int64_t>{2, 3, 2, 32, 32}));
  EXPECT_EQ(b6.mel.sizes().vec(), (std::vector<int64_t>{2, 6, 16, 32}));
  EXPECT_TRUE(torch::equal(b3.mel.select(1, 1), b6.mel.select(1, 2)));
  EXPECT_TRUE(torch::equal(b3.mel.select(1, 2), b6.mel.select(1, 4)));
  EXPECT_TRUE(torch::equal(b1.mel.select(1, 0), b6.mel.select(1, 1)));
  EXPECT_EQ(b6.ids[0], set.samples[0].id);
}

TEST(Batching, FlipChannelOrders) {
  EXPECT_EQ(flip_channel_order(0), (std::array<int64_t, 6>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(flip_channel_order(kFlipX), (std::array<int64_t, 6>{2, 1, 0, 5, 4, 3}));
  EXPECT_EQ(flip_channel_order(kFlipY), (std::array<int64_t, 6>{3, 4, 5, 0, 1, 2}));
  EXPECT_EQ(flip_channel_order(kFlipX | kFlipY), (std::array<int64_t, 6>{5, 4, 3, 2, 1, 0}));
}

// Mirroring every vehicle of a scene and re-synthesizing gives the original
// audio with permuted channels, so flipped samples are valid scenes.
TEST(Batching, MirroredSceneAudioIsChannelPermutation) {
  SceneConfig cfg = testing::tiny_scene_config();
  cfg.n_vehicles = {3, 3};
  cfg.state_priors = {0.5, 0.5, 0.0};
  for (uint64_t seed = 0; seed < 4; ++seed) {
    const SceneDescription d = layout_scene(cfg, seed);
    const AudioOptions clean{false, false};
    const AudioSegment a = synthesize_audio(d, clean);
    for (int code : {kFlipX, kFlipY, kFlipX | kFlipY}) {
      SceneDescription m = d;
      for (auto& v : m.vehicles) {
        if (code & kFlipX) {
          v.x = cfg.image_size - v.x - v.w;
          v.heading.x = -v.heading.x;
        }
        if (code & kFlipY) {
          v.y = cfg.image_size - v.y - v.h;
          v.heading.y = -v.heading.y;
        }
      }
      Sample s;
      s.clip = render_video(d);
      s.audio = a;
      const Sample flipped = flip_sample(s, code);
      const AudioSegment b = synthesize_audio(m, clean);
      float worst = 0;
      for (int64_t i = 0; i < b.samples.numel(); ++i) {
        worst = std::max(worst, std::abs(b.samples[i] - flipped.audio.samples[i]));
      }
      EXPECT_LT(worst, 1e-6) << "seed " << seed << " code " << code;
    }
  }
}

TEST(Batching, FlippedBatchMatchesFlippedSample) {
  const auto cfg = testing::tiny_scene_config();
  const auto mel = tiny_run_config().mel;
  PreparedSet set;
  std::vector<Sample> raw;
  for (uint64_t i = 0; i < 3; ++i) {
    raw.push_back(generate_scene(cfg, 40 + i));
    set.samples.push_back(prepare_sample(raw.back(), "s" + std::to_string(i), mel));
  }
  const std::vector<size_t> idx{0, 1, 2};
  const std::vector<int> codes{kFlipX, kFlipY, kFlipX | kFlipY};
  for (int mics : {6, 3, 1}) {
    const Batch b = make_batch(set, idx, mics, codes);
    PreparedSet ref;
    for (size_t i = 0; i < 3; ++i) ref.samples.push_back(prepare_sample(flip_sample(raw[i], codes[i]), "r", mel));
    const Batch want = make_batch(ref, idx, mics);
    EXPECT_TRUE(torch::equal(b.video, want.video));
    EXPECT_TRUE(torch::allclose(b.mel, want.mel, 1e-5, 1e-5)) << "mics " << mics;
    EXPECT_EQ(b.boxes, want.boxes);
  }
  EXPECT_THROW(make_batch(set, idx, 6, std::vector<int>{1}), ConfigError);
}

TEST(Batching, EpochFlipsAreSeeded) {
  EXPECT_EQ(epoch_flips(50, 3, 1), epoch_flips(50, 3, 1));
  EXPECT_NE(epoch_flips(50, 3, 1), epoch_flips(50, 3, 2));
  const auto f = epoch_flips(400, 0, 1);
  for (int c = 0; c < 4; ++c) EXPECT_GT(std::count(f.begin(), f.end(), c), 60);
}

TEST(Batching, GeneratedSetMatchesWrittenCorpus) {
  testing::TempDir dir("harness_corpus");
  const auto cfg = testing::tiny_scene_config();
  generate_corpus(cfg, 12, dir.path(), {0.5, 0.25, 0.25});
  const auto mel = tiny_run_config().mel;
  const auto mem = generate_prepared_corpus(cfg, 12, {0.5, 0.25, 0.25}, mel);
  const auto disk = load_split(dir.path() / "val", mel);
  ASSERT_EQ(disk.size(), mem.val.size());
  EXPECT_EQ(disk.id_hash(), mem.val.id_hash());
  for (size_t i = 0; i < disk.size(); ++i) {
    EXPECT_TRUE(torch::equal(disk.samples[i].video, mem.val.samples[i].video));
    EXPECT_TRUE(torch::equal(disk.samples[i].mel, mem.val.samples[i].mel));
    EXPECT_EQ(disk.samples[i].boxes, mem.val.samples[i].boxes);
  }
}

TEST(Trainer, SameSeedSameRun) {
  const auto& d = tiny_corpus();
  const auto a = train(tiny_run_config(), d.train, d.val);
  const auto b = train(tiny_run_config(), d.train, d.val);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].loss_conf, b.history[i].loss_conf);
    EXPECT_EQ(a.history[i].loss_cls, b.history[i].loss_cls);
    EXPECT_EQ(a.history[i].loss_bbox, b.history[i].loss_bbox);
    EXPECT_EQ(a.history[i].val_map, b.history[i].val_map);
  }
  auto ma = a.model, mb = b.model;
  EXPECT_EQ(evaluate_model(ma, d.test, a.config).to_text(), evaluate_model(mb, d.test, b.config).to_text());
}

TEST(Trainer, ZeroPatienceStopsAtFirstNonImprovement) {
  const auto& d = tiny_corpus();
  RunConfig c = tiny_run_config();
  c.train.patience = 0;
  c.train.max_epochs = 12;
  const auto r = train(c, d.train, d.val);
  double best = -1;
  for (size_t i = 0; i + 1 < r.history.size(); ++i) {
    EXPECT_GT(r.history[i].val_map, best);
    best = r.history[i].val_map;
  }
  if (r.stopped_early) {
    EXPECT_LE(r.history.back().val_map, best);
  } else {
    EXPECT_EQ(r.history.size(), 12u);
  }
}

TEST(Trainer, KeepsBestEpochAndWritesArtifacts) {
  const auto& d = tiny_corpus();
  testing::TempDir dir("harness_run");
  RunConfig c = tiny_run_config();
  c.train.max_epochs = 4;
  TrainOptions opt;
  opt.out_dir = dir.path();
  auto r = train(c, d.train, d.val, opt);
  double best = -1;
  int best_epoch = 0;
  for (const auto& h : r.history) {
    if (h.val_map > best) {
      best = h.val_map;
      best_epoch = h.epoch;
    }
  }
  EXPECT_EQ(r.best_val_map, best);
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_EQ(evaluate_model(r.model, d.val, r.config).map_50, best);

  std::ifstream log(dir.path() / "train_log.csv");
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, "epoch,loss_conf,loss_cls,loss_bbox,val_map");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, static_cast<int>(r.history.size()));

  EXPECT_FALSE(std::filesystem::exists(dir.path() / "best.pt.tmp"));
  auto loaded = load_checkpoint(dir.path() / "best.pt");
  EXPECT_EQ(to_config_text(loaded.config), to_config_text(r.config));
  EXPECT_EQ(evaluate_model(loaded.model, d.test, loaded.config).to_text(),
            evaluate_model(r.model, d.test, r.config).to_text());
}

TEST(Trainer, NonFiniteInputAbortsWithDiagnostics) {
  auto d = tiny_corpus();
  d.train.samples[0].mel = d.train.samples[0].mel.clone();
  d.train.samples[0].mel[0][0][0] = std::nanf("");
  RunConfig c = tiny_run_config();
  c.train.batch = 64;
  try {
    train(c, d.train, d.val);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("epoch 1"), std::string::npos) << m;
    EXPECT_NE(m.find("not finite"), std::string::npos) << m;
  }
}

TEST(Trainer, MissingCheckpointIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/best.pt"), IoError);
}

TEST(Ablation, VariantRows) {
  const RunConfig base;
  const auto head = ablation_variants(AblationAxis::kHead, base);
  ASSERT_EQ(head.size(), 2u);
  EXPECT_EQ(head[0].setting, "Coupled");
  EXPECT_EQ(head[0].config.model.head, HeadKind::kCoupled);
  EXPECT_EQ(head[1].setting, "Decoupled");
  const auto scaq = ablation_variants(AblationAxis::kScaq, base);
  ASSERT_EQ(scaq.size(), 3u);
  EXPECT_EQ(scaq[1].config.model.n_scaq, 196);
  const auto mics = ablation_variants(AblationAxis::kMics, base);
  ASSERT_EQ(mics.size(), 3u);
  EXPECT_EQ(mics[0].config.model.mics, 1);
  const auto scales = ablation_variants(AblationAxis::kScales, base);
  ASSERT_EQ(scales.size(), 3u);
  EXPECT_EQ(scales[0].setting, "7x7");
  EXPECT_EQ(scales[2].setting, "7x7,14x14,28x28");
  EXPECT_EQ(scales[2].config.model.scales, (std::vector<int>{32, 16, 8}));
  EXPECT_THROW(axis_from_name("depth"), ConfigError);
}

TEST(Ablation, TableSharesSplits) {
  const auto& d = tiny_corpus();
  RunConfig c = tiny_run_config();
  c.train.max_epochs = 1;
  const auto table = run_ablation(AblationAxis::kHead, c, d.train, d.val, d.test);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[0].train_hash, table.rows[1].train_hash);
  const std::string text = table.to_text();
  EXPECT_NE(text.find("(C) Detection Head"), std::string::npos);
  EXPECT_NE(text.find(" | Coupled | "), std::string::npos);
  EXPECT_NE(text.find(" | Decoupled | "), std::string::npos);
}

}  // namespace
}  // namespace havt
