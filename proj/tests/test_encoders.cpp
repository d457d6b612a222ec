#include <gtest/gtest.h>

#include "havt/errors.hpp"
#include "havt/model/encoders.hpp"
#include "model_util.hpp"

namespace havt {
namespace {

using testing::max_abs_diff;

TEST(VisualEncoder, PyramidShapesAt224) {
  torch::manual_seed(0);
  ModelConfig c;
  VisualEncoder enc(c);
  torch::NoGradGuard ng;
  const auto p = enc->forward(torch::rand({1, 3, 16, 224, 224}));
  EXPECT_EQ(p.p8.sizes().vec(), (std::vector<int64_t>{1, 32, 8, 28, 28}));
  EXPECT_EQ(p.p16.sizes().vec(), (std::vector<int64_t>{1, 64, 4, 14, 14}));
  EXPECT_EQ(p.p32.sizes().vec(), (std::vector<int64_t>{1, 128, 2, 7, 7}));
  EXPECT_EQ(c.temporal_extents(), (std::array<int, 3>{8, 4, 2}));
}

TEST(VisualEncoder, RejectsOtherSizes) {
  ModelConfig c;
  c.n_frames = 2;
  VisualEncoder enc(c);
  torch::NoGradGuard ng;
  EXPECT_THROW(enc->forward(torch::rand({1, 3, 2, 192, 192})), ShapeError);
  EXPECT_THROW(enc->forward(torch::rand({1, 3, 3, 224, 224})), ShapeError);
  EXPECT_THROW(enc->forward(torch::rand({3, 2, 224, 224})), ShapeError);
}

TEST(VisualEncoder, ZeroInputWithZeroedNormsIsFinite) {
  auto c = testing::mini_model_config();
  VisualEncoder enc(c);
  enc->zero_final_norms();
  torch::NoGradGuard ng;
  const auto p = enc->forward(torch::zeros({2, 3, c.n_frames, c.image_size, c.image_size}));
  for (int l = 0; l < 3; ++l) EXPECT_TRUE(torch::isfinite(p.level(l)).all().item<bool>());
}

TEST(VisualEncoder, FiniteOnLargeInputs) {
  auto c = testing::mini_model_config();
  VisualEncoder enc(c);
  torch::NoGradGuard ng;
  const auto p = enc->forward(torch::rand({2, 3, c.n_frames, c.image_size, c.image_size}) * 20 - 10);
  for (int l = 0; l < 3; ++l) EXPECT_TRUE(torch::isfinite(p.level(l)).all().item<bool>());
}

TEST(VisualEncoder, FrameShiftChangesFinestLevelOnly) {
  torch::manual_seed(1);
  auto c = testing::mini_model_config();
  c.n_frames = 4;
  VisualEncoder enc(c);
  torch::NoGradGuard ng;
  const auto clip = torch::rand({1, 3, 5, c.image_size, c.image_size});
  const auto a = enc->forward(clip.slice(2, 0, 4));
  const auto b = enc->forward(clip.slice(2, 1, 5));
  EXPECT_EQ(a.p8.sizes(), b.p8.sizes());
  EXPECT_GT(max_abs_diff(a.p8, b.p8), 1e-6);
}

TEST(AudioEncoder, CeilStrideShape) {
  ModelConfig c;
  AudioEncoder enc(c);
  torch::NoGradGuard ng;
  const auto y = enc->forward(torch::randn({1, 6, 128, 469}));
  EXPECT_EQ(y.sizes().vec(), (std::vector<int64_t>{1, 128, 4, 15}));
  EXPECT_EQ(c.audio_grid(), (std::array<int, 2>{4, 15}));
}

TEST(AudioEncoder, SingleMicConfig) {
  ModelConfig c;
  c.mics = 1;
  AudioEncoder enc(c);
  torch::NoGradGuard ng;
  EXPECT_EQ(enc->forward(torch::randn({1, 1, 128, 469})).size(3), 15);
  EXPECT_THROW(enc->forward(torch::randn({1, 6, 128, 469})), ShapeError);
}

TEST(AudioEncoder, ChannelOrderMatters) {
  torch::manual_seed(2);
  auto c = testing::mini_model_config();
  AudioEncoder enc(c);
  torch::NoGradGuard ng;
  const auto x = torch::randn({1, 6, c.n_mels, c.mel_frames});
  const auto perm = torch::tensor({5, 4, 3, 2, 1, 0}, torch::kInt64);
  EXPECT_GT(max_abs_diff(enc->forward(x), enc->forward(x.index_select(1, perm))), 1e-6);
}

TEST(TemporalSqueeze, RemovesTimeAndUnifiesChannels) {
  torch::NoGradGuard ng;
  TemporalSqueeze s8(32, 8, 128), s32(128, 2, 128);
  EXPECT_EQ(s8->forward(torch::randn({1, 32, 8, 28, 28})).sizes().vec(), (std::vector<int64_t>{1, 128, 28, 28}));
  EXPECT_EQ(s32->forward(torch::randn({1, 128, 2, 7, 7})).sizes().vec(), (std::vector<int64_t>{1, 128, 7, 7}));
  EXPECT_THROW(s8->forward(torch::randn({1, 32, 4, 28, 28})), ShapeError);
  EXPECT_THROW(s8->forward(torch::randn({1, 16, 8, 28, 28})), ShapeError);
}

TEST(TemporalSqueeze, IdentityWeightsOnSingleStep) {
  TemporalSqueeze s(6, 1, 6);
  torch::NoGradGuard ng;
  s->conv->weight.copy_(torch::eye(6).view({6, 6, 1, 1, 1}));
  s->conv->bias.zero_();
  const auto x = torch::randn({2, 6, 1, 5, 5});
  EXPECT_TRUE(torch::equal(s->forward(x), x.squeeze(2)));
}

TEST(Encoders, FiniteDifferenceGradients) {
  torch::manual_seed(3);
  auto c = testing::mini_model_config();
  c.image_size = 8;
  c.n_mels = 8;
  c.mel_frames = 8;
  VisualEncoder venc(c);
  AudioEncoder aenc(c);
  venc->to(torch::kDouble);
  aenc->to(torch::kDouble);
  const auto video = torch::rand({2, 3, c.n_frames, 8, 8}, torch::kDouble);
  const auto mel = torch::randn({2, 6, 8, 8}, torch::kDouble);
  std::vector<torch::Tensor> w;
  {
    torch::NoGradGuard ng;
    const auto p = venc->forward(video);
    for (int l = 0; l < 3; ++l) w.push_back(torch::randn_like(p.level(l)));
    w.push_back(torch::randn_like(aenc->forward(mel)));
  }
  const auto vloss = [&] {
    const auto p = venc->forward(video);
    return (p.p8 * w[0]).sum() + (p.p16 * w[1]).sum() + (p.p32 * w[2]).sum();
  };
  const auto aloss = [&] { return (aenc->forward(mel) * w[3]).sum(); };
  const auto rv = testing::finite_difference_check(*venc, vloss, testing::sample_entries(*venc, 3, 11));
  const auto ra = testing::finite_difference_check(*aenc, aloss, testing::sample_entries(*aenc, 3, 12));
  EXPECT_EQ(rv.failed, 0) << rv.first_failure << " worst=" << rv.worst;
  EXPECT_EQ(ra.failed, 0) << ra.first_failure << " worst=" << ra.worst;
  EXPECT_GT(rv.checked + ra.checked, 50);
}

}  // namespace
}  // namespace havt
