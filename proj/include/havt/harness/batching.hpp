#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "havt/audio_frontend.hpp"
#include "havt/model/config.hpp"
#include "havt/synthetic_scene.hpp"
#include "havt/types.hpp"

namespace havt {

// A sample with its log-mel spectrogram computed once.
struct PreparedSample {
  std::string id;
  torch::Tensor video;  // [3, D, H, W]
  torch::Tensor mel;    // [M, F, T]
  std::vector<GroundTruthBox> boxes;
};

struct PreparedSet {
  std::vector<PreparedSample> samples;
  size_t size() const { return samples.size(); }
  // Hash of the sample ids, logged so runs can be checked for identical splits.
  std::string id_hash() const;
};

PreparedSample prepare_sample(const Sample& s, std::string id, const MelConfig& mel);

// Loads every sample directory of a split.
PreparedSet load_split(const std::filesystem::path& split_dir, const MelConfig& mel);

// Generates the given corpus indices in memory, with the seeds and ids
// generate_corpus would use.
PreparedSet generate_set(const SceneConfig& cfg, std::vector<size_t> indices, const MelConfig& mel);

// In-memory train/val/test split of a generated corpus, same assignment as
// generate_corpus.
struct PreparedCorpus {
  PreparedSet train, val, test;
};
PreparedCorpus generate_prepared_corpus(const SceneConfig& cfg, size_t n, std::array<double, 3> split,
                                        const MelConfig& mel);

// Fills image size, frame count and mel shape of the model from the data.
ModelConfig resolve_geometry(ModelConfig m, const PreparedSet& set);

struct Batch {
  torch::Tensor video;  // [B, 3, D, H, W]
  torch::Tensor mel;    // [B, mics, F, T]
  std::vector<std::vector<GroundTruthBox>> boxes;
  std::vector<std::string> ids;
};

// Stacks the listed samples. When the data has six channels and fewer mics
// are requested, the channels of that smaller layout are selected.
Batch make_batch(const PreparedSet& set, std::span<const size_t> indices, int mics,
                 std::span<const int> flips = {});

// Per-sample flip codes: bit 0 mirrors left-right, bit 1 top-bottom. The
// six-channel grid is symmetric under both, so a mirrored sample is another
// valid scene once its channels are permuted and its boxes
// mirrored.
inline constexpr int kFlipX = 1, kFlipY = 2;
std::array<int64_t, 6> flip_channel_order(int code);
Sample flip_sample(const Sample& s, int code);  // reference for tests
std::vector<int> epoch_flips(size_t n, uint64_t seed, int epoch);

// Shuffled batches for one epoch; depends only on (n, batch, seed, epoch).
std::vector<std::vector<size_t>> epoch_batches(size_t n, int batch, uint64_t seed, int epoch);

}  // namespace havt
