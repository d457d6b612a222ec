#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "havt/types.hpp"

namespace havt {

// On-disk layout of one sample directory:
//   video.f32 / audio.f32   raw little-endian float32, row-major
//   video.shape / audio.shape   "dtype=float32" and "shape=d0,d1,..." lines
//   boxes.txt   one "cls cx cy w h" line per box
//   meta.txt    key=value lines; always carries frame_rate, sample_rate, seed
void write_sample(const Sample& sample, const std::filesystem::path& dir);
Sample read_sample(const std::filesystem::path& dir);

void write_tensor(const FloatTensor& t, const std::filesystem::path& blob,
                  const std::filesystem::path& shape_file);
FloatTensor read_tensor(const std::filesystem::path& blob,
                        const std::filesystem::path& shape_file);

std::vector<GroundTruthBox> read_boxes(const std::filesystem::path& file);
void write_boxes(const std::vector<GroundTruthBox>& boxes,
                 const std::filesystem::path& file);

// Sorted sample ids (directory names) under a split directory.
std::vector<std::string> list_samples(const std::filesystem::path& split_dir);

struct Split {
  std::vector<size_t> train, val, test;
};

// Deterministic shuffled partition of [0, n). Sizes are floor(r * n) for
// train and val; test takes the remainder.
Split split_dataset(size_t n, std::array<double, 3> ratios, uint64_t seed);

// Order-independent digest of an index list, logged so runs can prove they
// trained on the same split.
std::string split_hash(const std::vector<size_t>& indices);

}  // namespace havt
