#include "havt/harness/batching.hpp"

#include <algorithm>
#include <cstdio>

#include "havt/dataset.hpp"
#include "havt/errors.hpp"
#include "havt/rng.hpp"

namespace havt {
namespace {

torch::Tensor to_torch(const FloatTensor& t) {
  return torch::from_blob(const_cast<float*>(t.data().data()), t.shape(), torch::kFloat32).clone();
}

std::string corpus_id(size_t i) {
  char id[32];
  std::snprintf(id, sizeof(id), "s%06zu", i);
  return id;
}

}  // namespace

std::string PreparedSet::id_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& s : samples) {
    for (char c : s.id + '\n') {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PreparedSample prepare_sample(const Sample& s, std::string id, const MelConfig& mel) {
  PreparedSample p;
  p.id = std::move(id);
  p.video = to_torch(s.clip.frames).permute({1, 0, 2, 3}).contiguous();
  p.mel = to_torch(compute_melspec(s.audio, mel).values);
  p.boxes = s.boxes;
  return p;
}

PreparedSet load_split(const std::filesystem::path& split_dir, const MelConfig& mel) {
  PreparedSet set;
  for (const auto& id : list_samples(split_dir)) {
    set.samples.push_back(prepare_sample(read_sample(split_dir / id), id, mel));
  }
  if (set.samples.empty()) throw IoError("no samples found in " + split_dir.string());
  return set;
}

PreparedSet generate_set(const SceneConfig& cfg, std::vector<size_t> indices, const MelConfig& mel) {
  validate(cfg);
  std::sort(indices.begin(), indices.end());
  PreparedSet set;
  set.samples.reserve(indices.size());
  for (size_t i : indices) {
    set.samples.push_back(prepare_sample(generate_scene(cfg, sample_seed(cfg.seed, i)), corpus_id(i), mel));
  }
  return set;
}

PreparedCorpus generate_prepared_corpus(const SceneConfig& cfg, size_t n, std::array<double, 3> ratios,
                                        const MelConfig& mel) {
  const Split split = split_dataset(n, ratios, cfg.seed);
  return {generate_set(cfg, split.train, mel), generate_set(cfg, split.val, mel), generate_set(cfg, split.test, mel)};
}

ModelConfig resolve_geometry(ModelConfig m, const PreparedSet& set) {
  if (set.samples.empty()) throw ValidationError("cannot size a model from an empty set");
  const auto& s = set.samples.front();
  if (s.video.size(2) != s.video.size(3)) throw ValidationError("video frames must be square");
  m.n_frames = static_cast<int>(s.video.size(1));
  m.image_size = static_cast<int>(s.video.size(2));
  m.n_mels = static_cast<int>(s.mel.size(1));
  m.mel_frames = static_cast<int>(s.mel.size(2));
  const int have = static_cast<int>(s.mel.size(0));
  if (have != m.mics && have != 6) {
    throw ConfigError("data has " + std::to_string(have) + " microphones, model wants " + std::to_string(m.mics));
  }
  return m;
}

std::array<int64_t, 6> flip_channel_order(int code) {
  // Grid index = row * 3 + column (see default_mic_layout).
  std::array<int64_t, 6> order{};
  for (int64_t i = 0; i < 6; ++i) {
    int64_t row = i / 3, col = i % 3;
    if (code & kFlipX) col = 2 - col;
    if (code & kFlipY) row = 1 - row;
    order[static_cast<size_t>(i)] = row * 3 + col;
  }
  return order;
}

namespace {

std::vector<GroundTruthBox> flip_boxes(std::vector<GroundTruthBox> boxes, int code, double w, double h) {
  for (auto& b : boxes) {
    if (code & kFlipX) b.box.cx = w - b.box.cx;
    if (code & kFlipY) b.box.cy = h - b.box.cy;
  }
  return boxes;
}

}  // namespace

Sample flip_sample(const Sample& s, int code) {
  if (s.audio.num_mics() != 6) throw ConfigError("flips need the six-microphone grid");
  Sample out = s;
  const int64_t D = s.clip.num_frames(), C = s.clip.channels(), H = s.clip.height(), W = s.clip.width();
  for (int64_t f = 0; f < D * C; ++f) {
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const int64_t sy = code & kFlipY ? H - 1 - y : y, sx = code & kFlipX ? W - 1 - x : x;
        out.clip.frames[(f * H + y) * W + x] = s.clip.frames[(f * H + sy) * W + sx];
      }
    }
  }
  const auto order = flip_channel_order(code);
  const int64_t n = s.audio.num_samples();
  for (int64_t m = 0; m < 6; ++m) {
    const auto src = s.audio.samples.data().subspan(static_cast<size_t>(order[static_cast<size_t>(m)] * n),
                                                    static_cast<size_t>(n));
    std::copy(src.begin(), src.end(), out.audio.samples.data().begin() + m * n);
  }
  out.boxes = flip_boxes(s.boxes, code, static_cast<double>(W), static_cast<double>(H));
  return out;
}

std::vector<int> epoch_flips(size_t n, uint64_t seed, int epoch) {
  Rng rng(mix_seed(seed, 0xf1190000ull + static_cast<uint64_t>(epoch)));
  std::vector<int> codes(n);
  for (auto& c : codes) c = static_cast<int>(rng.below(4));
  return codes;
}

Batch make_batch(const PreparedSet& set, std::span<const size_t> indices, int mics, std::span<const int> flips) {
  if (!flips.empty() && flips.size() != indices.size()) {
    throw ConfigError("make_batch: " + std::to_string(flips.size()) + " flip codes for " +
                      std::to_string(indices.size()) + " samples");
  }
  Batch b;
  std::vector<torch::Tensor> videos, mels;
  std::optional<torch::Tensor> channels;
  for (size_t j = 0; j < indices.size(); ++j) {
    const auto& s = set.samples.at(indices[j]);
    const int64_t have = s.mel.size(0);
    torch::Tensor video = s.video;
    torch::Tensor mel = s.mel;
    auto boxes = s.boxes;
    const int code = flips.empty() ? 0 : flips[j];
    if (code) {
      if (have != 6) throw ConfigError("flips need the six-microphone grid, data has " + std::to_string(have));
      const auto order = flip_channel_order(code);
      mel = mel.index_select(0, torch::tensor(std::vector<int64_t>(order.begin(), order.end()), torch::kInt64));
      std::vector<int64_t> dims;
      if (code & kFlipY) dims.push_back(2);
      if (code & kFlipX) dims.push_back(3);
      video = video.flip(dims);
      boxes = flip_boxes(std::move(boxes), code, static_cast<double>(video.size(3)), static_cast<double>(video.size(2)));
    }
    if (have != mics) {
      if (have != 6) {
        throw ConfigError("cannot select " + std::to_string(mics) + " of " + std::to_string(have) + " microphones");
      }
      if (!channels) {
        const auto idx = mic_subset(mics);
        channels = torch::tensor(std::vector<int64_t>(idx.begin(), idx.end()), torch::kInt64);
      }
      mel = mel.index_select(0, *channels);
    }
    videos.push_back(video);
    mels.push_back(mel);
    b.boxes.push_back(std::move(boxes));
    b.ids.push_back(s.id);
  }
  b.video = torch::stack(videos);
  b.mel = torch::stack(mels);
  return b;
}

std::vector<std::vector<size_t>> epoch_batches(size_t n, int batch, uint64_t seed, int epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0xe90c0000ull + static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<size_t>> out;
  for (size_t i = 0; i < n; i += static_cast<size_t>(batch)) {
    out.emplace_back(order.begin() + i, order.begin() + std::min(n, i + static_cast<size_t>(batch)));
  }
  return out;
}

}  // namespace havt
