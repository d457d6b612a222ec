#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>

#include "havt/audio_frontend.hpp"
#include "havt/config_file.hpp"
#include "havt/model/config.hpp"
#include "havt/synthetic_scene.hpp"

namespace havt {

struct TrainConfig {
  double lr = 1e-3;
  int batch = 16;
  int max_epochs = 100;
  int patience = 50;
  uint64_t seed = 0;
  int threads = 1;
  // Random left-right / top-bottom mirroring of training samples, with the
  // six-channel mic grid permuted to match. Off for other channel counts.
  bool flip_augment = true;
};

struct EvalConfig {
  double score_threshold = 0.05;
  double nms_iou = 0.45;
};

// Everything a training run depends on. Input geometry fields of `model`
// (image size, frames, mel shape) are filled from the data at train time;
// model.mics selects the microphone subset.
struct RunConfig {
  ModelConfig model;
  MelConfig mel;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;  // throws ConfigError
};

struct CorpusConfig {
  SceneConfig scene;
  size_t n = 1000;
  std::array<double, 3> split{0.8, 0.1, 0.1};
};

// Keys recognized in config files, across all sections.
const std::set<std::string>& known_config_keys();

RunConfig run_config_from(const ConfigFile& f, RunConfig base = {});
CorpusConfig corpus_config_from(const ConfigFile& f, CorpusConfig base = {});
// Round-trips through run_config_from.
std::string to_config_text(const RunConfig& c);
std::string to_config_text(const CorpusConfig& c);

// Reduced-size setup that trains in minutes on one CPU core: 96x96 video of
// 4 frames, 1 s of 16 kHz audio, E=32, two attention layers.
CorpusConfig desk_corpus_config();
RunConfig desk_run_config();

}  // namespace havt
