#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "havt/harness/batching.hpp"
#include "havt/harness/run_config.hpp"
#include "havt/metrics.hpp"
#include "havt/model/network.hpp"

namespace havt {

struct EpochRecord {
  int epoch = 0;
  double loss_conf = 0, loss_cls = 0, loss_bbox = 0;  // train means
  double val_map = 0;                                 // mAP@0.5 on validation
};

struct TrainResult {
  HavtDetector model{nullptr};  // holds the best-epoch weights
  RunConfig config;             // with resolved input geometry
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_map = -1;
  bool stopped_early = false;
  std::string train_hash, val_hash;
};

struct TrainOptions {
  // When set: best.pt (+ best.cfg) and train_log.csv are written here.
  std::filesystem::path out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Fixes torch's thread count, deterministic mode and RNG for a run.
void seed_everything(uint64_t seed, int threads);

HavtDetector build_model(const RunConfig& cfg);

TrainResult train(const RunConfig& cfg, const PreparedSet& train_set, const PreparedSet& val_set,
                  const TrainOptions& opt = {});

// Post-processed detections per sample, in set order.
std::vector<std::vector<Detection>> predict(HavtDetector& model, const PreparedSet& set, const RunConfig& cfg,
                                            int batch = 16);
EvalReport evaluate_model(HavtDetector& model, const PreparedSet& set, const RunConfig& cfg);
std::vector<std::vector<GroundTruthBox>> ground_truth(const PreparedSet& set);

// Atomic: writes to a temporary name then renames. The run config goes to
// <file>.cfg next to the weights.
void save_checkpoint(HavtDetector& model, const RunConfig& cfg, const std::filesystem::path& file);
struct LoadedModel {
  HavtDetector model{nullptr};
  RunConfig config;
};
LoadedModel load_checkpoint(const std::filesystem::path& file);

void write_train_log(const std::vector<EpochRecord>& history, const std::filesystem::path& file);

}  // namespace havt
