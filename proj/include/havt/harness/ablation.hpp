#pragma once

#include <string>
#include <vector>

#include "havt/harness/trainer.hpp"

namespace havt {

enum class AblationAxis { kScales, kScaq, kHead, kMics, kFusion };

AblationAxis axis_from_name(const std::string& s);  // ConfigError on unknown
std::string axis_name(AblationAxis a);

struct AblationVariant {
  std::string setting;  // row label
  RunConfig config;
};

// One config per axis value, everything else taken from `base`.
std::vector<AblationVariant> ablation_variants(AblationAxis axis, const RunConfig& base);

struct AblationRow {
  std::string setting;
  EvalReport report;  // on the test split
  int best_epoch = 0;
  double best_val_map = 0;
  std::string train_hash, val_hash;
};

struct AblationTable {
  AblationAxis axis;
  std::vector<AblationRow> rows;
  std::string to_text() const;  // Study | Setting | mAP | AP(M) | AP(I) | AP(Eoff)
};

AblationTable run_ablation(AblationAxis axis, const RunConfig& base, const PreparedSet& train_set,
                           const PreparedSet& val_set, const PreparedSet& test_set,
                           const std::function<void(const std::string&)>& progress = {});

}  // namespace havt
