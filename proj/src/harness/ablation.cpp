#include "havt/harness/ablation.hpp"

#include <cstdio>
#include <sstream>

#include "havt/errors.hpp"

namespace havt {
namespace {

std::string study_title(AblationAxis a) {
  switch (a) {
    case AblationAxis::kScales: return "(A) Multiscale Visual Fusion";
    case AblationAxis::kScaq: return "(B) SCAQ/AVCE Resolution";
    case AblationAxis::kHead: return "(C) Detection Head";
    case AblationAxis::kMics: return "(D) Number of Microphones";
    case AblationAxis::kFusion: return "(E) Fusion";
  }
  return "?";
}

std::string grid_label(const RunConfig& c, std::vector<int> strides) {
  std::string s;
  for (int st : strides) {
    const int n = c.model.grid(st);
    if (!s.empty()) s += ",";
    s += std::to_string(n) + "x" + std::to_string(n);
  }
  return s;
}

}  // namespace

AblationAxis axis_from_name(const std::string& s) {
  if (s == "scales") return AblationAxis::kScales;
  if (s == "scaq") return AblationAxis::kScaq;
  if (s == "head") return AblationAxis::kHead;
  if (s == "mics") return AblationAxis::kMics;
  if (s == "fusion") return AblationAxis::kFusion;
  throw ConfigError("unknown ablation axis '" + s + "' (scales, scaq, head, mics, fusion)");
}

std::string axis_name(AblationAxis a) {
  switch (a) {
    case AblationAxis::kScales: return "scales";
    case AblationAxis::kScaq: return "scaq";
    case AblationAxis::kHead: return "head";
    case AblationAxis::kMics: return "mics";
    case AblationAxis::kFusion: return "fusion";
  }
  return "?";
}

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const RunConfig& base) {
  std::vector<AblationVariant> out;
  auto add = [&](std::string label, auto edit) {
    RunConfig c = base;
    edit(c);
    out.push_back({std::move(label), c});
  };
  switch (axis) {
    case AblationAxis::kScales:
      for (std::vector<int> s : {std::vector<int>{32}, {32, 16}, {32, 16, 8}}) {
        add(grid_label(base, s), [&](RunConfig& c) { c.model.scales = s; });
      }
      break;
    case AblationAxis::kScaq:
      for (int n : {49, 196, 784}) {
        const int g = n == 49 ? 7 : n == 196 ? 14 : 28;
        add("N_SCAQ=" + std::to_string(n) + " (" + std::to_string(g) + "x" + std::to_string(g) + ")",
            [&](RunConfig& c) { c.model.n_scaq = n; });
      }
      break;
    case AblationAxis::kHead:
      add("Coupled", [](RunConfig& c) { c.model.head = HeadKind::kCoupled; });
      add("Decoupled", [](RunConfig& c) { c.model.head = HeadKind::kDecoupled; });
      break;
    case AblationAxis::kMics:
      for (int m : {1, 3, 6}) add(std::to_string(m), [&](RunConfig& c) { c.model.mics = m; });
      break;
    case AblationAxis::kFusion:
      add("video only", [](RunConfig& c) { c.model.fusion = FusionMode::kNone; });
      add("Feature Concat.", [](RunConfig& c) { c.model.fusion = FusionMode::kConcat; });
      add("HAVT", [](RunConfig& c) { c.model.fusion = FusionMode::kHavt; });
      break;
  }
  return out;
}

std::string AblationTable::to_text() const {
  std::ostringstream o;
  o << "Study | Setting | mAP | AP(M) | AP(I) | AP(Eoff)\n" << study_title(axis) << "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, " | %s | %.2f | %.2f | %.2f | %.2f\n", r.setting.c_str(), 100 * r.report.map_50,
                  100 * r.report.ap_per_class[0], 100 * r.report.ap_per_class[1], 100 * r.report.ap_per_class[2]);
    o << buf;
  }
  if (!rows.empty()) o << "splits: train=" << rows.front().train_hash << " val=" << rows.front().val_hash << "\n";
  return o.str();
}

AblationTable run_ablation(AblationAxis axis, const RunConfig& base, const PreparedSet& train_set,
                           const PreparedSet& val_set, const PreparedSet& test_set,
                           const std::function<void(const std::string&)>& progress) {
  AblationTable table{axis, {}};
  for (const auto& v : ablation_variants(axis, base)) {
    if (progress) progress("training " + axis_name(axis) + " = " + v.setting);
    TrainResult tr = train(v.config, train_set, val_set);
    AblationRow row;
    row.setting = v.setting;
    row.report = evaluate_model(tr.model, test_set, tr.config);
    row.best_epoch = tr.best_epoch;
    row.best_val_map = tr.best_val_map;
    row.train_hash = tr.train_hash;
    row.val_hash = tr.val_hash;
    if (!table.rows.empty() && (row.train_hash != table.rows.front().train_hash ||
                                row.val_hash != table.rows.front().val_hash)) {
      throw Error("ablation rows were trained on different splits");
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace havt
