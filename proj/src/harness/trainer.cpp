#include "havt/harness/trainer.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "havt/errors.hpp"

namespace havt {
namespace fs = std::filesystem;
namespace {

using Snapshot = std::vector<torch::Tensor>;

Snapshot snapshot(HavtDetector& m) {
  Snapshot s;
  for (const auto& p : m->parameters()) s.push_back(p.detach().clone());
  for (const auto& b : m->buffers()) s.push_back(b.detach().clone());
  return s;
}

void restore(HavtDetector& m, const Snapshot& s) {
  torch::NoGradGuard ng;
  size_t i = 0;
  for (auto& p : m->parameters()) p.copy_(s.at(i++));
  for (auto& b : m->buffers()) b.copy_(s.at(i++));
}

void write_text_atomic(const std::string& text, const fs::path& file) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream o(tmp);
    if (!o) throw IoError("cannot write " + tmp.string());
    o << text;
    if (!o) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, file);
}

}  // namespace

void seed_everything(uint64_t seed, int threads) {
  torch::set_num_threads(threads);
  at::globalContext().setDeterministicAlgorithms(true, false);
  torch::manual_seed(seed);
}

HavtDetector build_model(const RunConfig& cfg) { return HavtDetector(cfg.model); }

std::vector<std::vector<GroundTruthBox>> ground_truth(const PreparedSet& set) {
  std::vector<std::vector<GroundTruthBox>> gts;
  for (const auto& s : set.samples) gts.push_back(s.boxes);
  return gts;
}

std::vector<std::vector<Detection>> predict(HavtDetector& model, const PreparedSet& set, const RunConfig& cfg,
                                            int batch) {
  const bool was_training = model->is_training();
  model->eval();
  torch::NoGradGuard ng;
  std::vector<std::vector<Detection>> all;
  for (size_t i = 0; i < set.size(); i += static_cast<size_t>(batch)) {
    std::vector<size_t> idx;
    for (size_t k = i; k < std::min(set.size(), i + static_cast<size_t>(batch)); ++k) idx.push_back(k);
    const Batch b = make_batch(set, idx, cfg.model.mics);
    const auto out = model->forward(b.video, b.mel);
    auto dets = postprocess(out.heads, cfg.model.image_size, {cfg.eval.score_threshold, cfg.eval.nms_iou});
    for (auto& d : dets) all.push_back(std::move(d));
  }
  model->train(was_training);
  return all;
}

EvalReport evaluate_model(HavtDetector& model, const PreparedSet& set, const RunConfig& cfg) {
  return evaluate(predict(model, set, cfg), ground_truth(set));
}

void save_checkpoint(HavtDetector& model, const RunConfig& cfg, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  write_text_atomic(to_config_text(cfg), file.string() + ".cfg");
  const fs::path tmp = file.string() + ".tmp";
  torch::save(model, tmp.string());
  fs::rename(tmp, file);
}

LoadedModel load_checkpoint(const fs::path& file) {
  const fs::path cfg_file = file.string() + ".cfg";
  if (!fs::exists(file) || !fs::exists(cfg_file)) {
    throw IoError("checkpoint " + file.string() + " (or its .cfg) does not exist");
  }
  LoadedModel lm;
  lm.config = run_config_from(ConfigFile::load(cfg_file));
  lm.model = HavtDetector(lm.config.model);
  try {
    torch::load(lm.model, file.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot load checkpoint " + file.string() + ": " + e.what_without_backtrace());
  }
  lm.model->eval();
  return lm;
}

void write_train_log(const std::vector<EpochRecord>& history, const fs::path& file) {
  std::ostringstream o;
  o << "epoch,loss_conf,loss_cls,loss_bbox,val_map\n" << std::setprecision(8);
  for (const auto& r : history) {
    o << r.epoch << ',' << r.loss_conf << ',' << r.loss_cls << ',' << r.loss_bbox << ',' << r.val_map << '\n';
  }
  write_text_atomic(o.str(), file);
}

TrainResult train(const RunConfig& cfg, const PreparedSet& train_set, const PreparedSet& val_set,
                  const TrainOptions& opt) {
  cfg.validate();
  TrainResult r;
  r.config = cfg;
  r.config.model = resolve_geometry(cfg.model, train_set);
  if (resolve_geometry(cfg.model, val_set).image_size != r.config.model.image_size) {
    throw ValidationError("train and validation sets have different geometry");
  }
  r.train_hash = train_set.id_hash();
  r.val_hash = val_set.id_hash();
  const RunConfig& rc = r.config;

  seed_everything(rc.train.seed, rc.train.threads);
  r.model = build_model(rc);
  r.model->train();
  torch::optim::Adam adam(r.model->parameters(), torch::optim::AdamOptions(rc.train.lr));

  const fs::path ckpt = opt.out_dir.empty() ? fs::path() : opt.out_dir / "best.pt";
  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);
  Snapshot best = snapshot(r.model);
  int since_best = 0;
  const bool flip = rc.train.flip_augment && train_set.size() > 0 && train_set.samples.front().mel.size(0) == 6;

  for (int epoch = 1; epoch <= rc.train.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto batches = epoch_batches(train_set.size(), rc.train.batch, rc.train.seed, epoch);
    const std::vector<int> flips = flip ? epoch_flips(train_set.size(), rc.train.seed, epoch) : std::vector<int>{};
    for (size_t k = 0; k < batches.size(); ++k) {
      std::vector<int> codes;
      for (size_t i : batches[k]) {
        if (flip) codes.push_back(flips[i]);
      }
      const Batch b = make_batch(train_set, batches[k], rc.model.mics, codes);
      const Targets t = assign_targets(b.boxes, rc.model);
      adam.zero_grad();
      const auto out = r.model->forward(b.video, b.mel);
      LossBreakdown l;
      try {
        l = compute_loss(out.heads, t, rc.model.image_size);
      } catch (const NumericError& e) {
        restore(r.model, best);
        if (!opt.out_dir.empty()) write_train_log(r.history, opt.out_dir / "train_log.csv");
        std::ostringstream msg;
        msg << "epoch " << epoch << " batch " << k << ": " << e.what() << "; weights restored to epoch "
            << r.best_epoch;
        if (!ckpt.empty() && r.best_epoch > 0) msg << " (" << ckpt.string() << ")";
        throw NumericError(msg.str());
      }
      l.l_total.backward();
      adam.step();
      rec.loss_conf += l.conf();
      rec.loss_cls += l.cls();
      rec.loss_bbox += l.bbox();
    }
    const double nb = static_cast<double>(batches.size());
    rec.loss_conf /= nb;
    rec.loss_cls /= nb;
    rec.loss_bbox /= nb;
    rec.val_map = evaluate_model(r.model, val_set, rc).map_50;
    r.history.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);

    if (rec.val_map > r.best_val_map) {
      r.best_val_map = rec.val_map;
      r.best_epoch = epoch;
      best = snapshot(r.model);
      if (!ckpt.empty()) save_checkpoint(r.model, rc, ckpt);
      since_best = 0;
    } else if (++since_best > rc.train.patience) {
      r.stopped_early = true;
    }
    if (!opt.out_dir.empty()) write_train_log(r.history, opt.out_dir / "train_log.csv");
    if (r.stopped_early) break;
  }
  restore(r.model, best);
  r.model->eval();
  return r;
}

}  // namespace havt
