// havt: corpus generation, training, evaluation and ablations.
#include <CLI11.hpp>

#include <chrono>
#include <iostream>

#include "havt/errors.hpp"
#include "havt/harness/ablation.hpp"

namespace fs = std::filesystem;
using namespace havt;

namespace {

struct Common {
  std::string preset = "paper";
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--preset", c.preset, "Base settings: paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  app->add_option("--config", c.config, "File of section.key=value lines");
  app->add_option("--set", c.sets, "Override, e.g. --set train.lr=5e-4 (repeatable)");
}

ConfigFile overrides(const Common& c) {
  ConfigFile f = c.config.empty() ? ConfigFile() : ConfigFile::load(c.config);
  for (const auto& s : c.sets) f.set(s);
  return f;
}

RunConfig run_config(const Common& c) {
  return run_config_from(overrides(c), c.preset == "desk" ? desk_run_config() : RunConfig{});
}

CorpusConfig corpus_config(const Common& c) {
  return corpus_config_from(overrides(c), c.preset == "desk" ? desk_corpus_config() : CorpusConfig{});
}

void log(const std::string& msg) { std::cerr << "[havt] " << msg << std::endl; }

std::string epoch_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch %d conf=%.4f cls=%.4f bbox=%.4f val_mAP@0.5=%.4f", r.epoch, r.loss_conf,
                r.loss_cls, r.loss_bbox, r.val_map);
  return buf;
}

fs::path resolve_checkpoint(const fs::path& p) {
  for (const fs::path& c : {p, fs::path(p.string() + ".pt"), p / "best.pt", fs::path("run") / (p.string() + ".pt")}) {
    if (fs::is_regular_file(c)) return c;
  }
  throw IoError("no checkpoint found for '" + p.string() + "'");
}

int cmd_gen(const Common& c, size_t n, long long seed, const fs::path& out) {
  CorpusConfig cc = corpus_config(c);
  if (n > 0) cc.n = n;
  if (seed >= 0) cc.scene.seed = static_cast<uint64_t>(seed);
  log("generating " + std::to_string(cc.n) + " samples into " + out.string());
  const Manifest m = generate_corpus(cc.scene, cc.n, out, cc.split);
  fs::create_directories(out);
  std::ofstream(out / "corpus.cfg") << to_config_text(cc);
  const auto t = m.totals();
  std::cout << "samples=" << m.entries.size() << " moving=" << t[0] << " idling=" << t[1] << " engine_off=" << t[2]
            << "\n";
  return 0;
}

int cmd_train(const Common& c, const fs::path& data, const fs::path& out) {
  const RunConfig rc = run_config(c);
  log("loading " + data.string());
  const PreparedSet tr = load_split(data / "train", rc.mel);
  const PreparedSet va = load_split(data / "val", rc.mel);
  log("train=" + std::to_string(tr.size()) + " (" + tr.id_hash() + ") val=" + std::to_string(va.size()) + " (" +
      va.id_hash() + ")");
  TrainOptions opt;
  opt.out_dir = out;
  opt.on_epoch = [](const EpochRecord& r) { log(epoch_line(r)); };
  const TrainResult r = train(rc, tr, va, opt);
  std::cout << "best_epoch=" << r.best_epoch << " best_val_map=" << r.best_val_map
            << " checkpoint=" << (out / "best.pt").string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data, const fs::path& out) {
  auto lm = load_checkpoint(resolve_checkpoint(ckpt));
  const PreparedSet set = load_split(data, lm.config.mel);
  const auto dets = predict(lm.model, set, lm.config);
  std::map<std::string, std::vector<Detection>> by_id;
  for (size_t i = 0; i < set.size(); ++i) by_id[set.samples[i].id] = dets[i];
  fs::create_directories(out);
  write_detections(by_id, out / "detections.txt");
  const EvalReport rep = evaluate(out / "detections.txt", data);
  write_report(rep, out / "report.txt");
  std::cout << rep.to_text();
  return 0;
}

int cmd_ablate(const Common& c, const std::string& axis_name, const fs::path& data, const std::string& out) {
  const AblationAxis axis = axis_from_name(axis_name);
  const RunConfig rc = run_config(c);
  const PreparedSet tr = load_split(data / "train", rc.mel);
  const PreparedSet va = load_split(data / "val", rc.mel);
  const PreparedSet te = load_split(data / "test", rc.mel);
  const auto table = run_ablation(axis, rc, tr, va, te, log);
  std::cout << table.to_text();
  if (!out.empty()) std::ofstream(out) << table.to_text();
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs) {
  std::cout << "Run | mAP@0.5 | AP(M) | AP(I) | AP(Eoff) | mAP@0.75 | mAP@Avg\n";
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "report.txt";
    const auto kv = read_report(p);
    auto get = [&](const std::string& k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw ValidationError(p.string() + " has no " + k);
      return it->second;
    };
    std::cout << in << " | " << get("mAP@0.5") << " | " << get("AP(M)") << " | " << get("AP(I)") << " | "
              << get("AP(Eoff)") << " | " << get("mAP@0.75") << " | " << get("mAP@Avg") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual idling vehicle detection"};
  app.require_subcommand(1);

  Common gen_c, train_c, ablate_c;
  size_t gen_n = 0;
  long long gen_seed = -1;
  std::string gen_out = "data", train_data = "data", train_out = "run", eval_ckpt = "run/best.pt",
              eval_data = "data/test", eval_out = ".", ablate_axis, ablate_data = "data", ablate_out;
  std::vector<std::string> report_inputs;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  add_common(gen, gen_c);
  gen->add_option("--n", gen_n, "Number of samples");
  gen->add_option("--seed", gen_seed, "Corpus seed");
  gen->add_option("--out", gen_out, "Output directory");

  auto* tr = app.add_subcommand("train", "Train a detector");
  add_common(tr, train_c);
  tr->add_option("--data", train_data, "Corpus root with train/ and val/");
  tr->add_option("--out", train_out, "Run directory for best.pt and train_log.csv");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  ev->add_option("--ckpt", eval_ckpt, "Checkpoint file, run directory, or name");
  ev->add_option("--data", eval_data, "Split directory");
  ev->add_option("--out", eval_out, "Where detections.txt and report.txt go");

  auto* ab = app.add_subcommand("ablate", "Train one model per setting of an axis");
  add_common(ab, ablate_c);
  ab->add_option("--axis", ablate_axis, "scales, scaq, head, mics or fusion")->required();
  ab->add_option("--data", ablate_data, "Corpus root with train/, val/ and test/");
  ab->add_option("--out", ablate_out, "Also write the table to this file");

  auto* rep = app.add_subcommand("report", "Tabulate report.txt files");
  rep->add_option("reports", report_inputs, "report.txt files or directories holding one")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen(gen_c, gen_n, gen_seed, gen_out);
    if (*tr) return cmd_train(train_c, train_data, train_out);
    if (*ev) return cmd_eval(eval_ckpt, eval_data, eval_out);
    if (*ab) return cmd_ablate(ablate_c, ablate_axis, ablate_data, ablate_out);
    if (*rep) return cmd_report(report_inputs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
