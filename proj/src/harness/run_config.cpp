#include "havt/harness/run_config.hpp"

#include <charconv>
#include <sstream>

#include "havt/errors.hpp"

namespace havt {
namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const T& xs) {
  std::string s;
  for (const auto& x : xs) {
    if (!s.empty()) s += ',';
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(x)>>) {
      s += num(x);
    } else {
      s += std::to_string(x);
    }
  }
  return s;
}

template <size_t N, typename T>
std::array<T, N> fixed(const std::vector<T>& v, const std::string& key) {
  if (v.size() != N) throw ConfigError(key + " needs " + std::to_string(N) + " values");
  std::array<T, N> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

template <typename T>
Range<T> range(const ConfigFile& f, const std::string& key, Range<T> base) {
  std::vector<T> v;
  if constexpr (std::is_floating_point_v<T>) {
    v = f.get_doubles(key, {base.lo, base.hi});
  } else {
    v = f.get_ints(key, {base.lo, base.hi});
  }
  const auto a = fixed<2>(v, key);
  return {a[0], a[1]};
}

std::string norm_name(MelConfig::Normalization n) {
  switch (n) {
    case MelConfig::Normalization::kJoint: return "joint";
    case MelConfig::Normalization::kPerChannel: return "per_channel";
    case MelConfig::Normalization::kNone: return "none";
  }
  return "?";
}

MelConfig::Normalization norm_from_name(const std::string& s) {
  if (s == "joint") return MelConfig::Normalization::kJoint;
  if (s == "per_channel") return MelConfig::Normalization::kPerChannel;
  if (s == "none") return MelConfig::Normalization::kNone;
  throw ConfigError("unknown audio.normalization '" + s + "' (joint, per_channel, none)");
}

int to_int(long long v, const std::string& key) {
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(key + " is out of range");
  return static_cast<int>(v);
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (!(train.lr > 0)) throw ConfigError("train.lr must be positive");
  if (train.batch < 1) throw ConfigError("train.batch must be positive");
  if (train.max_epochs < 1) throw ConfigError("train.max_epochs must be positive");
  if (train.patience < 0) throw ConfigError("train.patience must be >= 0");
  if (train.threads < 1) throw ConfigError("train.threads must be positive");
  if (mel.n_fft < 2 || mel.hop < 1 || mel.n_mels < 1) throw ConfigError("audio settings must be positive");
  if (!(eval.score_threshold >= 0 && eval.score_threshold < 1)) {
    throw ConfigError("eval.score_threshold must lie in [0, 1)");
  }
  if (!(eval.nms_iou > 0 && eval.nms_iou <= 1)) throw ConfigError("eval.nms_iou must lie in (0, 1]");
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "corpus.n", "corpus.split",
      "scene.image_size", "scene.frames", "scene.frame_rate", "scene.audio_seconds",
      "scene.sample_rate", "scene.mics", "scene.extent_m", "scene.vehicles", "scene.vehicle_size",
      "scene.state_priors", "scene.idle_hz", "scene.speed", "scene.snr_db", "scene.reference_rms",
      "scene.seed",
      "audio.n_fft", "audio.hop", "audio.n_mels", "audio.f_min", "audio.f_max", "audio.normalization",
      "model.embed", "model.attn_layers", "model.heads", "model.mlp_ratio", "model.spca_layers",
      "model.n_scaq", "model.head", "model.fusion", "model.scales", "model.mics",
      "model.visual_widths", "model.audio_widths", "model.size_bands", "model.obj_prior",
      "model.image_size", "model.frames", "model.mel_bins", "model.mel_frames",
      "train.lr", "train.batch", "train.max_epochs", "train.patience", "train.seed", "train.threads",
      "train.flip_augment",
      "eval.score_threshold", "eval.nms_iou"};
  return keys;
}

RunConfig run_config_from(const ConfigFile& f, RunConfig c) {
  f.require_known(known_config_keys());
  auto& m = c.model;
  c.mel.n_fft = to_int(f.get_int("audio.n_fft", c.mel.n_fft), "audio.n_fft");
  c.mel.hop = to_int(f.get_int("audio.hop", c.mel.hop), "audio.hop");
  c.mel.n_mels = to_int(f.get_int("audio.n_mels", c.mel.n_mels), "audio.n_mels");
  c.mel.f_min = f.get_double("audio.f_min", c.mel.f_min);
  c.mel.f_max = f.get_double("audio.f_max", c.mel.f_max);
  c.mel.normalization = norm_from_name(f.get_string("audio.normalization", norm_name(c.mel.normalization)));
  m.embed = to_int(f.get_int("model.embed", m.embed), "model.embed");
  m.attn_layers = to_int(f.get_int("model.attn_layers", m.attn_layers), "model.attn_layers");
  m.heads = to_int(f.get_int("model.heads", m.heads), "model.heads");
  m.mlp_ratio = to_int(f.get_int("model.mlp_ratio", m.mlp_ratio), "model.mlp_ratio");
  m.spca_layers = to_int(f.get_int("model.spca_layers", m.spca_layers), "model.spca_layers");
  m.n_scaq = to_int(f.get_int("model.n_scaq", m.n_scaq), "model.n_scaq");
  m.head = head_from_name(f.get_string("model.head", head_name(m.head)));
  m.fusion = fusion_from_name(f.get_string("model.fusion", fusion_name(m.fusion)));
  m.scales = f.get_ints("model.scales", m.scales);
  m.mics = to_int(f.get_int("model.mics", m.mics), "model.mics");
  m.visual_widths = fixed<4>(f.get_ints("model.visual_widths", {m.visual_widths.begin(), m.visual_widths.end()}),
                             "model.visual_widths");
  m.audio_widths = fixed<5>(f.get_ints("model.audio_widths", {m.audio_widths.begin(), m.audio_widths.end()}),
                            "model.audio_widths");
  m.size_bands = fixed<2>(f.get_doubles("model.size_bands", {m.size_bands[0], m.size_bands[1]}),
                          "model.size_bands");
  m.obj_prior = f.get_double("model.obj_prior", m.obj_prior);
  m.image_size = to_int(f.get_int("model.image_size", m.image_size), "model.image_size");
  m.n_frames = to_int(f.get_int("model.frames", m.n_frames), "model.frames");
  m.n_mels = to_int(f.get_int("model.mel_bins", m.n_mels), "model.mel_bins");
  m.mel_frames = to_int(f.get_int("model.mel_frames", m.mel_frames), "model.mel_frames");
  c.train.lr = f.get_double("train.lr", c.train.lr);
  c.train.batch = to_int(f.get_int("train.batch", c.train.batch), "train.batch");
  c.train.max_epochs = to_int(f.get_int("train.max_epochs", c.train.max_epochs), "train.max_epochs");
  c.train.patience = to_int(f.get_int("train.patience", c.train.patience), "train.patience");
  const long long seed = f.get_int("train.seed", static_cast<long long>(c.train.seed));
  if (seed < 0) throw ConfigError("train.seed must be >= 0");
  c.train.seed = static_cast<uint64_t>(seed);
  c.train.threads = to_int(f.get_int("train.threads", c.train.threads), "train.threads");
  c.train.flip_augment = f.get_bool("train.flip_augment", c.train.flip_augment);
  c.eval.score_threshold = f.get_double("eval.score_threshold", c.eval.score_threshold);
  c.eval.nms_iou = f.get_double("eval.nms_iou", c.eval.nms_iou);
  c.validate();
  return c;
}

CorpusConfig corpus_config_from(const ConfigFile& f, CorpusConfig c) {
  f.require_known(known_config_keys());
  auto& s = c.scene;
  const long long n = f.get_int("corpus.n", static_cast<long long>(c.n));
  if (n < 1) throw ConfigError("corpus.n must be positive");
  c.n = static_cast<size_t>(n);
  c.split = fixed<3>(f.get_doubles("corpus.split", {c.split[0], c.split[1], c.split[2]}), "corpus.split");
  s.image_size = to_int(f.get_int("scene.image_size", s.image_size), "scene.image_size");
  s.n_frames = to_int(f.get_int("scene.frames", s.n_frames), "scene.frames");
  s.frame_rate = f.get_double("scene.frame_rate", s.frame_rate);
  s.audio_seconds = f.get_double("scene.audio_seconds", s.audio_seconds);
  s.sample_rate = f.get_double("scene.sample_rate", s.sample_rate);
  s.scene_extent_m = f.get_double("scene.extent_m", s.scene_extent_m);
  const int mics = to_int(f.get_int("scene.mics", s.num_mics()), "scene.mics");
  if (f.has("scene.mics") || f.has("scene.extent_m")) s.mic_positions = default_mic_layout(mics, s.scene_extent_m);
  s.n_vehicles = range(f, "scene.vehicles", s.n_vehicles);
  s.vehicle_size_px = range(f, "scene.vehicle_size", s.vehicle_size_px);
  s.state_priors = fixed<3>(f.get_doubles("scene.state_priors", {s.state_priors.begin(), s.state_priors.end()}),
                            "scene.state_priors");
  s.idle_fundamental_hz = range(f, "scene.idle_hz", s.idle_fundamental_hz);
  s.motion_speed = range(f, "scene.speed", s.motion_speed);
  s.snr_db = range(f, "scene.snr_db", s.snr_db);
  s.reference_rms = f.get_double("scene.reference_rms", s.reference_rms);
  const long long seed = f.get_int("scene.seed", static_cast<long long>(s.seed));
  if (seed < 0) throw ConfigError("scene.seed must be >= 0");
  s.seed = static_cast<uint64_t>(seed);
  validate(s);
  return c;
}

std::string to_config_text(const RunConfig& c) {
  const auto& m = c.model;
  std::ostringstream o;
  o << "audio.n_fft=" << c.mel.n_fft << "\naudio.hop=" << c.mel.hop << "\naudio.n_mels=" << c.mel.n_mels
    << "\naudio.f_min=" << num(c.mel.f_min) << "\naudio.f_max=" << num(c.mel.f_max)
    << "\naudio.normalization=" << norm_name(c.mel.normalization) << "\nmodel.embed=" << m.embed
    << "\nmodel.attn_layers=" << m.attn_layers << "\nmodel.heads=" << m.heads << "\nmodel.mlp_ratio=" << m.mlp_ratio
    << "\nmodel.spca_layers=" << m.spca_layers << "\nmodel.n_scaq=" << m.n_scaq << "\nmodel.head=" << head_name(m.head)
    << "\nmodel.fusion=" << fusion_name(m.fusion) << "\nmodel.scales=" << join(m.scales) << "\nmodel.mics=" << m.mics
    << "\nmodel.visual_widths=" << join(m.visual_widths) << "\nmodel.audio_widths=" << join(m.audio_widths)
    << "\nmodel.size_bands=" << join(m.size_bands) << "\nmodel.obj_prior=" << num(m.obj_prior)
    << "\nmodel.image_size=" << m.image_size << "\nmodel.frames=" << m.n_frames << "\nmodel.mel_bins=" << m.n_mels
    << "\nmodel.mel_frames=" << m.mel_frames
    << "\ntrain.lr=" << num(c.train.lr) << "\ntrain.batch=" << c.train.batch
    << "\ntrain.max_epochs=" << c.train.max_epochs << "\ntrain.patience=" << c.train.patience
    << "\ntrain.seed=" << c.train.seed << "\ntrain.threads=" << c.train.threads
    << "\ntrain.flip_augment=" << (c.train.flip_augment ? "true" : "false")
    << "\neval.score_threshold=" << num(c.eval.score_threshold) << "\neval.nms_iou=" << num(c.eval.nms_iou) << "\n";
  return o.str();
}

std::string to_config_text(const CorpusConfig& c) {
  const auto& s = c.scene;
  std::ostringstream o;
  o << "corpus.n=" << c.n << "\ncorpus.split=" << join(c.split) << "\nscene.image_size=" << s.image_size
    << "\nscene.frames=" << s.n_frames << "\nscene.frame_rate=" << num(s.frame_rate)
    << "\nscene.audio_seconds=" << num(s.audio_seconds) << "\nscene.sample_rate=" << num(s.sample_rate)
    << "\nscene.mics=" << s.num_mics() << "\nscene.extent_m=" << num(s.scene_extent_m)
    << "\nscene.vehicles=" << s.n_vehicles.lo << ',' << s.n_vehicles.hi << "\nscene.vehicle_size="
    << s.vehicle_size_px.lo << ',' << s.vehicle_size_px.hi << "\nscene.state_priors=" << join(s.state_priors)
    << "\nscene.idle_hz=" << num(s.idle_fundamental_hz.lo) << ',' << num(s.idle_fundamental_hz.hi)
    << "\nscene.speed=" << num(s.motion_speed.lo) << ',' << num(s.motion_speed.hi) << "\nscene.snr_db="
    << num(s.snr_db.lo) << ',' << num(s.snr_db.hi) << "\nscene.reference_rms=" << num(s.reference_rms)
    << "\nscene.seed=" << s.seed << "\n";
  return o.str();
}

CorpusConfig desk_corpus_config() {
  CorpusConfig c;
  c.n = 4000;
  c.split = {0.75, 0.125, 0.125};
  auto& s = c.scene;
  s.image_size = 96;
  s.n_frames = 4;
  s.frame_rate = 8.0;
  s.audio_seconds = 1.0;
  s.sample_rate = 16000.0;
  s.vehicle_size_px = {10, 70};
  return c;
}

RunConfig desk_run_config() {
  RunConfig c;
  c.mel.n_mels = 64;
  auto& m = c.model;
  m.visual_widths = {8, 16, 32, 64};
  m.audio_widths = {8, 16, 32, 64, 64};
  m.embed = 32;
  m.attn_layers = 2;
  c.train.max_epochs = 60;
  c.train.patience = 10;
  return c;
}

}  // namespace havt
