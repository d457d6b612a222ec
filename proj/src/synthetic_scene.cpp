#include "havt/synthetic_scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "havt/rng.hpp"

namespace havt {

namespace fs = std::filesystem;

namespace {

constexpr int kHarmonics = 5;
constexpr int kPlacementAttempts = 100;
constexpr int kPlacementMargin = 2;

// Independent streams per concern. Visual parameters never see the state
// stream, which is what makes idling and engine-off vehicles look alike.
enum Stream : uint64_t { kVisual = 1, kState = 2, kAudio = 3 };

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool overlaps(const VehicleSpec& a, const VehicleSpec& b, int margin) {
  return a.x < b.x + b.w + margin && b.x < a.x + a.w + margin &&
         a.y < b.y + b.h + margin && b.y < a.y + a.h + margin;
}

VehicleState draw_state(Rng& rng, const std::array<double, 3>& priors) {
  const double u = rng.uniform();
  double acc = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    acc += priors[static_cast<size_t>(k)];
    if (u < acc) return static_cast<VehicleState>(k);
  }
  // Rounding slack: return the last class with nonzero prior.
  for (int k = kNumClasses - 1; k >= 0; --k) {
    if (priors[static_cast<size_t>(k)] > 0) return static_cast<VehicleState>(k);
  }
  return VehicleState::kEngineOff;
}

}  // namespace

std::vector<Point2> default_mic_layout(int mics, double extent_m) {
  std::vector<Point2> grid;
  for (double fy : {0.25, 0.75}) {
    for (double fx : {1.0 / 6, 0.5, 5.0 / 6}) grid.push_back({fx * extent_m, fy * extent_m});
  }
  std::vector<Point2> out;
  for (int i : mic_subset(mics)) out.push_back(grid[i]);
  return out;
}

std::vector<int> mic_subset(int mics) {
  switch (mics) {
    case 6: return {0, 1, 2, 3, 4, 5};
    case 3: return {0, 2, 4};
    case 1: return {1};
    default:
      throw ConfigError("microphone count must be 1, 3 or 6, got " + std::to_string(mics));
  }
}

SampleGeometry SceneConfig::geometry() const {
  return {n_frames, 3, image_size, image_size, audio_seconds, sample_rate};
}

void validate(const SceneConfig& c) {
  const auto fail = [](const std::string& m) { throw ConfigError("scene config: " + m); };
  if (c.n_vehicles.empty() || c.n_vehicles.lo < 0) fail("n_vehicles range must be nonempty and >= 0");
  if (c.image_size < 8) fail("image_size must be at least 8");
  if (c.n_frames < 1) fail("n_frames must be positive");
  if (!(c.frame_rate > 0) || !(c.sample_rate > 0) || !(c.audio_seconds > 0)) {
    fail("frame_rate, sample_rate and audio_seconds must be positive");
  }
  if (static_cast<double>(c.n_frames) / c.frame_rate > c.audio_seconds / 2 + 1e-9) {
    fail("video clip must fit in the first half of the audio window");
  }
  const int m = c.num_mics();
  if (m != 1 && m != 3 && m != 6) fail("microphone count must be 1, 3 or 6");
  double sum = 0;
  for (double p : c.state_priors) {
    if (!(p >= 0)) fail("state priors must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail("state priors must sum to 1");
  if (c.vehicle_size_px.empty() || c.vehicle_size_px.lo < 2 ||
      c.vehicle_size_px.hi > c.image_size) {
    fail("vehicle_size_px must be a nonempty range within [2, image_size]");
  }
  if (c.idle_fundamental_hz.empty() || c.idle_fundamental_hz.lo <= 0 ||
      kHarmonics * c.idle_fundamental_hz.hi >= c.sample_rate / 2) {
    fail("idle_fundamental_hz must be positive with all harmonics below Nyquist");
  }
  if (c.motion_speed.empty() || c.motion_speed.lo <= 0) fail("motion_speed must be a positive range");
  if (c.snr_db.empty()) fail("snr_db range must be nonempty");
  if (!(c.reference_rms > 0)) fail("reference_rms must be positive");
  if (!(c.scene_extent_m > 0)) fail("scene_extent_m must be positive");
}

int64_t SceneDescription::num_slots() const {
  return static_cast<int64_t>(std::ceil(config.audio_seconds * config.frame_rate - 1e-9));
}

int64_t SceneDescription::last_frame_slot() const {
  return static_cast<int64_t>(std::floor(config.audio_seconds / 2 * config.frame_rate + 1e-9));
}

double mic_gain(const Point2& s, const Point2& m) {
  return 1.0 / (1.0 + std::hypot(s.x - m.x, s.y - m.y));
}

Point2 pixel_to_meters(const SceneConfig& cfg, double px, double py) {
  const double k = cfg.scene_extent_m / cfg.image_size;
  return {px * k, py * k};
}

uint64_t sample_seed(uint64_t corpus_seed, uint64_t index) { return mix_seed(corpus_seed, index); }

SceneDescription layout_scene(const SceneConfig& cfg, uint64_t seed) {
  validate(cfg);
  SceneDescription d;
  d.config = cfg;
  d.seed = seed;
  Rng vis(mix_seed(seed, kVisual));
  Rng st(mix_seed(seed, kState));
  Rng au(mix_seed(seed, kAudio));

  const int S = cfg.image_size;
  const int requested = static_cast<int>(vis.uniform_int(cfg.n_vehicles.lo, cfg.n_vehicles.hi));
  d.requested_vehicles = requested;
  d.background_seed = vis.next_u64();

  const double log_lo = std::log(static_cast<double>(cfg.vehicle_size_px.lo));
  const double log_hi = std::log(static_cast<double>(cfg.vehicle_size_px.hi));
  const int64_t slots = d.num_slots();

  for (int n = requested; n >= 0; --n) {
    std::vector<VehicleSpec> placed;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      ok = false;
      for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        VehicleSpec v;
        const int side = static_cast<int>(std::lround(std::exp(vis.uniform(log_lo, log_hi))));
        const double aspect = vis.uniform(0.6, 1.0);
        const int other = std::max(cfg.vehicle_size_px.lo,
                                   static_cast<int>(std::lround(side * aspect)));
        const bool wide = vis.uniform() < 0.5;
        v.w = wide ? side : other;
        v.h = wide ? other : side;
        v.x = static_cast<int>(vis.uniform_int(0, S - v.w));
        v.y = static_cast<int>(vis.uniform_int(0, S - v.h));
        if (std::none_of(placed.begin(), placed.end(),
                         [&](const VehicleSpec& o) { return overlaps(v, o, kPlacementMargin); })) {
          placed.push_back(v);
          ok = true;
          break;
        }
      }
    }
    if (ok) {
      d.vehicles = std::move(placed);
      break;
    }
    ++d.placement_retries;
  }

  for (auto& v : d.vehicles) {
    for (auto& c : v.color) c = static_cast<float>(vis.uniform(0.05, 0.95));
    v.texture_seed = vis.next_u64();
    const double angle = vis.uniform(0.0, 2.0 * std::numbers::pi);
    v.heading = {std::cos(angle), std::sin(angle)};
    const double base = vis.uniform(cfg.motion_speed.lo, cfg.motion_speed.hi);
    v.slot_speed.resize(static_cast<size_t>(slots));
    for (auto& s : v.slot_speed) {
      s = std::clamp(base * vis.uniform(0.5, 1.5), cfg.motion_speed.lo, cfg.motion_speed.hi);
    }
  }
  for (auto& v : d.vehicles) v.state = draw_state(st, cfg.state_priors);
  for (auto& v : d.vehicles) {
    v.fundamental_hz = au.uniform(cfg.idle_fundamental_hz.lo, cfg.idle_fundamental_hz.hi);
    v.amplitude = cfg.reference_rms * std::numbers::sqrt2 * au.uniform(0.8, 1.2);
    for (auto& p : v.phases) p = au.uniform(0.0, 2.0 * std::numbers::pi);
    v.noise_seed = au.next_u64();
  }
  d.snr_db = au.uniform(cfg.snr_db.lo, cfg.snr_db.hi);
  d.mic_noise_seed = au.next_u64();
  return d;
}

namespace {

// Displacement (pixels, along heading) of a moving vehicle at slot k
// relative to its last-frame position.
double displacement_at_slot(const SceneDescription& d, const VehicleSpec& v, int64_t k) {
  const int64_t last = d.last_frame_slot();
  double s = 0;
  if (k > last) {
    for (int64_t q = last + 1; q <= k; ++q) s += v.slot_speed[static_cast<size_t>(q)];
  } else {
    for (int64_t q = k + 1; q <= last; ++q) s -= v.slot_speed[static_cast<size_t>(q)];
  }
  return s;
}

}  // namespace

std::array<int, 2> vehicle_position(const SceneDescription& d, const VehicleSpec& v, int frame) {
  if (v.state != VehicleState::kMoving) return {v.x, v.y};
  const int64_t slot = d.last_frame_slot() - (d.config.n_frames - 1 - frame);
  const double s = displacement_at_slot(d, v, slot);
  return {static_cast<int>(std::lround(v.x + s * v.heading.x)),
          static_cast<int>(std::lround(v.y + s * v.heading.y))};
}

VideoClip render_video(const SceneDescription& d) {
  const int S = d.config.image_size;
  const int D = d.config.n_frames;
  const int64_t plane = int64_t{S} * S;
  VideoClip clip;
  clip.frame_rate = d.config.frame_rate;
  clip.frames = FloatTensor({D, 3, S, S});

  std::vector<float> background(static_cast<size_t>(3 * plane));
  {
    Rng rng(d.background_seed);
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t p = 0; p < plane; ++p) {
        background[static_cast<size_t>(c * plane + p)] =
            static_cast<float>(std::clamp(0.35 + 0.03 * rng.normal(), 0.0, 1.0));
      }
    }
  }
  std::vector<std::vector<float>> textures;
  for (const auto& v : d.vehicles) {
    Rng rng(v.texture_seed);
    std::vector<float> tex(static_cast<size_t>(3 * v.w * v.h));
    for (int c = 0; c < 3; ++c) {
      for (int p = 0; p < v.w * v.h; ++p) {
        tex[static_cast<size_t>(c * v.w * v.h + p)] = static_cast<float>(
            std::clamp(v.color[static_cast<size_t>(c)] + 0.05 * rng.normal(), 0.0, 1.0));
      }
    }
    textures.push_back(std::move(tex));
  }

  auto& out = clip.frames.storage();
  for (int f = 0; f < D; ++f) {
    float* frame = out.data() + static_cast<size_t>(f) * 3 * static_cast<size_t>(plane);
    std::copy(background.begin(), background.end(), frame);
    for (size_t i = 0; i < d.vehicles.size(); ++i) {
      const auto& v = d.vehicles[i];
      const auto [px, py] = vehicle_position(d, v, f);
      for (int yy = std::max(0, py); yy < std::min(S, py + v.h); ++yy) {
        for (int xx = std::max(0, px); xx < std::min(S, px + v.w); ++xx) {
          const int local = (yy - py) * v.w + (xx - px);
          for (int c = 0; c < 3; ++c) {
            frame[c * plane + int64_t{yy} * S + xx] =
                textures[i][static_cast<size_t>(c * v.w * v.h + local)];
          }
        }
      }
    }
  }
  return clip;
}

AudioSegment synthesize_audio(const SceneDescription& d, const AudioOptions& opts) {
  const auto& cfg = d.config;
  const int M = cfg.num_mics();
  const auto n = static_cast<int64_t>(std::llround(cfg.audio_seconds * cfg.sample_rate));
  AudioSegment audio;
  audio.sample_rate = cfg.sample_rate;
  std::vector<double> mix(static_cast<size_t>(M * n), 0.0);
  std::vector<double> src(static_cast<size_t>(n));

  const double slot_len = cfg.sample_rate / cfg.frame_rate;  // samples per slot
  const auto slot_of = [&](int64_t s) {
    return std::min<int64_t>(static_cast<int64_t>(static_cast<double>(s) / slot_len),
                             d.num_slots() - 1);
  };

  for (const auto& v : d.vehicles) {
    if (v.state == VehicleState::kEngineOff) continue;
    const Box b = v.box();
    if (v.state == VehicleState::kIdling) {
      for (int64_t s = 0; s < n; ++s) {
        const double t = static_cast<double>(s) / cfg.sample_rate;
        double acc = 0;
        for (int h = 1; h <= kHarmonics; ++h) {
          acc += v.amplitude / h *
                 std::sin(2.0 * std::numbers::pi * h * v.fundamental_hz * t +
                          v.phases[static_cast<size_t>(h - 1)]);
        }
        src[static_cast<size_t>(s)] = acc;
      }
      const Point2 pos = pixel_to_meters(cfg, b.cx, b.cy);
      for (int m = 0; m < M; ++m) {
        const double g = mic_gain(pos, cfg.mic_positions[static_cast<size_t>(m)]);
        double* dst = &mix[static_cast<size_t>(m * n)];
        for (int64_t s = 0; s < n; ++s) dst[s] += g * src[static_cast<size_t>(s)];
      }
    } else {
      // Broadband bursts: white noise whose level follows the speed in each
      // frame slot, radiated from the vehicle's position in that slot.
      Rng rng(v.noise_seed);
      for (int64_t s = 0; s < n; ++s) {
        const double speed = v.slot_speed[static_cast<size_t>(slot_of(s))];
        src[static_cast<size_t>(s)] =
            cfg.reference_rms * (speed / cfg.motion_speed.hi) * rng.normal();
      }
      for (int64_t k = 0; k < d.num_slots(); ++k) {
        const double disp = displacement_at_slot(d, v, k);
        const Point2 pos =
            pixel_to_meters(cfg, b.cx + disp * v.heading.x, b.cy + disp * v.heading.y);
        const auto s0 = static_cast<int64_t>(std::ceil(static_cast<double>(k) * slot_len - 1e-9));
        const int64_t s1 = k + 1 == d.num_slots()
                               ? n
                               : std::min(n, static_cast<int64_t>(std::ceil(
                                                 static_cast<double>(k + 1) * slot_len - 1e-9)));
        for (int m = 0; m < M; ++m) {
          const double g = mic_gain(pos, cfg.mic_positions[static_cast<size_t>(m)]);
          double* dst = &mix[static_cast<size_t>(m * n)];
          for (int64_t s = s0; s < s1; ++s) dst[s] += g * src[static_cast<size_t>(s)];
        }
      }
    }
  }

  if (opts.include_noise) {
    const double sigma = cfg.reference_rms * std::pow(10.0, -d.snr_db / 20.0);
    Rng rng(d.mic_noise_seed);
    for (auto& x : mix) x += sigma * rng.normal();
  }
  std::vector<float> out(mix.size());
  for (size_t i = 0; i < mix.size(); ++i) {
    const double x = opts.clip_to_unit ? std::clamp(mix[i], -1.0, 1.0) : mix[i];
    out[i] = static_cast<float>(x);
  }
  audio.samples = FloatTensor({M, n}, std::move(out));
  return audio;
}

Sample generate_scene(const SceneConfig& cfg, uint64_t seed) {
  const SceneDescription d = layout_scene(cfg, seed);
  Sample s;
  s.clip = render_video(d);
  s.audio = synthesize_audio(d);
  for (const auto& v : d.vehicles) s.boxes.push_back({v.box(), v.state});

  std::string states;
  for (const auto& v : d.vehicles) {
    if (!states.empty()) states += ',';
    states += std::to_string(static_cast<int>(v.state));
  }
  s.scene_meta = {
      {"seed", std::to_string(seed)},
      {"requested_vehicles", std::to_string(d.requested_vehicles)},
      {"placed_vehicles", std::to_string(d.vehicles.size())},
      {"placement_retries", std::to_string(d.placement_retries)},
      {"snr_db", fmt(d.snr_db)},
      {"mics", std::to_string(cfg.num_mics())},
      {"image_size", std::to_string(cfg.image_size)},
      {"states", states},
  };
  return s;
}

std::array<int, 3> Manifest::totals() const {
  std::array<int, 3> t{};
  for (const auto& e : entries) {
    for (size_t k = 0; k < 3; ++k) t[k] += e.class_counts[k];
  }
  return t;
}

void write_manifest(const Manifest& m, const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << "# split id moving idling engine_off\n";
  for (const auto& e : m.entries) {
    out << e.split << ' ' << e.id << ' ' << e.class_counts[0] << ' ' << e.class_counts[1] << ' '
        << e.class_counts[2] << '\n';
  }
  if (!out) throw IoError("write failed for " + file.string());
}

Manifest read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.split >> e.id >> e.class_counts[0] >> e.class_counts[1] >> e.class_counts[2])) {
      throw IoError(file.string() + ": malformed manifest line '" + line + "'");
    }
    m.entries.push_back(e);
  }
  return m;
}

Manifest generate_corpus(const SceneConfig& cfg, size_t n, const fs::path& root,
                         std::array<double, 3> split_ratios) {
  validate(cfg);
  const Split split = split_dataset(n, split_ratios, cfg.seed);
  std::vector<std::string> split_of(n);
  for (size_t i : split.train) split_of[i] = "train";
  for (size_t i : split.val) split_of[i] = "val";
  for (size_t i : split.test) split_of[i] = "test";

  Manifest m;
  for (size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "s%06zu", i);
    const Sample s = generate_scene(cfg, sample_seed(cfg.seed, i));
    write_sample(s, root / split_of[i] / id);
    ManifestEntry e{split_of[i], id, {}};
    for (const auto& b : s.boxes) ++e.class_counts[static_cast<size_t>(b.cls)];
    m.entries.push_back(e);
  }
  write_manifest(m, root / "manifest.txt");
  return m;
}

}  // namespace havt
