#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "havt/dataset.hpp"
#include "havt/types.hpp"

namespace havt {

struct Point2 {
  double x = 0, y = 0;
};

template <typename T>
struct Range {
  T lo{}, hi{};
  bool empty() const { return hi < lo; }
};

// Evenly spread microphone positions (scene meters) over a square lot of the
// given extent: a 3x2 grid for six mics and subsets of that grid for fewer,
// so a six-channel recording can be reduced to any smaller layout.
std::vector<Point2> default_mic_layout(int mics, double extent_m);
// Indices into the six-mic grid used by the smaller layouts.
std::vector<int> mic_subset(int mics);

struct SceneConfig {
  Range<int> n_vehicles{1, 4};
  int image_size = 224;
  int n_frames = 16;
  double frame_rate = 6.4;
  double audio_seconds = 5.0;
  double sample_rate = 48000.0;
  double scene_extent_m = 20.0;  // the image spans this many meters
  std::vector<Point2> mic_positions = default_mic_layout(6, 20.0);
  std::array<double, 3> state_priors{1.0 / 3, 1.0 / 3, 1.0 / 3};
  Range<int> vehicle_size_px{24, 160};
  Range<double> idle_fundamental_hz{25.0, 45.0};
  Range<double> motion_speed{2.0, 6.0};  // pixels per frame
  Range<double> snr_db{10.0, 20.0};
  double reference_rms = 0.05;  // noise floor is set relative to this level
  uint64_t seed = 0;

  int num_mics() const { return static_cast<int>(mic_positions.size()); }
  SampleGeometry geometry() const;
};

void validate(const SceneConfig& cfg);  // throws ConfigError

struct VehicleSpec {
  VehicleState state = VehicleState::kEngineOff;
  // Last-frame footprint: pixels [x, x+w) x [y, y+h).
  int x = 0, y = 0, w = 0, h = 0;
  std::array<float, 3> color{};
  uint64_t texture_seed = 0;
  // Unit heading and per-slot speeds (pixels/frame). A slot is one frame
  // period; slots cover the whole audio window, so motion continues past the
  // last frame for the second half of the audio. Only moving vehicles use it.
  Point2 heading{1, 0};
  std::vector<double> slot_speed;
  // Idling engine: fundamental and harmonic phases.
  double fundamental_hz = 0;
  double amplitude = 0;
  std::array<double, 5> phases{};
  uint64_t noise_seed = 0;

  Box box() const { return {x + 0.5 * w, y + 0.5 * h, double(w), double(h)}; }
};

// Everything needed to render a sample, so tests can mute or edit vehicles
// and re-render.
struct SceneDescription {
  SceneConfig config;
  uint64_t seed = 0;
  std::vector<VehicleSpec> vehicles;
  double snr_db = 0;
  uint64_t background_seed = 0;
  uint64_t mic_noise_seed = 0;
  int requested_vehicles = 0;
  int placement_retries = 0;

  // Slot covering audio time t (seconds from window start); the last video
  // frame occupies the slot that starts at the window midpoint.
  int64_t num_slots() const;
  int64_t last_frame_slot() const;
};

SceneDescription layout_scene(const SceneConfig& cfg, uint64_t seed);

// Integer top-left of a vehicle in video frame f (0..n_frames-1).
std::array<int, 2> vehicle_position(const SceneDescription& scene,
                                    const VehicleSpec& v, int frame);

VideoClip render_video(const SceneDescription& scene);

struct AudioOptions {
  bool include_noise = true;
  bool clip_to_unit = true;
};
AudioSegment synthesize_audio(const SceneDescription& scene, const AudioOptions& opts = {});

// Gain from a source at p to microphone m: 1 / (1 + distance in meters).
double mic_gain(const Point2& source_m, const Point2& mic_m);
Point2 pixel_to_meters(const SceneConfig& cfg, double px, double py);

Sample generate_scene(const SceneConfig& cfg, uint64_t seed);

// Sample seed for index i of a corpus.
uint64_t sample_seed(uint64_t corpus_seed, uint64_t index);

struct ManifestEntry {
  std::string split;
  std::string id;
  std::array<int, 3> class_counts{};
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::array<int, 3> totals() const;
};

// Writes <root>/<split>/<id>/ for every sample plus <root>/manifest.txt.
Manifest generate_corpus(const SceneConfig& cfg, size_t n,
                         const std::filesystem::path& root,
                         std::array<double, 3> split_ratios = {0.8, 0.1, 0.1});

void write_manifest(const Manifest& m, const std::filesystem::path& file);
Manifest read_manifest(const std::filesystem::path& file);

}  // namespace havt
