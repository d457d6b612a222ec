#include "havt/audio_frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

namespace havt {

namespace {

// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * static_cast<size_t>(n))));
    out_.reset(static_cast<fftw_complex*>(
        fftw_malloc(sizeof(fftw_complex) * static_cast<size_t>(n / 2 + 1))));
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_.get(), out_.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_.get(); }
  const fftw_complex* output() const { return out_.get(); }
  void execute() { fftw_execute(plan_); }
  int size() const { return n_; }

 private:
  int n_;
  std::unique_ptr<double, FftwFree> in_;
  std::unique_ptr<fftw_complex, FftwFree> out_;
  fftw_plan plan_ = nullptr;
};

// numpy-style reflect (edge sample not repeated).
int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Antiderivative of a unit-area triangle with corners lo < peak < hi.
double triangle_cdf(double x, double lo, double peak, double hi) {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const double height = 2.0 / (hi - lo);
  if (x <= peak) {
    const double d = x - lo;
    return height * d * d / (2.0 * (peak - lo));
  }
  const double d = x - peak;
  return height * (peak - lo) / 2.0 + height * (d - d * d / (2.0 * (hi - peak)));
}

}  // namespace

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

int64_t stft_frame_count(int64_t num_samples, int hop) { return num_samples / hop + 1; }

ComplexSpectrogram stft(std::span<const float> signal, const StftConfig& cfg) {
  if (cfg.n_fft <= 0 || cfg.hop <= 0) throw ConfigError("stft: n_fft and hop must be positive");
  if (signal.empty()) throw ValidationError("stft: empty signal");
  if (!std::all_of(signal.begin(), signal.end(), [](float v) { return std::isfinite(v); })) {
    throw NumericError("stft: signal contains NaN or Inf");
  }
  const int64_t n = static_cast<int64_t>(signal.size());
  const int64_t pad = cfg.n_fft / 2;
  if (n <= pad) {
    throw ValidationError("stft: signal of " + std::to_string(n) +
                          " samples is too short for reflect padding of " +
                          std::to_string(pad));
  }

  ComplexSpectrogram out;
  out.bins = cfg.n_fft / 2 + 1;
  out.frames = stft_frame_count(n, cfg.hop);
  out.values.resize(static_cast<size_t>(out.bins * out.frames));

  const auto window = hann_window(cfg.n_fft);
  RealFft fft(cfg.n_fft);
  double* buf = fft.input();
  for (int64_t t = 0; t < out.frames; ++t) {
    const int64_t start = t * cfg.hop - pad;
    for (int k = 0; k < cfg.n_fft; ++k) {
      const int64_t src = reflect_index(start + k, n);
      buf[k] = static_cast<double>(signal[static_cast<size_t>(src)]) *
               window[static_cast<size_t>(k)];
    }
    fft.execute();
    const fftw_complex* spec = fft.output();
    for (int64_t b = 0; b < out.bins; ++b) {
      out.values[static_cast<size_t>(b * out.frames + t)] = {spec[b][0], spec[b][1]};
    }
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_band_edges(int n_mels, double f_min, double f_max) {
  const double m0 = hz_to_mel(f_min);
  const double m1 = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<size_t>(i)] = mel_to_hz(m0 + (m1 - m0) * i / (n_mels + 1));
  }
  return edges;
}

MelFilterbank mel_filterbank(int n_fft, int n_mels, double sample_rate, double f_min,
                             double f_max) {
  const int bins = n_fft / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  if (f_max < 0) f_max = nyquist;
  if (n_mels <= 0 || n_mels >= bins) {
    throw ConfigError("mel_filterbank: need 0 < n_mels < n_fft/2+1 (n_mels=" +
                      std::to_string(n_mels) + ", bins=" + std::to_string(bins) + ")");
  }
  if (f_max > nyquist) {
    throw ConfigError("mel_filterbank: f_max " + std::to_string(f_max) +
                      " Hz exceeds Nyquist " + std::to_string(nyquist) + " Hz");
  }
  if (!(f_min >= 0 && f_min < f_max)) throw ConfigError("mel_filterbank: need 0 <= f_min < f_max");

  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.bins = bins;
  fb.weights.assign(static_cast<size_t>(n_mels) * static_cast<size_t>(bins), 0.0);
  const auto edges = mel_band_edges(n_mels, f_min, f_max);
  const double df = sample_rate / n_fft;
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<size_t>(m)];
    const double peak = edges[static_cast<size_t>(m + 1)];
    const double hi = edges[static_cast<size_t>(m + 2)];
    fb.centers_hz.push_back(peak);
    for (int b = 0; b < bins; ++b) {
      const double f = b * df;
      const double w = (triangle_cdf(f + 0.5 * df, lo, peak, hi) -
                        triangle_cdf(f - 0.5 * df, lo, peak, hi)) / df;
      fb.weights[static_cast<size_t>(m) * static_cast<size_t>(bins) + static_cast<size_t>(b)] = w;
    }
  }
  return fb;
}

MelSpectrogram compute_melspec(const AudioSegment& audio, const MelConfig& cfg) {
  const auto& x = audio.samples;
  if (x.rank() != 2) throw ShapeError("compute_melspec: audio must be [mics, samples]");
  const int64_t mics = x.dim(0);
  const int64_t n = x.dim(1);
  const auto fb = mel_filterbank(cfg.n_fft, cfg.n_mels, audio.sample_rate, cfg.f_min, cfg.f_max);
  const int64_t frames = stft_frame_count(n, cfg.hop);

  // Support of each filter row, so the projection skips the zero weights.
  std::vector<std::pair<int64_t, int64_t>> support(static_cast<size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    int64_t b0 = 0, b1 = fb.bins;
    while (b0 < b1 && fb.at(m, static_cast<int>(b0)) == 0.0) ++b0;
    while (b1 > b0 && fb.at(m, static_cast<int>(b1 - 1)) == 0.0) --b1;
    support[static_cast<size_t>(m)] = {b0, b1};
  }

  std::vector<double> logmel(static_cast<size_t>(mics * cfg.n_mels * frames));
  std::vector<double> power(static_cast<size_t>(fb.bins));
  for (int64_t c = 0; c < mics; ++c) {
    const auto spec = stft(x.data().subspan(static_cast<size_t>(c * n), static_cast<size_t>(n)),
                           {cfg.n_fft, cfg.hop});
    for (int64_t t = 0; t < frames; ++t) {
      for (int64_t b = 0; b < fb.bins; ++b) power[static_cast<size_t>(b)] = std::norm(spec.at(b, t));
      for (int m = 0; m < cfg.n_mels; ++m) {
        const double* w = &fb.weights[static_cast<size_t>(m) * static_cast<size_t>(fb.bins)];
        const auto [b0, b1] = support[static_cast<size_t>(m)];
        double acc = 0;
        for (int64_t b = b0; b < b1; ++b) acc += w[b] * power[static_cast<size_t>(b)];
        logmel[static_cast<size_t>((c * cfg.n_mels + m) * frames + t)] = std::log(acc + cfg.log_eps);
      }
    }
  }

  const auto standardize = [](std::span<double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    // A constant spectrogram (silence) carries no scale; leave it as log(eps).
    if (*lo == *hi) return;
    double mean = 0;
    for (double a : v) mean += a;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double a : v) var += (a - mean) * (a - mean);
    var /= static_cast<double>(v.size());
    const double inv = 1.0 / std::sqrt(var);
    for (double& a : v) a = (a - mean) * inv;
  };
  using Norm = MelConfig::Normalization;
  if (cfg.normalization == Norm::kJoint) {
    standardize(logmel);
  } else if (cfg.normalization == Norm::kPerChannel) {
    const size_t per = static_cast<size_t>(cfg.n_mels * frames);
    for (int64_t c = 0; c < mics; ++c) {
      standardize(std::span<double>(logmel).subspan(static_cast<size_t>(c) * per, per));
    }
  }

  MelSpectrogram out;
  out.values = FloatTensor({mics, cfg.n_mels, frames},
                           std::vector<float>(logmel.begin(), logmel.end()));
  out.n_fft = cfg.n_fft;
  out.hop = cfg.hop;
  out.n_mels = cfg.n_mels;
  out.sample_rate = audio.sample_rate;
  return out;
}

}  // namespace havt
