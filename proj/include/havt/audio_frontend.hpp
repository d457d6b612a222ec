#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "havt/tensor.hpp"
#include "havt/types.hpp"

namespace havt {

struct StftConfig {
  int n_fft = 1024;
  int hop = 512;
};

// Complex spectrogram, [bins x frames] with bins = n_fft/2 + 1.
struct ComplexSpectrogram {
  int64_t bins = 0;
  int64_t frames = 0;
  std::vector<std::complex<double>> values;  // bin-major: values[b * frames + t]

  std::complex<double> at(int64_t bin, int64_t frame) const {
    return values[static_cast<size_t>(bin * frames + frame)];
  }
};

std::vector<double> hann_window(int n);  // periodic

// Centered framing with reflect padding of n_fft/2 on both sides, Hann
// window, frames = floor(S / hop) + 1.
ComplexSpectrogram stft(std::span<const float> signal, const StftConfig& cfg = {});

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelConfig {
  int n_fft = 1024;
  int hop = 512;
  int n_mels = 128;
  double f_min = 0.0;
  double f_max = -1.0;  // < 0 means Nyquist of the input audio
  double log_eps = 1e-10;
  // Spectrogram standardization. kJoint uses one mean/std over all
  // channels so inter-channel level differences survive; kPerChannel
  // standardizes each channel on its own; kNone leaves log power as is.
  enum class Normalization { kJoint, kPerChannel, kNone };
  Normalization normalization = Normalization::kJoint;
};

// Mel band edges in Hz: n_mels + 2 points equally spaced on the mel scale.
std::vector<double> mel_band_edges(int n_mels, double f_min, double f_max);

// [n_mels x (n_fft/2+1)], row-major. Each row is a unit-area triangle in Hz
// (corners equally spaced in mel) averaged over each FFT bin's frequency
// interval, so narrow low-frequency bands still get nonzero weights.
struct MelFilterbank {
  int n_mels = 0;
  int bins = 0;
  std::vector<double> weights;
  std::vector<double> centers_hz;

  double at(int mel, int bin) const {
    return weights[static_cast<size_t>(mel) * static_cast<size_t>(bins) +
                   static_cast<size_t>(bin)];
  }
};

MelFilterbank mel_filterbank(int n_fft, int n_mels, double sample_rate,
                             double f_min = 0.0, double f_max = -1.0);

// [mics x n_mels x frames] log-mel values.
struct MelSpectrogram {
  FloatTensor values;
  int n_fft = 0;
  int hop = 0;
  int n_mels = 0;
  double sample_rate = 0;

  int64_t num_mics() const { return values.dim(0); }
  int64_t num_frames() const { return values.dim(2); }
};

int64_t stft_frame_count(int64_t num_samples, int hop);

MelSpectrogram compute_melspec(const AudioSegment& audio, const MelConfig& cfg = {});

}  // namespace havt
