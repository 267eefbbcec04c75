#pragma once

// RawBoost waveform augmentation: linear and non-linear convolutive noise,
// impulsive signal-dependent noise, and stationary signal-independent
// additive noise. Every op preserves length, is bit-deterministic per seed,
// and leaves the peak at or below 1.
//
// Default ranges (16 kHz audio):
//
//   parameter                    default
//   ---------------------------  -------------------
//   bands per filter             [5, 5]
//   band center                  [20, 8000] Hz
//   band width                   [100, 1000] Hz
//   band gain                    [0, 0] dB
//   FIR length                   1025 taps
//   non-linearity orders         {1, 2, 3, 4, 5}
//   extra attenuation, order>1   [5, 20] dB
//   impulsive fraction           [0.01, 0.10]
//   impulsive amplitude          [0, 2] x local sample
//   stationary SNR               [10, 40] dB

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dfcurate/audio.hpp"

namespace dfcurate {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct IntRange {
  int lo = 1;
  int hi = 1;
};

struct BandParams {
  IntRange n_bands{5, 5};
  Range center_hz{20.0, 8000.0};
  Range bandwidth_hz{100.0, 1000.0};
  Range gain_db{0.0, 0.0};
  int fir_length = 1025;  // odd
};

struct LnlParams {
  BandParams bands;
  std::vector<int> orders{1, 2, 3, 4, 5};
  Range nonlinear_attenuation_db{5.0, 20.0};
};

struct ImpulsiveParams {
  Range fraction{0.01, 0.10};
  Range amplitude{0.0, 2.0};
};

struct SnrNoiseParams {
  Range snr_db{10.0, 40.0};
  BandParams coloring;
};

struct AugmentStats {
  std::size_t clipped = 0;   // samples hard-clipped to [-1, 1]
  std::size_t modified = 0;  // impulsive: positions that received an impulse
  double snr_db = 0.0;       // stationary: drawn target SNR
};

void validate(const BandParams& p, int sample_rate);
void validate(const LnlParams& p, int sample_rate);
void validate(const ImpulsiveParams& p);
void validate(const SnrNoiseParams& p, int sample_rate);

// Windowed-sinc (Hamming) band-pass over [f1, f2] Hz, odd length.
std::vector<double> design_bandpass(double f1_hz, double f2_hz, int length, int sample_rate);

// Linear convolution trimmed to the input's alignment ("same" mode, group
// delay of an odd-length linear-phase filter compensated).
std::vector<double> fir_filter_same(std::span<const double> x, std::span<const double> taps);

// Max |H(f)| on a dense frequency grid.
double peak_response(std::span<const double> taps);

Waveform apply_lnl_convolutive(const Waveform& w, const LnlParams& p, std::uint64_t seed,
                               AugmentStats* stats = nullptr);
Waveform apply_impulsive(const Waveform& w, const ImpulsiveParams& p, std::uint64_t seed,
                         AugmentStats* stats = nullptr);
Waveform apply_stationary_additive(const Waveform& w, const SnrNoiseParams& p, std::uint64_t seed,
                                   AugmentStats* stats = nullptr);

}  // namespace dfcurate
