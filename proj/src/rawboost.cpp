#include "dfcurate/rawboost.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>

#include "dfcurate/error.hpp"
#include "dfcurate/util.hpp"

namespace dfcurate {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

double draw(const Range& r, std::mt19937_64& rng) {
  if (r.lo == r.hi) return r.lo;
  return r.lo + (r.hi - r.lo) * std::generate_canonical<double, 53>(rng);
}

int draw(const IntRange& r, std::mt19937_64& rng) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_int_distribution<int>(r.lo, r.hi)(rng);
}

void check_range(const Range& r, const char* what) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " range must be finite with lo <= hi");
  }
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

std::vector<double> random_filter(const BandParams& p, int sample_rate, std::mt19937_64& rng) {
  const double nyquist = sample_rate / 2.0;
  std::vector<double> taps(static_cast<std::size_t>(p.fir_length), 0.0);
  const int bands = draw(p.n_bands, rng);
  for (int b = 0; b < bands; ++b) {
    const double fc = draw(p.center_hz, rng);
    const double bw = draw(p.bandwidth_hz, rng);
    const double gain = std::pow(10.0, draw(p.gain_db, rng) / 20.0);
    const double f1 = std::clamp(fc - bw / 2.0, 0.0, nyquist);
    const double f2 = std::clamp(fc + bw / 2.0, 0.0, nyquist);
    if (f2 <= f1) continue;
    const auto band = design_bandpass(f1, f2, p.fir_length, sample_rate);
    for (std::size_t k = 0; k < taps.size(); ++k) taps[k] += gain * band[k];
  }
  const double peak = peak_response(taps);
  if (peak > 0.0) {
    for (double& t : taps) t /= peak;
  }
  return taps;
}

std::vector<double> to_double(const Waveform& w) { return {w.samples.begin(), w.samples.end()}; }

Waveform from_double(const std::vector<double>& y, int sample_rate, AugmentStats* stats) {
  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(y.size());
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double v = y[i];
    if (v > 1.0) {
      v = 1.0;
      ++clipped;
    } else if (v < -1.0) {
      v = -1.0;
      ++clipped;
    }
    out.samples[i] = static_cast<float>(v);
  }
  if (stats) stats->clipped = clipped;
  return out;
}

void require_finite(const Waveform& w) {
  if (w.sample_rate <= 0) throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
  for (float s : w.samples) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kNonFinite, "non-finite input sample");
  }
}

}  // namespace

void validate(const BandParams& p, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (p.n_bands.lo < 1 || p.n_bands.lo > p.n_bands.hi) {
    throw Error(ErrorCode::kInvalidArgument, "band count range must satisfy 1 <= lo <= hi");
  }
  check_range(p.center_hz, "band center");
  check_range(p.bandwidth_hz, "band width");
  check_range(p.gain_db, "band gain");
  if (p.center_hz.lo < 0.0 || p.center_hz.hi > nyquist) {
    throw Error(ErrorCode::kInvalidArgument, "band centers must lie within [0, sample_rate/2]");
  }
  if (p.bandwidth_hz.lo <= 0.0) throw Error(ErrorCode::kInvalidArgument, "band width must be positive");
  if (p.fir_length < 1 || p.fir_length % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "FIR length must be a positive odd integer");
  }
}

void validate(const LnlParams& p, int sample_rate) {
  validate(p.bands, sample_rate);
  if (p.orders.empty()) throw Error(ErrorCode::kInvalidArgument, "need at least one non-linearity order");
  for (int k : p.orders) {
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "non-linearity orders must be positive");
  }
  check_range(p.nonlinear_attenuation_db, "non-linear attenuation");
}

void validate(const ImpulsiveParams& p) {
  check_range(p.fraction, "impulsive fraction");
  check_range(p.amplitude, "impulsive amplitude");
  if (p.fraction.lo <= 0.0 || p.fraction.hi >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "impulsive fraction range must lie inside (0, 1)");
  }
  if (p.amplitude.lo < 0.0) throw Error(ErrorCode::kInvalidArgument, "impulsive amplitude must be >= 0");
}

void validate(const SnrNoiseParams& p, int sample_rate) {
  check_range(p.snr_db, "SNR");
  validate(p.coloring, sample_rate);
}

std::vector<double> design_bandpass(double f1_hz, double f2_hz, int length, int sample_rate) {
  if (length < 1 || length % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "FIR length must be odd");
  const double a = 2.0 * f1_hz / sample_rate;
  const double b = 2.0 * f2_hz / sample_rate;
  const int mid = (length - 1) / 2;
  std::vector<double> taps(static_cast<std::size_t>(length));
  // Mirror the first half so the filter is exactly linear-phase.
  for (int n = 0; n <= mid; ++n) {
    const double m = n - mid;
    const double window =
        length == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
    const double v = window * (b * sinc(b * m) - a * sinc(a * m));
    taps[static_cast<std::size_t>(n)] = v;
    taps[static_cast<std::size_t>(length - 1 - n)] = v;
  }
  return taps;
}

double peak_response(std::span<const double> taps) {
  std::size_t size = 8192;
  while (size < 4 * taps.size()) size <<= 1;
  const std::size_t bins = size / 2 + 1;
  double* in = fftw_alloc_real(size);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(size), in, out, FFTW_ESTIMATE);
  }
  std::fill(in, in + size, 0.0);
  std::copy(taps.begin(), taps.end(), in);
  fftw_execute(plan);
  double peak = 0.0;
  for (std::size_t k = 0; k < bins; ++k) peak = std::max(peak, std::hypot(out[k][0], out[k][1]));
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return peak;
}

std::vector<double> fir_filter_same(std::span<const double> x, std::span<const double> taps) {
  const std::size_t n = x.size();
  const std::size_t len = taps.size();
  std::vector<double> y(n, 0.0);
  if (n == 0 || len == 0) return y;
  const std::size_t mid = (len - 1) / 2;

  if (n * len <= 4'000'000) {
    // y[i] = sum_k taps[k] * x[i + mid - k]
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const std::size_t k_lo = i + mid >= n ? i + mid - (n - 1) : 0;
      const std::size_t k_hi = std::min(len - 1, i + mid);
      for (std::size_t k = k_lo; k <= k_hi; ++k) acc += taps[k] * x[i + mid - k];
      y[i] = acc;
    }
    return y;
  }

  std::size_t size = 1;
  while (size < n + len - 1) size <<= 1;
  const std::size_t bins = size / 2 + 1;
  double* a = fftw_alloc_real(size);
  double* b = fftw_alloc_real(size);
  fftw_complex* fa = fftw_alloc_complex(bins);
  fftw_complex* fb = fftw_alloc_complex(bins);
  fftw_plan pa, pb, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    pa = fftw_plan_dft_r2c_1d(static_cast<int>(size), a, fa, FFTW_ESTIMATE);
    pb = fftw_plan_dft_r2c_1d(static_cast<int>(size), b, fb, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(size), fa, a, FFTW_ESTIMATE);
  }
  std::fill(a, a + size, 0.0);
  std::fill(b, b + size, 0.0);
  std::copy(x.begin(), x.end(), a);
  std::copy(taps.begin(), taps.end(), b);
  fftw_execute(pa);
  fftw_execute(pb);
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = fa[k][0] * fb[k][0] - fa[k][1] * fb[k][1];
    const double im = fa[k][0] * fb[k][1] + fa[k][1] * fb[k][0];
    fa[k][0] = re;
    fa[k][1] = im;
  }
  fftw_execute(inv);
  const double scale = 1.0 / static_cast<double>(size);
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i + mid] * scale;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(pa);
    fftw_destroy_plan(pb);
    fftw_destroy_plan(inv);
  }
  fftw_free(a);
  fftw_free(b);
  fftw_free(fa);
  fftw_free(fb);
  return y;
}

Waveform apply_lnl_convolutive(const Waveform& w, const LnlParams& p, std::uint64_t seed, AugmentStats* stats) {
  require_finite(w);
  validate(p, w.sample_rate);
  std::mt19937_64 rng(seed);
  const std::vector<double> x = to_double(w);
  std::vector<double> y(x.size(), 0.0), power(x.size());
  for (int order : p.orders) {
    for (std::size_t i = 0; i < x.size(); ++i) power[i] = std::pow(x[i], order);
    const auto taps = random_filter(p.bands, w.sample_rate, rng);
    const double gain = order > 1 ? std::pow(10.0, -draw(p.nonlinear_attenuation_db, rng) / 20.0) : 1.0;
    const auto branch = fir_filter_same(power, taps);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += gain * branch[i];
  }
  double in_peak = 0.0, out_peak = 0.0;
  for (double v : x) in_peak = std::max(in_peak, std::abs(v));
  for (double v : y) out_peak = std::max(out_peak, std::abs(v));
  if (out_peak > 0.0) {
    const double scale = in_peak / out_peak;
    for (double& v : y) v *= scale;
  }
  return from_double(y, w.sample_rate, stats);
}

Waveform apply_impulsive(const Waveform& w, const ImpulsiveParams& p, std::uint64_t seed, AugmentStats* stats) {
  require_finite(w);
  validate(p);
  std::mt19937_64 rng(seed);
  const std::size_t n = w.samples.size();
  const double fraction = draw(p.fraction, rng);
  const std::size_t count = floor_count(fraction, n);

  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(positions[k], positions[pick(rng)]);
  }
  std::vector<double> y = to_double(w);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = positions[k];
    const double coeff = draw(p.amplitude, rng);
    const double sign = (rng() & 1ULL) ? 1.0 : -1.0;
    y[i] += sign * coeff * y[i];
  }
  Waveform out = from_double(y, w.sample_rate, stats);
  if (stats) stats->modified = count;
  return out;
}

Waveform apply_stationary_additive(const Waveform& w, const SnrNoiseParams& p, std::uint64_t seed,
                                   AugmentStats* stats) {
  require_finite(w);
  validate(p, w.sample_rate);
  const std::vector<double> x = to_double(w);
  double signal_energy = 0.0;
  for (double v : x) signal_energy += v * v;
  if (!(signal_energy > 0.0)) throw Error(ErrorCode::kSilentInput, "SNR is undefined for a silent input");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> noise(x.size());
  for (double& v : noise) v = gauss(rng);
  const auto taps = random_filter(p.coloring, w.sample_rate, rng);
  noise = fir_filter_same(noise, taps);
  const double snr = draw(p.snr_db, rng);

  double noise_energy = 0.0;
  for (double v : noise) noise_energy += v * v;
  if (!(noise_energy > 0.0)) throw Error(ErrorCode::kInvalidArgument, "coloring filter removed all noise");
  const double scale = std::sqrt(signal_energy / noise_energy) / std::pow(10.0, snr / 20.0);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + scale * noise[i];
  Waveform out = from_double(y, w.sample_rate, stats);
  if (stats) stats->snr_db = snr;
  return out;
}

}  // namespace dfcurate
