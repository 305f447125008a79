#include "escape/mfcc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "escape/error.hpp"

namespace escape {

namespace {

/// Shared FFTW r2c plans, one per size. Planning is not thread-safe in FFTW,
/// execution on distinct buffers is.
class RealFft {
 public:
  static const RealFft& get(int n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<RealFft>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[n];
    if (!slot) slot.reset(new RealFft(n));
    return *slot;
  }

  ~RealFft() { fftw_destroy_plan(plan_); }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  /// in has n entries, out n/2 + 1.
  void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }
  int size() const { return n_; }

 private:
  explicit RealFft(int n) : n_(n) {
    double* in = fftw_alloc_real(static_cast<std::size_t>(n));
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan_ = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (!plan_) throw ConfigError("FFTW could not plan a transform of size " + std::to_string(n));
  }

  int n_;
  fftw_plan plan_ = nullptr;
};

/// Per-parameter constants: filterbank, DCT rows and lifter.
class MfccEngine {
 public:
  explicit MfccEngine(const MfccParams& p)
      : params_(p),
        fft_(RealFft::get(p.fft_size)),
        fbank_(mel_filterbank(p.n_filters, p.fft_size, p.sample_rate).weights),
        dct_(p.n_cepstra, p.n_filters),
        lifter_(p.n_cepstra) {
    const double n = p.n_filters;
    for (int k = 0; k < p.n_cepstra; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (int i = 0; i < p.n_filters; ++i) {
        dct_(k, i) = scale * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
      }
      lifter_[k] = p.lifter > 0 ? 1.0 + 0.5 * p.lifter * std::sin(std::numbers::pi * k / p.lifter) : 1.0;
    }
  }

  MfccMatrix run(const AudioClip& clip) const {
    const auto& p = params_;
    if (clip.sample_rate != p.sample_rate) {
      throw ConfigError("sample rate " + std::to_string(clip.sample_rate) + " Hz, expected " +
                        std::to_string(p.sample_rate) + " Hz (resample before extraction)");
    }
    const std::size_t n_frames = frame_count(clip.samples.size(), clip.sample_rate, p);
    const auto len = static_cast<std::size_t>(p.frame_length_samples());
    const auto step = static_cast<std::size_t>(p.frame_step_samples());
    const auto nfft = static_cast<std::size_t>(p.fft_size);
    const std::size_t n_bins = nfft / 2 + 1;

    std::vector<double> emph(clip.samples.size());
    emph[0] = clip.samples[0];
    for (std::size_t i = 1; i < emph.size(); ++i) {
      emph[i] = clip.samples[i] - p.pre_emphasis * clip.samples[i - 1];
    }

    std::vector<double> buf(nfft);
    std::vector<std::complex<double>> spec(n_bins);
    Eigen::VectorXd power(static_cast<Eigen::Index>(n_bins));
    MfccMatrix out{clip.id, Eigen::MatrixXd(static_cast<Eigen::Index>(n_frames), p.n_cepstra)};

    for (std::size_t f = 0; f < n_frames; ++f) {
      std::fill(buf.begin(), buf.end(), 0.0);
      std::copy_n(emph.begin() + static_cast<std::ptrdiff_t>(f * step), std::min(len, nfft), buf.begin());
      fft_.forward(buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
      for (std::size_t b = 0; b < n_bins; ++b) {
        power[static_cast<Eigen::Index>(b)] = std::norm(spec[b]) / static_cast<double>(nfft);
      }
      const double energy = std::max(power.sum(), p.energy_floor);
      const Eigen::VectorXd log_mel =
          (fbank_ * power).array().max(p.energy_floor).log().matrix();
      Eigen::VectorXd cep = dct_ * log_mel;
      for (int k = 0; k < p.n_cepstra; ++k) cep[k] *= lifter_[k];
      cep[0] = std::log(energy);
      out.frames.row(static_cast<Eigen::Index>(f)) = cep.transpose();
    }
    return out;
  }

 private:
  MfccParams params_;
  const RealFft& fft_;
  Eigen::MatrixXd fbank_;
  Eigen::MatrixXd dct_;
  std::vector<double> lifter_;
};

MfccOutcome run_one(const MfccEngine& engine, const AudioClip& clip, double max_duration) {
  MfccOutcome o{clip.id, std::nullopt, {}};
  try {
    o.mfcc = engine.run(truncate(clip, max_duration));
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  return o;
}

}  // namespace

int MfccParams::frame_length_samples() const {
  return static_cast<int>(std::lround(window_length * sample_rate));
}

int MfccParams::frame_step_samples() const {
  return static_cast<int>(std::lround(window_step * sample_rate));
}

void MfccParams::validate() const {
  if (sample_rate <= 0) throw ConfigError("mfcc: sample_rate must be positive");
  if (!(window_step > 0) || !(window_step <= window_length)) {
    throw ConfigError("mfcc: need 0 < window_step <= window_length");
  }
  if (frame_step_samples() < 1) throw ConfigError("mfcc: window_step is below one sample");
  if (n_cepstra < 1 || n_cepstra > n_filters) throw ConfigError("mfcc: need 1 <= n_cepstra <= n_filters");
  if (fft_size < frame_length_samples()) {
    throw ConfigError("mfcc: fft_size " + std::to_string(fft_size) + " is shorter than the window (" +
                      std::to_string(frame_length_samples()) + " samples)");
  }
  if (!(energy_floor > 0)) throw ConfigError("mfcc: energy_floor must be positive");
  if (!(max_duration > 0)) throw ConfigError("mfcc: max_duration must be positive");
  if (lifter < 0) throw ConfigError("mfcc: lifter must be non-negative");
}

AudioClip truncate(const AudioClip& clip, double max_duration) {
  if (!(max_duration > 0)) throw ConfigError("truncate: max_duration must be positive");
  const auto limit = static_cast<std::size_t>(std::llround(max_duration * clip.sample_rate));
  if (clip.samples.size() <= limit) return clip;
  AudioClip out{clip.id, clip.sample_rate, {}};
  out.samples.assign(clip.samples.begin(), clip.samples.begin() + static_cast<std::ptrdiff_t>(limit));
  return out;
}

std::size_t frame_count(std::size_t n_samples, int sample_rate, const MfccParams& params) {
  MfccParams p = params;
  p.sample_rate = sample_rate;
  p.validate();
  const auto len = static_cast<std::size_t>(p.frame_length_samples());
  const auto step = static_cast<std::size_t>(p.frame_step_samples());
  if (n_samples < len) {
    throw TooShortError("clip has " + std::to_string(n_samples) + " samples, one window needs " +
                        std::to_string(len));
  }
  return 1 + (n_samples - len) / step;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(int n_filters, int fft_size, int sample_rate, double f_min, double f_max) {
  if (n_filters < 1 || fft_size < 2 || sample_rate <= 0) {
    throw ConfigError("mel_filterbank: n_filters, fft_size and sample_rate must be positive");
  }
  if (f_max < 0) f_max = sample_rate / 2.0;
  if (f_max > sample_rate / 2.0) throw ConfigError("mel_filterbank: f_max above Nyquist");
  if (f_min < 0 || f_min >= f_max) throw ConfigError("mel_filterbank: need 0 <= f_min < f_max");

  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  const int n_points = n_filters + 2;
  std::vector<double> hz(static_cast<std::size_t>(n_points));
  std::vector<int> bin(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * i / (n_points - 1);
    hz[i] = mel_to_hz(mel);
    bin[i] = static_cast<int>(std::floor((fft_size + 1) * hz[i] / sample_rate));
  }
  for (int i = 1; i < n_points; ++i) {
    if (bin[i] <= bin[i - 1]) {
      throw ConfigError("mel_filterbank: " + std::to_string(n_filters) +
                        " filters are too many for fft_size " + std::to_string(fft_size) +
                        " (filter " + std::to_string(std::max(i - 2, 0)) + " collapses)");
    }
  }

  MelFilterbank fb{Eigen::MatrixXd::Zero(n_filters, fft_size / 2 + 1), {}};
  fb.center_hz.assign(hz.begin() + 1, hz.end() - 1);
  for (int j = 0; j < n_filters; ++j) {
    const int lo = bin[j], mid = bin[j + 1], hi = bin[j + 2];
    for (int i = lo; i < mid; ++i) fb.weights(j, i) = static_cast<double>(i - lo) / (mid - lo);
    for (int i = mid; i < hi && i <= fft_size / 2; ++i) {
      fb.weights(j, i) = static_cast<double>(hi - i) / (hi - mid);
    }
  }
  return fb;
}

std::vector<double> magnitude_spectrum(std::span<const double> frame, int fft_size) {
  if (fft_size < 2) throw ConfigError("magnitude_spectrum: fft_size must be at least 2");
  const auto& fft = RealFft::get(fft_size);
  const auto nfft = static_cast<std::size_t>(fft_size);
  std::vector<double> buf(nfft, 0.0);
  std::copy_n(frame.begin(), std::min(frame.size(), nfft), buf.begin());
  std::vector<std::complex<double>> spec(nfft / 2 + 1);
  fft.forward(buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
  std::vector<double> mag(spec.size());
  std::transform(spec.begin(), spec.end(), mag.begin(), [](auto c) { return std::abs(c); });
  return mag;
}

MfccMatrix compute_mfcc(const AudioClip& clip, const MfccParams& params) {
  params.validate();
  return MfccEngine(params).run(clip);
}

std::vector<MfccOutcome> compute_mfcc_batch(const std::vector<AudioClip>& clips, const MfccParams& params) {
  params.validate();
  const MfccEngine engine(params);
  std::vector<MfccOutcome> out(clips.size());
  const auto n = static_cast<std::ptrdiff_t>(clips.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = run_one(engine, clips[static_cast<std::size_t>(i)], params.max_duration);
  }
  return out;
}

std::vector<MfccOutcome> compute_mfcc_batch_serial(const std::vector<AudioClip>& clips,
                                                   const MfccParams& params) {
  params.validate();
  const MfccEngine engine(params);
  std::vector<MfccOutcome> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(run_one(engine, c, params.max_duration));
  return out;
}

}  // namespace escape
