#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "escape/wav.hpp"

namespace escape {

struct MfccParams {
  double window_length = 0.025;  // seconds
  double window_step = 0.010;    // seconds
  int n_filters = 26;
  int n_cepstra = 13;
  int fft_size = 512;
  double pre_emphasis = 0.97;
  double lifter = 22.0;
  double energy_floor = 1e-30;
  double max_duration = 1.5;  // seconds; longer clips are truncated
  int sample_rate = 16000;    // clips at any other rate are rejected

  int frame_length_samples() const;
  int frame_step_samples() const;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

/// L x n_cepstra cepstral sequence of one clip; row = frame.
struct MfccMatrix {
  std::string clip_id;
  Eigen::MatrixXd frames;

  Eigen::Index length() const { return frames.rows(); }
};

/// Keeps the first round(max_duration * sample_rate) samples.
AudioClip truncate(const AudioClip& clip, double max_duration);

/// 1 + floor((n - frame_len) / frame_step). Throws TooShortError when the
/// clip is shorter than one window.
std::size_t frame_count(std::size_t n_samples, int sample_rate, const MfccParams& params);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterbank {
  Eigen::MatrixXd weights;        // n_filters x (fft_size/2 + 1)
  std::vector<double> center_hz;  // per filter, strictly increasing
};

/// Triangular filters with peaks equally spaced on the mel axis between
/// mel(f_min) and mel(f_max); f_max < 0 means sample_rate / 2. Filter edges
/// snap to FFT bins; throws ConfigError when two edges land in the same bin
/// (some filter would be empty or degenerate).
MelFilterbank mel_filterbank(int n_filters, int fft_size, int sample_rate, double f_min = 0.0,
                             double f_max = -1.0);

/// |DFT| of a frame zero-padded (or cut) to fft_size; fft_size/2 + 1 bins.
std::vector<double> magnitude_spectrum(std::span<const double> frame, int fft_size);

/// Full pipeline for one clip that is already truncated: pre-emphasis,
/// rectangular framing, power spectrum, filterbank energies (floored), log,
/// orthonormal DCT-II, liftering, coefficient 0 replaced by log frame energy.
/// Throws ConfigError for a sample-rate mismatch, TooShortError below one window.
MfccMatrix compute_mfcc(const AudioClip& clip, const MfccParams& params = {});

/// Result slot for one clip of a batch.
struct MfccOutcome {
  std::string clip_id;
  std::optional<MfccMatrix> mfcc;
  std::string error;  // set when mfcc is empty
};

/// Truncates then extracts every clip; errors are attributed per clip.
/// The parallel version distributes clips over OpenMP threads; the serial one
/// is the reference it is tested against.
std::vector<MfccOutcome> compute_mfcc_batch(const std::vector<AudioClip>& clips,
                                            const MfccParams& params = {});
std::vector<MfccOutcome> compute_mfcc_batch_serial(const std::vector<AudioClip>& clips,
                                                   const MfccParams& params = {});

}  // namespace escape
