#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace escape {

/// Mono audio, samples in [-1, 1].
struct AudioClip {
  std::string id;
  int sample_rate = 0;
  std::vector<double> samples;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Reads a 16-bit PCM mono RIFF/WAVE file; samples are value / 32768.
/// Unknown chunks (LIST, fact, ...) are skipped. Throws WavError on a
/// non-mono file, a bit depth other than 16, a non-PCM codec, a truncated
/// header or data chunk, or an empty data chunk.
AudioClip read_wav(const std::filesystem::path& path);
AudioClip parse_wav(const std::string& bytes, std::string id = {});

/// Encodes a clip as 16-bit PCM mono. Samples are scaled by 32768, rounded
/// and clamped to [-32768, 32767].
std::string encode_wav(const AudioClip& clip);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

}  // namespace escape
