#include "escape/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "escape/error.hpp"

namespace escape {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const std::string& b, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}

std::uint16_t le16(const std::string& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    static_cast<unsigned char>(b[at + 1]) << 8);
}

void put32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xFF));
  b.push_back(static_cast<char>(v >> 8));
}

}  // namespace

AudioClip parse_wav(const std::string& bytes, std::string id) {
  const auto where = [&] { return id.empty() ? std::string("wav") : "wav '" + id + "'"; };
  if (bytes.size() < 12) throw WavError(where() + ": truncated header");
  if (bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    throw WavError(where() + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (true) {
    if (pos + 8 > bytes.size()) {
      throw WavError(where() + (have_fmt ? ": missing data chunk" : ": truncated header"));
    }
    const std::string tag = bytes.substr(pos, 4);
    const std::uint32_t size = le32(bytes, pos + 4);
    const std::size_t body = pos + 8;

    if (tag == "fmt ") {
      if (size < 16 || body + 16 > bytes.size()) throw WavError(where() + ": truncated fmt chunk");
      std::uint16_t format = le16(bytes, body);
      channels = le16(bytes, body + 2);
      rate = le32(bytes, body + 4);
      bits = le16(bytes, body + 14);
      if (format == kFormatExtensible && size >= 40 && body + 26 <= bytes.size()) {
        // First two bytes of the subformat GUID carry the codec.
        format = le16(bytes, body + 24);
      }
      if (format != kFormatPcm) {
        throw WavError(where() + ": unsupported codec (format tag " + std::to_string(format) + ")");
      }
      if (channels != 1) {
        throw WavError(where() + ": unsupported channel count " + std::to_string(channels) +
                       " (mono required)");
      }
      if (bits != 16) {
        throw WavError(where() + ": unsupported bit depth " + std::to_string(bits) + " (16 required)");
      }
      if (rate == 0) throw WavError(where() + ": zero sample rate");
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw WavError(where() + ": data chunk before fmt chunk");
      if (body + size > bytes.size()) throw WavError(where() + ": truncated data chunk");
      const std::size_t n = size / 2;
      if (n == 0) throw WavError(where() + ": no samples");
      AudioClip clip;
      clip.id = std::move(id);
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(le16(bytes, body + 2 * i));
        clip.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return clip;
    }
    pos = body + size + (size & 1u);
  }
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_wav(bytes, path.stem().string());
}

std::string encode_wav(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw WavError("encode_wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::string b;
  b.reserve(44 + data_bytes);
  b += "RIFF";
  put32(b, 36 + data_bytes);
  b += "WAVE";
  b += "fmt ";
  put32(b, 16);
  put16(b, kFormatPcm);
  put16(b, 1);
  put32(b, static_cast<std::uint32_t>(clip.sample_rate));
  put32(b, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put16(b, 2);
  put16(b, 16);
  b += "data";
  put32(b, data_bytes);
  for (double s : clip.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return b;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WavError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace escape
