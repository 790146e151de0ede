#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/signal/audio.hpp"

namespace ulma::signal {

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

/// Decodes a RIFF/WAVE byte buffer holding mono 16-bit PCM.
inline AudioClip decode_wav(const std::vector<unsigned char>& bytes, std::string source_id = {}) {
  using detail::read_u16le;
  using detail::read_u32le;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(Errc::CorruptHeader, "missing RIFF/WAVE signature");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t len = read_u32le(hdr + 4);
    const std::size_t body = pos + 8;
    if (len > bytes.size() - body) throw Error(Errc::CorruptHeader, "chunk extends past end of file");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16) throw Error(Errc::CorruptHeader, "fmt chunk too short");
      const std::uint16_t format = read_u16le(bytes.data() + body);
      channels = read_u16le(bytes.data() + body + 2);
      rate = read_u32le(bytes.data() + body + 4);
      bits = read_u16le(bytes.data() + body + 14);
      if (format != 1) throw Error(Errc::UnsupportedFormat, "format tag " + std::to_string(format) + " is not PCM");
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw Error(Errc::CorruptHeader, "no fmt chunk");
  if (data == nullptr) throw Error(Errc::CorruptHeader, "no data chunk");
  if (channels != 1) throw Error(Errc::UnsupportedFormat, std::to_string(channels) + " channels, expected mono");
  if (bits != 16) throw Error(Errc::UnsupportedFormat, std::to_string(bits) + "-bit samples, expected 16");
  if (rate < static_cast<std::uint32_t>(kMinSampleRate) || rate > static_cast<std::uint32_t>(kMaxSampleRate))
    throw Error(Errc::UnsupportedFormat, "sample rate " + std::to_string(rate) + " outside 8000..48000");
  if (data_len % 2 != 0) throw Error(Errc::CorruptHeader, "odd data length for 16-bit samples");
  if (data_len == 0) throw Error(Errc::EmptyAudio, "data chunk holds no samples");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = std::move(source_id);
  clip.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const auto raw = static_cast<std::int16_t>(read_u16le(data + 2 * i));
    clip.samples[i] = static_cast<double>(raw) / 32768.0;
  }
  return clip;
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

/// Encodes a clip as mono 16-bit PCM; samples are rounded to the nearest step of 1/32768.
inline std::string encode_wav(const AudioClip& clip) {
  using detail::put_u16le;
  using detail::put_u32le;
  const auto data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32le(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32le(out, 16);
  put_u16le(out, 1);
  put_u16le(out, 1);
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16le(out, 2);
  put_u16le(out, 16);
  out += "data";
  put_u32le(out, data_len);
  for (double s : clip.samples) {
    double q = std::round(s * 32768.0);
    q = std::clamp(q, -32768.0, 32767.0);
    put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  const std::string bytes = encode_wav(clip);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ulma::signal
