#include "vpure/audio/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "vpure/common/error.hpp"

namespace vpure::audio {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

double peak_abs(std::span<const double> x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  return peak;
}

void clip_unit(std::vector<double>& x) {
  for (auto& v : x) v = std::clamp(v, -1.0, 1.0);
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw format_error(name + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw format_error(name + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw format_error(name + ": short fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw format_error(name + ": data before fmt chunk");
      if (format != 1 || bits != 16) {
        throw format_error(name + ": only 16-bit PCM is supported");
      }
      if (channels != 1) throw format_error(name + ": only mono audio is supported");
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw format_error(name + ": sample rate " + std::to_string(rate) +
                           " Hz, expected 16000 Hz (resample before loading)");
      }
      Waveform out;
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        out.samples[i] = raw / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw format_error(name + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) {
    throw invalid_input("write_wav: sample rate must be 16000");
  }
  const auto data_bytes = static_cast<std::uint32_t>(wave.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s.append("RIFF");
  put_u32(s, 36 + data_bytes);
  s.append("WAVEfmt ");
  put_u32(s, 16);
  put_u16(s, 1);
  put_u16(s, 1);
  put_u32(s, kSampleRate);
  put_u32(s, kSampleRate * 2);
  put_u16(s, 2);
  put_u16(s, 16);
  s.append("data");
  put_u32(s, data_bytes);
  for (double v : wave.samples) {
    const long q = std::clamp(std::lround(v * 32768.0), -32768L, 32767L);
    put_u16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::pair<Waveform, double> normalize_by_peak(const Waveform& x,
                                              const Waveform& reference) {
  const double peak = peak_abs(reference.samples);
  if (!(peak > 0.0)) {
    throw Error(ErrorKind::kDegenerate, "normalize_by_peak: all-zero reference");
  }
  Waveform out = x;
  for (auto& v : out.samples) v /= peak;
  return {std::move(out), peak};
}

ChunkedWaveform chunk_fixed(const Waveform& x, std::size_t chunk_len) {
  if (chunk_len == 0) throw invalid_input("chunk_fixed: chunk_len must be positive");
  ChunkedWaveform out;
  out.original_length = x.size();
  out.tail = chunk_len;
  for (std::size_t start = 0; start < x.size(); start += chunk_len) {
    const std::size_t n = std::min(chunk_len, x.size() - start);
    Waveform chunk;
    chunk.sample_rate = x.sample_rate;
    chunk.samples.assign(chunk_len, 0.0);
    std::copy_n(x.samples.begin() + static_cast<long>(start), n, chunk.samples.begin());
    out.chunks.push_back(std::move(chunk));
    out.tail = n;
  }
  return out;
}

Waveform concat_chunks(const ChunkedWaveform& chunked) {
  Waveform out;
  if (!chunked.chunks.empty()) out.sample_rate = chunked.chunks.front().sample_rate;
  out.samples.reserve(chunked.original_length);
  for (const auto& chunk : chunked.chunks) {
    const std::size_t remaining = chunked.original_length - out.samples.size();
    const std::size_t n = std::min(remaining, chunk.size());
    out.samples.insert(out.samples.end(), chunk.samples.begin(),
                       chunk.samples.begin() + static_cast<long>(n));
  }
  return out;
}

}  // namespace vpure::audio
