// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/wave_io.hpp"

#include <cstring>
#include <fstream>

#include "dmos/common.hpp"

namespace dmos {

namespace {

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DMOS_CHECK(in.good(), ErrorKind::MissingFile, "cannot open audio: " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return data;
}

template <typename T>
T read_at(const std::vector<char>& d, std::size_t off) {
  T out;
  DMOS_CHECK(off + sizeof(T) <= d.size(), ErrorKind::CorruptFile, "truncated audio file");
  std::memcpy(&out, d.data() + off, sizeof(T));
  return out;
}

Waveform read_wav(const std::vector<char>& d, const std::string& path) {
  DMOS_CHECK(d.size() >= 44 && std::memcmp(d.data(), "RIFF", 4) == 0 &&
                 std::memcmp(d.data() + 8, "WAVE", 4) == 0,
             ErrorKind::CorruptFile, "not a RIFF/WAVE file: " + path);
  std::size_t pos = 12;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  Waveform wf;
  bool got_fmt = false, got_data = false;
  while (pos + 8 <= d.size()) {
    char id[4];
    std::memcpy(id, d.data() + pos, 4);
    const auto chunk = read_at<std::uint32_t>(d, pos + 4);
    pos += 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = read_at<std::uint16_t>(d, pos);
      channels = read_at<std::uint16_t>(d, pos + 2);
      rate = read_at<std::uint32_t>(d, pos + 4);
      bits = read_at<std::uint16_t>(d, pos + 14);
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      DMOS_CHECK(got_fmt, ErrorKind::CorruptFile, "wav data before fmt: " + path);
      DMOS_CHECK(channels >= 1, ErrorKind::CorruptFile, "wav with zero channels: " + path);
      const std::size_t bytes_per = bits / 8;
      const std::size_t n_frames = chunk / (bytes_per * channels);
      wf.samples.resize(n_frames);
      for (std::size_t i = 0; i < n_frames; ++i) {
        const std::size_t off = pos + i * bytes_per * channels;  // first channel
        if (format == 1 && bits == 16) {
          wf.samples[i] = float(read_at<std::int16_t>(d, off)) / 32768.0f;
        } else if (format == 3 && bits == 32) {
          wf.samples[i] = read_at<float>(d, off);
        } else {
          fail(ErrorKind::CorruptFile,
               "unsupported wav encoding (need PCM16 or float32): " + path);
        }
      }
      got_data = true;
    }
    pos += chunk + (chunk % 2);  // chunks are word aligned
  }
  DMOS_CHECK(got_data, ErrorKind::CorruptFile, "wav without data chunk: " + path);
  wf.sample_rate = rate;
  return wf;
}

}  // namespace

Waveform read_audio(const std::string& path) {
  const auto data = read_all(path);
  if (data.size() >= 12 && std::memcmp(data.data(), "RIFF", 4) == 0)
    return read_wav(data, path);
  // raw little-endian float32
  DMOS_CHECK(data.size() % sizeof(float) == 0, ErrorKind::CorruptFile,
             "raw f32 file size not a multiple of 4: " + path);
  Waveform wf;
  wf.samples.resize(data.size() / sizeof(float));
  std::memcpy(wf.samples.data(), data.data(), data.size());
  for (float s : wf.samples)
    DMOS_CHECK(std::isfinite(s), ErrorKind::CorruptFile,
               "non-finite sample in " + path);
  return wf;
}

void write_f32(const std::string& path, const std::vector<float>& samples) {
  std::ofstream out(path, std::ios::binary);
  DMOS_CHECK(out.good(), ErrorKind::MissingFile, "cannot write audio: " + path);
  out.write(reinterpret_cast<const char*>(samples.data()),
            static_cast<std::streamsize>(samples.size() * sizeof(float)));
}

}  // namespace dmos
