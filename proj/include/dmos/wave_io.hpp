// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace dmos {

struct Waveform {
  std::vector<float> samples;
  std::size_t sample_rate = 0;  // 0 when the container carries no rate (.f32)
};

// Reads mono audio for the predict command: raw little-endian float32 (.f32)
// or WAV (PCM16 / IEEE float32, first channel of multichannel files).
Waveform read_audio(const std::string& path);

void write_f32(const std::string& path, const std::vector<float>& samples);

}  // namespace dmos
