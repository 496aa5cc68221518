#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pse/audio_io.hpp"

namespace pse {

// Dataset recipe: three conditions mixed from user-supplied pools of clean
// speech, noise and (optionally) impulse responses. Speaker identity of a
// clean file is the name of its parent directory when the file sits in a
// subdirectory of the pool root, otherwise the filename stem up to the first
// '_'.
struct SimSpec {
  int count_noise = 500;  // target + background noise
  int count_mix = 200;    // target + interfering speaker
  int count_nmix = 100;   // target + interferer + noise
  double snr_lo_db = -5.0;
  double snr_hi_db = 20.0;
  double seconds = 10.0;
  int sample_rate = 8000;
  std::uint64_t seed = 0;
  std::filesystem::path clean_dir;
  std::filesystem::path noise_dir;
  std::filesystem::path rir_dir;  // empty: no impulse-response convolution

  void validate() const;
};

// Generates the audio tree {noisy,clean,enroll,background}/NNNN.wav under
// out_dir plus the returned manifest (also written to out_dir/manifest.jsonl).
// Per-record seeds are derived from the master seed and the record index, so
// output is byte-identical for every thread budget and across reruns.
Manifest simulate(const SimSpec& spec, const std::filesystem::path& out_dir);

}  // namespace pse
