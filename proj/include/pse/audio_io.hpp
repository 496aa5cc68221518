#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace pse {

// Mono audio signal. Samples are dimensionless amplitudes, nominally in
// [-1, 1); 16-bit PCM maps to that range by division with 32768.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  long size() const { return static_cast<long>(samples.size()); }
  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads a RIFF/WAVE file. Accepts mono 16-bit integer PCM and mono 32-bit
// IEEE float; anything else fails with a message naming the offending
// property.
Waveform read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM at w.sample_rate. Values outside [-1, 1) are
// clipped; non-finite samples are rejected.
void write_wav(const std::filesystem::path& path, const Waveform& w);

// One simulated example. Paths are relative to the manifest's directory.
struct MixtureRecord {
  std::string noisy;
  std::string clean;
  std::string enroll;
  std::string condition;  // noise | mix | nmix
  std::optional<double> snr_db;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> interferer;  // mix / nmix only
  nlohmann::json extra = nlohmann::json::object();  // unknown keys, kept on rewrite

  bool operator==(const MixtureRecord&) const = default;
};

struct Manifest {
  std::vector<MixtureRecord> records;
  std::filesystem::path dir;  // directory referenced paths are relative to

  std::filesystem::path resolve(const std::string& rel) const { return dir / rel; }
};

bool is_valid_condition(const std::string& c);

// Manifests are UTF-8, one JSON object per line, record order preserved.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

}  // namespace pse
