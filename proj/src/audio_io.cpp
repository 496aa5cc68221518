#include "pse/audio_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pse {

namespace {

struct ChunkHeader {
  char id[4];
  std::uint32_t size;
};

struct FmtChunk {
  std::uint16_t audio_format;  // 1 = PCM, 3 = IEEE float
  std::uint16_t num_channels;
  std::uint32_t sample_rate;
  std::uint32_t byte_rate;
  std::uint16_t block_align;
  std::uint16_t bits_per_sample;
};

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open wav file: " + path.string());

  char riff[4], wave[4];
  std::uint32_t riff_size = 0;
  f.read(riff, 4);
  f.read(reinterpret_cast<char*>(&riff_size), 4);
  f.read(wave, 4);
  if (!f || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file: " + path.string());

  FmtChunk fmt{};
  bool have_fmt = false;
  Waveform w;
  bool have_data = false;

  while (f) {
    ChunkHeader ch{};
    f.read(reinterpret_cast<char*>(&ch), sizeof(ch));
    if (!f) break;
    const auto body = f.tellg();

    if (std::memcmp(ch.id, "fmt ", 4) == 0) {
      if (ch.size < sizeof(FmtChunk))
        throw std::runtime_error("wav fmt chunk too small: " + path.string());
      f.read(reinterpret_cast<char*>(&fmt), sizeof(fmt));
      have_fmt = true;
    } else if (std::memcmp(ch.id, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav data chunk before fmt: " + path.string());
      if (fmt.num_channels != 1)
        throw std::runtime_error("mono required, file has " +
                                 std::to_string(fmt.num_channels) + " channels: " +
                                 path.string());
      if (fmt.audio_format == 1 && fmt.bits_per_sample == 16) {
        const std::size_t n = ch.size / 2;
        std::vector<std::int16_t> raw(n);
        f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
        if (!f) throw std::runtime_error("truncated wav data: " + path.string());
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) w.samples[i] = raw[i] / 32768.0;
      } else if (fmt.audio_format == 3 && fmt.bits_per_sample == 32) {
        const std::size_t n = ch.size / 4;
        std::vector<float> raw(n);
        f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
        if (!f) throw std::runtime_error("truncated wav data: " + path.string());
        w.samples.assign(raw.begin(), raw.end());
      } else {
        throw std::runtime_error("unsupported wav encoding (format " +
                                 std::to_string(fmt.audio_format) + ", " +
                                 std::to_string(fmt.bits_per_sample) + " bits): " +
                                 path.string());
      }
      w.sample_rate = static_cast<int>(fmt.sample_rate);
      have_data = true;
    }
    // chunks are word-aligned
    f.seekg(body + static_cast<std::streamoff>((ch.size + 1u) & ~1u));
  }

  if (!have_data) throw std::runtime_error("wav file has no data chunk: " + path.string());
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  for (double s : w.samples)
    if (!std::isfinite(s))
      throw std::runtime_error("non-finite sample, refusing to write: " + path.string());
  if (w.sample_rate <= 0) throw std::runtime_error("invalid sample rate");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write wav file: " + path.string());

  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  put_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(f, 16);
  put_u16(f, 1);  // PCM
  put_u16(f, 1);  // mono
  put_u32(f, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(f, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(f, 2);
  put_u16(f, 16);
  f.write("data", 4);
  put_u32(f, data_bytes);

  for (double s : w.samples) {
    long v = std::lround(s * 32768.0);
    if (v > 32767) v = 32767;
    if (v < -32768) v = -32768;
    const auto pcm = static_cast<std::int16_t>(v);
    f.write(reinterpret_cast<const char*>(&pcm), 2);
  }
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

bool is_valid_condition(const std::string& c) {
  return c == "noise" || c == "mix" || c == "nmix";
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path.string());

  Manifest m;
  m.dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("manifest " + path.string() + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object())
      throw std::runtime_error("manifest " + path.string() + " line " +
                               std::to_string(line_no) + ": not a JSON object");

    MixtureRecord r;
    for (const char* key : {"noisy", "clean", "enroll", "condition"})
      if (!j.contains(key) || !j[key].is_string())
        throw std::runtime_error("manifest " + path.string() + " line " +
                                 std::to_string(line_no) + ": missing key '" + key + "'");
    r.noisy = j["noisy"].get<std::string>();
    r.clean = j["clean"].get<std::string>();
    r.enroll = j["enroll"].get<std::string>();
    r.condition = j["condition"].get<std::string>();
    if (!is_valid_condition(r.condition))
      throw std::runtime_error("manifest " + path.string() + " line " +
                               std::to_string(line_no) + ": unknown condition '" +
                               r.condition + "'");
    if (j.contains("snr_db")) r.snr_db = j["snr_db"].get<double>();
    if (j.contains("seed")) r.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("interferer")) r.interferer = j["interferer"].get<std::string>();
    for (auto& [key, value] : j.items()) {
      if (key == "noisy" || key == "clean" || key == "enroll" || key == "condition" ||
          key == "snr_db" || key == "seed" || key == "interferer")
        continue;
      r.extra[key] = value;
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write manifest: " + path.string());
  for (const auto& r : m.records) {
    if (!is_valid_condition(r.condition))
      throw std::runtime_error("refusing to save record with condition '" + r.condition + "'");
    nlohmann::json j = r.extra;
    j["noisy"] = r.noisy;
    j["clean"] = r.clean;
    j["enroll"] = r.enroll;
    j["condition"] = r.condition;
    if (r.snr_db) j["snr_db"] = *r.snr_db;
    if (r.seed) j["seed"] = *r.seed;
    if (r.interferer) j["interferer"] = *r.interferer;
    f << j.dump() << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace pse
