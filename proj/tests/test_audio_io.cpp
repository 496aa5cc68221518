#include "pse/audio_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>

#include "doctest.h"
#include "reference.hpp"
#include "tmpdir.hpp"

using namespace pse;

namespace {

// hand-rolled wav writer so read_wav is checked against independent bytes
void write_raw_wav(const std::filesystem::path& path, std::uint16_t format,
                   std::uint16_t channels, std::uint16_t bits, std::uint32_t rate,
                   const void* data, std::uint32_t data_bytes) {
  std::ofstream f(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
  f.write("RIFF", 4);
  u32(36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  f.write("data", 4);
  u32(data_bytes);
  f.write(static_cast<const char*>(data), data_bytes);
}

}  // namespace

TEST_CASE("read_wav scales 16-bit pcm by 1/32768") {
  TmpDir tmp;
  const std::int16_t pcm[3] = {0, 16384, -32768};
  write_raw_wav(tmp / "a.wav", 1, 1, 16, 8000, pcm, sizeof(pcm));
  const Waveform w = read_wav(tmp / "a.wav");
  REQUIRE(w.samples.size() == 3);
  CHECK(w.sample_rate == 8000);
  CHECK(w.samples[0] == 0.0);
  CHECK(w.samples[1] == 0.5);
  CHECK(w.samples[2] == -1.0);
}

TEST_CASE("read_wav rejects stereo with a message naming the property") {
  TmpDir tmp;
  const std::int16_t pcm[4] = {0, 0, 0, 0};
  write_raw_wav(tmp / "st.wav", 1, 2, 16, 8000, pcm, sizeof(pcm));
  CHECK_THROWS_WITH_AS(read_wav(tmp / "st.wav"), doctest::Contains("mono"), std::runtime_error);
}

TEST_CASE("read_wav rejects unsupported bit depth and missing files") {
  TmpDir tmp;
  const std::uint8_t pcm[4] = {0, 0, 0, 0};
  write_raw_wav(tmp / "b8.wav", 1, 1, 8, 8000, pcm, sizeof(pcm));
  CHECK_THROWS_WITH_AS(read_wav(tmp / "b8.wav"), doctest::Contains("unsupported"),
                       std::runtime_error);
  CHECK_THROWS_AS(read_wav(tmp / "missing.wav"), std::runtime_error);
}

TEST_CASE("read_wav accepts 32-bit float") {
  TmpDir tmp;
  const float data[2] = {0.25f, -0.5f};
  write_raw_wav(tmp / "f.wav", 3, 1, 32, 8000, data, sizeof(data));
  const Waveform w = read_wav(tmp / "f.wav");
  CHECK(w.samples[0] == doctest::Approx(0.25));
  CHECK(w.samples[1] == doctest::Approx(-0.5));
}

TEST_CASE("write_wav emits exactly one second for 8000 zero samples") {
  TmpDir tmp;
  Waveform w;
  w.sample_rate = 8000;
  w.samples.assign(8000, 0.0);
  write_wav(tmp / "z.wav", w);

  std::ifstream f(tmp / "z.wav", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 44 + 16000);
  std::uint32_t rate, data_len;
  std::memcpy(&rate, bytes.data() + 24, 4);
  std::memcpy(&data_len, bytes.data() + 40, 4);
  CHECK(rate == 8000);
  CHECK(data_len == 16000);  // 8000 samples * 2 bytes = 1 s
}

TEST_CASE("write_wav clips out-of-range samples to full scale") {
  TmpDir tmp;
  Waveform w;
  w.samples = {1.5, -2.0, 0.0};
  write_wav(tmp / "c.wav", w);
  std::ifstream f(tmp / "c.wav", std::ios::binary);
  f.seekg(44);
  std::int16_t pcm[3];
  f.read(reinterpret_cast<char*>(pcm), sizeof(pcm));
  CHECK(pcm[0] == 32767);
  CHECK(pcm[1] == -32768);
  CHECK(pcm[2] == 0);
}

TEST_CASE("write_wav rejects non-finite samples") {
  TmpDir tmp;
  Waveform w;
  w.samples = {0.0, std::nan("")};
  CHECK_THROWS_AS(write_wav(tmp / "n.wav", w), std::runtime_error);
}

TEST_CASE("wav round-trip error stays within one quantization step") {
  TmpDir tmp;
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    Waveform w;
    w.sample_rate = 8000;
    w.samples = ref::random_signal(200, rng(), 0.9);
    write_wav(tmp / "r.wav", w);
    const Waveform back = read_wav(tmp / "r.wav");
    REQUIRE(back.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      CHECK(std::fabs(back.samples[i] - w.samples[i]) <= 1.0 / 32768.0);
  }
}

TEST_CASE("manifest: empty file loads as zero records") {
  TmpDir tmp;
  std::ofstream(tmp / "m.jsonl").close();
  const Manifest m = load_manifest(tmp / "m.jsonl");
  CHECK(m.records.empty());
}

TEST_CASE("manifest: nmix condition tag round-trips") {
  TmpDir tmp;
  {
    std::ofstream f(tmp / "m.jsonl");
    f << R"({"noisy":"n.wav","clean":"c.wav","enroll":"e.wav","condition":"nmix"})" << "\n";
  }
  const Manifest m = load_manifest(tmp / "m.jsonl");
  REQUIRE(m.records.size() == 1);
  CHECK(m.records[0].condition == "nmix");
}

TEST_CASE("manifest: malformed line reports its line number") {
  TmpDir tmp;
  {
    std::ofstream f(tmp / "m.jsonl");
    f << R"({"noisy":"n.wav","clean":"c.wav","enroll":"e.wav","condition":"noise"})" << "\n";
    f << "this is not json\n";
  }
  CHECK_THROWS_WITH_AS(load_manifest(tmp / "m.jsonl"), doctest::Contains("line 2"),
                       std::runtime_error);
}

TEST_CASE("manifest: unknown condition tag is an error") {
  TmpDir tmp;
  {
    std::ofstream f(tmp / "m.jsonl");
    f << R"({"noisy":"n.wav","clean":"c.wav","enroll":"e.wav","condition":"weird"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_manifest(tmp / "m.jsonl"), doctest::Contains("condition"),
                       std::runtime_error);
}

TEST_CASE("manifest: save-then-load of 50 synthetic records is structurally equal") {
  TmpDir tmp;
  Manifest m;
  m.dir = tmp.path();
  std::mt19937_64 rng(7);
  const char* conds[3] = {"noise", "mix", "nmix"};
  for (int i = 0; i < 50; ++i) {
    MixtureRecord r;
    r.noisy = "noisy/" + std::to_string(i) + ".wav";
    r.clean = "clean/" + std::to_string(i) + ".wav";
    r.enroll = "enroll/" + std::to_string(i) + ".wav";
    r.condition = conds[i % 3];
    if (i % 2 == 0) r.snr_db = static_cast<double>(i) - 5.0;
    if (i % 3 == 0) r.seed = rng();
    if (r.condition != "noise") r.interferer = "spk" + std::to_string(i);
    if (i % 5 == 0) r.extra["custom_tag"] = "v" + std::to_string(i);
    m.records.push_back(r);
  }
  save_manifest(m, tmp / "out.jsonl");
  const Manifest back = load_manifest(tmp / "out.jsonl");
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) CHECK(back.records[i] == m.records[i]);
}

TEST_CASE("manifest: unknown keys survive a rewrite") {
  TmpDir tmp;
  {
    std::ofstream f(tmp / "m.jsonl");
    f << R"({"noisy":"n.wav","clean":"c.wav","enroll":"e.wav","condition":"noise","future_key":[1,2]})"
      << "\n";
  }
  Manifest m = load_manifest(tmp / "m.jsonl");
  save_manifest(m, tmp / "m2.jsonl");
  const Manifest back = load_manifest(tmp / "m2.jsonl");
  CHECK(back.records[0].extra["future_key"] == nlohmann::json({1, 2}));
}
