#include "pse/simulator.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <stdexcept>

#include "pse/parallel.hpp"
#include "pse/prep.hpp"
#include "pse/stft.hpp"

namespace pse {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  const double u = (rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return rng() % n; }

struct Utterance {
  std::filesystem::path path;
  std::string speaker;
};

std::string speaker_of(const std::filesystem::path& file, const std::filesystem::path& root) {
  const auto parent = file.parent_path();
  if (parent != root) return parent.filename().string();
  const std::string stem = file.stem().string();
  const auto us = stem.find('_');
  return us == std::string::npos ? stem : stem.substr(0, us);
}

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (dir.empty()) return out;
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir.string());
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  std::sort(out.begin(), out.end());  // directory iteration order is unspecified
  return out;
}

// Loop-pads (with a warning) or crops to exactly len samples; a crop start is
// drawn when the source is longer.
Waveform fit_length(const Waveform& w, long len, std::mt19937_64& rng,
                    const std::string& what) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (w.size() == 0) throw std::runtime_error("empty source audio for " + what);
  if (w.size() < len) {
    std::cerr << "[pse] warning: " << what << " shorter than the sample length, loop-padding\n";
    out.samples.resize(len);
    for (long i = 0; i < len; ++i) out.samples[i] = w.samples[i % w.size()];
  } else {
    const long slack = w.size() - len;
    const long start = slack > 0 ? static_cast<long>(uniform_index(rng, slack + 1)) : 0;
    out.samples.assign(w.samples.begin() + start, w.samples.begin() + start + len);
  }
  return out;
}

struct Pools {
  std::vector<Utterance> clean;
  std::map<std::string, std::vector<int>> by_speaker;
  std::vector<std::string> speakers_multi;  // speakers with >= 2 utterances
  std::vector<std::string> speakers_all;
  std::vector<std::filesystem::path> noise;
  std::vector<std::filesystem::path> rirs;
};

Pools scan_pools(const SimSpec& spec) {
  Pools p;
  for (const auto& f : list_wavs(spec.clean_dir))
    p.clean.push_back({f, speaker_of(f, spec.clean_dir)});
  for (std::size_t i = 0; i < p.clean.size(); ++i)
    p.by_speaker[p.clean[i].speaker].push_back(static_cast<int>(i));
  for (const auto& [spk, utts] : p.by_speaker) {
    p.speakers_all.push_back(spk);
    if (utts.size() >= 2) p.speakers_multi.push_back(spk);
  }
  p.noise = list_wavs(spec.noise_dir);
  p.rirs = list_wavs(spec.rir_dir);
  return p;
}

}  // namespace

void SimSpec::validate() const {
  if (count_noise < 0 || count_mix < 0 || count_nmix < 0)
    throw std::invalid_argument("simulate: negative record count");
  if (snr_lo_db > snr_hi_db) throw std::invalid_argument("simulate: snr_lo > snr_hi");
  if (seconds <= 0.0) throw std::invalid_argument("simulate: seconds must be positive");
  if (sample_rate <= 0) throw std::invalid_argument("simulate: bad sample rate");
}

Manifest simulate(const SimSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  const int total = spec.count_noise + spec.count_mix + spec.count_nmix;

  Manifest manifest;
  manifest.dir = out_dir;
  if (total == 0) return manifest;

  const Pools pools = scan_pools(spec);
  if (pools.speakers_multi.empty())
    throw std::runtime_error("simulate: need at least one speaker with two utterances");
  if ((spec.count_noise > 0 || spec.count_nmix > 0) && pools.noise.empty())
    throw std::runtime_error("simulate: noise pool is empty");
  if ((spec.count_mix > 0 || spec.count_nmix > 0) && pools.speakers_all.size() < 2)
    throw std::runtime_error("simulate: mix/nmix conditions need at least two speakers");

  for (const char* sub : {"noisy", "clean", "enroll", "background"})
    std::filesystem::create_directories(out_dir / sub);

  const long len = static_cast<long>(spec.seconds * spec.sample_rate + 0.5);
  manifest.records.resize(total);

  parallel_for(total, [&](std::int64_t i) {
    std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const std::string condition =
        i < spec.count_noise ? "noise" : (i < spec.count_noise + spec.count_mix ? "mix" : "nmix");

    // target speaker and two distinct utterances: content + enrollment
    const std::string& spk =
        pools.speakers_multi[uniform_index(rng, pools.speakers_multi.size())];
    const auto& utts = pools.by_speaker.at(spk);
    const std::size_t a = uniform_index(rng, utts.size());
    std::size_t b = uniform_index(rng, utts.size() - 1);
    if (b >= a) ++b;
    const auto& content_path = pools.clean[utts[a]].path;
    const auto& enroll_path = pools.clean[utts[b]].path;

    Waveform target = fit_length(read_wav(content_path), len, rng, content_path.string());
    Waveform enroll = read_wav(enroll_path);
    if (target.sample_rate != spec.sample_rate || enroll.sample_rate != spec.sample_rate)
      throw std::runtime_error("simulate: source sample rate differs from spec");

    if (!pools.rirs.empty()) {
      const Waveform rir =
          read_wav(pools.rirs[uniform_index(rng, pools.rirs.size())]);
      target.samples = convolve_truncated(target.samples, rir.samples);
    }

    Waveform background;
    background.sample_rate = spec.sample_rate;
    background.samples.assign(len, 0.0);
    double snr_db = 0.0;
    std::optional<std::string> interferer_rel;
    std::optional<double> snr_interferer;

    if (condition == "mix" || condition == "nmix") {
      // interfering speaker, never the target
      std::vector<std::string> others;
      for (const auto& s : pools.speakers_all)
        if (s != spk) others.push_back(s);
      const std::string& ispk = others[uniform_index(rng, others.size())];
      const auto& iutts = pools.by_speaker.at(ispk);
      const auto& ipath = pools.clean[iutts[uniform_index(rng, iutts.size())]].path;
      Waveform interf = fit_length(read_wav(ipath), len, rng, ipath.string());
      if (!pools.rirs.empty()) {
        const Waveform rir =
            read_wav(pools.rirs[uniform_index(rng, pools.rirs.size())]);
        interf.samples = convolve_truncated(interf.samples, rir.samples);
      }
      const double s1 = uniform_range(rng, spec.snr_lo_db, spec.snr_hi_db);
      MixResult m = mix_at_snr(target, interf, s1);
      for (long s = 0; s < len; ++s) background.samples[s] += m.scaled_noise.samples[s];
      interferer_rel = std::filesystem::relative(ipath, out_dir).string();
      snr_interferer = s1;
      snr_db = s1;
    }
    if (condition == "noise" || condition == "nmix") {
      const auto& npath = pools.noise[uniform_index(rng, pools.noise.size())];
      Waveform noise = fit_length(read_wav(npath), len, rng, npath.string());
      const double s2 = uniform_range(rng, spec.snr_lo_db, spec.snr_hi_db);
      MixResult m = mix_at_snr(target, noise, s2);  // SNR relative to the target
      for (long s = 0; s < len; ++s) background.samples[s] += m.scaled_noise.samples[s];
      snr_db = s2;
    }

    Waveform noisy = target;
    for (long s = 0; s < len; ++s) noisy.samples[s] += background.samples[s];

    char name[32];
    std::snprintf(name, sizeof(name), "%04lld.wav", static_cast<long long>(i));
    MixtureRecord rec;
    rec.noisy = std::string("noisy/") + name;
    rec.clean = std::string("clean/") + name;
    rec.enroll = std::string("enroll/") + name;
    rec.condition = condition;
    rec.snr_db = snr_db;
    rec.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(i));
    rec.interferer = interferer_rel;
    rec.extra["background"] = std::string("background/") + name;
    if (snr_interferer && condition == "nmix") rec.extra["snr_interferer_db"] = *snr_interferer;

    write_wav(out_dir / rec.noisy, noisy);
    write_wav(out_dir / rec.clean, target);
    write_wav(out_dir / rec.enroll, enroll);
    write_wav(out_dir / "background" / name, background);
    manifest.records[i] = std::move(rec);
  });

  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace pse
