#include "pse/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "pse/losses.hpp"
#include "pse/parallel.hpp"

namespace pse {

double score_sample(const Waveform& enhanced, const Waveform& clean, long length_slack) {
  long n = enhanced.size();
  if (n != clean.size()) {
    const long diff = std::labs(n - clean.size());
    if (diff >= length_slack)
      throw std::invalid_argument("score_sample: length mismatch of " + std::to_string(diff) +
                                  " samples");
    std::cerr << "[pse] warning: trimming " << diff << " samples for scoring\n";
    n = std::min(n, clean.size());
  }
  const std::span<const double> e(enhanced.samples.data(), static_cast<std::size_t>(n));
  const std::span<const double> c(clean.samples.data(), static_cast<std::size_t>(n));
  return -neg_sisnr(e, c).loss;
}

double hsr(std::span<const double> scores, double threshold_db) {
  if (scores.empty()) throw std::invalid_argument("hsr: empty score list");
  long below = 0;
  for (double s : scores)
    if (s < threshold_db) ++below;
  return static_cast<double>(below) / static_cast<double>(scores.size());
}

EvalReport condition_report(const Manifest& manifest, const std::filesystem::path& enhanced_dir) {
  EvalReport rep;
  const std::size_t n = manifest.records.size();

  struct Row {
    SampleScore score;
    bool ok = false;
    std::string missing;
  };
  std::vector<Row> rows(n);

  parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t i) {
    const auto& rec = manifest.records[i];
    const auto fname = std::filesystem::path(rec.noisy).filename();
    const auto enh_path = enhanced_dir / fname;
    Row& row = rows[i];
    row.score.id = fname.stem().string();
    row.score.condition = rec.condition;
    if (!std::filesystem::exists(enh_path)) {
      row.missing = enh_path.string();
      return;
    }
    const Waveform enhanced = read_wav(enh_path);
    const Waveform clean = read_wav(manifest.resolve(rec.clean));
    row.score.sisnr_db = score_sample(enhanced, clean);
    row.ok = true;
  });

  std::map<std::string, std::vector<double>> by_cond;
  std::vector<double> scores;
  for (const auto& row : rows) {
    if (!row.ok) {
      if (!row.missing.empty()) rep.missing.push_back(row.missing);
      continue;
    }
    rep.per_sample.push_back(row.score);
    scores.push_back(row.score.sisnr_db);
    by_cond[row.score.condition].push_back(row.score.sisnr_db);
  }
  if (scores.empty()) {
    if (!rep.missing.empty()) return rep;
    throw std::invalid_argument("condition_report: empty manifest");
  }

  rep.mean_overall = kahan_mean(scores);
  for (const auto& [cond, vals] : by_cond) {
    rep.mean_per_condition[cond] = kahan_mean(vals);
    rep.count_per_condition[cond] = static_cast<long>(vals.size());
  }
  for (int thr : {0, 5, 10}) rep.hsr_at[thr] = hsr(scores, thr);

  // 1 dB histogram bins on integer edges spanning the score range, so any
  // integer-dB threshold aligns with a bin edge.
  const double lo = std::floor(*std::min_element(scores.begin(), scores.end()));
  const double hi = std::floor(*std::max_element(scores.begin(), scores.end())) + 1.0;
  const long nbins = std::max(1L, static_cast<long>(hi - lo));
  rep.histogram.assign(nbins, {});
  for (long b = 0; b < nbins; ++b) {
    rep.histogram[b].lo = lo + b;
    rep.histogram[b].hi = lo + b + 1;
  }
  for (double s : scores) {
    long b = static_cast<long>(std::floor(s - lo));
    b = std::clamp(b, 0L, nbins - 1);
    ++rep.histogram[b].count;
  }
  return rep;
}

Manifest hard_subset(const std::map<std::string, double>& baseline_scores,
                     const Manifest& manifest, double threshold_db) {
  Manifest out;
  out.dir = manifest.dir;
  for (const auto& rec : manifest.records) {
    const auto id = std::filesystem::path(rec.noisy).stem().string();
    const auto it = baseline_scores.find(id);
    if (it == baseline_scores.end())
      throw std::runtime_error("hard_subset: no baseline score for record '" + id + "'");
    if (it->second < threshold_db) out.records.push_back(rec);
  }
  return out;
}

void write_scores_csv(const EvalReport& report, std::ostream& os) {
  os << "id,condition,sisnr_db\n";
  char buf[160];
  for (const auto& s : report.per_sample) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f\n", s.id.c_str(), s.condition.c_str(),
                  s.sisnr_db);
    os << buf;
  }
}

void write_histogram_csv(const EvalReport& report, std::ostream& os) {
  os << "bin_lo,bin_hi,count\n";
  char buf[96];
  for (const auto& b : report.histogram) {
    std::snprintf(buf, sizeof(buf), "%.1f,%.1f,%ld\n", b.lo, b.hi, b.count);
    os << buf;
  }
}

void write_summary(const EvalReport& report, std::ostream& os) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "samples_scored %zu\n", report.per_sample.size());
  os << buf;
  std::snprintf(buf, sizeof(buf), "samples_missing %zu\n", report.missing.size());
  os << buf;
  std::snprintf(buf, sizeof(buf), "mean_sisnr_db %.6f\n", report.mean_overall);
  os << buf;
  for (const auto& [cond, mean] : report.mean_per_condition) {
    std::snprintf(buf, sizeof(buf), "mean_sisnr_db[%s] %.6f (n=%ld)\n", cond.c_str(), mean,
                  report.count_per_condition.at(cond));
    os << buf;
  }
  for (const auto& [thr, rate] : report.hsr_at) {
    std::snprintf(buf, sizeof(buf), "hsr%d %.6f\n", thr, rate);
    os << buf;
  }
}

std::map<std::string, double> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open scores csv: " + path.string());
  std::map<std::string, double> out;
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line.rfind("id,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string id, cond, score;
    if (!std::getline(ss, id, ',') || !std::getline(ss, cond, ',') || !std::getline(ss, score))
      throw std::runtime_error("bad scores csv line " + std::to_string(line_no) + " in " +
                               path.string());
    out[id] = std::stod(score);
  }
  return out;
}

}  // namespace pse
