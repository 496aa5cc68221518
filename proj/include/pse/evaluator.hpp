#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pse/audio_io.hpp"

namespace pse {

// SISNR of the enhanced signal against the clean reference, in dB, capped at
// +-60. Lengths may differ by less than length_slack samples (truncated to
// the shorter with a warning); larger mismatches are errors.
double score_sample(const Waveform& enhanced, const Waveform& clean, long length_slack = 128);

// Fraction of scores strictly below threshold_db.
double hsr(std::span<const double> scores, double threshold_db);

struct SampleScore {
  std::string id;         // filename stem of the record's noisy file
  std::string condition;
  double sisnr_db = 0;
};

struct HistogramBin {
  double lo = 0, hi = 0;
  long count = 0;
};

struct EvalReport {
  std::vector<SampleScore> per_sample;          // manifest order
  double mean_overall = 0;
  std::map<std::string, double> mean_per_condition;
  std::map<std::string, long> count_per_condition;
  std::map<int, double> hsr_at;                 // thresholds 0, 5, 10 dB
  std::vector<HistogramBin> histogram;          // 1 dB bins on integer edges
  std::vector<std::string> missing;             // records without enhanced files
};

// Scores <enhanced_dir>/<noisy filename> against each record's clean
// reference. Missing enhanced files are listed and excluded.
EvalReport condition_report(const Manifest& manifest, const std::filesystem::path& enhanced_dir);

// Sub-manifest of records whose baseline score is strictly below the
// threshold, order preserved. Throws when a record has no baseline score.
Manifest hard_subset(const std::map<std::string, double>& baseline_scores,
                     const Manifest& manifest, double threshold_db = 10.0);

void write_scores_csv(const EvalReport& report, std::ostream& os);
void write_histogram_csv(const EvalReport& report, std::ostream& os);
void write_summary(const EvalReport& report, std::ostream& os);

// Reads a scores CSV (id,condition,sisnr_db header as written by
// write_scores_csv) into an id -> score map.
std::map<std::string, double> read_scores_csv(const std::filesystem::path& path);

}  // namespace pse
