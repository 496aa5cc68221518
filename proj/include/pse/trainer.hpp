#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pse/audio_io.hpp"
#include "pse/losses.hpp"
#include "pse/model.hpp"
#include "pse/prep.hpp"

namespace pse {

struct TrainConfig {
  int batch_size = 32;
  double lr0 = 1e-3;
  double lr_decay = 0.5;
  int patience_epochs = 3;   // epochs without val improvement before an LR decay
  int max_decays = 3;        // stage-1 early stop: this many decays without improvement
  int stage1_max_epochs = 50;
  int stage2_max_epochs = 19;          // hard requirement: < 20
  double stage2_min_improvement = 1e-4;
  int stage2_converge_patience = 3;
  double stage2_lr = -1.0;   // < 0: continue from the stage-1 final LR
  std::uint64_t seed = 0;
  bool dac_enabled = false;
  int dac_j = 4;
  int dac_k = 2;
  bool aft_clamp = true;
  ModelDims dims;
  StftConfig stft;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ModelParams m, v;
  long step = 0;
  static AdamState zeros(const ModelDims& d) { return {ModelParams::zeros(d), ModelParams::zeros(d), 0}; }
};

// Standard bias-corrected Adam update. Throws std::runtime_error (and leaves
// params and state untouched) when any gradient entry is non-finite.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// Validation-driven LR schedule with early stop, kept free of the training
// loop so the patience arithmetic is testable on synthetic loss sequences.
class EarlyStopSchedule {
 public:
  EarlyStopSchedule(double lr0, double decay, int patience, int max_decays);

  struct Observation {
    bool improved = false;
    bool decayed = false;
    bool stop = false;
    double lr = 0;
  };
  Observation observe(double val_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  double lr_, decay_, best_;
  int patience_, max_decays_;
  int bad_epochs_ = 0;
  int decays_since_improvement_ = 0;
};

struct LoadedRecord {
  std::string id;
  std::string condition;
  Waveform noisy, clean, enroll;
};

struct Dataset {
  std::vector<LoadedRecord> records;
};

// Loads every record's audio up front; unreadable records are skipped with a
// warning on stderr.
Dataset load_dataset(const Manifest& manifest);

struct BatchItem {
  Spectrogram noisy_spec;  // over the batch-padded signal
  Spectrogram clean_spec;
  Waveform clean;          // batch-padded
  Waveform enroll;         // compensated when DAC is on, enrollment-padded
  long valid_len = 0;      // samples that carry loss support
  const LoadedRecord* src = nullptr;
};

struct Batch {
  std::vector<BatchItem> items;
};

// Builds a batch from dataset rows. With DAC enabled each enrollment is
// replaced by dac(enroll, that record's noisy input) before anything else.
// Waveforms are zero-padded to the longest mixture (and enrollments to the
// longest enrollment) in the batch; padding carries no loss support.
Batch assemble_batch(const Dataset& data, std::span<const int> indices, const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  int stage = 1;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
};

struct TrainResult {
  ModelParams model;  // best-validation checkpoint
  double best_val = 0;
  double final_lr = 0;
  bool diverged = false;
  std::vector<EpochStats> history;
  std::vector<BatchLossReport> stage2_reports;  // one per batch, stage 2 only
};

TrainResult train_stage1(const ModelParams& init, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg);
// start_lr: the LR to continue from (usually stage 1's final); cfg.stage2_lr
// overrides it when non-negative.
TrainResult train_stage2(const ModelParams& stage1_model, double start_lr, const Dataset& train,
                         const Dataset& val, const TrainConfig& cfg);

// Mean TF-loss over a dataset for the given parameters.
double validation_loss(const ModelParams& params, const Dataset& data, const TrainConfig& cfg);

void write_history_csv(std::span<const EpochStats> history, std::ostream& os);

}  // namespace pse
