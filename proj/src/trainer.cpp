#include "pse/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

#include "pse/parallel.hpp"

namespace pse {

namespace {

// splitmix64: cheap, well-mixed derivation of per-epoch/per-record seeds
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Fisher-Yates with an explicit draw so shuffles are identical across
// standard libraries.
void shuffle_indices(std::vector<int>& idx, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

Waveform pad_to(const Waveform& w, long len) {
  Waveform out = w;
  out.samples.resize(len, 0.0);
  return out;
}

struct SampleEval {
  double tf = 0;
  ModelParams grads;
};

// Forward + TF-loss (+ optional backward) for one batch item. Loss support is
// the item's valid length; spectral frames beyond it are excluded.
double eval_item(const BatchItem& item, const ModelParams& params, bool want_grads,
                 ModelParams* grads_out) {
  ForwardCache cache;
  ForwardResult fwd = enhance_forward(item.noisy_spec, item.enroll, params,
                                      want_grads ? &cache : nullptr);
  const Waveform est_wave = istft(fwd.est);

  const int valid_frames =
      static_cast<int>(item.noisy_spec.config.num_frames_for(item.valid_len));
  const bool sliced = valid_frames < item.noisy_spec.num_frames;

  const Spectrogram est_slice = sliced ? fwd.est.first_frames(valid_frames) : fwd.est;
  const Spectrogram ref_slice = sliced ? item.clean_spec.first_frames(valid_frames)
                                       : item.clean_spec;
  const std::span<const double> est_w(est_wave.samples.data(),
                                      static_cast<std::size_t>(item.valid_len));
  const std::span<const double> ref_w(item.clean.samples.data(),
                                      static_cast<std::size_t>(item.valid_len));

  // SISNR over the valid samples of the padded synthesis: embed its gradient
  // at the front of a full-length waveform gradient.
  auto sisnr = neg_sisnr(est_w, ref_w);
  auto mse = mse_freq(est_slice, ref_slice);
  const double tf = sisnr.loss + mse.loss;
  if (!want_grads) return tf;

  std::vector<double> wave_grad(est_wave.samples.size(), 0.0);
  std::copy(sisnr.grad_est.begin(), sisnr.grad_est.end(), wave_grad.begin());
  Spectrogram pulled = istft_adjoint(wave_grad, fwd.est.config, fwd.est.num_frames,
                                     fwd.est.orig_len);

  Spectrogram grad_est = fwd.est;
  std::fill(grad_est.bins.begin(), grad_est.bins.end(), std::complex<double>{});
  const int nb = grad_est.num_bins();
  for (int t = 0; t < grad_est.num_frames; ++t)
    for (int f = 0; f < nb; ++f) {
      auto g = grad_est.bin_weight(f) * pulled.at(t, f);
      if (t < valid_frames) g += mse.grad_est.at(t, f);
      grad_est.at(t, f) = g;
    }

  auto back = backward(cache, grad_est, params);
  *grads_out = std::move(back.grads);
  return tf;
}

struct BatchEval {
  std::vector<double> per_sample;
  ModelParams total_grads;  // sum of weight_i * grad_i
  double train_loss = 0;    // stage-dependent aggregate
};

void axpy_params(ModelParams& acc, double a, const ModelParams& x) {
  auto dst = acc.tensors();
  auto src = x.tensors();
  for (std::size_t k = 0; k < dst.size(); ++k)
    for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += a * src[k][i];
}

// Per-sample losses and gradients are computed in parallel over batch items;
// the loss vector is indexed by item so reductions are order-fixed.
BatchEval eval_batch(const Batch& batch, const ModelParams& params, bool stage2, bool aft_clamp,
                     std::vector<BatchLossReport>* reports) {
  const int n = static_cast<int>(batch.items.size());
  BatchEval ev;
  ev.per_sample.assign(n, 0.0);
  std::vector<ModelParams> item_grads(n);

  parallel_for(n, [&](std::int64_t i) {
    ev.per_sample[i] = eval_item(batch.items[i], params, true, &item_grads[i]);
  });

  std::vector<double> item_weight(n, 1.0 / n);
  if (stage2) {
    BatchLossReport rep = aft_loss(ev.per_sample, aft_clamp);
    item_weight = rep.grad;
    ev.train_loss = rep.aggregate;
    if (reports) reports->push_back(std::move(rep));
  } else {
    ev.train_loss = kahan_mean(ev.per_sample);
  }

  ev.total_grads = ModelParams::zeros(params.dims);
  for (int i = 0; i < n; ++i) axpy_params(ev.total_grads, item_weight[i], item_grads[i]);
  return ev;
}

TrainResult run_training(const ModelParams& init, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg, int stage, double start_lr) {
  cfg.validate();
  if (train.records.empty() || val.records.empty())
    throw std::invalid_argument("training needs non-empty train and validation sets");

  TrainResult res;
  res.model = init;
  ModelParams params = init;
  AdamState adam = AdamState::zeros(cfg.dims);
  EarlyStopSchedule sched(start_lr, cfg.lr_decay, cfg.patience_epochs, cfg.max_decays);

  const int max_epochs = stage == 1 ? cfg.stage1_max_epochs : cfg.stage2_max_epochs;
  res.best_val = validation_loss(params, val, cfg);
  res.final_lr = start_lr;
  int stage2_flat_epochs = 0;
  double stage2_prev_val = res.best_val;

  std::vector<int> order(train.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    shuffle_indices(order, mix_seed(cfg.seed, static_cast<std::uint64_t>(stage) << 32 | epoch));

    std::vector<double> batch_losses;
    bool diverged = false;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      if (stop - start < 2) {
        std::cerr << "[pse] warning: dropping trailing batch of size " << (stop - start) << "\n";
        break;  // batch statistics need at least 2 samples
      }
      std::span<const int> slice(order.data() + start, stop - start);
      Batch batch = assemble_batch(train, slice, cfg);
      BatchEval ev = eval_batch(batch, params, stage == 2, cfg.aft_clamp,
                                stage == 2 ? &res.stage2_reports : nullptr);
      if (!std::isfinite(ev.train_loss)) {
        diverged = true;
        break;
      }
      try {
        adam_step(params, ev.total_grads, adam, sched.lr());
      } catch (const std::runtime_error& e) {
        std::cerr << "[pse] warning: " << e.what() << "\n";
        diverged = true;
        break;
      }
      batch_losses.push_back(ev.train_loss);
    }

    if (diverged) {
      std::cerr << "[pse] warning: divergence detected, stopping with last good checkpoint\n";
      res.diverged = true;
      break;
    }

    const double train_loss = batch_losses.empty() ? 0.0 : kahan_mean(batch_losses);
    const double val_loss = validation_loss(params, val, cfg);
    auto obs = sched.observe(val_loss);
    res.history.push_back({epoch, stage, train_loss, val_loss, obs.lr});
    res.final_lr = obs.lr;

    if (obs.improved) {
      res.model = params;
      res.best_val = val_loss;
    }
    if (stage == 1 && obs.stop) break;
    if (stage == 2) {
      if (stage2_prev_val - val_loss < cfg.stage2_min_improvement)
        ++stage2_flat_epochs;
      else
        stage2_flat_epochs = 0;
      stage2_prev_val = val_loss;
      if (stage2_flat_epochs >= cfg.stage2_converge_patience) break;
      if (obs.stop) break;
    }
  }
  return res;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  if (lr0 <= 0.0) throw std::invalid_argument("lr0 must be positive");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw std::invalid_argument("lr_decay in (0,1]");
  if (patience_epochs < 1) throw std::invalid_argument("patience_epochs must be >= 1");
  if (stage1_max_epochs < 1) throw std::invalid_argument("stage1_max_epochs must be >= 1");
  if (stage2_max_epochs < 1 || stage2_max_epochs >= 20)
    throw std::invalid_argument("stage2_max_epochs must be in [1, 20)");
  if (dac_enabled) DacConfig{dac_j, dac_k, stft.hop}.validate();
  stft.validate();
  if (dims.feat_dim != stft.num_bins())
    throw std::invalid_argument("dims.feat_dim must equal fft_size/2 + 1");
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  if (!(params.dims == grads.dims) || !(params.dims == state.m.dims))
    throw std::invalid_argument("adam_step: shape mismatch");
  if (!grads.all_finite())
    throw std::runtime_error("adam_step: non-finite gradient, step rejected");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      const double gi = g[k][i];
      m[k][i] = cfg.beta1 * m[k][i] + (1.0 - cfg.beta1) * gi;
      v[k][i] = cfg.beta2 * v[k][i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[k][i] / bc1;
      const double vhat = v[k][i] / bc2;
      p[k][i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

EarlyStopSchedule::EarlyStopSchedule(double lr0, double decay, int patience, int max_decays)
    : lr_(lr0),
      decay_(decay),
      best_(std::numeric_limits<double>::infinity()),
      patience_(patience),
      max_decays_(max_decays) {}

EarlyStopSchedule::Observation EarlyStopSchedule::observe(double val_loss) {
  Observation obs;
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    decays_since_improvement_ = 0;
    obs.improved = true;
  } else {
    ++bad_epochs_;
    if (bad_epochs_ >= patience_) {
      lr_ *= decay_;
      bad_epochs_ = 0;
      ++decays_since_improvement_;
      obs.decayed = true;
      if (decays_since_improvement_ >= max_decays_) obs.stop = true;
    }
  }
  obs.lr = lr_;
  return obs;
}

Dataset load_dataset(const Manifest& manifest) {
  Dataset ds;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    LoadedRecord rec;
    rec.id = std::filesystem::path(r.noisy).stem().string();
    rec.condition = r.condition;
    try {
      rec.noisy = read_wav(manifest.resolve(r.noisy));
      rec.clean = read_wav(manifest.resolve(r.clean));
      rec.enroll = read_wav(manifest.resolve(r.enroll));
    } catch (const std::exception& e) {
      std::cerr << "[pse] warning: skipping record " << i << ": " << e.what() << "\n";
      continue;
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

Batch assemble_batch(const Dataset& data, std::span<const int> indices, const TrainConfig& cfg) {
  if (indices.empty()) throw std::invalid_argument("assemble_batch: empty index slice");

  long max_len = 0, max_enroll = 0;
  for (int idx : indices) {
    const auto& r = data.records.at(static_cast<std::size_t>(idx));
    max_len = std::max(max_len, r.noisy.size());
    max_enroll = std::max(max_enroll, r.enroll.size());
  }

  Batch batch;
  batch.items.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& r = data.records.at(static_cast<std::size_t>(indices[i]));
    BatchItem& item = batch.items[i];
    item.src = &r;
    item.valid_len = std::min(r.noisy.size(), r.clean.size());

    Waveform enroll = r.enroll;
    if (cfg.dac_enabled) enroll = dac(enroll, r.noisy, {cfg.dac_j, cfg.dac_k, cfg.stft.hop});
    item.enroll = pad_to(enroll, max_enroll);
    item.clean = pad_to(r.clean, max_len);
    item.noisy_spec = stft(pad_to(r.noisy, max_len), cfg.stft);
    item.clean_spec = stft(item.clean, cfg.stft);
  }
  return batch;
}

double validation_loss(const ModelParams& params, const Dataset& data, const TrainConfig& cfg) {
  if (data.records.empty()) throw std::invalid_argument("validation_loss: empty dataset");
  std::vector<int> all(data.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  std::vector<double> losses(all.size(), 0.0);
  // batched only to bound the padded-length coupling; losses are per sample
  const std::size_t step = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < all.size(); start += step) {
    const std::size_t stop = std::min(all.size(), start + step);
    Batch b = assemble_batch(data, std::span<const int>(all.data() + start, stop - start), cfg);
    parallel_for(static_cast<std::int64_t>(b.items.size()), [&](std::int64_t i) {
      losses[start + i] = eval_item(b.items[i], params, false, nullptr);
    });
  }
  return kahan_mean(losses);
}

TrainResult train_stage1(const ModelParams& init, const Dataset& train, const Dataset& val,
                         const TrainConfig& cfg) {
  return run_training(init, train, val, cfg, 1, cfg.lr0);
}

TrainResult train_stage2(const ModelParams& stage1_model, double start_lr, const Dataset& train,
                         const Dataset& val, const TrainConfig& cfg) {
  const double lr = cfg.stage2_lr >= 0.0 ? cfg.stage2_lr : start_lr;
  return run_training(stage1_model, train, val, cfg, 2, lr);
}

void write_history_csv(std::span<const EpochStats> history, std::ostream& os) {
  os << "epoch,stage,train_loss,val_loss,lr\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.10g,%.10g,%.10g\n", h.epoch, h.stage, h.train_loss,
                  h.val_loss, h.lr);
    os << buf;
  }
}

}  // namespace pse
