#include "pse/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pse/evaluator.hpp"
#include "pse/model.hpp"
#include "pse/parallel.hpp"
#include "pse/prep.hpp"
#include "pse/simulator.hpp"
#include "pse/stft.hpp"
#include "pse/trainer.hpp"

namespace pse {

namespace {

struct CommonOpts {
  int threads = 0;  // 0 = all hardware threads; 1 = strict serial mode
};

void add_common(CLI::App& app, CommonOpts& c) {
  app.add_option("--threads", c.threads, "worker threads (1 = deterministic serial mode)")
      ->capture_default_str();
}

std::pair<double, double> parse_snr_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--snr", "expected LO:HI");
  return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
}

void write_resolved_config(CLI::App& app, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir / "config_resolved.ini");
  f << app.config_to_str(true, true);
}

StftConfig stft_from(int fft, int hop) {
  StftConfig cfg{fft, hop};
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  SimSpec spec;
  std::string counts = "500,200,100";
  std::string snr = "-5:20";
  std::string clean_dir, noise_dir, rir_dir, out;
};

int cmd_simulate(SimulateArgs& a) {
  int n = 0, m = 0, k = 0;
  if (std::sscanf(a.counts.c_str(), "%d,%d,%d", &n, &m, &k) != 3)
    throw CLI::ValidationError("--counts", "expected N,M,K");
  a.spec.count_noise = n;
  a.spec.count_mix = m;
  a.spec.count_nmix = k;
  std::tie(a.spec.snr_lo_db, a.spec.snr_hi_db) = parse_snr_range(a.snr);
  a.spec.clean_dir = a.clean_dir;
  a.spec.noise_dir = a.noise_dir;
  a.spec.rir_dir = a.rir_dir;
  a.spec.validate();

  const Manifest manifest = simulate(a.spec, a.out);
  std::cout << "wrote " << manifest.records.size() << " records to " << a.out << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  TrainConfig cfg;
  std::string manifest, val_manifest, out;
  std::string dac = "off";
  std::string stage = "both";
  int fft_size = 512, hop = 128;
  int emb_dim = 32, hidden = 128;
  std::uint64_t init_seed = 1;
};

int cmd_train(TrainArgs& a) {
  if (a.stage != "tf" && a.stage != "aft" && a.stage != "both")
    throw CLI::ValidationError("--stage", "expected tf|aft|both");
  if (a.dac != "on" && a.dac != "off") throw CLI::ValidationError("--dac", "expected on|off");

  a.cfg.stft = stft_from(a.fft_size, a.hop);
  a.cfg.dims = ModelDims{a.cfg.stft.num_bins(), a.emb_dim, a.hidden};
  a.cfg.dac_enabled = a.dac == "on";
  a.cfg.validate();

  const Dataset train = load_dataset(load_manifest(a.manifest));
  const Dataset val = load_dataset(load_manifest(a.val_manifest));
  if (train.records.empty() || val.records.empty()) {
    std::cerr << "error: empty train or validation set after loading\n";
    return 2;
  }

  std::filesystem::create_directories(a.out);
  std::vector<EpochStats> history;
  std::vector<BatchLossReport> reports;

  ModelParams model = ModelParams::init(a.cfg.dims, a.init_seed);
  double lr_after_stage1 = a.cfg.lr0;

  if (a.stage != "aft") {
    TrainResult r1 = train_stage1(model, train, val, a.cfg);
    model = r1.model;
    lr_after_stage1 = r1.final_lr;
    history.insert(history.end(), r1.history.begin(), r1.history.end());
    save_checkpoint(a.out + "/stage1_best.ckpt", model, a.cfg.stft);
    std::cout << "stage1 best validation tf-loss " << r1.best_val << "\n";
  }
  if (a.stage != "tf") {
    TrainResult r2 = train_stage2(model, lr_after_stage1, train, val, a.cfg);
    model = r2.model;
    history.insert(history.end(), r2.history.begin(), r2.history.end());
    reports = std::move(r2.stage2_reports);
    save_checkpoint(a.out + "/stage2_best.ckpt", model, a.cfg.stft);
    std::cout << "stage2 best validation tf-loss " << r2.best_val << "\n";
  }

  {
    std::ofstream f(a.out + "/history.csv");
    write_history_csv(history, f);
  }
  if (!reports.empty()) {
    std::ofstream f(a.out + "/aft_reports.csv");
    f << "batch,sample,l_tf,weight\n";
    char buf[160];
    for (std::size_t b = 0; b < reports.size(); ++b)
      for (std::size_t i = 0; i < reports[b].per_sample_tf.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.10g,%.10g\n", b, i,
                      reports[b].per_sample_tf[i], reports[b].weights[i]);
        f << buf;
      }
  }
  return 0;
}

// ----------------------------------------------------------------- enhance

struct EnhanceArgs {
  std::string checkpoint, manifest, out;
  std::string prep = "none";
  int dac_j = 4, dac_k = 2;
  SpectralSubtractConfig ss;
  MmseLsaConfig lsa;
};

int cmd_enhance(EnhanceArgs& a) {
  if (a.prep != "none" && a.prep != "dac" && a.prep != "ss" && a.prep != "lsa")
    throw CLI::ValidationError("--prep", "expected none|dac|ss|lsa");

  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Manifest manifest = load_manifest(a.manifest);
  std::filesystem::create_directories(a.out);

  int failures = 0;
  for (const auto& rec : manifest.records) {
    try {
      Waveform noisy = read_wav(manifest.resolve(rec.noisy));
      Waveform enroll = read_wav(manifest.resolve(rec.enroll));

      // dac compensates the enrollment; ss/lsa denoise the noisy input
      if (a.prep == "dac") {
        enroll = dac(enroll, noisy, {a.dac_j, a.dac_k, ckpt.stft.hop});
      } else if (a.prep == "ss") {
        noisy = spectral_subtract(noisy, a.ss, ckpt.stft);
      } else if (a.prep == "lsa") {
        noisy = mmse_lsa(noisy, a.lsa, ckpt.stft);
      }

      const Spectrogram spec = stft(noisy, ckpt.stft);
      const ForwardResult fwd = enhance_forward(spec, enroll, ckpt.params);
      const Waveform est = istft(fwd.est);
      write_wav(std::filesystem::path(a.out) / std::filesystem::path(rec.noisy).filename(), est);
    } catch (const std::exception& e) {
      std::cerr << "[pse] error enhancing " << rec.noisy << ": " << e.what() << "\n";
      ++failures;
    }
  }
  std::cout << "enhanced " << (manifest.records.size() - failures) << "/"
            << manifest.records.size() << " records into " << a.out << "\n";
  return failures == 0 ? 0 : 1;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string manifest, enhanced_dir, out;
  std::string baseline_scores;
  double hard_threshold = 10.0;
};

int cmd_eval(EvalArgs& a) {
  const Manifest manifest = load_manifest(a.manifest);
  const EvalReport rep = condition_report(manifest, a.enhanced_dir);

  std::filesystem::create_directories(a.out);
  {
    std::ofstream f(std::filesystem::path(a.out) / "per_sample.csv");
    write_scores_csv(rep, f);
  }
  {
    std::ofstream f(std::filesystem::path(a.out) / "histogram.csv");
    write_histogram_csv(rep, f);
  }
  {
    std::ofstream f(std::filesystem::path(a.out) / "summary.txt");
    write_summary(rep, f);
  }
  write_summary(rep, std::cout);

  if (!a.baseline_scores.empty()) {
    const auto baseline = read_scores_csv(a.baseline_scores);
    const Manifest hard = hard_subset(baseline, manifest, a.hard_threshold);
    save_manifest(hard, std::filesystem::path(a.out) / "hard_subset.jsonl");

    std::vector<double> hard_scores;
    std::map<std::string, double> current;
    for (const auto& s : rep.per_sample) current[s.id] = s.sisnr_db;
    for (const auto& rec : hard.records) {
      const auto id = std::filesystem::path(rec.noisy).stem().string();
      if (auto it = current.find(id); it != current.end()) hard_scores.push_back(it->second);
    }
    std::ofstream f(std::filesystem::path(a.out) / "hard_summary.txt");
    f << "hard_subset_size " << hard.records.size() << "\n";
    std::cout << "hard_subset_size " << hard.records.size() << "\n";
    if (!hard_scores.empty()) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "hard_mean_sisnr_db %.6f\n", kahan_mean(hard_scores));
      f << buf;
      std::cout << buf;
      std::snprintf(buf, sizeof(buf), "hard_hsr10 %.6f\n", hsr(hard_scores, 10.0));
      f << buf;
      std::cout << buf;
    }
  }

  if (!rep.missing.empty()) {
    std::cerr << "missing enhanced files (excluded from the report):\n";
    for (const auto& p : rep.missing) std::cerr << "  " << p << "\n";
    return 1;
  }
  return 0;
}

// -------------------------------------------------------------------- prep

struct PrepArgs {
  std::string mode;  // dac | ss | lsa
  std::string noisy, enroll, out;
  int j = 4, k = 2;
  double alpha = 1.0, beta = 0.01;
  double dd_alpha = 0.98, xi_min = 3.1622776601683794e-3;
  int fft_size = 512, hop = 128;
};

int cmd_prep(PrepArgs& a) {
  const StftConfig cfg = stft_from(a.fft_size, a.hop);
  const Waveform noisy = read_wav(a.noisy);
  Waveform result;
  if (a.mode == "dac") {
    if (a.enroll.empty()) throw CLI::ValidationError("--enroll", "required for dac");
    result = dac(read_wav(a.enroll), noisy, {a.j, a.k, cfg.hop});
  } else if (a.mode == "ss") {
    result = spectral_subtract(noisy, {a.j, a.k, a.alpha, a.beta}, cfg);
  } else if (a.mode == "lsa") {
    result = mmse_lsa(noisy, {a.j, a.dd_alpha, a.xi_min}, cfg);
  } else {
    throw CLI::ValidationError("prep", "expected dac|ss|lsa");
  }
  write_wav(a.out, result);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"personalized speech enhancement toolkit"};
  app.set_config("--config", "", "structured config file; flags override it");
  app.require_subcommand(1);

  CommonOpts common;
  add_common(app, common);

  SimulateArgs sim;
  auto* sc_sim = app.add_subcommand("simulate", "generate a mixed dataset from audio pools");
  sc_sim->add_option("--clean-dir", sim.clean_dir, "clean speech pool")->required();
  sc_sim->add_option("--noise-dir", sim.noise_dir, "noise pool");
  sc_sim->add_option("--rir-dir", sim.rir_dir, "impulse response pool (optional)");
  sc_sim->add_option("--counts", sim.counts, "records per condition: noise,mix,nmix")
      ->capture_default_str();
  sc_sim->add_option("--snr", sim.snr, "SNR range in dB, LO:HI")->capture_default_str();
  sc_sim->add_option("--seconds", sim.spec.seconds, "sample duration")->capture_default_str();
  sc_sim->add_option("--sample-rate", sim.spec.sample_rate)->capture_default_str();
  sc_sim->add_option("--seed", sim.spec.seed)->capture_default_str();
  sc_sim->add_option("--out", sim.out, "output directory")->required();

  TrainArgs tr;
  auto* sc_train = app.add_subcommand("train", "two-stage training");
  sc_train->add_option("--manifest", tr.manifest)->required();
  sc_train->add_option("--val-manifest", tr.val_manifest)->required();
  sc_train->add_option("--out", tr.out, "output directory")->required();
  sc_train->add_option("--dac", tr.dac, "compensate enrollments: on|off")->capture_default_str();
  sc_train->add_option("--j", tr.cfg.dac_j, "leading noise frames")->capture_default_str();
  sc_train->add_option("--k", tr.cfg.dac_k, "trailing noise frames")->capture_default_str();
  sc_train->add_option("--stage", tr.stage, "tf|aft|both")->capture_default_str();
  sc_train->add_option("--batch-size", tr.cfg.batch_size)->capture_default_str();
  sc_train->add_option("--lr", tr.cfg.lr0)->capture_default_str();
  sc_train->add_option("--lr-decay", tr.cfg.lr_decay)->capture_default_str();
  sc_train->add_option("--patience", tr.cfg.patience_epochs)->capture_default_str();
  sc_train->add_option("--stage1-max-epochs", tr.cfg.stage1_max_epochs)->capture_default_str();
  sc_train->add_option("--stage2-max-epochs", tr.cfg.stage2_max_epochs)->capture_default_str();
  sc_train->add_option("--stage2-lr", tr.cfg.stage2_lr, "override stage-2 starting LR")
      ->capture_default_str();
  sc_train->add_option("--seed", tr.cfg.seed)->capture_default_str();
  sc_train->add_option("--init-seed", tr.init_seed)->capture_default_str();
  sc_train->add_option("--fft-size", tr.fft_size)->capture_default_str();
  sc_train->add_option("--hop", tr.hop)->capture_default_str();
  sc_train->add_option("--emb-dim", tr.emb_dim)->capture_default_str();
  sc_train->add_option("--hidden", tr.hidden)->capture_default_str();
  bool unclamped = false;
  sc_train->add_flag("--unclamped", unclamped, "disable the focal z-score clamp")
      ->capture_default_str();

  EnhanceArgs en;
  auto* sc_enh = app.add_subcommand("enhance", "run the enhancer over a manifest");
  sc_enh->add_option("--checkpoint", en.checkpoint)->required();
  sc_enh->add_option("--manifest", en.manifest)->required();
  sc_enh->add_option("--out", en.out, "output directory")->required();
  sc_enh->add_option("--prep", en.prep, "none|dac|ss|lsa")->capture_default_str();
  sc_enh->add_option("--j", en.dac_j)->capture_default_str();
  sc_enh->add_option("--k", en.dac_k)->capture_default_str();
  sc_enh->add_option("--alpha", en.ss.alpha)->capture_default_str();
  sc_enh->add_option("--beta", en.ss.beta)->capture_default_str();
  sc_enh->add_option("--dd-alpha", en.lsa.dd_alpha)->capture_default_str();
  sc_enh->add_option("--xi-min", en.lsa.xi_min)->capture_default_str();

  EvalArgs ev;
  auto* sc_eval = app.add_subcommand("eval", "score enhanced outputs");
  sc_eval->add_option("--manifest", ev.manifest)->required();
  sc_eval->add_option("--enhanced-dir", ev.enhanced_dir)->required();
  sc_eval->add_option("--out", ev.out, "output directory")->required();
  sc_eval->add_option("--baseline-scores", ev.baseline_scores,
                      "per-sample csv from a baseline run; enables the hard-subset report");
  sc_eval->add_option("--hard-threshold", ev.hard_threshold)->capture_default_str();

  PrepArgs pp;
  auto* sc_prep = app.add_subcommand("prep", "apply dac/ss/lsa to single files");
  sc_prep->add_option("mode", pp.mode, "dac|ss|lsa")->required();
  sc_prep->add_option("--noisy", pp.noisy)->required();
  sc_prep->add_option("--enroll", pp.enroll, "enrollment file (dac)");
  sc_prep->add_option("--out", pp.out)->required();
  sc_prep->add_option("--j", pp.j)->capture_default_str();
  sc_prep->add_option("--k", pp.k)->capture_default_str();
  sc_prep->add_option("--alpha", pp.alpha)->capture_default_str();
  sc_prep->add_option("--beta", pp.beta)->capture_default_str();
  sc_prep->add_option("--dd-alpha", pp.dd_alpha)->capture_default_str();
  sc_prep->add_option("--xi-min", pp.xi_min)->capture_default_str();
  sc_prep->add_option("--fft-size", pp.fft_size)->capture_default_str();
  sc_prep->add_option("--hop", pp.hop)->capture_default_str();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& s : args) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  set_num_threads(common.threads);

  try {
    if (sc_sim->parsed()) {
      const int rc = cmd_simulate(sim);
      write_resolved_config(app, sim.out);
      return rc;
    }
    if (sc_train->parsed()) {
      tr.cfg.aft_clamp = !unclamped;
      const int rc = cmd_train(tr);
      write_resolved_config(app, tr.out);
      return rc;
    }
    if (sc_enh->parsed()) {
      const int rc = cmd_enhance(en);
      write_resolved_config(app, en.out);
      return rc;
    }
    if (sc_eval->parsed()) {
      const int rc = cmd_eval(ev);
      write_resolved_config(app, ev.out);
      return rc;
    }
    if (sc_prep->parsed()) return cmd_prep(pp);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace pse
