#pragma once

#include "mrfield/io.hpp"

#include <filesystem>
#include <iostream>

namespace mrfield {

/// One config drives the whole synthetic workflow (see README for the key
/// schema). Anything omitted falls back to the defaults below.
struct PipelineConfig {
  SequenceParams seq;
  ParamGrid grid;
  int k_rank = 5;
  int grid_n = 64;
  double voxel_mm = 2.0;
  double dwell_us = 4.0;
  int segments = 8;
  int n_train = 8;
  int n_holdout = 2;
  uint64_t seed = 1;
  PhantomSpec phantom;
  NetworkConfig net;
  TrainConfig train;
  double mfi_lambda = 1e-6;

  double fov_mm() const { return grid_n * voxel_mm; }
};

/// "grid standard" or explicit axes: grid_t1_n/lo/hi (log-spaced),
/// grid_t2_n/lo/hi (log-spaced), grid_b1_n/lo/hi (linear).
inline ParamGrid grid_from_config(const Config &cfg) {
  if (!cfg.has("grid_t1_n")) {
    const std::string spec = cfg.get_str("grid", "standard");
    if (spec != "standard") fail("config: grid '", spec, "' is neither standard nor inline axes");
    return standard_grid();
  }
  ParamGrid g;
  g.t1_ms = logspace(cfg.get_double("grid_t1_lo"), cfg.get_double("grid_t1_hi"),
                     int(cfg.get_int("grid_t1_n")));
  g.t2_ms = logspace(cfg.get_double("grid_t2_lo"), cfg.get_double("grid_t2_hi"),
                     int(cfg.get_int("grid_t2_n")));
  g.b1_rel = linspace(cfg.get_double("grid_b1_lo"), cfg.get_double("grid_b1_hi"),
                      int(cfg.get_int("grid_b1_n")));
  g.validate();
  return g;
}

inline SequenceParams sequence_from_spec(const std::string &spec) {
  if (spec == "seq1" || spec == "seq2" || spec == "seq3") return builtin_sequence(spec);
  return load_sequence_file(spec);
}

inline PhantomSpec phantom_from_config(const Config &cfg, int grid_n, double voxel_mm) {
  PhantomSpec ps;
  ps.grid_n = grid_n;
  ps.voxel_mm = voxel_mm;
  ps.n_inclusions_min = int(cfg.get_int("inclusions_min", ps.n_inclusions_min));
  ps.n_inclusions_max = int(cfg.get_int("inclusions_max", ps.n_inclusions_max));
  ps.b1_amp_min = cfg.get_double("b1_amp_min", ps.b1_amp_min);
  ps.b1_amp_max = cfg.get_double("b1_amp_max", ps.b1_amp_max);
  ps.b0_kernel_mm = cfg.get_double("b0_kernel_mm", ps.b0_kernel_mm);
  ps.b0_amp_min_hz = cfg.get_double("b0_amp_min_hz", ps.b0_amp_min_hz);
  ps.b0_amp_max_hz = cfg.get_double("b0_amp_max_hz", ps.b0_amp_max_hz);
  ps.validate();
  return ps;
}

inline PipelineConfig pipeline_from_config(const Config &cfg, const std::string &base_dir = "") {
  PipelineConfig pc;
  std::string seq_spec = cfg.get_str("seq", "seq1");
  if (seq_spec != "seq1" && seq_spec != "seq2" && seq_spec != "seq3" && !base_dir.empty() &&
      !std::filesystem::path(seq_spec).is_absolute())
    seq_spec = (std::filesystem::path(base_dir) / seq_spec).string();
  pc.seq = sequence_from_spec(seq_spec);
  pc.grid = grid_from_config(cfg);
  pc.k_rank = int(cfg.get_int("k_rank", 5));
  pc.grid_n = int(cfg.get_int("grid_n", 64));
  pc.voxel_mm = cfg.get_double("voxel_mm", 2.0);
  pc.dwell_us = cfg.get_double("dwell_us", 4.0);
  pc.segments = int(cfg.get_int("segments", 8));
  pc.n_train = int(cfg.get_int("n_train", 8));
  pc.n_holdout = int(cfg.get_int("n_holdout", 2));
  pc.seed = uint64_t(cfg.get_int("seed", 1));
  pc.phantom = phantom_from_config(cfg, pc.grid_n, pc.voxel_mm);
  pc.net.levels = int(cfg.get_int("levels", 3));
  pc.net.base_filters = int(cfg.get_int("filters", 16));
  pc.net.kernel_size = int(cfg.get_int("kernel", 3));
  pc.net.in_channels = 2 * pc.k_rank;
  pc.net.out_channels = kOutChannels;
  pc.train.lr = cfg.get_double("lr", 1e-3);
  pc.train.lr_decay = cfg.get_double("lr_decay", 1.0);
  pc.train.batch = int(cfg.get_int("batch", 8));
  pc.train.epochs = int(cfg.get_int("epochs", 20));
  pc.train.seed = uint64_t(cfg.get_int("seed", 1));
  pc.train.ssim = SsimConfig(int(cfg.get_int("ssim_window", 7)), 1.0);
  pc.mfi_lambda = cfg.get_double("mfi_lambda", 1e-6);
  return pc;
}

// ---------------------------------------------------------------------------

struct SynthesizedPhantom {
  ParameterMaps pm;
  FieldMaps fm;
  CoefficientMaps clean;
  CoefficientMaps corrupted;
  std::vector<SampleVector> samples;
};

inline SynthesizedPhantom synthesize_phantom(const PhantomSpec &spec, uint64_t seed,
                                             const SubspaceBasis &basis,
                                             const CompressedDictionary &cd,
                                             const Gridder &gridder,
                                             const TimeSegmentation &seg) {
  SynthesizedPhantom sp;
  auto [pm, fm] = generate_phantom(spec, seed);
  sp.pm = std::move(pm);
  sp.fm = std::move(fm);
  sp.clean = clean_coeffs(sp.pm, sp.fm, basis, cd);
  CorruptResult cr = corrupt(sp.clean, sp.fm.b0_hz, gridder, seg);
  sp.corrupted = std::move(cr.maps);
  sp.samples = std::move(cr.samples);
  return sp;
}

inline TrainSample to_train_sample(const SynthesizedPhantom &sp,
                                   const NormalizationSpec &norm) {
  TrainSample s;
  s.input = coeffs_to_input(sp.corrupted, input_scale(sp.corrupted, sp.pm.mask));
  s.target = targets_to_tensor(sp.pm, sp.fm, norm);
  s.mask = sp.pm.mask;
  return s;
}

/// Clean reconstruction reference: adjoint(forward(clean)) through the
/// same operator, i.e. what a perfect off-resonance correction would give.
inline CoefficientMaps clean_recon(const CoefficientMaps &clean, const Gridder &gridder) {
  CoefficientMaps out;
  out.basis_id = clean.basis_id;
  out.grid_n = clean.grid_n;
  out.voxel_mm = clean.voxel_mm;
  out.chan.resize(size_t(clean.K()));
  for (int ch = 0; ch < clean.K(); ++ch) {
    SampleVector d = gridder.forward(clean.chan[size_t(ch)]);
    out.chan[size_t(ch)] = gridder.adjoint(d, 0.0, true);
  }
  return out;
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x51ed2701a3c9beefULL));
}

// ---------------------------------------------------------------------------
// End-to-end run: dictionary, subspace, phantom synthesis, training,
// prediction, MFI + B1-corrected matching on the holdouts, metric table,
// and a hash manifest of every artifact written.
// ---------------------------------------------------------------------------

struct PipelineResult {
  std::vector<double> history;
  uint64_t combined_hash = 0;
  std::vector<std::pair<std::string, uint64_t>> file_hashes;
};

inline PipelineResult run_pipeline(const PipelineConfig &pc, const std::string &out_dir,
                                   std::ostream &log = std::cout) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto path = [&](const std::string &name) { return (fs::path(out_dir) / name).string(); };

  Dictionary dict = build_dictionary(pc.seq, pc.grid);
  save_dictionary(path("dict"), dict, pc.seq);
  auto [basis, cd] = compress(dict, pc.k_rank);
  save_basis(path("subspace"), basis, cd, pc.seq.readout_ms);

  SpiralTrajectory traj = design_spiral(pc.seq.readout_ms, pc.fov_mm(), pc.grid_n, pc.dwell_us);
  save_trajectory(path("traj.qmap"), traj);
  Gridder gridder(traj);
  gridder.density_weights();
  TimeSegmentation seg = make_segmentation(traj.readout_ms, pc.segments);

  NormalizationSpec norm;
  std::vector<TrainSample> train_set(size_t(pc.n_train));
  parallel_for(size_t(pc.n_train), [&](size_t i) {
    SynthesizedPhantom sp =
        synthesize_phantom(pc.phantom, derive_seed(pc.seed, i), basis, cd, gridder, seg);
    train_set[i] = to_train_sample(sp, norm);
  });

  Network net = init_network(pc.net, derive_seed(pc.seed, 0xabcd));
  PipelineResult result;
  result.history = train(net, train_set, pc.train);
  save_network(path("net.qmap"), net);
  {
    std::ofstream hist(path("history.txt"), std::ios::trunc);
    hist << "epoch\tmean_loss\n";
    hist.precision(12);
    for (size_t e = 0; e < result.history.size(); ++e)
      hist << e << '\t' << result.history[e] << '\n';
  }

  std::ostringstream metrics;
  metrics.precision(10);
  metrics << "metric\tholdout\tvalue\n";
  for (int h = 0; h < pc.n_holdout; ++h) {
    const uint64_t sd = derive_seed(pc.seed, 0x1000 + uint64_t(h));
    SynthesizedPhantom sp = synthesize_phantom(pc.phantom, sd, basis, cd, gridder, seg);
    const std::string tag = cat("holdout", h);
    save_maps(path(tag), sp.pm, sp.fm);
    save_coeffs(path(tag + ".clean.qmap"), sp.clean);
    save_coeffs(path(tag + ".corrupt.qmap"), sp.corrupted);
    save_samples(path(tag + ".samples.qmap"), sp.samples);

    auto [pred_fm, pred_pm] = predict_fields(net, sp.corrupted, norm, sp.pm.mask);
    save_predicted(path(tag), pred_fm, pred_pm);

    metrics << "b1_rmse\t" << h << '\t'
            << field_rmse({pred_fm.b1_rel}, {sp.fm.b1_rel}, {sp.pm.mask}).rmse << '\n';
    metrics << "b0_rmse\t" << h << '\t'
            << field_rmse({pred_fm.b0_hz}, {sp.fm.b0_hz}, {sp.pm.mask}).rmse << '\n';

    // correction with the *predicted* fields
    double lo = 1e30, hi = -1e30;
    for (size_t i = 0; i < sp.pm.mask.size(); ++i)
      if (sp.pm.mask.data[i]) {
        lo = std::min(lo, pred_fm.b0_hz.data[i]);
        hi = std::max(hi, pred_fm.b0_hz.data[i]);
      }
    MfiPlan plan = plan_mfi(lo, hi, traj, pc.mfi_lambda);
    CoefficientMaps deblurred =
        mfi_deblur(sp.samples, gridder, pred_fm.b0_hz, plan, sp.clean.basis_id);
    save_coeffs(path(tag + ".deblurred.qmap"), deblurred);

    MatchedMaps corrected = match_maps(deblurred.chan, sp.pm.mask, cd, MatchMode::B1Corrected,
                                       &pred_fm.b1_rel);
    MatchedMaps uncorrected =
        match_maps(sp.corrupted.chan, sp.pm.mask, cd, MatchMode::Uncorrected);
    write_qmap_file(path(tag + ".t2_corrected.qmap"), from_image(corrected.t2_ms));
    write_qmap_file(path(tag + ".t2_uncorrected.qmap"), from_image(uncorrected.t2_ms));
    write_qmap_file(path(tag + ".t1_corrected.qmap"), from_image(corrected.t1_ms));

    metrics << "t2_nrmse_corrected\t" << h << '\t'
            << nrmse(corrected.t2_ms, sp.pm.t2_ms, sp.pm.mask) << '\n';
    metrics << "t2_nrmse_uncorrected\t" << h << '\t'
            << nrmse(uncorrected.t2_ms, sp.pm.t2_ms, sp.pm.mask) << '\n';
  }
  {
    std::ofstream mf(path("metrics.txt"), std::ios::trunc);
    mf << metrics.str();
  }

  // Hash manifest over everything written above, in sorted name order.
  std::vector<std::string> names;
  for (const auto &entry : fs::directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "hashes.txt") continue;
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  uint64_t combined = 0xcbf29ce484222325ULL;
  std::ostringstream manifest;
  for (const auto &name : names) {
    const uint64_t h = hash_file(path(name));
    result.file_hashes.emplace_back(name, h);
    manifest << hex64(h) << "  " << name << '\n';
    combined = fnv1a64(name.data(), name.size(), combined);
    const std::string hx = hex64(h);
    combined = fnv1a64(hx.data(), hx.size(), combined);
  }
  result.combined_hash = combined;
  manifest << hex64(combined) << "  TOTAL\n";
  {
    std::ofstream hf(path("hashes.txt"), std::ios::trunc);
    hf << manifest.str();
  }
  log << manifest.str();
  return result;
}

} // namespace mrfield
