#pragma once

#include "mrfield/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace mrfield {

// ---------------------------------------------------------------------------
// CLI subcommands (see README for the full surface). Exit codes: 0 success,
// 1 usage error, 2 data/validation error.
// ---------------------------------------------------------------------------

namespace cli_detail {

inline Image<double> load_real_or_magnitude(const QmapArray &arr, int channel) {
  if (arr.dims.size() == 3) {
    if (channel < 0 || channel >= int(arr.dims[0]))
      fail("channel ", channel, " out of range [0, ", arr.dims[0], ")");
    const size_t plane = size_t(arr.dims[1]) * arr.dims[2];
    Image<double> img(int(arr.dims[2]), int(arr.dims[1]));
    if (arr.dtype == Dtype::c64) {
      auto v = arr.as_c64();
      for (size_t i = 0; i < plane; ++i) img.data[i] = std::abs(v[size_t(channel) * plane + i]);
    } else if (arr.dtype == Dtype::f32) {
      auto v = arr.as_f32();
      for (size_t i = 0; i < plane; ++i) img.data[i] = v[size_t(channel) * plane + i];
    } else {
      fail("unsupported dtype for rendering");
    }
    return img;
  }
  if (arr.dims.size() != 2) fail("expected a 2-D or 3-D array");
  Image<double> img(int(arr.dims[1]), int(arr.dims[0]));
  switch (arr.dtype) {
  case Dtype::f32: {
    auto v = arr.as_f32();
    for (size_t i = 0; i < v.size(); ++i) img.data[i] = v[i];
    break;
  }
  case Dtype::c64: {
    auto v = arr.as_c64();
    for (size_t i = 0; i < v.size(); ++i) img.data[i] = std::abs(v[i]);
    break;
  }
  case Dtype::u8: {
    auto v = arr.as_u8();
    for (size_t i = 0; i < v.size(); ++i) img.data[i] = double(v[i]);
    break;
  }
  }
  return img;
}

inline Image<uint8_t> full_mask(int nx, int ny) { return Image<uint8_t>(nx, ny, 1); }

} // namespace cli_detail

inline int run_cli(const std::vector<std::string> &args) {
  CLI::App app{"mrfield: synthetic MRF field-map estimation and correction"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker thread count (default: hardware)");

  // --- phantom ---
  auto *cmd_phantom = app.add_subcommand("phantom", "generate a synthetic phantom");
  std::string ph_spec, ph_out;
  int ph_grid_n = 128;
  double ph_voxel = 2.0;
  uint64_t ph_seed = 1;
  cmd_phantom->add_option("--spec", ph_spec, "phantom spec config file");
  cmd_phantom->add_option("--grid-n", ph_grid_n, "matrix size");
  cmd_phantom->add_option("--voxel-mm", ph_voxel, "voxel size (mm)");
  cmd_phantom->add_option("--seed", ph_seed, "random seed");
  cmd_phantom->add_option("--out", ph_out, "output prefix")->required();

  // --- dict ---
  auto *cmd_dict = app.add_subcommand("dict", "simulate a fingerprint dictionary");
  std::string dc_seq, dc_grid = "standard", dc_out;
  cmd_dict->add_option("--seq", dc_seq, "builtin name (seq1/seq2/seq3) or sequence file")
      ->required();
  cmd_dict->add_option("--grid", dc_grid, "'standard' or a grid config file");
  cmd_dict->add_option("--out", dc_out, "output prefix")->required();

  // --- compress ---
  auto *cmd_compress = app.add_subcommand("compress", "rank-K subspace of a dictionary");
  std::string cp_dict, cp_out;
  int cp_k = 5;
  cmd_compress->add_option("--dict", cp_dict, "dictionary prefix")->required();
  cmd_compress->add_option("--k", cp_k, "subspace rank");
  cmd_compress->add_option("--out", cp_out, "output prefix")->required();

  // --- synth ---
  auto *cmd_synth = app.add_subcommand("synth", "synthesize clean + corrupted coefficients");
  std::string sy_maps, sy_basis, sy_out;
  int sy_segments = 8;
  double sy_dwell = 4.0;
  cmd_synth->add_option("--maps", sy_maps, "phantom maps prefix")->required();
  cmd_synth->add_option("--basis", sy_basis, "subspace prefix")->required();
  cmd_synth->add_option("--segments", sy_segments, "time segments L");
  cmd_synth->add_option("--dwell-us", sy_dwell, "readout dwell time (us)");
  cmd_synth->add_option("--out", sy_out, "output prefix")->required();

  // --- train ---
  auto *cmd_train = app.add_subcommand("train", "train the field estimator");
  std::string tr_config, tr_out;
  cmd_train->add_option("--config", tr_config, "pipeline config file")->required();
  cmd_train->add_option("--out", tr_out, "output prefix")->required();

  // --- predict ---
  auto *cmd_predict = app.add_subcommand("predict", "estimate field maps from coefficients");
  std::string pr_net, pr_coeffs, pr_mask, pr_out;
  cmd_predict->add_option("--net", pr_net, "network weights file")->required();
  cmd_predict->add_option("--coeffs", pr_coeffs, "coefficient maps file")->required();
  cmd_predict->add_option("--mask", pr_mask, "mask file")->required();
  cmd_predict->add_option("--out", pr_out, "output prefix")->required();

  // --- mfi-correct ---
  auto *cmd_mfi = app.add_subcommand("mfi-correct", "off-resonance deblurring via MFI");
  std::string mf_samples, mf_traj, mf_b0, mf_out;
  double mf_lambda = 1e-6;
  cmd_mfi->add_option("--samples", mf_samples, "per-channel samples file")->required();
  cmd_mfi->add_option("--traj", mf_traj, "trajectory file")->required();
  cmd_mfi->add_option("--b0", mf_b0, "off-resonance map (Hz)")->required();
  cmd_mfi->add_option("--lambda", mf_lambda, "Tikhonov regularizer");
  cmd_mfi->add_option("--out", mf_out, "output coefficients file")->required();

  // --- match ---
  auto *cmd_match = app.add_subcommand("match", "dictionary matching of coefficient maps");
  std::string ma_coeffs, ma_basis, ma_mode = "uncorrected", ma_b1map, ma_mask, ma_out;
  cmd_match->add_option("--coeffs", ma_coeffs, "coefficient maps file")->required();
  cmd_match->add_option("--basis", ma_basis, "subspace prefix (compressed dictionary)")
      ->required();
  cmd_match->add_option("--mode", ma_mode, "uncorrected | b1 | joint");
  cmd_match->add_option("--b1map", ma_b1map, "per-voxel b1 map (b1 mode)");
  cmd_match->add_option("--mask", ma_mask, "mask file")->required();
  cmd_match->add_option("--out", ma_out, "output prefix")->required();

  // --- eval ---
  auto *cmd_eval = app.add_subcommand("eval", "NRMSE/SSIM table for a map pair");
  std::string ev_a, ev_b, ev_mask;
  std::vector<double> ev_range;
  cmd_eval->add_option("--a", ev_a, "test image")->required();
  cmd_eval->add_option("--b", ev_b, "reference image")->required();
  cmd_eval->add_option("--mask", ev_mask, "mask file");
  cmd_eval->add_option("--range", ev_range, "lo hi window for SSIM")->expected(2);

  // --- render ---
  auto *cmd_render = app.add_subcommand("render", "QMAP to 8-bit PGM");
  std::string rd_in, rd_out;
  double rd_lo = 0.0, rd_hi = 1.0;
  int rd_channel = 0;
  cmd_render->add_option("input", rd_in, "QMAP file")->required();
  cmd_render->add_option("--out", rd_out, "output PGM (default: input with .pgm)");
  cmd_render->add_option("--lo", rd_lo, "window lower bound");
  cmd_render->add_option("--hi", rd_hi, "window upper bound");
  cmd_render->add_option("--channel", rd_channel, "channel for 3-D arrays");

  // --- pipeline ---
  auto *cmd_pipeline = app.add_subcommand("pipeline", "config-driven end-to-end run");
  std::string pl_config, pl_out;
  cmd_pipeline->add_option("--config", pl_config, "pipeline config file")->required();
  cmd_pipeline->add_option("--out", pl_out, "output directory")->required();

  std::vector<const char *> argv;
  argv.push_back("mrfield");
  for (const auto &a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }

  try {
    if (threads > 0) set_thread_count(threads);

    if (cmd_phantom->parsed()) {
      Config cfg = ph_spec.empty() ? Config() : Config::load(ph_spec);
      PhantomSpec ps = phantom_from_config(cfg, ph_grid_n, ph_voxel);
      auto [pm, fm] = generate_phantom(ps, ph_seed);
      save_maps(ph_out, pm, fm);
    } else if (cmd_dict->parsed()) {
      SequenceParams seq = sequence_from_spec(dc_seq);
      ParamGrid grid;
      if (dc_grid == "standard") {
        grid = standard_grid();
      } else {
        grid = grid_from_config(Config::load(dc_grid));
      }
      Dictionary d = build_dictionary(seq, grid);
      save_dictionary(dc_out, d, seq);
    } else if (cmd_compress->parsed()) {
      Dictionary d = load_dictionary(cp_dict);
      const double readout = Config::load(cp_dict + ".atoms.meta").get_double("readout_ms");
      auto [basis, cd] = compress(d, cp_k);
      save_basis(cp_out, basis, cd, readout);
    } else if (cmd_synth->parsed()) {
      auto [pm, fm] = load_maps(sy_maps);
      auto [basis, cd] = load_basis(sy_basis);
      const double readout = Config::load(sy_basis + ".basis.meta").get_double("readout_ms");
      SpiralTrajectory traj =
          design_spiral(readout, pm.grid_n * pm.voxel_mm, pm.grid_n, sy_dwell);
      Gridder gridder(traj);
      gridder.density_weights();
      TimeSegmentation seg = make_segmentation(readout, sy_segments);
      CoefficientMaps clean = clean_coeffs(pm, fm, basis, cd);
      CorruptResult cr = corrupt(clean, fm.b0_hz, gridder, seg);
      save_coeffs(sy_out + ".clean.qmap", clean);
      save_coeffs(sy_out + ".corrupt.qmap", cr.maps);
      save_samples(sy_out + ".samples.qmap", cr.samples);
      save_trajectory(sy_out + ".traj.qmap", traj);
    } else if (cmd_train->parsed()) {
      const Config cfg = Config::load(tr_config);
      PipelineConfig pc = pipeline_from_config(
          cfg, std::filesystem::path(tr_config).parent_path().string());
      Dictionary dict = build_dictionary(pc.seq, pc.grid);
      auto [basis, cd] = compress(dict, pc.k_rank);
      SpiralTrajectory traj =
          design_spiral(pc.seq.readout_ms, pc.fov_mm(), pc.grid_n, pc.dwell_us);
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
      auto history = train(net, train_set, pc.train);
      save_network(tr_out + ".net.qmap", net);
      std::ofstream hist(tr_out + ".history.txt", std::ios::trunc);
      hist << "epoch\tmean_loss\n";
      hist.precision(12);
      for (size_t e = 0; e < history.size(); ++e) hist << e << '\t' << history[e] << '\n';
    } else if (cmd_predict->parsed()) {
      Network net = load_network(pr_net);
      CoefficientMaps coeffs = load_coeffs(pr_coeffs);
      Image<uint8_t> mask = to_mask_image(read_qmap_file(pr_mask));
      auto [fm, pm] = predict_fields(net, coeffs, NormalizationSpec{}, mask);
      save_predicted(pr_out, fm, pm);
    } else if (cmd_mfi->parsed()) {
      auto samples = load_samples(mf_samples);
      SpiralTrajectory traj = load_trajectory(mf_traj);
      Image<double> b0 = to_real_image(read_qmap_file(mf_b0));
      double lo = b0.data[0], hi = b0.data[0];
      for (double v : b0.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      MfiPlan plan = plan_mfi(lo, hi, traj, mf_lambda);
      Gridder gridder(traj);
      gridder.density_weights();
      CoefficientMaps deblurred = mfi_deblur(samples, gridder, b0, plan);
      save_coeffs(mf_out, deblurred);
    } else if (cmd_match->parsed()) {
      auto [basis, cd] = load_basis(ma_basis);
      CoefficientMaps coeffs = load_coeffs(ma_coeffs);
      Image<uint8_t> mask = to_mask_image(read_qmap_file(ma_mask));
      MatchMode mode;
      if (ma_mode == "uncorrected") mode = MatchMode::Uncorrected;
      else if (ma_mode == "b1") mode = MatchMode::B1Corrected;
      else if (ma_mode == "joint") mode = MatchMode::Joint;
      else fail("match: unknown mode '", ma_mode, "' (uncorrected | b1 | joint)");
      Image<double> b1map;
      const Image<double> *b1ptr = nullptr;
      if (mode == MatchMode::B1Corrected) {
        if (ma_b1map.empty()) fail("match: --b1map is required in b1 mode");
        b1map = to_real_image(read_qmap_file(ma_b1map));
        b1ptr = &b1map;
      }
      MatchedMaps mm = match_maps(coeffs.chan, mask, cd, mode, b1ptr);
      write_qmap_file(ma_out + ".mt1.qmap", from_image(mm.t1_ms));
      write_qmap_file(ma_out + ".mt2.qmap", from_image(mm.t2_ms));
      write_qmap_file(ma_out + ".mpd.qmap", from_image(mm.pd));
      write_qmap_file(ma_out + ".mcorr.qmap", from_image(mm.corr));
    } else if (cmd_eval->parsed()) {
      Image<double> a = cli_detail::load_real_or_magnitude(read_qmap_file(ev_a), 0);
      Image<double> b = cli_detail::load_real_or_magnitude(read_qmap_file(ev_b), 0);
      Image<uint8_t> mask = ev_mask.empty() ? cli_detail::full_mask(a.nx, a.ny)
                                            : to_mask_image(read_qmap_file(ev_mask));
      std::cout << "metric\tvalue\n";
      std::cout.precision(10);
      std::cout << "nrmse\t" << nrmse(a, b, mask) << '\n';
      if (!ev_range.empty()) {
        const double lo = ev_range[0], hi = ev_range[1];
        if (!(hi > lo)) fail("eval: --range must satisfy hi > lo");
        Image<double> an = a, bn = b;
        for (size_t i = 0; i < an.size(); ++i) {
          an.data[i] = (an.data[i] - lo) / (hi - lo);
          bn.data[i] = (bn.data[i] - lo) / (hi - lo);
        }
        std::cout << "ssim\t" << ssim(an, bn, mask) << '\n';
      }
    } else if (cmd_render->parsed()) {
      auto arr = read_qmap_file(rd_in);
      Image<double> img = cli_detail::load_real_or_magnitude(arr, rd_channel);
      std::string out = rd_out;
      if (out.empty()) {
        std::filesystem::path p(rd_in);
        p.replace_extension(".pgm");
        out = p.string();
      }
      write_pgm(out, img, rd_lo, rd_hi);
    } else if (cmd_pipeline->parsed()) {
      const Config cfg = Config::load(pl_config);
      PipelineConfig pc = pipeline_from_config(
          cfg, std::filesystem::path(pl_config).parent_path().string());
      run_pipeline(pc, pl_out);
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

} // namespace mrfield
