#pragma once

#include "mrfield/estimator.hpp"
#include "mrfield/mfi.hpp"
#include "mrfield/qmap.hpp"

namespace mrfield {

// ---------------------------------------------------------------------------
// File layout conventions. Multi-array artifacts live under a common
// prefix; each QMAP has a .meta sidecar where parameters are needed to
// reuse it.
// ---------------------------------------------------------------------------

inline void save_maps(const std::string &prefix, const ParameterMaps &pm, const FieldMaps &fm) {
  write_qmap_file(prefix + ".t1.qmap", from_image(pm.t1_ms));
  write_qmap_file(prefix + ".t2.qmap", from_image(pm.t2_ms));
  write_qmap_file(prefix + ".pd.qmap", from_image(pm.pd));
  write_qmap_file(prefix + ".mask.qmap", from_mask(pm.mask));
  write_qmap_file(prefix + ".b1.qmap", from_image(fm.b1_rel));
  write_qmap_file(prefix + ".b0.qmap", from_image(fm.b0_hz));
  Config meta;
  meta.set_num("grid_n", pm.grid_n);
  meta.set_num("voxel_mm", pm.voxel_mm);
  meta.save(prefix + ".maps.meta");
}

inline std::pair<ParameterMaps, FieldMaps> load_maps(const std::string &prefix) {
  Config meta = Config::load(prefix + ".maps.meta");
  ParameterMaps pm;
  pm.grid_n = int(meta.get_int("grid_n"));
  pm.voxel_mm = meta.get_double("voxel_mm");
  pm.t1_ms = to_real_image(read_qmap_file(prefix + ".t1.qmap"));
  pm.t2_ms = to_real_image(read_qmap_file(prefix + ".t2.qmap"));
  pm.pd = to_real_image(read_qmap_file(prefix + ".pd.qmap"));
  pm.mask = to_mask_image(read_qmap_file(prefix + ".mask.qmap"));
  FieldMaps fm;
  fm.b1_rel = to_real_image(read_qmap_file(prefix + ".b1.qmap"));
  fm.b0_hz = to_real_image(read_qmap_file(prefix + ".b0.qmap"));
  return {std::move(pm), std::move(fm)};
}

// --- grid / dictionary -------------------------------------------------------

inline void grid_to_meta(const ParamGrid &grid, Config &meta) {
  meta.set_numbers("grid_t1_ms", grid.t1_ms);
  meta.set_numbers("grid_t2_ms", grid.t2_ms);
  meta.set_numbers("grid_b1_rel", grid.b1_rel);
}

inline ParamGrid grid_from_meta(const Config &meta) {
  ParamGrid g;
  g.t1_ms = meta.get_list("grid_t1_ms");
  g.t2_ms = meta.get_list("grid_t2_ms");
  g.b1_rel = meta.get_list("grid_b1_rel");
  g.validate();
  return g;
}

inline void save_dictionary(const std::string &prefix, const Dictionary &d,
                            const SequenceParams &seq) {
  {
    std::vector<std::complex<float>> v(d.atoms.size());
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = {float(d.atoms[i].real()), float(d.atoms[i].imag())};
    write_qmap_file(prefix + ".atoms.qmap",
                    make_c64(v, {uint32_t(d.n_atoms()), uint32_t(d.n_tr)}));
  }
  Config meta;
  meta.set("seq_name", d.seq_name);
  meta.set_num("n_tr", d.n_tr);
  meta.set_num("n_atoms", d.n_atoms());
  meta.set_num("readout_ms", seq.readout_ms);
  grid_to_meta(d.index.grid, meta);
  meta.save(prefix + ".atoms.meta");
}

inline Dictionary load_dictionary(const std::string &prefix) {
  Config meta = Config::load(prefix + ".atoms.meta");
  Dictionary d;
  d.seq_name = meta.get_str("seq_name");
  d.n_tr = int(meta.get_int("n_tr"));
  d.index.build(grid_from_meta(meta));
  const long n = d.index.n_atoms();
  if (n != meta.get_int("n_atoms"))
    fail(prefix, ": dictionary meta n_atoms does not match the grid");
  auto arr = read_qmap_file(prefix + ".atoms.qmap");
  if (arr.dims.size() != 2 || long(arr.dims[0]) != n || int(arr.dims[1]) != d.n_tr)
    fail(prefix, ": atoms array dims do not match meta");
  auto v = arr.as_c64();
  d.atoms.resize(v.size());
  for (size_t i = 0; i < v.size(); ++i) d.atoms[i] = cxd(v[i].real(), v[i].imag());
  const auto &grid = d.index.grid;
  d.params.resize(size_t(n));
  long a = 0;
  for (size_t i1 = 0; i1 < grid.t1_ms.size(); ++i1)
    for (int i2 = 0; i2 < d.index.t2_count[i1]; ++i2)
      for (size_t ib = 0; ib < grid.b1_rel.size(); ++ib)
        d.params[size_t(a++)] = {grid.t1_ms[i1], grid.t2_ms[size_t(i2)], grid.b1_rel[ib]};
  d.atom_norms.resize(size_t(n));
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (int t = 0; t < d.n_tr; ++t) s += std::norm(d.atom(i)[t]);
    d.atom_norms[size_t(i)] = std::sqrt(s);
  }
  return d;
}

inline void save_basis(const std::string &prefix, const SubspaceBasis &basis,
                       const CompressedDictionary &cd, double readout_ms) {
  {
    std::vector<std::complex<float>> v(basis.phi.size());
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = {float(basis.phi[i].real()), float(basis.phi[i].imag())};
    write_qmap_file(prefix + ".phi.qmap",
                    make_c64(v, {uint32_t(basis.n_tr), uint32_t(basis.K)}));
  }
  {
    std::vector<float> sv(basis.singular_values.size());
    for (size_t i = 0; i < sv.size(); ++i) sv[i] = float(basis.singular_values[i]);
    write_qmap_file(prefix + ".sv.qmap", make_f32(sv, {uint32_t(sv.size())}));
  }
  {
    std::vector<std::complex<float>> v(cd.coeffs.size());
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = {float(cd.coeffs[i].real()), float(cd.coeffs[i].imag())};
    write_qmap_file(prefix + ".coeffs.qmap",
                    make_c64(v, {uint32_t(cd.n_atoms()), uint32_t(cd.K)}));
  }
  Config meta;
  meta.set("basis_id", basis.basis_id);
  meta.set("seq_name", cd.seq_name);
  meta.set_num("k_rank", basis.K);
  meta.set_num("n_tr", basis.n_tr);
  meta.set_num("readout_ms", readout_ms);
  meta.set_numbers("singular_values", basis.singular_values);
  grid_to_meta(cd.index.grid, meta);
  meta.save(prefix + ".basis.meta");
}

inline std::pair<SubspaceBasis, CompressedDictionary> load_basis(const std::string &prefix) {
  Config meta = Config::load(prefix + ".basis.meta");
  SubspaceBasis basis;
  basis.basis_id = meta.get_str("basis_id");
  basis.K = int(meta.get_int("k_rank"));
  basis.n_tr = int(meta.get_int("n_tr"));
  basis.singular_values = meta.get_list("singular_values");
  auto phi = read_qmap_file(prefix + ".phi.qmap");
  if (phi.dims.size() != 2 || int(phi.dims[0]) != basis.n_tr || int(phi.dims[1]) != basis.K)
    fail(prefix, ": phi dims do not match meta");
  auto pv = phi.as_c64();
  basis.phi.resize(pv.size());
  for (size_t i = 0; i < pv.size(); ++i) basis.phi[i] = cxd(pv[i].real(), pv[i].imag());

  CompressedDictionary cd;
  cd.basis_id = basis.basis_id;
  cd.seq_name = meta.get_str("seq_name");
  cd.K = basis.K;
  cd.index.build(grid_from_meta(meta));
  const long n = cd.index.n_atoms();
  auto cf = read_qmap_file(prefix + ".coeffs.qmap");
  if (cf.dims.size() != 2 || long(cf.dims[0]) != n || int(cf.dims[1]) != cd.K)
    fail(prefix, ": coeffs dims do not match the grid");
  auto cv = cf.as_c64();
  cd.coeffs.resize(cv.size());
  for (size_t i = 0; i < cv.size(); ++i) cd.coeffs[i] = cxd(cv[i].real(), cv[i].imag());
  const auto &grid = cd.index.grid;
  cd.params.resize(size_t(n));
  long a = 0;
  for (size_t i1 = 0; i1 < grid.t1_ms.size(); ++i1)
    for (int i2 = 0; i2 < cd.index.t2_count[i1]; ++i2)
      for (size_t ib = 0; ib < grid.b1_rel.size(); ++ib)
        cd.params[size_t(a++)] = {grid.t1_ms[i1], grid.t2_ms[size_t(i2)], grid.b1_rel[ib]};
  cd.coeff_norms.resize(size_t(n));
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < cd.K; ++k) s += std::norm(cd.coeff(i)[k]);
    cd.coeff_norms[size_t(i)] = std::sqrt(s);
  }
  cd.build_b1_groups();
  return {std::move(basis), std::move(cd)};
}

// --- coefficients / samples / trajectory --------------------------------------

inline void save_coeffs(const std::string &path, const CoefficientMaps &c) {
  const int n = c.grid_n;
  std::vector<std::complex<float>> v(size_t(c.K()) * size_t(n) * size_t(n));
  for (int k = 0; k < c.K(); ++k)
    for (size_t i = 0; i < c.chan[size_t(k)].size(); ++i) {
      const cxd z = c.chan[size_t(k)].data[i];
      v[size_t(k) * size_t(n) * size_t(n) + i] = {float(z.real()), float(z.imag())};
    }
  write_qmap_file(path, make_c64(v, {uint32_t(c.K()), uint32_t(n), uint32_t(n)}));
  Config meta;
  meta.set("basis_id", c.basis_id.empty() ? "unknown" : c.basis_id);
  meta.set_num("voxel_mm", c.voxel_mm);
  write_meta(path, meta);
}

inline CoefficientMaps load_coeffs(const std::string &path) {
  auto arr = read_qmap_file(path);
  if (arr.dims.size() != 3) fail(path, ": coefficient maps must be 3-D (K, n, n)");
  CoefficientMaps c;
  const int K = int(arr.dims[0]);
  const int n = int(arr.dims[2]);
  if (int(arr.dims[1]) != n) fail(path, ": coefficient maps must be square");
  c.grid_n = n;
  Config meta = read_meta(path);
  c.basis_id = meta.get_str("basis_id");
  c.voxel_mm = meta.get_double("voxel_mm");
  auto v = arr.as_c64();
  c.chan.assign(size_t(K), Image<cxd>(n, n));
  for (int k = 0; k < K; ++k)
    for (size_t i = 0; i < c.chan[size_t(k)].size(); ++i) {
      const auto z = v[size_t(k) * size_t(n) * size_t(n) + i];
      c.chan[size_t(k)].data[i] = cxd(z.real(), z.imag());
    }
  return c;
}

inline void save_samples(const std::string &path, const std::vector<SampleVector> &samples) {
  if (samples.empty()) fail("save_samples: no channels");
  const size_t ns = samples[0].size();
  std::vector<std::complex<float>> v(samples.size() * ns);
  for (size_t ch = 0; ch < samples.size(); ++ch) {
    if (samples[ch].size() != ns) fail("save_samples: ragged channels");
    for (size_t i = 0; i < ns; ++i)
      v[ch * ns + i] = {float(samples[ch][i].real()), float(samples[ch][i].imag())};
  }
  write_qmap_file(path, make_c64(v, {uint32_t(samples.size()), uint32_t(ns)}));
}

inline std::vector<SampleVector> load_samples(const std::string &path) {
  auto arr = read_qmap_file(path);
  if (arr.dims.size() != 2) fail(path, ": samples must be 2-D (K, n_samples)");
  auto v = arr.as_c64();
  std::vector<SampleVector> out(arr.dims[0], SampleVector(arr.dims[1]));
  for (size_t ch = 0; ch < out.size(); ++ch)
    for (size_t i = 0; i < out[ch].size(); ++i) {
      const auto z = v[ch * out[ch].size() + i];
      out[ch][i] = cxd(z.real(), z.imag());
    }
  return out;
}

inline void save_trajectory(const std::string &path, const SpiralTrajectory &traj) {
  const size_t ns = traj.n_samples();
  std::vector<float> v(3 * ns);
  for (size_t i = 0; i < ns; ++i) {
    v[i] = float(traj.kx[i]);
    v[ns + i] = float(traj.ky[i]);
    v[2 * ns + i] = float(traj.t_ms[i]);
  }
  write_qmap_file(path, make_f32(v, {3, uint32_t(ns)}));
  Config meta;
  meta.set_num("fov_mm", traj.fov_mm);
  meta.set_num("matrix_n", traj.matrix_n);
  meta.set_num("dwell_us", traj.dwell_us);
  meta.set_num("readout_ms", traj.readout_ms);
  meta.set_num("kmax", traj.kmax);
  write_meta(path, meta);
}

inline SpiralTrajectory load_trajectory(const std::string &path) {
  auto arr = read_qmap_file(path);
  if (arr.dims.size() != 2 || arr.dims[0] != 3) fail(path, ": trajectory must be 3 x n f32");
  Config meta = read_meta(path);
  SpiralTrajectory traj;
  traj.fov_mm = meta.get_double("fov_mm");
  traj.matrix_n = int(meta.get_int("matrix_n"));
  traj.dwell_us = meta.get_double("dwell_us");
  traj.readout_ms = meta.get_double("readout_ms");
  traj.kmax = meta.get_double("kmax");
  auto v = arr.as_f32();
  const size_t ns = arr.dims[1];
  traj.kx.assign(v.begin(), v.begin() + long(ns));
  traj.ky.assign(v.begin() + long(ns), v.begin() + long(2 * ns));
  traj.t_ms.assign(v.begin() + long(2 * ns), v.end());
  traj.validate();
  return traj;
}

// --- network ------------------------------------------------------------------

inline void save_network(const std::string &path, Network &net) {
  std::vector<QmapArray> records;
  std::vector<std::string> names;
  for (auto &ref : net.tensor_refs()) {
    std::vector<float> v(ref.data->size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = float((*ref.data)[i]);
    records.push_back(make_f32(v, {uint32_t(v.size())}));
    names.push_back(ref.name);
  }
  write_qmap_file(path, records);
  Config meta;
  meta.set_num("in_channels", net.cfg.in_channels);
  meta.set_num("levels", net.cfg.levels);
  meta.set_num("base_filters", net.cfg.base_filters);
  meta.set_num("kernel_size", net.cfg.kernel_size);
  meta.set_num("leaky_slope", net.cfg.leaky_slope);
  meta.set_num("out_channels", net.cfg.out_channels);
  meta.set_num("init_seed", net.init_seed);
  meta.set_list("tensors", names);
  write_meta(path, meta);
}

inline Network load_network(const std::string &path) {
  Config meta = read_meta(path);
  NetworkConfig cfg;
  cfg.in_channels = int(meta.get_int("in_channels"));
  cfg.levels = int(meta.get_int("levels"));
  cfg.base_filters = int(meta.get_int("base_filters"));
  cfg.kernel_size = int(meta.get_int("kernel_size"));
  cfg.leaky_slope = meta.get_double("leaky_slope");
  cfg.out_channels = int(meta.get_int("out_channels"));
  Network net = init_network(cfg, 0);
  auto records = read_qmap_records(path);
  auto refs = net.tensor_refs();
  const auto &names = meta.raw("tensors");
  if (records.size() != refs.size() || names.size() != refs.size())
    fail(path, ": network record count does not match the architecture");
  for (size_t i = 0; i < refs.size(); ++i) {
    if (names[i] != refs[i].name)
      fail(path, ": tensor ", i, " is '", names[i], "', expected '", refs[i].name, "'");
    auto v = records[i].as_f32();
    if (v.size() != refs[i].data->size())
      fail(path, ": tensor '", names[i], "' has ", v.size(), " values, expected ",
           refs[i].data->size());
    for (size_t j = 0; j < v.size(); ++j) (*refs[i].data)[j] = v[j];
  }
  return net;
}

/// Predicted field/parameter maps under a prefix (pb1, pb0, pt1, pt2, ppd).
inline void save_predicted(const std::string &prefix, const FieldMaps &fm,
                           const ParameterMaps &pm) {
  write_qmap_file(prefix + ".pb1.qmap", from_image(fm.b1_rel));
  write_qmap_file(prefix + ".pb0.qmap", from_image(fm.b0_hz));
  write_qmap_file(prefix + ".pt1.qmap", from_image(pm.t1_ms));
  write_qmap_file(prefix + ".pt2.qmap", from_image(pm.t2_ms));
  write_qmap_file(prefix + ".ppd.qmap", from_image(pm.pd));
}

// --- rendering ----------------------------------------------------------------

/// 8-bit binary PGM with an explicit display window.
inline void write_pgm(const std::string &path, const Image<double> &img, double lo, double hi) {
  if (!(hi > lo)) fail("render: window must satisfy hi > lo");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail("cannot write image file '", path, "'");
  os << "P5\n" << img.nx << " " << img.ny << "\n255\n";
  for (int y = 0; y < img.ny; ++y)
    for (int x = 0; x < img.nx; ++x) {
      const double v = std::clamp((img.at(x, y) - lo) / (hi - lo), 0.0, 1.0);
      os.put(char(uint8_t(std::lround(v * 255.0))));
    }
}

} // namespace mrfield
