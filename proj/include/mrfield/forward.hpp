#pragma once

#include "mrfield/dictionary.hpp"
#include "mrfield/gridding.hpp"
#include "mrfield/phantom.hpp"

namespace mrfield {

/// K complex coefficient channel images plus the basis they live in.
struct CoefficientMaps {
  std::vector<Image<cxd>> chan;
  std::string basis_id;
  int grid_n = 0;
  double voxel_mm = 2.0;

  int K() const { return int(chan.size()); }

  void check_geometry(const SpiralTrajectory &traj) const {
    if (grid_n != traj.matrix_n)
      fail("coefficients: grid_n ", grid_n, " does not match trajectory matrix ", traj.matrix_n);
    if (std::abs(voxel_mm * grid_n - traj.fov_mm) > 1e-6 * traj.fov_mm)
      fail("coefficients: FOV ", voxel_mm * grid_n, " mm does not match trajectory ",
           traj.fov_mm, " mm");
    for (const auto &c : chan)
      if (c.nx != grid_n || c.ny != grid_n) fail("coefficients: channel shape mismatch");
  }
};

/// L equal readout bins; centers are bin midpoints. Every sample belongs
/// to exactly one bin.
struct TimeSegmentation {
  int L = 1;
  double readout_ms = 0.0;
  std::vector<double> centers_ms;

  int bin_of(double t_ms) const {
    const int b = int(t_ms / readout_ms * L);
    return std::clamp(b, 0, L - 1);
  }
};

inline TimeSegmentation make_segmentation(double readout_ms, int L) {
  if (L < 1) fail("segmentation: L must be >= 1, got ", L);
  if (!(readout_ms > 0.0)) fail("segmentation: readout must be positive");
  TimeSegmentation seg;
  seg.L = L;
  seg.readout_ms = readout_ms;
  seg.centers_ms.resize(size_t(L));
  for (int l = 0; l < L; ++l)
    seg.centers_ms[size_t(l)] = (double(l) + 0.5) * readout_ms / double(L);
  return seg;
}

/// Segment windows: Quadratic (default) runs a three-point Neville
/// interpolation across neighboring segment images per sample, Linear a
/// two-point one, Rect pure bin membership. The interpolations are nested
/// lerps, so identical segment images (b0 = 0) pass through bitwise.
enum class SegWindow { Quadratic, Linear, Rect };

// ---------------------------------------------------------------------------
// Clean coefficient synthesis: per masked voxel, the compressed-dictionary
// coefficients of the nearest atom in (log t1, log t2, linear b1), scaled
// by pd. B1 enters through atom selection only.
// ---------------------------------------------------------------------------

inline CoefficientMaps clean_coeffs(const ParameterMaps &pm, const FieldMaps &fm,
                                    const SubspaceBasis &basis,
                                    const CompressedDictionary &cd) {
  if (!pm.t1_ms.same_shape(fm.b1_rel))
    fail("clean_coeffs: parameter/field map shapes differ");
  if (basis.basis_id != cd.basis_id)
    fail("clean_coeffs: basis id '", basis.basis_id, "' does not match dictionary '",
         cd.basis_id, "'");
  const int n = pm.grid_n;
  CoefficientMaps out;
  out.basis_id = basis.basis_id;
  out.grid_n = n;
  out.voxel_mm = pm.voxel_mm;
  out.chan.assign(size_t(cd.K), Image<cxd>(n, n, cxd(0.0, 0.0)));

  parallel_for(size_t(n) * size_t(n), [&](size_t i) {
    if (!pm.mask.data[i]) return;
    const long atom = cd.index.nearest_atom(pm.t1_ms.data[i], pm.t2_ms.data[i],
                                            fm.b1_rel.data[i]);
    const cxd *c = cd.coeff(atom);
    const double pd = pm.pd.data[i];
    for (int k = 0; k < cd.K; ++k) out.chan[size_t(k)].data[i] = pd * c[k];
  });
  return out;
}

// ---------------------------------------------------------------------------
// B0 corruption through the spiral time-segmented model: per channel,
// samples of segment l come from grid_forward(c .* exp(+i 2 pi b0 t_l));
// per-sample values are interpolated across the neighboring segment
// images (nested-lerp form, so b0 = 0 reproduces the unsegmented result
// bitwise for any L). The corrupted image is the DCF-weighted adjoint.
// ---------------------------------------------------------------------------

struct CorruptResult {
  CoefficientMaps maps;
  std::vector<SampleVector> samples; // per channel
};

namespace detail {

/// Per-sample interpolation stencil over segment centers: first segment
/// index and number of points (1, 2 or 3).
struct SegStencil {
  int first = 0;
  int count = 1;
};

inline SegStencil seg_stencil(const TimeSegmentation &seg, double t, SegWindow window) {
  const int L = seg.L;
  if (window == SegWindow::Rect || L == 1) return {seg.bin_of(t), 1};
  if (window == SegWindow::Linear || L == 2) {
    if (t <= seg.centers_ms[0]) return {0, 1};
    if (t >= seg.centers_ms[size_t(L) - 1]) return {L - 1, 1};
    const auto it = std::upper_bound(seg.centers_ms.begin(), seg.centers_ms.end(), t);
    return {int(it - seg.centers_ms.begin()) - 1, 2};
  }
  // Quadratic: centered three-point stencil, clamped to the ends.
  const double h = seg.readout_ms / double(L);
  int mid = int(std::lround((t - seg.centers_ms[0]) / h));
  mid = std::clamp(mid, 1, L - 2);
  return {mid - 1, 3};
}

inline cxd seg_interpolate(const TimeSegmentation &seg, const SegStencil &st, double t,
                           const cxd *v) {
  if (st.count == 1) return v[0];
  const double c0 = seg.centers_ms[size_t(st.first)];
  const double c1 = seg.centers_ms[size_t(st.first) + 1];
  if (st.count == 2) {
    const double w = (t - c0) / (c1 - c0);
    return v[0] + w * (v[1] - v[0]);
  }
  // Aitken-Neville quadratic as nested lerps.
  const double c2 = seg.centers_ms[size_t(st.first) + 2];
  const cxd p01 = v[0] + ((t - c0) / (c1 - c0)) * (v[1] - v[0]);
  const cxd p12 = v[1] + ((t - c1) / (c2 - c1)) * (v[2] - v[1]);
  return p01 + ((t - c0) / (c2 - c0)) * (p12 - p01);
}

} // namespace detail

inline CorruptResult corrupt(const CoefficientMaps &c, const Image<double> &b0_hz,
                             const Gridder &gridder, const TimeSegmentation &seg,
                             SegWindow window = SegWindow::Quadratic) {
  const SpiralTrajectory &traj = gridder.trajectory();
  c.check_geometry(traj);
  if (b0_hz.nx != c.grid_n || b0_hz.ny != c.grid_n)
    fail("corrupt: b0 map shape differs from coefficients");
  if (std::abs(seg.readout_ms - traj.readout_ms) > 1e-9)
    fail("corrupt: segmentation readout ", seg.readout_ms, " ms differs from trajectory ",
         traj.readout_ms, " ms");
  const int K = c.K();
  const int L = seg.L;
  const size_t ns = traj.n_samples();

  // Phase images are shared across channels.
  std::vector<Image<cxd>> phase(static_cast<size_t>(L));
  parallel_for(size_t(L), [&](size_t l) {
    Image<cxd> ph(c.grid_n, c.grid_n);
    const double t_s = seg.centers_ms[l] * 1e-3;
    for (size_t i = 0; i < ph.size(); ++i) {
      const double a = two_pi * b0_hz.data[i] * t_s;
      ph.data[i] = cxd(std::cos(a), std::sin(a));
    }
    phase[l] = std::move(ph);
  });

  // Per-sample stencils, then the contiguous sample range per segment.
  std::vector<detail::SegStencil> stencil(ns);
  for (size_t i = 0; i < ns; ++i) stencil[i] = detail::seg_stencil(seg, traj.t_ms[i], window);
  std::vector<std::pair<size_t, size_t>> range(static_cast<size_t>(L), {ns, 0});
  for (size_t i = 0; i < ns; ++i)
    for (int l = stencil[i].first; l < stencil[i].first + stencil[i].count; ++l) {
      range[size_t(l)].first = std::min(range[size_t(l)].first, i);
      range[size_t(l)].second = std::max(range[size_t(l)].second, i + 1);
    }

  // All (channel, segment) forward transforms are independent.
  std::vector<SampleVector> seg_samples(size_t(K) * size_t(L));
  parallel_for(size_t(K) * size_t(L), [&](size_t task) {
    const size_t ch = task / size_t(L);
    const size_t l = task % size_t(L);
    const auto [lo, hi] = range[l];
    if (lo >= hi) return;
    Image<cxd> img(c.grid_n, c.grid_n);
    for (size_t i = 0; i < img.size(); ++i)
      img.data[i] = c.chan[ch].data[i] * phase[l].data[i];
    SampleVector buf(ns, cxd(0.0, 0.0));
    gridder.forward_samples(img, lo, hi, buf.data());
    seg_samples[task] = std::move(buf);
  });

  CorruptResult out;
  out.samples.assign(size_t(K), SampleVector(ns));
  for (int ch = 0; ch < K; ++ch) {
    SampleVector &d = out.samples[size_t(ch)];
    for (size_t i = 0; i < ns; ++i) {
      const auto &st = stencil[i];
      cxd v[3];
      for (int p = 0; p < st.count; ++p)
        v[p] = seg_samples[size_t(ch) * size_t(L) + size_t(st.first + p)][i];
      d[i] = detail::seg_interpolate(seg, st, traj.t_ms[i], v);
    }
  }

  out.maps.basis_id = c.basis_id;
  out.maps.grid_n = c.grid_n;
  out.maps.voxel_mm = c.voxel_mm;
  out.maps.chan.resize(size_t(K));
  parallel_for(size_t(K), [&](size_t ch) {
    out.maps.chan[ch] = gridder.adjoint(out.samples[ch], 0.0, true);
  });
  return out;
}

inline CorruptResult corrupt(const CoefficientMaps &c, const Image<double> &b0_hz,
                             const SpiralTrajectory &traj, const TimeSegmentation &seg,
                             SegWindow window = SegWindow::Quadratic) {
  Gridder gridder(traj);
  gridder.density_weights();
  return corrupt(c, b0_hz, gridder, seg, window);
}

/// Exact version of corrupt(): per-sample off-resonance phase through the
/// slow DFT oracle. Test-scale only.
inline CorruptResult corrupt_oracle(const CoefficientMaps &c, const Image<double> &b0_hz,
                                    const Gridder &gridder) {
  const SpiralTrajectory &traj = gridder.trajectory();
  c.check_geometry(traj);
  if (b0_hz.nx != c.grid_n || b0_hz.ny != c.grid_n)
    fail("corrupt_oracle: b0 map shape differs from coefficients");
  CorruptResult out;
  out.samples.resize(size_t(c.K()));
  out.maps.basis_id = c.basis_id;
  out.maps.grid_n = c.grid_n;
  out.maps.voxel_mm = c.voxel_mm;
  out.maps.chan.resize(size_t(c.K()));
  for (int ch = 0; ch < c.K(); ++ch) {
    out.samples[size_t(ch)] = exact_forward(c.chan[size_t(ch)], traj, &b0_hz);
    out.maps.chan[size_t(ch)] = gridder.adjoint(out.samples[size_t(ch)], 0.0, true);
  }
  return out;
}

inline CorruptResult corrupt_oracle(const CoefficientMaps &c, const Image<double> &b0_hz,
                                    const SpiralTrajectory &traj) {
  Gridder gridder(traj);
  gridder.density_weights();
  return corrupt_oracle(c, b0_hz, gridder);
}

/// Pooled NRMSE between two coefficient map stacks over a mask.
inline double coeff_nrmse(const CoefficientMaps &a, const CoefficientMaps &b,
                          const Image<uint8_t> &mask) {
  if (a.K() != b.K()) fail("coeff_nrmse: channel counts differ");
  double num = 0.0, den = 0.0;
  for (int ch = 0; ch < a.K(); ++ch) {
    const auto &ca = a.chan[size_t(ch)];
    const auto &cb = b.chan[size_t(ch)];
    if (!ca.same_shape(cb)) fail("coeff_nrmse: channel shapes differ");
    for (size_t i = 0; i < ca.size(); ++i) {
      if (!mask.data[i]) continue;
      num += std::norm(ca.data[i] - cb.data[i]);
      den += std::norm(cb.data[i]);
    }
  }
  if (den <= 0.0) fail("coeff_nrmse: reference is zero over the mask");
  return std::sqrt(num / den);
}

} // namespace mrfield
