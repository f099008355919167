#pragma once

#include "mrfield/core.hpp"

namespace mrfield {

struct ParameterMaps {
  Image<double> t1_ms, t2_ms, pd;
  Image<uint8_t> mask;
  int grid_n = 0;
  double voxel_mm = 2.0;

  void validate() const {
    if (!t1_ms.same_shape(t2_ms) || !t1_ms.same_shape(pd) || t1_ms.nx != mask.nx ||
        t1_ms.ny != mask.ny)
      fail("parameter maps: image shapes differ");
    if (t1_ms.nx != grid_n || t1_ms.ny != grid_n) fail("parameter maps: grid_n mismatch");
    for (size_t i = 0; i < mask.size(); ++i) {
      if (mask.data[i]) {
        if (t2_ms.data[i] > t1_ms.data[i])
          fail("parameter maps: t2 > t1 inside mask at pixel ", i);
        if (!(pd.data[i] > 0.0)) fail("parameter maps: pd <= 0 inside mask at pixel ", i);
      } else if (pd.data[i] != 0.0) {
        fail("parameter maps: pd != 0 outside mask at pixel ", i);
      }
    }
  }
};

struct FieldMaps {
  Image<double> b1_rel, b0_hz;

  void validate(const Image<uint8_t> &mask) const {
    if (!b1_rel.same_shape(b0_hz) || b1_rel.nx != mask.nx || b1_rel.ny != mask.ny)
      fail("field maps: image shapes differ");
    for (size_t i = 0; i < mask.size(); ++i) {
      if (!mask.data[i]) continue;
      if (b1_rel.data[i] < 0.5 || b1_rel.data[i] > 1.5)
        fail("field maps: b1 outside [0.5, 1.5] inside mask at pixel ", i);
      if (std::abs(b0_hz.data[i]) > 300.0)
        fail("field maps: |b0| > 300 Hz inside mask at pixel ", i);
    }
  }
};

/// Randomized phantom recipe. Tissue classes are WM/GM/CSF-like triples
/// (t1 ms, t2 ms, pd), each jittered +-10% per structure.
struct PhantomSpec {
  int grid_n = 128;
  double voxel_mm = 2.0;
  int n_inclusions_min = 5;
  int n_inclusions_max = 15;
  double tissue_jitter = 0.10;
  int b1_poly_order = 2;
  double b1_amp_min = 0.10;
  double b1_amp_max = 0.30;
  double b0_kernel_mm = 24.0;
  double b0_amp_min_hz = 30.0;
  double b0_amp_max_hz = 150.0;

  void validate() const {
    if (grid_n < 8) fail("phantom: grid_n must be >= 8");
    if (!(voxel_mm > 0.0)) fail("phantom: voxel_mm must be positive");
    if (n_inclusions_min < 0 || n_inclusions_max < n_inclusions_min)
      fail("phantom: bad inclusion count range");
    if (!(tissue_jitter >= 0.0 && tissue_jitter < 0.5)) fail("phantom: bad tissue jitter");
    if (b1_poly_order != 2) fail("phantom: only second-order b1 polynomials are supported");
    if (!(b1_amp_min >= 0.0 && b1_amp_max >= b1_amp_min && b1_amp_max <= 0.5))
      fail("phantom: b1 amplitude range outside [0, 0.5]");
    if (!(b0_kernel_mm > 0.0)) fail("phantom: b0 kernel width must be positive");
    if (!(b0_amp_min_hz >= 0.0 && b0_amp_max_hz >= b0_amp_min_hz && b0_amp_max_hz <= 300.0))
      fail("phantom: b0 amplitude range outside [0, 300] Hz");
  }
};

namespace detail {

struct Tissue {
  double t1, t2, pd;
};
inline const Tissue kTissues[3] = {
    {800.0, 60.0, 0.75},   // WM-like
    {1300.0, 90.0, 0.85},  // GM-like
    {2800.0, 300.0, 1.0},  // CSF-like
};

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / a;
    const double v = (-dx * sin_t + dy * cos_t) / b;
    return u * u + v * v <= 1.0;
  }
};

inline void gaussian_smooth(Image<double> &img, double sigma_px) {
  const int radius = std::max(1, int(std::ceil(3.0 * sigma_px)));
  std::vector<double> kernel(size_t(radius) * 2 + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[size_t(i + radius)] = std::exp(-0.5 * (i / sigma_px) * (i / sigma_px));
    sum += kernel[size_t(i + radius)];
  }
  for (auto &k : kernel) k /= sum;

  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };
  Image<double> tmp(img.nx, img.ny);
  for (int y = 0; y < img.ny; ++y)
    for (int x = 0; x < img.nx; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[size_t(i + radius)] * img.at(reflect(x + i, img.nx), y);
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < img.ny; ++y)
    for (int x = 0; x < img.nx; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[size_t(i + radius)] * tmp.at(x, reflect(y + i, img.ny));
      img.at(x, y) = acc;
    }
}

} // namespace detail

/// Fully determined by (spec, seed): head-ellipse mask, WM-like background
/// with random elliptical inclusions, clipped second-order B1 polynomial,
/// and smoothed-noise-plus-ramp B0 clipped to the drawn amplitude.
inline std::pair<ParameterMaps, FieldMaps> generate_phantom(const PhantomSpec &spec,
                                                            uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const int n = spec.grid_n;

  ParameterMaps pm;
  pm.grid_n = n;
  pm.voxel_mm = spec.voxel_mm;
  pm.t1_ms = Image<double>(n, n, 0.0);
  pm.t2_ms = Image<double>(n, n, 0.0);
  pm.pd = Image<double>(n, n, 0.0);
  pm.mask = Image<uint8_t>(n, n, 0);

  detail::Ellipse head;
  head.cx = n / 2.0 + rng.uniform(-0.02, 0.02) * n;
  head.cy = n / 2.0 + rng.uniform(-0.02, 0.02) * n;
  head.a = (0.40 + rng.uniform(-0.03, 0.03)) * n;
  head.b = (0.34 + rng.uniform(-0.03, 0.03)) * n;
  const double head_angle = rng.uniform(-0.3, 0.3);
  head.cos_t = std::cos(head_angle);
  head.sin_t = std::sin(head_angle);

  auto jitter = [&](double v) { return v * (1.0 + spec.tissue_jitter * rng.uniform(-1.0, 1.0)); };

  const auto &wm = detail::kTissues[0];
  const double bg_t1 = jitter(wm.t1), bg_t2 = jitter(wm.t2), bg_pd = jitter(wm.pd);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!head.contains(x, y)) continue;
      pm.mask.at(x, y) = 1;
      pm.t1_ms.at(x, y) = bg_t1;
      pm.t2_ms.at(x, y) = bg_t2;
      pm.pd.at(x, y) = bg_pd;
    }

  const int n_inc = spec.n_inclusions_min +
                    int(rng.uniform_int(uint64_t(spec.n_inclusions_max - spec.n_inclusions_min + 1)));
  for (int inc = 0; inc < n_inc; ++inc) {
    const auto &cls = detail::kTissues[rng.uniform_int(3)];
    const double t1 = jitter(cls.t1), t2 = jitter(cls.t2), pdv = jitter(cls.pd);
    detail::Ellipse e;
    e.cx = head.cx + rng.uniform(-0.6, 0.6) * head.a;
    e.cy = head.cy + rng.uniform(-0.6, 0.6) * head.b;
    e.a = rng.uniform(0.04, 0.18) * n;
    e.b = rng.uniform(0.04, 0.18) * n;
    const double ang = rng.uniform(0.0, pi);
    e.cos_t = std::cos(ang);
    e.sin_t = std::sin(ang);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if (!pm.mask.at(x, y) || !e.contains(x, y)) continue;
        pm.t1_ms.at(x, y) = t1;
        pm.t2_ms.at(x, y) = t2;
        pm.pd.at(x, y) = pdv;
      }
  }

  FieldMaps fm;
  fm.b1_rel = Image<double>(n, n, 1.0);
  fm.b0_hz = Image<double>(n, n, 0.0);

  // B1: random second-order polynomial over [-1,1]^2, scaled to a drawn
  // peak deviation inside the mask, then clipped.
  {
    double c10 = rng.normal(), c01 = rng.normal(), c20 = rng.normal();
    double c11 = rng.normal(), c02 = rng.normal();
    const double amp = rng.uniform(spec.b1_amp_min, spec.b1_amp_max);
    Image<double> poly(n, n, 0.0);
    double max_abs = 0.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u = (x - n / 2.0) / (n / 2.0);
        const double v = (y - n / 2.0) / (n / 2.0);
        const double p = c10 * u + c01 * v + c20 * u * u + c11 * u * v + c02 * v * v;
        poly.at(x, y) = p;
        if (pm.mask.at(x, y)) max_abs = std::max(max_abs, std::abs(p));
      }
    const double scale = max_abs > 0.0 ? amp / max_abs : 0.0;
    for (size_t i = 0; i < poly.size(); ++i)
      fm.b1_rel.data[i] = std::clamp(1.0 + poly.data[i] * scale, 0.5, 1.5);
  }

  // B0: smoothed white noise plus a linear ramp, clipped to the amplitude.
  {
    const double amp = rng.uniform(spec.b0_amp_min_hz, spec.b0_amp_max_hz);
    Image<double> noise(n, n);
    for (auto &v : noise.data) v = rng.normal();
    detail::gaussian_smooth(noise, std::max(0.5, spec.b0_kernel_mm / spec.voxel_mm));
    double max_abs = 0.0;
    for (size_t i = 0; i < noise.size(); ++i)
      if (pm.mask.data[i]) max_abs = std::max(max_abs, std::abs(noise.data[i]));
    const double noise_scale = max_abs > 0.0 ? 0.7 * amp / max_abs : 0.0;

    const double ramp_angle = rng.uniform(0.0, two_pi);
    const double gx = std::cos(ramp_angle), gy = std::sin(ramp_angle);
    const double ramp_amp = rng.uniform(0.3, 0.5) * amp;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double u = (x - n / 2.0) / (n / 2.0);
        const double v = (y - n / 2.0) / (n / 2.0);
        const double val = noise.at(x, y) * noise_scale + ramp_amp * (gx * u + gy * v);
        fm.b0_hz.at(x, y) = std::clamp(val, -amp, amp);
      }
  }

  pm.validate();
  fm.validate(pm.mask);
  return {std::move(pm), std::move(fm)};
}

} // namespace mrfield
