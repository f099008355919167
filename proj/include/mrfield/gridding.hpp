#pragma once

#include "mrfield/core.hpp"

#include <fftw3.h>

#include <map>

namespace mrfield {

using SampleVector = std::vector<cxd>;

/// Archimedean spiral readout, uniform in time. k in cycles/mm, t in ms.
struct SpiralTrajectory {
  std::vector<double> kx, ky;
  std::vector<double> t_ms;
  double dwell_us = 4.0;
  double kmax = 0.0;
  double fov_mm = 0.0;
  int matrix_n = 0;
  double readout_ms = 0.0;

  size_t n_samples() const { return kx.size(); }

  void validate() const {
    if (kx.size() != ky.size() || kx.size() != t_ms.size())
      fail("trajectory: channel lengths differ");
    if (kx.empty()) fail("trajectory: empty");
    // 1e-6 relative slack admits trajectories round-tripped through f32 files
    const double bound = kmax * (1.0 + 1e-6) + 1e-12;
    for (size_t i = 0; i < kx.size(); ++i) {
      if (std::sqrt(kx[i] * kx[i] + ky[i] * ky[i]) > bound)
        fail("trajectory: sample ", i, " radius exceeds kmax");
      if (i > 0 && !(t_ms[i] > t_ms[i - 1])) fail("trajectory: t_ms not strictly increasing");
    }
    if (t_ms[0] != 0.0) fail("trajectory: t_ms must start at 0");
  }
};

inline SpiralTrajectory design_spiral(double readout_ms, double fov_mm, int matrix_n,
                                      double dwell_us = 4.0) {
  if (!(readout_ms > 0.0) || !(fov_mm > 0.0) || matrix_n <= 0 || !(dwell_us > 0.0))
    fail("design_spiral: all arguments must be positive");
  const long n = long(std::floor(readout_ms * 1000.0 / dwell_us));
  if (n < 64)
    fail("design_spiral: readout ", readout_ms, " ms at dwell ", dwell_us,
         " us gives only ", n, " samples (need >= 64)");
  SpiralTrajectory tr;
  tr.dwell_us = dwell_us;
  tr.fov_mm = fov_mm;
  tr.matrix_n = matrix_n;
  tr.readout_ms = readout_ms;
  tr.kmax = double(matrix_n) / (2.0 * fov_mm); // = 1 / (2 * voxel_mm)
  const double n_turns = double(matrix_n) / 2.0;
  tr.kx.resize(size_t(n));
  tr.ky.resize(size_t(n));
  tr.t_ms.resize(size_t(n));
  for (long i = 0; i < n; ++i) {
    const double t = double(i) * dwell_us / 1000.0;
    const double tau = t / readout_ms;
    const double ang = two_pi * n_turns * tau;
    tr.t_ms[size_t(i)] = t;
    tr.kx[size_t(i)] = tr.kmax * tau * std::cos(ang);
    tr.ky[size_t(i)] = tr.kmax * tau * std::sin(ang);
  }
  tr.validate();
  return tr;
}

// ---------------------------------------------------------------------------
// FFTW plan cache. Plans are created once per (size, direction) under a
// mutex with FFTW_ESTIMATE (deterministic algorithm choice) and executed
// concurrently on caller-owned buffers.
// ---------------------------------------------------------------------------

namespace detail {

class FftPlans {
public:
  static void run(int n, int sign, cxd *in, cxd *out) {
    fftw_execute_dft(instance().plan(n, sign), reinterpret_cast<fftw_complex *>(in),
                     reinterpret_cast<fftw_complex *>(out));
  }

private:
  static FftPlans &instance() {
    static FftPlans p;
    return p;
  }
  fftw_plan plan(int n, int sign) {
    std::lock_guard<std::mutex> g(mutex_);
    auto key = std::make_pair(n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<cxd> a(size_t(n) * size_t(n)), b(size_t(n) * size_t(n));
    fftw_plan p = fftw_plan_dft_2d(n, n, reinterpret_cast<fftw_complex *>(a.data()),
                                   reinterpret_cast<fftw_complex *>(b.data()), sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) fail("fftw: plan creation failed for n = ", n);
    plans_[key] = p;
    return p;
  }
  std::mutex mutex_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Exact non-Cartesian DFT with optional per-voxel off-resonance phase:
//
//   d_i = sum_x m(x) exp(+i 2 pi df(x) t_i) exp(-i 2 pi k_i . x)
//
// x in mm relative to the image center (pixel n/2). Slow oracle,
// O(samples * voxels).
// ---------------------------------------------------------------------------

inline SampleVector exact_forward(const Image<cxd> &img, const SpiralTrajectory &traj,
                                  const Image<double> *b0_hz = nullptr) {
  if (img.nx != traj.matrix_n || img.ny != traj.matrix_n)
    fail("exact_forward: image is ", img.nx, "x", img.ny, ", trajectory expects ",
         traj.matrix_n, "x", traj.matrix_n);
  if (b0_hz && (b0_hz->nx != img.nx || b0_hz->ny != img.ny))
    fail("exact_forward: b0 map shape differs from image");
  const int n = img.nx;
  const double voxel = traj.fov_mm / double(traj.matrix_n);

  // Gather non-zero pixels once; phantoms are mostly empty outside the mask.
  struct Px {
    double x_mm, y_mm, df;
    cxd v;
  };
  std::vector<Px> pixels;
  pixels.reserve(img.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const cxd v = img.at(x, y);
      if (v == cxd(0.0, 0.0)) continue;
      pixels.push_back({(x - n / 2) * voxel, (y - n / 2) * voxel,
                        b0_hz ? b0_hz->at(x, y) : 0.0, v});
    }

  SampleVector out(traj.n_samples());
  parallel_for(traj.n_samples(), [&](size_t i) {
    const double t_s = traj.t_ms[i] * 1e-3;
    const double kx = traj.kx[i], ky = traj.ky[i];
    cxd acc(0.0, 0.0);
    for (const auto &p : pixels) {
      const double phase = two_pi * (p.df * t_s - (kx * p.x_mm + ky * p.y_mm));
      acc += p.v * cxd(std::cos(phase), std::sin(phase));
    }
    out[i] = acc;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Kaiser-Bessel gridding operators: 2x oversampling, kernel width 4 grid
// cells, beta from the standard oversampling formula. forward() agrees
// with exact_forward (no off-resonance) to NRMSE < 1e-2 on smooth images;
// adjoint(demod = 0, dcf = false) is the exact adjoint of forward().
// ---------------------------------------------------------------------------

class Gridder {
public:
  static constexpr int kKernelWidth = 4;
  static constexpr int kOversampling = 2;
  static constexpr int kLutSize = 4096;

  explicit Gridder(const SpiralTrajectory &traj) : traj_(traj) {
    traj_.validate();
    n_ = traj.matrix_n;
    G_ = kOversampling * n_;
    const double w = kKernelWidth, os = kOversampling;
    beta_ = pi * std::sqrt((w / os) * (w / os) * (os - 0.5) * (os - 0.5) - 0.8);

    const double i0_beta = std::cyl_bessel_i(0.0, beta_);
    lut_.resize(kLutSize + 2);
    for (int j = 0; j <= kLutSize; ++j) {
      const double u = (w / 2.0) * double(j) / double(kLutSize);
      const double arg = 1.0 - (2.0 * u / w) * (2.0 * u / w);
      lut_[size_t(j)] = std::cyl_bessel_i(0.0, beta_ * std::sqrt(std::max(0.0, arg))) / i0_beta;
    }
    lut_[kLutSize + 1] = 0.0;

    deapod_.resize(size_t(n_));
    for (int i = 0; i < n_; ++i)
      deapod_[size_t(i)] = ft_kb(double(i - n_ / 2) / double(G_));

    // Trajectory k in cycles/mm -> continuous index on the oversampled grid.
    kappa_scale_ = 2.0 * traj.fov_mm;
  }

  const SpiralTrajectory &trajectory() const { return traj_; }
  int matrix_n() const { return n_; }

  SampleVector forward(const Image<cxd> &img) const {
    SampleVector out(traj_.n_samples());
    forward_samples(img, 0, traj_.n_samples(), out.data());
    return out;
  }

  /// Interpolates samples [lo, hi) only; out must hold traj.n_samples() slots.
  void forward_samples(const Image<cxd> &img, size_t lo, size_t hi, cxd *out) const {
    check_geometry(img.nx, img.ny);
    std::vector<cxd> padded(size_t(G_) * size_t(G_), cxd(0.0, 0.0));
    for (int y = 0; y < n_; ++y) {
      const size_t py = size_t((y - n_ / 2 + G_) % G_);
      for (int x = 0; x < n_; ++x) {
        const size_t px = size_t((x - n_ / 2 + G_) % G_);
        padded[py * size_t(G_) + px] = img.at(x, y) / (deapod_[size_t(x)] * deapod_[size_t(y)]);
      }
    }
    std::vector<cxd> spectrum(size_t(G_) * size_t(G_));
    detail::FftPlans::run(G_, FFTW_FORWARD, padded.data(), spectrum.data());

    parallel_for(hi - lo, [&](size_t j) {
      const size_t i = lo + j;
      out[i] = interpolate(spectrum.data(), traj_.kx[i] * kappa_scale_,
                           traj_.ky[i] * kappa_scale_);
    });
  }

  /// demod_hz applies the conjugate of the forward off-resonance factor
  /// exp(+i 2 pi f t): samples are multiplied by exp(-i 2 pi f t_i).
  Image<cxd> adjoint(const SampleVector &samples, double demod_hz, bool use_dcf) const {
    if (samples.size() != traj_.n_samples())
      fail("grid_adjoint: ", samples.size(), " samples, trajectory has ", traj_.n_samples());
    const std::vector<double> *w = nullptr;
    if (use_dcf) w = &density_weights();

    std::vector<cxd> grid(size_t(G_) * size_t(G_), cxd(0.0, 0.0));
    // Spreading stays sequential: deterministic and cheap next to the FFT.
    for (size_t i = 0; i < samples.size(); ++i) {
      cxd v = samples[i];
      if (w) v *= (*w)[i];
      if (demod_hz != 0.0) {
        const double phase = -two_pi * demod_hz * traj_.t_ms[i] * 1e-3;
        v *= cxd(std::cos(phase), std::sin(phase));
      }
      spread(grid.data(), traj_.kx[i] * kappa_scale_, traj_.ky[i] * kappa_scale_, v);
    }
    std::vector<cxd> imgbuf(size_t(G_) * size_t(G_));
    detail::FftPlans::run(G_, FFTW_BACKWARD, grid.data(), imgbuf.data());

    Image<cxd> img(n_, n_);
    for (int y = 0; y < n_; ++y) {
      const size_t py = size_t((y - n_ / 2 + G_) % G_);
      for (int x = 0; x < n_; ++x) {
        const size_t px = size_t((x - n_ / 2 + G_) % G_);
        img.at(x, y) = imgbuf[py * size_t(G_) + px] / (deapod_[size_t(x)] * deapod_[size_t(y)]);
      }
    }
    return img;
  }

  /// Radius-times-radial-increment weights, scaled once against the exact
  /// oracle on a delta image: the recon of all-ones samples (the forward
  /// of a centered delta) must carry unit DC content, i.e. its pixel sum
  /// is 1. This makes extended objects reconstruct at unit scale.
  const std::vector<double> &density_weights() const {
    std::call_once(dcf_once_, [&] {
      const size_t ns = traj_.n_samples();
      std::vector<double> w(ns, 0.0);
      std::vector<double> radius(ns);
      for (size_t i = 0; i < ns; ++i)
        radius[i] = std::sqrt(traj_.kx[i] * traj_.kx[i] + traj_.ky[i] * traj_.ky[i]);
      for (size_t i = 1; i < ns; ++i) w[i] = radius[i] * (radius[i] - radius[i - 1]);
      if (ns > 1) w[0] = radius[0] * (radius[1] - radius[0]);

      std::vector<cxd> grid(size_t(G_) * size_t(G_), cxd(0.0, 0.0));
      for (size_t i = 0; i < ns; ++i)
        spread(grid.data(), traj_.kx[i] * kappa_scale_, traj_.ky[i] * kappa_scale_,
               cxd(w[i], 0.0));
      std::vector<cxd> imgbuf(size_t(G_) * size_t(G_));
      detail::FftPlans::run(G_, FFTW_BACKWARD, grid.data(), imgbuf.data());
      cxd dc(0.0, 0.0);
      for (int y = 0; y < n_; ++y) {
        const size_t py = size_t((y - n_ / 2 + G_) % G_);
        for (int x = 0; x < n_; ++x) {
          const size_t px = size_t((x - n_ / 2 + G_) % G_);
          dc += imgbuf[py * size_t(G_) + px] / (deapod_[size_t(x)] * deapod_[size_t(y)]);
        }
      }
      if (!(dc.real() > 0.0))
        fail("density weights: calibration failed (DC = ", dc.real(), ")");
      dcf_ = w;
      for (auto &v : dcf_) v /= dc.real();
    });
    return dcf_;
  }

private:
  void check_geometry(int nx, int ny) const {
    if (nx != n_ || ny != n_)
      fail("gridder: image is ", nx, "x", ny, ", trajectory expects ", n_, "x", n_);
  }

  double kernel(double u) const {
    const double a = std::abs(u) * (2.0 * double(kLutSize) / double(kKernelWidth));
    const int j = int(a);
    if (j >= kLutSize) return 0.0;
    const double f = a - double(j);
    return lut_[size_t(j)] + f * (lut_[size_t(j) + 1] - lut_[size_t(j)]);
  }

  double ft_kb(double nu) const {
    const double w = kKernelWidth;
    const double q = beta_ * beta_ - (pi * w * nu) * (pi * w * nu);
    const double i0_beta = std::cyl_bessel_i(0.0, beta_);
    if (q > 0.0) {
      const double r = std::sqrt(q);
      return w * std::sinh(r) / (r * i0_beta);
    }
    if (q < 0.0) {
      const double r = std::sqrt(-q);
      return w * std::sin(r) / (r * i0_beta);
    }
    return w / i0_beta;
  }

  cxd interpolate(const cxd *spectrum, double kapx, double kapy) const {
    const int x0 = int(std::ceil(kapx - kKernelWidth / 2.0));
    const int x1 = int(std::floor(kapx + kKernelWidth / 2.0));
    const int y0 = int(std::ceil(kapy - kKernelWidth / 2.0));
    const int y1 = int(std::floor(kapy + kKernelWidth / 2.0));
    cxd acc(0.0, 0.0);
    for (int qy = y0; qy <= y1; ++qy) {
      const double wy = kernel(kapy - qy);
      if (wy == 0.0) continue;
      const size_t gy = size_t(((qy % G_) + G_) % G_);
      for (int qx = x0; qx <= x1; ++qx) {
        const double wx = kernel(kapx - qx);
        if (wx == 0.0) continue;
        const size_t gx = size_t(((qx % G_) + G_) % G_);
        acc += (wx * wy) * spectrum[gy * size_t(G_) + gx];
      }
    }
    return acc;
  }

  void spread(cxd *grid, double kapx, double kapy, cxd v) const {
    const int x0 = int(std::ceil(kapx - kKernelWidth / 2.0));
    const int x1 = int(std::floor(kapx + kKernelWidth / 2.0));
    const int y0 = int(std::ceil(kapy - kKernelWidth / 2.0));
    const int y1 = int(std::floor(kapy + kKernelWidth / 2.0));
    for (int qy = y0; qy <= y1; ++qy) {
      const double wy = kernel(kapy - qy);
      if (wy == 0.0) continue;
      const size_t gy = size_t(((qy % G_) + G_) % G_);
      for (int qx = x0; qx <= x1; ++qx) {
        const double wx = kernel(kapx - qx);
        if (wx == 0.0) continue;
        const size_t gx = size_t(((qx % G_) + G_) % G_);
        grid[gy * size_t(G_) + gx] += (wx * wy) * v;
      }
    }
  }

  SpiralTrajectory traj_;
  int n_ = 0;
  int G_ = 0;
  double beta_ = 0.0;
  double kappa_scale_ = 0.0;
  std::vector<double> lut_;
  std::vector<double> deapod_;
  mutable std::once_flag dcf_once_;
  mutable std::vector<double> dcf_;
};

inline SampleVector grid_forward(const Image<cxd> &img, const SpiralTrajectory &traj) {
  return Gridder(traj).forward(img);
}

inline Image<cxd> grid_adjoint(const SampleVector &samples, const SpiralTrajectory &traj,
                               double demod_hz, bool use_dcf) {
  return Gridder(traj).adjoint(samples, demod_hz, use_dcf);
}

inline std::vector<double> density_weights(const SpiralTrajectory &traj) {
  return Gridder(traj).density_weights();
}

} // namespace mrfield
