#pragma once

#include "mrfield/forward.hpp"

#include <Eigen/Dense>

namespace mrfield {

/// Least-squares multi-frequency interpolation plan: J demodulation
/// frequencies spanning [b0_min, b0_max] at spacing <= 1/(2 T_read), a
/// Tikhonov-regularized Gram factorization for the weight solves, and a
/// 1 Hz-quantized weight lookup table.
struct MfiPlan {
  std::vector<double> freqs_hz;
  std::vector<double> times_ms;
  double lambda = 1e-6;
  double b0_min_hz = 0.0;
  double b0_max_hz = 0.0;

  Eigen::MatrixXcd gram;              // J x J, before regularization
  Eigen::LDLT<Eigen::MatrixXcd> solver; // factorization of gram + lambda I
  int table_base_hz = 0;
  std::vector<std::vector<cxd>> table; // weights per 1 Hz step

  int J() const { return int(freqs_hz.size()); }

  const std::vector<cxd> &weights_at(double delta_f_hz) const {
    const int q = int(std::lround(std::clamp(delta_f_hz, b0_min_hz, b0_max_hz)));
    const int idx = std::clamp(q - table_base_hz, 0, int(table.size()) - 1);
    return table[size_t(idx)];
  }
};

struct MfiWeights {
  std::vector<cxd> alpha;
  double residual_rel = 0.0; // RMS misfit per sample of the phase-basis fit
};

/// Exact least-squares weights for one off-resonance value, fitted in the
/// demodulation basis the base images are built with:
///   alpha = argmin sum_i |e^{-i 2 pi df t_i} - sum_j alpha_j e^{-i 2 pi f_j t_i}|^2
///           + lambda ||alpha||^2
/// so that sum_j alpha_j I_j applies the conjugate of the forward
/// off-resonance phase. df is clamped into the plan range. A single-node
/// plan is a passthrough (alpha = 1 exactly).
inline MfiWeights mfi_weights(const MfiPlan &plan, double delta_f_hz) {
  const double df = std::clamp(delta_f_hz, plan.b0_min_hz, plan.b0_max_hz);
  const int J = plan.J();
  const size_t N = plan.times_ms.size();
  MfiWeights out;
  if (J == 1) {
    out.alpha = {cxd(1.0, 0.0)};
    double r2 = 0.0;
    for (size_t i = 0; i < N; ++i) {
      const double dphase = two_pi * (df - plan.freqs_hz[0]) * plan.times_ms[i] * 1e-3;
      r2 += std::norm(cxd(std::cos(dphase), std::sin(dphase)) - cxd(1.0, 0.0));
    }
    out.residual_rel = std::sqrt(r2 / double(N));
    return out;
  }

  // In this basis b_j = sum_i e^{-i 2 pi (df - f_j) t_i} and the Gram
  // matrix is the conjugate of the modulation-basis one.
  Eigen::VectorXcd b(J);
  for (int j = 0; j < J; ++j) {
    cxd acc(0.0, 0.0);
    const double g = df - plan.freqs_hz[size_t(j)];
    for (size_t i = 0; i < N; ++i) {
      const double phase = -two_pi * g * plan.times_ms[i] * 1e-3;
      acc += cxd(std::cos(phase), std::sin(phase));
    }
    b(j) = acc;
  }
  Eigen::VectorXcd alpha = plan.solver.solve(b);
  // r^2 = N - 2 Re(alpha^H b) + alpha^H G alpha
  const double r2 = double(N) - 2.0 * (alpha.dot(b)).real() +
                    (alpha.dot(plan.gram * alpha)).real();
  out.alpha.assign(alpha.data(), alpha.data() + J);
  out.residual_rel = std::sqrt(std::max(0.0, r2) / double(N));
  return out;
}

inline MfiPlan plan_mfi(double b0_min_hz, double b0_max_hz, const SpiralTrajectory &traj,
                        double lambda = 1e-6) {
  if (b0_min_hz > b0_max_hz) fail("mfi: b0_min > b0_max");
  if (lambda < 0.0) fail("mfi: lambda must be >= 0");
  MfiPlan plan;
  plan.lambda = lambda;
  plan.b0_min_hz = b0_min_hz;
  plan.b0_max_hz = b0_max_hz;
  plan.times_ms = traj.t_ms;

  const double t_read_s = traj.readout_ms * 1e-3;
  const int J = std::max(1L, std::lround(std::ceil((b0_max_hz - b0_min_hz) * 2.0 * t_read_s)) + 1);
  plan.freqs_hz = linspace(b0_min_hz, b0_max_hz, J);

  // Demodulation-basis Gram: G_jk = sum_i e^{-i 2 pi (f_k - f_j) t_i}.
  plan.gram.resize(J, J);
  const size_t N = plan.times_ms.size();
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k) {
      if (k < j) {
        plan.gram(j, k) = std::conj(plan.gram(k, j));
        continue;
      }
      cxd acc(0.0, 0.0);
      const double g = plan.freqs_hz[size_t(k)] - plan.freqs_hz[size_t(j)];
      for (size_t i = 0; i < N; ++i) {
        const double phase = -two_pi * g * plan.times_ms[i] * 1e-3;
        acc += cxd(std::cos(phase), std::sin(phase));
      }
      plan.gram(j, k) = acc;
    }
  Eigen::MatrixXcd reg = plan.gram + lambda * Eigen::MatrixXcd::Identity(J, J);
  plan.solver.compute(reg);
  if (plan.solver.info() != Eigen::Success) fail("mfi: Gram factorization failed");

  plan.table_base_hz = int(std::lround(std::floor(b0_min_hz)));
  const int table_top = int(std::lround(std::ceil(b0_max_hz)));
  const int entries = std::max(1, table_top - plan.table_base_hz + 1);
  plan.table.resize(size_t(entries));
  parallel_for(size_t(entries), [&](size_t e) {
    plan.table[e] = mfi_weights(plan, double(plan.table_base_hz) + double(e)).alpha;
  });
  return plan;
}

/// MFI deblurring: base images at each plan frequency (DCF adjoint with
/// conjugate-phase demodulation), combined per voxel with the weights of
/// the 1 Hz-quantized local off-resonance.
inline CoefficientMaps mfi_deblur(const std::vector<SampleVector> &samples,
                                  const Gridder &gridder, const Image<double> &b0_hz,
                                  const MfiPlan &plan, const std::string &basis_id = "") {
  const SpiralTrajectory &traj = gridder.trajectory();
  if (b0_hz.nx != traj.matrix_n || b0_hz.ny != traj.matrix_n)
    fail("mfi_deblur: b0 map is ", b0_hz.nx, "x", b0_hz.ny, ", trajectory expects ",
         traj.matrix_n);
  if (plan.times_ms.size() != traj.n_samples())
    fail("mfi_deblur: plan was built for a different trajectory");
  for (const auto &d : samples)
    if (d.size() != traj.n_samples()) fail("mfi_deblur: sample count mismatch");

  const int K = int(samples.size());
  const int J = plan.J();
  std::vector<Image<cxd>> base(size_t(K) * size_t(J));
  parallel_for(base.size(), [&](size_t task) {
    const size_t ch = task / size_t(J);
    const size_t j = task % size_t(J);
    base[task] = gridder.adjoint(samples[ch], plan.freqs_hz[j], true);
  });

  CoefficientMaps out;
  out.basis_id = basis_id;
  out.grid_n = traj.matrix_n;
  out.voxel_mm = traj.fov_mm / traj.matrix_n;
  out.chan.assign(size_t(K), Image<cxd>(traj.matrix_n, traj.matrix_n, cxd(0.0, 0.0)));
  const size_t npx = out.chan[0].size();
  parallel_for(npx, [&](size_t i) {
    const auto &alpha = plan.weights_at(b0_hz.data[i]);
    for (int ch = 0; ch < K; ++ch) {
      cxd acc(0.0, 0.0);
      for (int j = 0; j < J; ++j)
        acc += alpha[size_t(j)] * base[size_t(ch) * size_t(J) + size_t(j)].data[i];
      out.chan[size_t(ch)].data[i] = acc;
    }
  });
  return out;
}

inline CoefficientMaps mfi_deblur(const std::vector<SampleVector> &samples,
                                  const SpiralTrajectory &traj, const Image<double> &b0_hz,
                                  const MfiPlan &plan, const std::string &basis_id = "") {
  Gridder gridder(traj);
  gridder.density_weights();
  return mfi_deblur(samples, gridder, b0_hz, plan, basis_id);
}

} // namespace mrfield
