#pragma once

#include "mrfield/core.hpp"

namespace mrfield {

/// Uniform-window SSIM configuration. L is the dynamic range of the
/// compared values (1.0 for range-normalized channels).
struct SsimConfig {
  int window = 7;
  double L = 1.0;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;

  SsimConfig() = default;
  SsimConfig(int window_, double L_) : window(window_), L(L_) {
    c1 = (0.01 * L) * (0.01 * L);
    c2 = (0.03 * L) * (0.03 * L);
    validate();
  }
  void validate() const {
    if (window < 3 || window % 2 == 0) fail("ssim: window must be odd and >= 3, got ", window);
    if (!(c1 > 0.0) || !(c2 > 0.0)) fail("ssim: c1 and c2 must be positive");
  }
};

namespace detail {

/// Shared SSIM kernel. Windows are evaluated only where every pixel of the
/// window lies inside the mask; `grad` (same size as `a`), when non-null,
/// receives d(ssim)/d(a).
inline double ssim_impl(const Image<double> &a, const Image<double> &b,
                        const Image<uint8_t> &mask, const SsimConfig &cfg,
                        Image<double> *grad) {
  cfg.validate();
  if (!a.same_shape(b) || a.nx != mask.nx || a.ny != mask.ny)
    fail("ssim: image/mask shapes differ");
  const int w = cfg.window;
  const double P = double(w) * double(w);

  if (grad) {
    *grad = Image<double>(a.nx, a.ny, 0.0);
  }

  // Column counts of masked pixels make the fully-inside test cheap.
  Image<int> colcount(a.nx, a.ny, 0);
  for (int x = 0; x < a.nx; ++x) {
    int run = 0;
    for (int y = 0; y < a.ny; ++y) {
      run += mask.at(x, y) ? 1 : 0;
      if (y >= w) run -= mask.at(x, y - w) ? 1 : 0;
      if (y >= w - 1) colcount.at(x, y - w + 1) = run;
    }
  }

  double total = 0.0;
  long n_windows = 0;
  for (int y0 = 0; y0 + w <= a.ny; ++y0) {
    for (int x0 = 0; x0 + w <= a.nx; ++x0) {
      int inside = 0;
      for (int x = x0; x < x0 + w; ++x) inside += colcount.at(x, y0);
      if (inside != w * w) continue;

      double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int y = y0; y < y0 + w; ++y)
        for (int x = x0; x < x0 + w; ++x) {
          const double av = a.at(x, y);
          const double bv = b.at(x, y);
          sa += av;
          sb += bv;
          saa += av * av;
          sbb += bv * bv;
          sab += av * bv;
        }
      const double mu_a = sa / P;
      const double mu_b = sb / P;
      const double va = saa / P - mu_a * mu_a;
      const double vb = sbb / P - mu_b * mu_b;
      const double cab = sab / P - mu_a * mu_b;
      const double n1 = 2.0 * (mu_a * mu_b) + cfg.c1;
      const double n2 = 2.0 * cab + cfg.c2;
      const double d1 = mu_a * mu_a + mu_b * mu_b + cfg.c1;
      const double d2 = va + vb + cfg.c2;
      const double s = (n1 * n2) / (d1 * d2);
      total += s;
      ++n_windows;

      if (grad) {
        const double inv_dd = 1.0 / (d1 * d2);
        const double term_mu = mu_b * n2 * inv_dd - s * mu_a / d1;
        const double coef_b = n1 * inv_dd;
        const double coef_a = s / d2;
        for (int y = y0; y < y0 + w; ++y)
          for (int x = x0; x < x0 + w; ++x) {
            grad->at(x, y) += (2.0 / P) * (term_mu + coef_b * (b.at(x, y) - mu_b) -
                                           coef_a * (a.at(x, y) - mu_a));
          }
      }
    }
  }
  if (n_windows == 0)
    fail("ssim: no ", w, "x", w, " window lies fully inside the mask");
  if (grad)
    for (auto &g : grad->data) g /= double(n_windows);
  return total / double(n_windows);
}

} // namespace detail

inline double ssim(const Image<double> &a, const Image<double> &b, const Image<uint8_t> &mask,
                   const SsimConfig &cfg = SsimConfig()) {
  return detail::ssim_impl(a, b, mask, cfg, nullptr);
}

/// SSIM value and its gradient with respect to the first image.
inline double ssim_with_grad(const Image<double> &a, const Image<double> &b,
                             const Image<uint8_t> &mask, const SsimConfig &cfg,
                             Image<double> &grad_a) {
  return detail::ssim_impl(a, b, mask, cfg, &grad_a);
}

template <typename T>
double nrmse(const Image<T> &a, const Image<T> &b, const Image<uint8_t> &mask) {
  if (!a.same_shape(b) || a.nx != mask.nx || a.ny != mask.ny)
    fail("nrmse: image/mask shapes differ");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!mask.data[i]) continue;
    num += std::norm(cxd(a.data[i]) - cxd(b.data[i]));
    den += std::norm(cxd(b.data[i]));
  }
  if (den <= 0.0) fail("nrmse: reference image is zero over the mask");
  return std::sqrt(num / den);
}

} // namespace mrfield
