#pragma once

#include "mrfield/forward.hpp"
#include "mrfield/metrics.hpp"
#include "mrfield/net.hpp"

namespace mrfield {

/// Output channel order everywhere: 0 = b1, 1 = b0, 2 = t1, 3 = t2, 4 = pd.
inline constexpr int kOutB1 = 0;
inline constexpr int kOutB0 = 1;
inline constexpr int kOutT1 = 2;
inline constexpr int kOutT2 = 3;
inline constexpr int kOutPd = 4;
inline constexpr int kOutChannels = 5;

/// Per-channel affine maps to [0, 1] plus the input scale rule (divide all
/// input channels by the 99th percentile of |c_1| over the mask).
struct NormalizationSpec {
  struct Range {
    double lo, hi;
    double norm(double v) const { return (v - lo) / (hi - lo); }
    double denorm(double u) const { return lo + u * (hi - lo); }
    double clamp(double v) const { return std::clamp(v, lo, hi); }
  };
  Range b1{0.5, 1.5};
  Range b0{-200.0, 200.0};
  Range t1{0.0, 3000.0};
  Range t2{0.0, 500.0};
  Range pd{0.0, 2.0};

  const Range &channel(int ch) const {
    switch (ch) {
    case kOutB1: return b1;
    case kOutB0: return b0;
    case kOutT1: return t1;
    case kOutT2: return t2;
    case kOutPd: return pd;
    }
    fail("normalization: bad channel ", ch);
  }

  void validate() const {
    for (int ch = 0; ch < kOutChannels; ++ch)
      if (!(channel(ch).hi > channel(ch).lo))
        fail("normalization: empty range for channel ", ch);
  }
};

inline double input_scale(const CoefficientMaps &coeffs, const Image<uint8_t> &mask) {
  if (coeffs.K() < 1) fail("input_scale: no coefficient channels");
  std::vector<double> mags;
  mags.reserve(mask.size());
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask.data[i]) mags.push_back(std::abs(coeffs.chan[0].data[i]));
  if (mags.empty()) fail("input_scale: empty mask");
  std::sort(mags.begin(), mags.end());
  const double p99 = mags[size_t(0.99 * double(mags.size() - 1))];
  return p99 > 0.0 ? p99 : 1.0;
}

/// Stacks real and imaginary parts of each coefficient channel, divided by
/// the given scale. Channel order: re c1, im c1, re c2, ...
inline Tensor coeffs_to_input(const CoefficientMaps &coeffs, double scale) {
  const int n = coeffs.grid_n;
  Tensor t(2 * coeffs.K(), n, n);
  for (int k = 0; k < coeffs.K(); ++k) {
    double *re = t.plane(2 * k);
    double *im = t.plane(2 * k + 1);
    const auto &c = coeffs.chan[size_t(k)];
    for (size_t i = 0; i < c.size(); ++i) {
      re[i] = c.data[i].real() / scale;
      im[i] = c.data[i].imag() / scale;
    }
  }
  return t;
}

inline Tensor targets_to_tensor(const ParameterMaps &pm, const FieldMaps &fm,
                                const NormalizationSpec &norm) {
  const int n = pm.grid_n;
  Tensor t(kOutChannels, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      t.at(kOutB1, y, x) = norm.b1.norm(fm.b1_rel.at(x, y));
      t.at(kOutB0, y, x) = norm.b0.norm(fm.b0_hz.at(x, y));
      t.at(kOutT1, y, x) = norm.t1.norm(pm.t1_ms.at(x, y));
      t.at(kOutT2, y, x) = norm.t2.norm(pm.t2_ms.at(x, y));
      t.at(kOutPd, y, x) = norm.pd.norm(pm.pd.at(x, y));
    }
  return t;
}

struct TrainConfig {
  double lr = 1e-3;
  double lr_decay = 1.0; // multiplicative per epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch = 8;
  int epochs = 20;
  uint64_t seed = 1;
  // auxiliary t1/t2/pd channels get half weight
  std::array<double, kOutChannels> loss_weights{1.0, 1.0, 0.5, 0.5, 0.5};
  SsimConfig ssim;

  void validate() const {
    if (!(lr > 0.0)) fail("train: lr must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("train: lr_decay must be in (0, 1]");
    if (batch < 1) fail("train: batch must be >= 1");
    if (epochs < 0) fail("train: epochs must be >= 0");
    for (double w : loss_weights)
      if (w < 0.0) fail("train: loss weights must be >= 0");
    if (loss_weights[kOutB1] <= 0.0 && loss_weights[kOutB0] <= 0.0)
      fail("train: at least one of the b1/b0 loss weights must be positive");
    ssim.validate();
  }
};

struct TrainSample {
  Tensor input;  // 2K channels, normalized
  Tensor target; // 5 channels, normalized
  Image<uint8_t> mask;
};

namespace detail {

inline Image<double> plane_to_image(const Tensor &t, int ch) {
  Image<double> img(t.w, t.h);
  const double *p = t.plane(ch);
  std::copy(p, p + img.size(), img.data.begin());
  return img;
}

} // namespace detail

/// Masked-SSIM loss over the output channels and its exact weight
/// gradients: loss = sum_ch w_ch (1 - SSIM_masked(pred_ch, target_ch)).
inline double loss_and_grad(const Network &net, const Tensor &input, const Tensor &target,
                            const Image<uint8_t> &mask, const TrainConfig &cfg,
                            GradBuffer &grads) {
  if (target.c != net.cfg.out_channels)
    fail("loss: target has ", target.c, " channels, network emits ", net.cfg.out_channels);
  ForwardCtx ctx;
  Tensor pred = forward_pass(net, input, &ctx);

  double loss = 0.0;
  Tensor d_pred(pred.c, pred.h, pred.w);
  for (int ch = 0; ch < pred.c; ++ch) {
    const double w = cfg.loss_weights[size_t(ch)];
    if (w == 0.0) continue;
    Image<double> pred_img = detail::plane_to_image(pred, ch);
    Image<double> target_img = detail::plane_to_image(target, ch);
    Image<double> grad_img;
    const double s = ssim_with_grad(pred_img, target_img, mask, cfg.ssim, grad_img);
    loss += w * (1.0 - s);
    double *dp = d_pred.plane(ch);
    for (int y = 0; y < pred.h; ++y)
      for (int x = 0; x < pred.w; ++x) dp[size_t(y) * pred.w + x] = -w * grad_img.at(x, y);
  }
  backward_pass(net, ctx, d_pred, grads);
  return loss;
}

/// Seed-shuffled mini-batch Adam; per-image gradients are reduced in fixed
/// order, so the result is independent of the worker thread count.
inline std::vector<double> train(Network &net, const std::vector<TrainSample> &dataset,
                                 const TrainConfig &cfg) {
  cfg.validate();
  if (dataset.empty()) fail("train: empty dataset");
  for (const auto &s : dataset)
    if (s.input.h != dataset[0].input.h || s.input.w != dataset[0].input.w)
      fail("train: dataset geometry is not uniform");

  AdamState adam = AdamState::zeros_like(net);
  Rng rng(cfg.seed);
  std::vector<double> history;
  history.reserve(size_t(cfg.epochs));

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.lr_decay, double(epoch));
    // Fisher-Yates with the epoch stream
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
      const size_t stop = std::min(order.size(), start + size_t(cfg.batch));
      const size_t nb = stop - start;
      std::vector<GradBuffer> grads(nb);
      std::vector<double> losses(nb, 0.0);
      parallel_for(nb, [&](size_t bi) {
        grads[bi] = GradBuffer::zeros_like(net);
        const auto &s = dataset[order[start + bi]];
        losses[bi] = loss_and_grad(net, s.input, s.target, s.mask, cfg, grads[bi]);
      });
      GradBuffer total = std::move(grads[0]);
      for (size_t bi = 1; bi < nb; ++bi) total.add(grads[bi]);
      total.scale(1.0 / double(nb));
      for (double l : losses) epoch_loss += l;
      adam_step(net, adam, total, lr, cfg.beta1, cfg.beta2, cfg.eps);
    }
    history.push_back(epoch_loss / double(dataset.size()));
  }
  return history;
}

/// Runs the network on coefficient maps and denormalizes the outputs into
/// field maps and auxiliary parameter maps, clamped to the normalization
/// ranges and zeroed outside the mask.
inline std::pair<FieldMaps, ParameterMaps> predict_fields(const Network &net,
                                                          const CoefficientMaps &coeffs,
                                                          const NormalizationSpec &norm,
                                                          const Image<uint8_t> &mask) {
  norm.validate();
  const int n = coeffs.grid_n;
  if (mask.nx != n || mask.ny != n) fail("predict: mask shape differs from coefficients");
  if (2 * coeffs.K() != net.cfg.in_channels)
    fail("predict: coefficients give ", 2 * coeffs.K(), " input channels, network expects ",
         net.cfg.in_channels);

  const double scale = input_scale(coeffs, mask);
  Tensor input = coeffs_to_input(coeffs, scale);

  // Reflect-pad up to a multiple of 2^levels if needed, crop afterwards.
  const int div = 1 << net.cfg.levels;
  const int padded_n = (n + div - 1) / div * div;
  Tensor run_input = input;
  if (padded_n != n) {
    Tensor padded(input.c, padded_n, padded_n);
    auto reflect = [&](int i) { return i < n ? i : 2 * n - i - 2; };
    for (int c = 0; c < input.c; ++c)
      for (int y = 0; y < padded_n; ++y)
        for (int x = 0; x < padded_n; ++x)
          padded.at(c, y, x) = input.at(c, reflect(y), reflect(x));
    run_input = std::move(padded);
  }
  Tensor out = forward_pass(net, run_input);

  FieldMaps fm;
  fm.b1_rel = Image<double>(n, n, 0.0);
  fm.b0_hz = Image<double>(n, n, 0.0);
  ParameterMaps pm;
  pm.grid_n = n;
  pm.voxel_mm = coeffs.voxel_mm;
  pm.t1_ms = Image<double>(n, n, 0.0);
  pm.t2_ms = Image<double>(n, n, 0.0);
  pm.pd = Image<double>(n, n, 0.0);
  pm.mask = mask;

  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!mask.at(x, y)) continue;
      auto de = [&](int ch) {
        const auto &r = norm.channel(ch);
        return r.clamp(r.denorm(out.at(ch, y, x)));
      };
      fm.b1_rel.at(x, y) = de(kOutB1);
      fm.b0_hz.at(x, y) = de(kOutB0);
      pm.t1_ms.at(x, y) = de(kOutT1);
      pm.t2_ms.at(x, y) = de(kOutT2);
      pm.pd.at(x, y) = de(kOutPd);
    }
  return {std::move(fm), std::move(pm)};
}

/// Pooled masked RMSE of an image stack against truth, and the matching
/// per-image constant-mean-predictor baseline.
struct FieldRmse {
  double rmse = 0.0;
  double baseline = 0.0;
};

inline FieldRmse field_rmse(const std::vector<Image<double>> &pred,
                            const std::vector<Image<double>> &truth,
                            const std::vector<Image<uint8_t>> &masks) {
  if (pred.size() != truth.size() || pred.size() != masks.size())
    fail("field_rmse: stack sizes differ");
  double se = 0.0, se_base = 0.0;
  long count = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double mean = 0.0;
    long n = 0;
    for (size_t p = 0; p < truth[i].size(); ++p)
      if (masks[i].data[p]) {
        mean += truth[i].data[p];
        ++n;
      }
    if (n == 0) fail("field_rmse: empty mask in image ", i);
    mean /= double(n);
    for (size_t p = 0; p < truth[i].size(); ++p) {
      if (!masks[i].data[p]) continue;
      const double e = pred[i].data[p] - truth[i].data[p];
      const double eb = mean - truth[i].data[p];
      se += e * e;
      se_base += eb * eb;
      ++count;
    }
  }
  FieldRmse out;
  out.rmse = std::sqrt(se / double(count));
  out.baseline = std::sqrt(se_base / double(count));
  return out;
}

} // namespace mrfield
