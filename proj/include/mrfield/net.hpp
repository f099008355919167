#pragma once

#include "mrfield/core.hpp"

#include <Eigen/Dense>

namespace mrfield {

/// CHW tensor, contiguous channel planes.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, 0.0) {}
  double &at(int ch, int y, int x) { return v[(size_t(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return v[(size_t(ch) * h + y) * w + x]; }
  double *plane(int ch) { return &v[size_t(ch) * h * w]; }
  const double *plane(int ch) const { return &v[size_t(ch) * h * w]; }
  size_t size() const { return v.size(); }
};

struct NetworkConfig {
  int in_channels = 10; // 2K: real and imaginary parts per coefficient channel
  int levels = 3;
  int base_filters = 16;
  int kernel_size = 3;
  double leaky_slope = 0.01;
  int out_channels = 5; // b1, b0, t1, t2, pd

  void validate() const {
    if (levels < 1) fail("network: levels must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      fail("network: kernel_size must be odd, got ", kernel_size);
    if (in_channels < 1 || out_channels < 1)
      fail("network: channel counts must be >= 1");
    if (base_filters < 1) fail("network: base_filters must be >= 1");
  }

  int filters(int level) const { return base_filters << level; } // level `levels` = bottleneck
};

namespace nn {

using RowMatd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// --- convolution -------------------------------------------------------------

struct Conv {
  int in_c = 0, out_c = 0, k = 3, stride = 1;
  std::vector<double> weight; // [out_c][in_c][k][k]
  std::vector<double> bias;   // [out_c]

  void init_shape(int in, int out, int k_, int stride_) {
    in_c = in;
    out_c = out;
    k = k_;
    stride = stride_;
    weight.assign(size_t(out) * in * k_ * k_, 0.0);
    bias.assign(size_t(out), 0.0);
  }

  int out_h(int h) const { return h / stride; }

  void im2col(const Tensor &x, std::vector<double> &col) const {
    const int oh = out_h(x.h), ow = out_h(x.w);
    const int pad = k / 2;
    const size_t patch = size_t(in_c) * k * k;
    col.assign(size_t(oh) * ow * patch, 0.0);
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double *row = &col[(size_t(oy) * ow + ox) * patch];
        for (int ic = 0; ic < in_c; ++ic) {
          const double *pl = x.plane(ic);
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride + ky - pad;
            double *dst = row + (size_t(ic) * k + ky) * k;
            if (iy < 0 || iy >= x.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= x.w) continue;
              dst[kx] = pl[size_t(iy) * x.w + ix];
            }
          }
        }
      }
  }

  void forward(const Tensor &x, Tensor &y, std::vector<double> &col_cache) const {
    if (x.c != in_c) fail("conv: input has ", x.c, " channels, expected ", in_c);
    if (stride > 1 && (x.h % stride || x.w % stride))
      fail("conv: spatial dims ", x.h, "x", x.w, " not divisible by stride ", stride);
    const int oh = out_h(x.h), ow = out_h(x.w);
    y = Tensor(out_c, oh, ow);
    im2col(x, col_cache);
    const size_t patch = size_t(in_c) * k * k;
    const long rows = long(oh) * ow;
    Eigen::Map<const RowMatd> colm(col_cache.data(), rows, long(patch));
    Eigen::Map<const RowMatd> wm(weight.data(), out_c, long(patch));
    Eigen::Map<RowMatd> ym(y.v.data(), out_c, rows);
    ym.noalias() = wm * colm.transpose();
    for (int oc = 0; oc < out_c; ++oc) {
      double *pl = y.plane(oc);
      const double b = bias[size_t(oc)];
      for (long i = 0; i < rows; ++i) pl[i] += b;
    }
  }

  void backward(const Tensor &x, const Tensor &dy, const std::vector<double> &col_cache,
                Tensor &dx, double *gw, double *gb) const {
    const int oh = dy.h, ow = dy.w;
    const size_t patch = size_t(in_c) * k * k;
    const long rows = long(oh) * ow;
    Eigen::Map<const RowMatd> colm(col_cache.data(), rows, long(patch));
    Eigen::Map<const RowMatd> dym(dy.v.data(), out_c, rows);
    Eigen::Map<RowMatd> gwm(gw, out_c, long(patch));
    gwm.noalias() += dym * colm;
    for (int oc = 0; oc < out_c; ++oc) {
      const double *pl = dy.plane(oc);
      double s = 0.0;
      for (long i = 0; i < rows; ++i) s += pl[i];
      gb[oc] += s;
    }
    // dX via col2im of dY^T W
    RowMatd dcol = dym.transpose() * Eigen::Map<const RowMatd>(weight.data(), out_c, long(patch));
    dx = Tensor(in_c, x.h, x.w);
    const int pad = k / 2;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const double *row = dcol.data() + (size_t(oy) * ow + ox) * patch;
        for (int ic = 0; ic < in_c; ++ic) {
          double *pl = dx.plane(ic);
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= x.h) continue;
            const double *src = row + (size_t(ic) * k + ky) * k;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= x.w) continue;
              pl[size_t(iy) * x.w + ix] += src[kx];
            }
          }
        }
      }
  }
};

// --- instance normalization ---------------------------------------------------

struct InstanceNormCtx {
  std::vector<double> inv_std; // per channel
  Tensor xhat;
};

inline void instance_norm_forward(const Tensor &x, Tensor &y, InstanceNormCtx &ctx,
                                  double eps = 1e-5) {
  y = Tensor(x.c, x.h, x.w);
  ctx.xhat = Tensor(x.c, x.h, x.w);
  ctx.inv_std.assign(size_t(x.c), 0.0);
  const long n = long(x.h) * x.w;
  for (int ch = 0; ch < x.c; ++ch) {
    const double *px = x.plane(ch);
    double mu = 0.0;
    for (long i = 0; i < n; ++i) mu += px[i];
    mu /= double(n);
    double var = 0.0;
    for (long i = 0; i < n; ++i) var += (px[i] - mu) * (px[i] - mu);
    var /= double(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    ctx.inv_std[size_t(ch)] = inv;
    double *ph = ctx.xhat.plane(ch);
    double *py = y.plane(ch);
    for (long i = 0; i < n; ++i) {
      ph[i] = (px[i] - mu) * inv;
      py[i] = ph[i];
    }
  }
}

inline void instance_norm_backward(const InstanceNormCtx &ctx, const Tensor &dy, Tensor &dx) {
  dx = Tensor(dy.c, dy.h, dy.w);
  const long n = long(dy.h) * dy.w;
  for (int ch = 0; ch < dy.c; ++ch) {
    const double *pdy = dy.plane(ch);
    const double *ph = ctx.xhat.plane(ch);
    double mean_dy = 0.0, mean_dyxh = 0.0;
    for (long i = 0; i < n; ++i) {
      mean_dy += pdy[i];
      mean_dyxh += pdy[i] * ph[i];
    }
    mean_dy /= double(n);
    mean_dyxh /= double(n);
    const double inv = ctx.inv_std[size_t(ch)];
    double *pdx = dx.plane(ch);
    for (long i = 0; i < n; ++i)
      pdx[i] = inv * (pdy[i] - mean_dy - ph[i] * mean_dyxh);
  }
}

// --- activation / resampling ---------------------------------------------------

inline void leaky_relu_forward(Tensor &x, double slope) {
  for (auto &v : x.v) v = v >= 0.0 ? v : slope * v;
}

inline void leaky_relu_backward(const Tensor &pre, const Tensor &dy, Tensor &dx, double slope) {
  dx = Tensor(dy.c, dy.h, dy.w);
  for (size_t i = 0; i < dy.v.size(); ++i)
    dx.v[i] = dy.v[i] * (pre.v[i] >= 0.0 ? 1.0 : slope);
}

inline void upsample2_forward(const Tensor &x, Tensor &y) {
  y = Tensor(x.c, x.h * 2, x.w * 2);
  for (int ch = 0; ch < x.c; ++ch) {
    const double *px = x.plane(ch);
    double *py = y.plane(ch);
    for (int i = 0; i < x.h; ++i)
      for (int j = 0; j < x.w; ++j) {
        const double v = px[size_t(i) * x.w + j];
        double *row0 = py + size_t(2 * i) * y.w + 2 * j;
        double *row1 = row0 + y.w;
        row0[0] = row0[1] = row1[0] = row1[1] = v;
      }
  }
}

inline void upsample2_backward(const Tensor &dy, Tensor &dx) {
  dx = Tensor(dy.c, dy.h / 2, dy.w / 2);
  for (int ch = 0; ch < dy.c; ++ch) {
    const double *py = dy.plane(ch);
    double *px = dx.plane(ch);
    for (int i = 0; i < dx.h; ++i)
      for (int j = 0; j < dx.w; ++j) {
        const double *row0 = py + size_t(2 * i) * dy.w + 2 * j;
        const double *row1 = row0 + dy.w;
        px[size_t(i) * dx.w + j] = row0[0] + row0[1] + row1[0] + row1[1];
      }
  }
}

inline void concat_forward(const Tensor &a, const Tensor &b, Tensor &y) {
  y = Tensor(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + long(a.v.size()));
}

inline void concat_backward(const Tensor &dy, int ca, Tensor &da, Tensor &db) {
  da = Tensor(ca, dy.h, dy.w);
  db = Tensor(dy.c - ca, dy.h, dy.w);
  std::copy(dy.v.begin(), dy.v.begin() + long(da.v.size()), da.v.begin());
  std::copy(dy.v.begin() + long(da.v.size()), dy.v.end(), db.v.begin());
}

} // namespace nn

// ---------------------------------------------------------------------------
// Encoder-decoder network. Each encoder level is two conv+IN+LeakyReLU
// blocks followed by a stride-2 conv; the decoder mirrors it with
// nearest-neighbor upsampling and encoder skip concatenations; the head is
// a linear 1x1 conv.
// ---------------------------------------------------------------------------

struct Network {
  NetworkConfig cfg;
  std::vector<nn::Conv> enc_a, enc_b, down;
  nn::Conv bot_a, bot_b;
  std::vector<nn::Conv> up, dec_a, dec_b;
  nn::Conv head;
  uint64_t init_seed = 0;

  struct TensorRef {
    std::string name;
    std::vector<double> *data;
  };

  std::vector<TensorRef> tensor_refs() {
    std::vector<TensorRef> refs;
    auto add = [&](const std::string &base, nn::Conv &cv) {
      refs.push_back({base + ".weight", &cv.weight});
      refs.push_back({base + ".bias", &cv.bias});
    };
    for (int l = 0; l < cfg.levels; ++l) {
      add(cat("enc", l, ".a"), enc_a[size_t(l)]);
      add(cat("enc", l, ".b"), enc_b[size_t(l)]);
      add(cat("down", l), down[size_t(l)]);
    }
    add("bot.a", bot_a);
    add("bot.b", bot_b);
    for (int l = cfg.levels - 1; l >= 0; --l) {
      add(cat("up", l), up[size_t(l)]);
      add(cat("dec", l, ".a"), dec_a[size_t(l)]);
      add(cat("dec", l, ".b"), dec_b[size_t(l)]);
    }
    add("head", head);
    return refs;
  }

  size_t parameter_count() {
    size_t n = 0;
    for (auto &r : tensor_refs()) n += r.data->size();
    return n;
  }
};

/// Closed-form parameter count for a config; must equal the sum of tensor
/// sizes of an initialized network.
inline size_t parameter_count_formula(const NetworkConfig &cfg) {
  const size_t k2 = size_t(cfg.kernel_size) * size_t(cfg.kernel_size);
  auto conv = [&](size_t in, size_t out, size_t kk) { return out * (in * kk + 1); };
  size_t n = 0;
  size_t in_c = size_t(cfg.in_channels);
  for (int l = 0; l < cfg.levels; ++l) {
    const size_t f = size_t(cfg.filters(l));
    n += conv(in_c, f, k2) + conv(f, f, k2);
    n += conv(f, size_t(cfg.filters(l + 1)), k2);
    in_c = size_t(cfg.filters(l + 1));
  }
  const size_t fb = size_t(cfg.filters(cfg.levels));
  n += 2 * conv(fb, fb, k2);
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const size_t f = size_t(cfg.filters(l));
    n += conv(size_t(cfg.filters(l + 1)), f, k2); // upsample conv
    n += conv(2 * f, f, k2) + conv(f, f, k2);
  }
  n += conv(size_t(cfg.base_filters), size_t(cfg.out_channels), 1);
  return n;
}

/// Analytic receptive field along the encoder + bottleneck path.
inline int receptive_field(const NetworkConfig &cfg) {
  int rf = 1, jump = 1;
  for (int l = 0; l < cfg.levels; ++l) {
    rf += 2 * (cfg.kernel_size - 1) * jump;
    rf += (cfg.kernel_size - 1) * jump;
    jump *= 2;
  }
  rf += 2 * (cfg.kernel_size - 1) * jump;
  return rf;
}

inline Network init_network(const NetworkConfig &cfg, uint64_t seed) {
  cfg.validate();
  Network net;
  net.cfg = cfg;
  net.init_seed = seed;
  const int k = cfg.kernel_size;
  net.enc_a.resize(size_t(cfg.levels));
  net.enc_b.resize(size_t(cfg.levels));
  net.down.resize(size_t(cfg.levels));
  net.up.resize(size_t(cfg.levels));
  net.dec_a.resize(size_t(cfg.levels));
  net.dec_b.resize(size_t(cfg.levels));
  int in_c = cfg.in_channels;
  for (int l = 0; l < cfg.levels; ++l) {
    const int f = cfg.filters(l);
    net.enc_a[size_t(l)].init_shape(in_c, f, k, 1);
    net.enc_b[size_t(l)].init_shape(f, f, k, 1);
    net.down[size_t(l)].init_shape(f, cfg.filters(l + 1), k, 2);
    in_c = cfg.filters(l + 1);
  }
  const int fb = cfg.filters(cfg.levels);
  net.bot_a.init_shape(fb, fb, k, 1);
  net.bot_b.init_shape(fb, fb, k, 1);
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const int f = cfg.filters(l);
    net.up[size_t(l)].init_shape(cfg.filters(l + 1), f, k, 1);
    net.dec_a[size_t(l)].init_shape(2 * f, f, k, 1);
    net.dec_b[size_t(l)].init_shape(f, f, k, 1);
  }
  net.head.init_shape(cfg.base_filters, cfg.out_channels, 1, 1);

  // Draw weights in a fixed order with He-style fan-in scaling; biases stay zero.
  Rng rng(seed);
  auto fill = [&](nn::Conv &cv) {
    const double fan_in = double(cv.in_c) * cv.k * cv.k;
    const double s = std::sqrt(2.0 / fan_in);
    for (auto &w : cv.weight) w = s * rng.normal();
  };
  for (int l = 0; l < cfg.levels; ++l) {
    fill(net.enc_a[size_t(l)]);
    fill(net.enc_b[size_t(l)]);
    fill(net.down[size_t(l)]);
  }
  fill(net.bot_a);
  fill(net.bot_b);
  for (int l = cfg.levels - 1; l >= 0; --l) {
    fill(net.up[size_t(l)]);
    fill(net.dec_a[size_t(l)]);
    fill(net.dec_b[size_t(l)]);
  }
  fill(net.head);
  return net;
}

// --- forward / backward ------------------------------------------------------

/// Per-image forward context holding everything backward needs.
struct ForwardCtx {
  struct Block {
    Tensor in;               // conv input
    std::vector<double> col; // conv im2col cache
    nn::InstanceNormCtx norm;
    bool has_norm = false;
  };
  std::vector<Block> blocks; // fixed traversal order
  std::vector<Tensor> skips; // encoder outputs, one per level
  Tensor output;
};

namespace nn {

inline void run_block(const Conv &cv, const Tensor &x, Tensor &y, ForwardCtx::Block &blk,
                      bool with_norm_act, double slope) {
  blk.in = x;
  Tensor conv_out;
  cv.forward(x, conv_out, blk.col);
  blk.has_norm = with_norm_act;
  if (with_norm_act) {
    Tensor normed;
    instance_norm_forward(conv_out, normed, blk.norm);
    leaky_relu_forward(normed, slope);
    y = std::move(normed);
  } else {
    y = std::move(conv_out);
  }
}

inline void run_block_backward(const Conv &cv, const ForwardCtx::Block &blk, const Tensor &dy,
                               Tensor &dx, double *gw, double *gb, double slope) {
  Tensor d = dy;
  if (blk.has_norm) {
    // the pre-activation values are exactly the normalized ones
    Tensor d_act;
    leaky_relu_backward(blk.norm.xhat, d, d_act, slope);
    Tensor d_norm;
    instance_norm_backward(blk.norm, d_act, d_norm);
    d = std::move(d_norm);
  }
  cv.backward(blk.in, d, blk.col, dx, gw, gb);
}

} // namespace nn

inline Tensor forward_pass(const Network &net, const Tensor &input, ForwardCtx *ctx = nullptr) {
  const auto &cfg = net.cfg;
  if (input.c != cfg.in_channels)
    fail("forward: input has ", input.c, " channels, expected ", cfg.in_channels);
  const int div = 1 << cfg.levels;
  if (input.h % div || input.w % div)
    fail("forward: spatial dims ", input.h, "x", input.w, " not divisible by 2^levels = ", div);

  ForwardCtx local;
  ForwardCtx &cx = ctx ? *ctx : local;
  cx.blocks.clear();
  cx.skips.assign(size_t(cfg.levels), {});
  // Block order: enc(a,b,down) per level, bot(a,b), dec(up,a,b) per level, head.
  cx.blocks.resize(size_t(cfg.levels) * 3 + 2 + size_t(cfg.levels) * 3 + 1);

  size_t bi = 0;
  Tensor x = input;
  const double slope = cfg.leaky_slope;
  for (int l = 0; l < cfg.levels; ++l) {
    Tensor y;
    nn::run_block(net.enc_a[size_t(l)], x, y, cx.blocks[bi++], true, slope);
    nn::run_block(net.enc_b[size_t(l)], y, x, cx.blocks[bi++], true, slope);
    cx.skips[size_t(l)] = x;
    Tensor down;
    nn::run_block(net.down[size_t(l)], x, down, cx.blocks[bi++], false, slope);
    x = std::move(down);
  }
  {
    Tensor y;
    nn::run_block(net.bot_a, x, y, cx.blocks[bi++], true, slope);
    nn::run_block(net.bot_b, y, x, cx.blocks[bi++], true, slope);
  }
  for (int l = cfg.levels - 1; l >= 0; --l) {
    Tensor upsampled;
    nn::upsample2_forward(x, upsampled);
    Tensor upconv;
    nn::run_block(net.up[size_t(l)], upsampled, upconv, cx.blocks[bi++], false, slope);
    Tensor cat_in;
    nn::concat_forward(cx.skips[size_t(l)], upconv, cat_in);
    Tensor y;
    nn::run_block(net.dec_a[size_t(l)], cat_in, y, cx.blocks[bi++], true, slope);
    nn::run_block(net.dec_b[size_t(l)], y, x, cx.blocks[bi++], true, slope);
  }
  Tensor out;
  nn::run_block(net.head, x, out, cx.blocks[bi++], false, slope);
  cx.output = out;
  return out;
}

/// Gradient buffers mirroring Network::tensor_refs() order.
struct GradBuffer {
  std::vector<std::vector<double>> g;

  static GradBuffer zeros_like(Network &net) {
    GradBuffer gb;
    for (auto &r : net.tensor_refs()) gb.g.emplace_back(r.data->size(), 0.0);
    return gb;
  }
  void add(const GradBuffer &o) {
    for (size_t i = 0; i < g.size(); ++i)
      for (size_t j = 0; j < g[i].size(); ++j) g[i][j] += o.g[i][j];
  }
  void scale(double s) {
    for (auto &t : g)
      for (auto &v : t) v *= s;
  }
};

/// Reverse-mode pass; d_out is the loss gradient at the network output.
/// Gradients are accumulated into `grads` (tensor_refs order).
inline void backward_pass(const Network &net, const ForwardCtx &cx, const Tensor &d_out,
                          GradBuffer &grads) {
  const auto &cfg = net.cfg;
  const double slope = cfg.leaky_slope;
  // Tensor-ref order: per level (enc a w,b / enc b w,b / down w,b), bot a, bot b,
  // then per decoder level (up, dec a, dec b), then head: 2 entries each.
  auto gw = [&](size_t conv_idx) { return grads.g[conv_idx * 2].data(); };
  auto gb = [&](size_t conv_idx) { return grads.g[conv_idx * 2 + 1].data(); };

  const size_t n_levels = size_t(cfg.levels);
  const size_t head_conv = n_levels * 3 + 2 + n_levels * 3;
  size_t bi = cx.blocks.size();

  Tensor d = d_out;
  {
    Tensor dx;
    nn::run_block_backward(net.head, cx.blocks[--bi], d, dx, gw(head_conv), gb(head_conv), slope);
    d = std::move(dx);
  }
  std::vector<Tensor> d_skips(n_levels);
  for (int l = 0; l < cfg.levels; ++l) {
    // decoder levels run from deep (levels-1) to shallow (0); conv index base:
    const size_t base = n_levels * 3 + 2 + size_t(cfg.levels - 1 - l) * 3;
    Tensor dxb;
    nn::run_block_backward(net.dec_b[size_t(l)], cx.blocks[--bi], d, dxb, gw(base + 2),
                          gb(base + 2), slope);
    Tensor dxa;
    nn::run_block_backward(net.dec_a[size_t(l)], cx.blocks[--bi], dxb, dxa, gw(base + 1),
                          gb(base + 1), slope);
    Tensor d_skip, d_upconv;
    nn::concat_backward(dxa, cx.skips[size_t(l)].c, d_skip, d_upconv);
    d_skips[size_t(l)] = std::move(d_skip);
    Tensor d_upsampled;
    nn::run_block_backward(net.up[size_t(l)], cx.blocks[--bi], d_upconv, d_upsampled, gw(base),
                          gb(base), slope);
    Tensor dx;
    nn::upsample2_backward(d_upsampled, dx);
    d = std::move(dx);
  }
  {
    const size_t base = n_levels * 3;
    Tensor dxb;
    nn::run_block_backward(net.bot_b, cx.blocks[--bi], d, dxb, gw(base + 1), gb(base + 1), slope);
    Tensor dxa;
    nn::run_block_backward(net.bot_a, cx.blocks[--bi], dxb, dxa, gw(base), gb(base), slope);
    d = std::move(dxa);
  }
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const size_t base = size_t(l) * 3;
    Tensor d_enc_out;
    nn::run_block_backward(net.down[size_t(l)], cx.blocks[--bi], d, d_enc_out, gw(base + 2),
                          gb(base + 2), slope);
    // skip connection joins here
    for (size_t i = 0; i < d_enc_out.v.size(); ++i)
      d_enc_out.v[i] += d_skips[size_t(l)].v[i];
    Tensor dxb;
    nn::run_block_backward(net.enc_b[size_t(l)], cx.blocks[--bi], d_enc_out, dxb, gw(base + 1),
                          gb(base + 1), slope);
    Tensor dxa;
    nn::run_block_backward(net.enc_a[size_t(l)], cx.blocks[--bi], dxb, dxa, gw(base), gb(base),
                          slope);
    d = std::move(dxa);
  }
}

// --- Adam ---------------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long t = 0;

  static AdamState zeros_like(Network &net) {
    AdamState st;
    for (auto &r : net.tensor_refs()) {
      st.m.emplace_back(r.data->size(), 0.0);
      st.v.emplace_back(r.data->size(), 0.0);
    }
    return st;
  }
};

inline void adam_step(Network &net, AdamState &st, const GradBuffer &grads, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  st.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(beta2, double(st.t));
  auto refs = net.tensor_refs();
  for (size_t i = 0; i < refs.size(); ++i) {
    auto &w = *refs[i].data;
    const auto &gr = grads.g[i];
    auto &m = st.m[i];
    auto &v = st.v[i];
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * gr[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * gr[j] * gr[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
  }
}

} // namespace mrfield
