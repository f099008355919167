#pragma once

#include "mrfield/core.hpp"
#include "mrfield/sequence.hpp"

namespace mrfield {

/// Complex MRF signal evolution for one (T1, T2, B1) tuple.
struct Fingerprint {
  std::vector<cxd> signal;
  std::string seq_name;
};

// ---------------------------------------------------------------------------
// Extended Phase Graph simulation of a gradient-spoiled (FISP-like) train.
//
// Configuration states are tracked as F+_k, F-_k (= conj(F_{-k})) and Z_k
// for k = 0..n_tr. RF pulses mix states order-by-order, relaxation scales
// them, and the ideal end-of-TR spoiler shifts transverse orders up by one.
// The RF phase is fixed at 90 degrees; the inversion pulse (when the
// sequence has one) is treated as adiabatic and is not scaled by B1.
// ---------------------------------------------------------------------------

struct EPGState {
  std::vector<cxd> f_plus;
  std::vector<cxd> f_minus;
  std::vector<cxd> z;
  double m0 = 1.0;
  int active = 1; // occupied orders: k < active

  explicit EPGState(int max_order, double m0_ = 1.0)
      : f_plus(size_t(max_order) + 1), f_minus(size_t(max_order) + 1),
        z(size_t(max_order) + 1), m0(m0_) {
    z[0] = cxd(m0, 0.0);
  }
};

namespace detail {

struct RfMatrix {
  cxd t11, t12, t13;
  cxd t21, t22, t23;
  cxd t31, t32, t33;
};

inline RfMatrix rf_matrix(double flip_rad, double phase_rad) {
  const double c2 = std::cos(flip_rad / 2.0) * std::cos(flip_rad / 2.0);
  const double s2 = std::sin(flip_rad / 2.0) * std::sin(flip_rad / 2.0);
  const double st = std::sin(flip_rad);
  const double ct = std::cos(flip_rad);
  const cxd eip = std::polar(1.0, phase_rad);
  const cxd ei2p = std::polar(1.0, 2.0 * phase_rad);
  RfMatrix m;
  m.t11 = c2;
  m.t12 = ei2p * s2;
  m.t13 = cxd(0.0, -1.0) * eip * st;
  m.t21 = std::conj(ei2p) * s2;
  m.t22 = c2;
  m.t23 = cxd(0.0, 1.0) * std::conj(eip) * st;
  m.t31 = cxd(0.0, -0.5) * std::conj(eip) * st;
  m.t32 = cxd(0.0, 0.5) * eip * st;
  m.t33 = ct;
  return m;
}

inline void epg_rf(EPGState &s, const RfMatrix &m) {
  for (int k = 0; k < s.active; ++k) {
    const cxd fp = s.f_plus[size_t(k)];
    const cxd fm = s.f_minus[size_t(k)];
    const cxd z = s.z[size_t(k)];
    s.f_plus[size_t(k)] = m.t11 * fp + m.t12 * fm + m.t13 * z;
    s.f_minus[size_t(k)] = m.t21 * fp + m.t22 * fm + m.t23 * z;
    s.z[size_t(k)] = m.t31 * fp + m.t32 * fm + m.t33 * z;
  }
}

inline void epg_relax(EPGState &s, double dt_ms, double t1_ms, double t2_ms) {
  const double e1 = std::exp(-dt_ms / t1_ms);
  const double e2 = std::exp(-dt_ms / t2_ms);
  for (int k = 0; k < s.active; ++k) {
    s.f_plus[size_t(k)] *= e2;
    s.f_minus[size_t(k)] *= e2;
    s.z[size_t(k)] *= e1;
  }
  s.z[0] += s.m0 * (1.0 - e1);
}

/// Ideal gradient spoiler: transverse orders shift up by one, Z unchanged.
inline void epg_spoil(EPGState &s) {
  const int max_order = int(s.f_plus.size()) - 1;
  const int top = std::min(s.active, max_order);
  for (int k = top; k >= 1; --k) s.f_plus[size_t(k)] = s.f_plus[size_t(k) - 1];
  s.f_plus[0] = std::conj(s.f_minus[1]);
  for (int k = 0; k < top; ++k) s.f_minus[size_t(k)] = s.f_minus[size_t(k) + 1];
  s.f_minus[size_t(top)] = cxd(0.0, 0.0);
  s.active = std::min(s.active + 1, max_order + 1);
}

inline void check_relaxation_params(double t1_ms, double t2_ms, double b1_rel) {
  if (!(t1_ms > 0.0)) fail("simulate: t1_ms must be positive, got ", t1_ms);
  if (!(t2_ms > 0.0)) fail("simulate: t2_ms must be positive, got ", t2_ms);
  if (t2_ms > t1_ms) fail("simulate: t2_ms (", t2_ms, ") must not exceed t1_ms (", t1_ms, ")");
  if (b1_rel < 0.0 || b1_rel > 2.0) fail("simulate: b1_rel (", b1_rel, ") outside [0, 2]");
}

} // namespace detail

inline Fingerprint simulate_fingerprint(const SequenceParams &seq, double t1_ms, double t2_ms,
                                        double b1_rel, double m0 = 1.0) {
  seq.validate();
  detail::check_relaxation_params(t1_ms, t2_ms, b1_rel);
  const double rf_phase = pi / 2.0;

  EPGState s(seq.n_tr, m0);
  if (seq.inversion_delay_ms) {
    s.z[0] = cxd(-m0, 0.0);
    detail::epg_relax(s, *seq.inversion_delay_ms, t1_ms, t2_ms);
  }

  Fingerprint fp;
  fp.seq_name = seq.name;
  fp.signal.resize(size_t(seq.n_tr));
  for (int n = 0; n < seq.n_tr; ++n) {
    const double flip = b1_rel * seq.flip_deg[size_t(n)] * pi / 180.0;
    detail::epg_rf(s, detail::rf_matrix(flip, rf_phase));
    detail::epg_relax(s, seq.te_ms[size_t(n)], t1_ms, t2_ms);
    fp.signal[size_t(n)] = s.f_plus[0];
    detail::epg_relax(s, seq.tr_ms[size_t(n)] - seq.te_ms[size_t(n)], t1_ms, t2_ms);
    detail::epg_spoil(s);
  }
  return fp;
}

// ---------------------------------------------------------------------------
// Brute-force isochromat oracle: n_spins spins with fixed intra-voxel
// spoiler increments uniformly spanning 2 pi per TR, full Bloch rotation
// and relaxation, signal = mean transverse magnetization at each TE.
// Shares the rotation algebra with the EPG path (same matrix applied to
// (M+, conj(M+), Mz)), so the two agree as n_spins grows.
// ---------------------------------------------------------------------------

inline Fingerprint isochromat_fingerprint(const SequenceParams &seq, double t1_ms,
                                          double t2_ms, double b1_rel, double m0,
                                          int n_spins) {
  seq.validate();
  detail::check_relaxation_params(t1_ms, t2_ms, b1_rel);
  if (n_spins < 1) fail("isochromat: n_spins must be >= 1, got ", n_spins);
  const double rf_phase = pi / 2.0;

  std::vector<detail::RfMatrix> rf(static_cast<size_t>(seq.n_tr));
  std::vector<double> e1te(size_t(seq.n_tr)), e2te(size_t(seq.n_tr));
  std::vector<double> e1rem(size_t(seq.n_tr)), e2rem(size_t(seq.n_tr));
  for (int n = 0; n < seq.n_tr; ++n) {
    rf[size_t(n)] = detail::rf_matrix(b1_rel * seq.flip_deg[size_t(n)] * pi / 180.0, rf_phase);
    e1te[size_t(n)] = std::exp(-seq.te_ms[size_t(n)] / t1_ms);
    e2te[size_t(n)] = std::exp(-seq.te_ms[size_t(n)] / t2_ms);
    const double rem = seq.tr_ms[size_t(n)] - seq.te_ms[size_t(n)];
    e1rem[size_t(n)] = std::exp(-rem / t1_ms);
    e2rem[size_t(n)] = std::exp(-rem / t2_ms);
  }

  std::vector<cxd> per_spin(size_t(n_spins) * size_t(seq.n_tr));
  parallel_for(size_t(n_spins), [&](size_t j) {
    const double psi = two_pi * (double(j) + 0.5) / double(n_spins) - pi;
    const cxd spoil = std::polar(1.0, psi);
    cxd mxy(0.0, 0.0);
    double mz = m0;
    if (seq.inversion_delay_ms) {
      mz = -m0;
      const double e1 = std::exp(-*seq.inversion_delay_ms / t1_ms);
      mz = m0 + (mz - m0) * e1;
    }
    cxd *out = &per_spin[j * size_t(seq.n_tr)];
    for (int n = 0; n < seq.n_tr; ++n) {
      const auto &m = rf[size_t(n)];
      const cxd new_mxy = m.t11 * mxy + m.t12 * std::conj(mxy) + m.t13 * mz;
      mz = (m.t31 * mxy + m.t32 * std::conj(mxy) + m.t33 * mz).real();
      mxy = new_mxy;
      mxy *= e2te[size_t(n)];
      mz = m0 + (mz - m0) * e1te[size_t(n)];
      out[n] = mxy;
      mxy *= e2rem[size_t(n)];
      mz = m0 + (mz - m0) * e1rem[size_t(n)];
      mxy *= spoil;
    }
  });

  Fingerprint fp;
  fp.seq_name = seq.name;
  fp.signal.assign(size_t(seq.n_tr), cxd(0.0, 0.0));
  for (int j = 0; j < n_spins; ++j)
    for (int n = 0; n < seq.n_tr; ++n)
      fp.signal[size_t(n)] += per_spin[size_t(j) * size_t(seq.n_tr) + size_t(n)];
  for (auto &v : fp.signal) v /= double(n_spins);
  return fp;
}

} // namespace mrfield
