#pragma once

#include "mrfield/core.hpp"
#include "mrfield/epg.hpp"

#include <Eigen/Dense>

#include <numeric>

namespace mrfield {

/// Parameter axes of the fingerprint dictionary. The dictionary is built
/// over the Cartesian product filtered to combinations with t2 <= t1.
struct ParamGrid {
  std::vector<double> t1_ms;
  std::vector<double> t2_ms;
  std::vector<double> b1_rel;

  void validate() const {
    auto check = [](const std::vector<double> &v, const char *key) {
      if (v.empty()) fail("grid: axis ", key, " is empty");
      for (size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0)) fail("grid: axis ", key, " has non-positive value ", v[i]);
        if (i > 0 && !(v[i] > v[i - 1]))
          fail("grid: axis ", key, " is not strictly ascending");
      }
    };
    check(t1_ms, "t1_ms");
    check(t2_ms, "t2_ms");
    check(b1_rel, "b1_rel");
  }
};

inline std::vector<double> linspace(double lo, double hi, int n) {
  if (n == 1) return {lo};
  std::vector<double> v(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) v[size_t(i)] = lo + (hi - lo) * double(i) / double(n - 1);
  return v;
}

inline std::vector<double> logspace(double lo, double hi, int n) {
  if (n == 1) return {lo};
  std::vector<double> v(static_cast<size_t>(n));
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < n; ++i)
    v[size_t(i)] = std::exp(llo + (lhi - llo) * double(i) / double(n - 1));
  return v;
}

/// Brain-at-3T coverage: T1 60 points log [100, 3000] ms, T2 50 points
/// log [10, 500] ms, B1 13 points linear [0.7, 1.3].
inline ParamGrid standard_grid() {
  ParamGrid g;
  g.t1_ms = logspace(100.0, 3000.0, 60);
  g.t2_ms = logspace(10.0, 500.0, 50);
  g.b1_rel = linspace(0.7, 1.3, 13);
  return g;
}

struct AtomParams {
  double t1_ms = 0.0;
  double t2_ms = 0.0;
  double b1_rel = 1.0;
};

/// Index bookkeeping for the filtered (t1, t2, b1) product: atoms are
/// stored lexicographically with t1 outermost and b1 innermost, keeping
/// only t2 values <= the row's t1.
struct GridIndex {
  ParamGrid grid;
  std::vector<double> log_t1, log_t2;
  std::vector<int> t2_count;   // per t1 index: number of admissible t2 values
  std::vector<long> prefix;    // per t1 index: first atom index of that t1 block

  void build(const ParamGrid &g) {
    grid = g;
    log_t1.clear();
    log_t2.clear();
    for (double v : g.t1_ms) log_t1.push_back(std::log(v));
    for (double v : g.t2_ms) log_t2.push_back(std::log(v));
    t2_count.assign(g.t1_ms.size(), 0);
    prefix.assign(g.t1_ms.size() + 1, 0);
    const long nb1 = long(g.b1_rel.size());
    for (size_t i = 0; i < g.t1_ms.size(); ++i) {
      int cnt = 0;
      while (cnt < int(g.t2_ms.size()) && g.t2_ms[size_t(cnt)] <= g.t1_ms[i]) ++cnt;
      t2_count[i] = cnt;
      prefix[i + 1] = prefix[i] + long(cnt) * nb1;
    }
  }

  long n_atoms() const { return prefix.back(); }

  static int nearest(const std::vector<double> &axis, double value) {
    auto it = std::lower_bound(axis.begin(), axis.end(), value);
    if (it == axis.begin()) return 0;
    if (it == axis.end()) return int(axis.size()) - 1;
    const int hi = int(it - axis.begin());
    return (value - axis[size_t(hi) - 1] <= axis[size_t(hi)] - value) ? hi - 1 : hi;
  }

  /// Nearest admissible atom in (log t1, log t2, linear b1).
  long nearest_atom(double t1, double t2, double b1) const {
    const int it1 = nearest(log_t1, std::log(std::max(t1, 1e-9)));
    int it2 = nearest(log_t2, std::log(std::max(t2, 1e-9)));
    while (it2 > 0 && grid.t2_ms[size_t(it2)] > grid.t1_ms[size_t(it1)]) --it2;
    if (it2 >= t2_count[size_t(it1)]) it2 = t2_count[size_t(it1)] - 1;
    const int ib1 = nearest(grid.b1_rel, b1);
    return prefix[size_t(it1)] + long(it2) * long(grid.b1_rel.size()) + ib1;
  }
};

struct Dictionary {
  std::vector<cxd> atoms; // n_atoms x n_tr, row-major
  std::vector<AtomParams> params;
  std::string seq_name;
  std::vector<double> atom_norms;
  int n_tr = 0;
  GridIndex index;

  long n_atoms() const { return long(params.size()); }
  const cxd *atom(long i) const { return &atoms[size_t(i) * size_t(n_tr)]; }
};

inline Dictionary build_dictionary(const SequenceParams &seq, const ParamGrid &grid) {
  seq.validate();
  grid.validate();
  Dictionary d;
  d.seq_name = seq.name;
  d.n_tr = seq.n_tr;
  d.index.build(grid);
  const long n = d.index.n_atoms();
  if (n == 0) fail("dictionary: grid is empty after t2 <= t1 filtering");

  d.params.resize(size_t(n));
  long a = 0;
  for (size_t i1 = 0; i1 < grid.t1_ms.size(); ++i1)
    for (int i2 = 0; i2 < d.index.t2_count[i1]; ++i2)
      for (size_t ib = 0; ib < grid.b1_rel.size(); ++ib)
        d.params[size_t(a++)] = {grid.t1_ms[i1], grid.t2_ms[size_t(i2)], grid.b1_rel[ib]};

  d.atoms.resize(size_t(n) * size_t(seq.n_tr));
  d.atom_norms.resize(size_t(n));
  parallel_for(size_t(n), [&](size_t i) {
    const auto &p = d.params[i];
    Fingerprint fp = simulate_fingerprint(seq, p.t1_ms, p.t2_ms, p.b1_rel, 1.0);
    double nrm2 = 0.0;
    cxd *row = &d.atoms[i * size_t(seq.n_tr)];
    for (int t = 0; t < seq.n_tr; ++t) {
      row[t] = fp.signal[size_t(t)];
      nrm2 += std::norm(row[t]);
    }
    d.atom_norms[i] = std::sqrt(nrm2);
  });
  for (long i = 0; i < n; ++i)
    if (!(d.atom_norms[size_t(i)] > 0.0))
      fail("dictionary: atom ", i, " has zero norm (t1=", d.params[size_t(i)].t1_ms,
           ", t2=", d.params[size_t(i)].t2_ms, ", b1=", d.params[size_t(i)].b1_rel, ")");
  return d;
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigendecomposition of a Hermitian matrix. Rotations zero
// one off-diagonal pair at a time; a sweep with no rotations above the
// threshold means the off-diagonal norm is below tol * ||A||_F.
// ---------------------------------------------------------------------------

namespace detail {

inline void hermitian_jacobi(Eigen::MatrixXcd &a, Eigen::MatrixXcd &v, double tol = 1e-12,
                             int max_sweeps = 100) {
  const long n = a.rows();
  v = Eigen::MatrixXcd::Identity(n, n);
  if (n == 1) return;
  const double scale = std::max(a.norm(), 1e-300);
  // Any pivot below this bound leaves the total off-diagonal norm < tol*scale.
  const double pivot_tol = tol * scale / std::sqrt(double(n) * double(n - 1));

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    long rotations = 0;
    for (long p = 0; p < n - 1; ++p) {
      for (long q = p + 1; q < n; ++q) {
        const cxd apq = a(p, q);
        const double r = std::abs(apq);
        if (r <= pivot_tol) continue;
        ++rotations;
        const cxd phase = apq / r; // e^{i alpha}
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        const double tau = (aqq - app) / (2.0 * r);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // J = [[c, s], [-s*conj(phase), c*conj(phase)]], A <- J^H A J, V <- V J.
        const cxd jqp = -s * std::conj(phase);
        const cxd jqq = c * std::conj(phase);
        for (long k = 0; k < n; ++k) {
          const cxd akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp + jqp * akq;
          a(k, q) = s * akp + jqq * akq;
        }
        for (long k = 0; k < n; ++k) {
          const cxd apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk + std::conj(jqp) * aqk;
          a(q, k) = s * apk + std::conj(jqq) * aqk;
        }
        a(p, q) = cxd(0.0, 0.0);
        a(q, p) = cxd(0.0, 0.0);
        a(p, p) = cxd(a(p, p).real(), 0.0);
        a(q, q) = cxd(a(q, q).real(), 0.0);
        for (long k = 0; k < n; ++k) {
          const cxd vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp + jqp * vkq;
          v(k, q) = s * vkp + jqq * vkq;
        }
      }
    }
    if (rotations == 0) return;
  }
  fail("jacobi: no convergence after ", max_sweeps, " sweeps");
}

} // namespace detail

/// Rank-K SVD subspace of a dictionary: phi holds the top-K right singular
/// vectors of the atom matrix, singular_values the full descending list.
struct SubspaceBasis {
  std::vector<cxd> phi; // n_tr x K, row-major
  std::vector<double> singular_values;
  int K = 0;
  int n_tr = 0;
  std::string basis_id;

  const cxd *phi_row(int t) const { return &phi[size_t(t) * size_t(K)]; }

  double tail_energy() const {
    double total = 0.0, tail = 0.0;
    for (size_t i = 0; i < singular_values.size(); ++i) {
      const double e = singular_values[i] * singular_values[i];
      total += e;
      if (int(i) >= K) tail += e;
    }
    if (total <= 0.0) fail("basis: all singular values are zero");
    return std::sqrt(tail / total);
  }
};

struct CompressedDictionary {
  std::vector<cxd> coeffs; // n_atoms x K, row-major
  std::vector<AtomParams> params;
  std::vector<double> coeff_norms;
  std::string basis_id;
  std::string seq_name;
  int K = 0;
  GridIndex index;
  std::vector<std::vector<long>> atoms_by_b1; // per b1 axis level

  long n_atoms() const { return long(params.size()); }
  const cxd *coeff(long i) const { return &coeffs[size_t(i) * size_t(K)]; }

  void build_b1_groups() {
    atoms_by_b1.assign(index.grid.b1_rel.size(), {});
    for (long i = 0; i < n_atoms(); ++i) {
      const int ib = GridIndex::nearest(index.grid.b1_rel, params[size_t(i)].b1_rel);
      atoms_by_b1[size_t(ib)].push_back(i);
    }
  }
};

inline std::pair<SubspaceBasis, CompressedDictionary> compress(const Dictionary &d, int K) {
  if (K < 1 || K > d.n_tr)
    fail("compress: rank K = ", K, " outside [1, ", d.n_tr, "]");
  const long n = d.n_atoms();
  const long m = d.n_tr;

  using RowMat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> atoms(d.atoms.data(), n, m);

  // Gram matrix in fixed-size blocks summed in block order, so the result
  // is independent of the number of worker threads.
  constexpr long kBlocks = 8;
  const long n_blocks = std::min<long>(kBlocks, n);
  std::vector<Eigen::MatrixXcd> partial(static_cast<size_t>(n_blocks));
  parallel_for(size_t(n_blocks), [&](size_t b) {
    const long lo = n * long(b) / n_blocks;
    const long hi = n * long(b + 1) / n_blocks;
    partial[b] = atoms.middleRows(lo, hi - lo).adjoint() * atoms.middleRows(lo, hi - lo);
  });
  Eigen::MatrixXcd gram = Eigen::MatrixXcd::Zero(m, m);
  for (const auto &p : partial) gram += p;

  Eigen::MatrixXcd vecs;
  detail::hermitian_jacobi(gram, vecs);

  std::vector<int> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return gram(i, i).real() > gram(j, j).real();
  });

  SubspaceBasis basis;
  basis.K = K;
  basis.n_tr = int(m);
  basis.singular_values.resize(size_t(m));
  for (long i = 0; i < m; ++i)
    basis.singular_values[size_t(i)] = std::sqrt(std::max(0.0, gram(order[size_t(i)], order[size_t(i)]).real()));
  basis.phi.resize(size_t(m) * size_t(K));
  for (long t = 0; t < m; ++t)
    for (int k = 0; k < K; ++k)
      basis.phi[size_t(t) * size_t(K) + size_t(k)] = vecs(t, order[size_t(k)]);
  basis.basis_id = cat(d.seq_name, ":K", K, ":",
                       hex64(fnv1a64(basis.phi.data(), basis.phi.size() * sizeof(cxd))));

  CompressedDictionary cd;
  cd.params = d.params;
  cd.basis_id = basis.basis_id;
  cd.seq_name = d.seq_name;
  cd.K = K;
  cd.index = d.index;
  cd.coeffs.resize(size_t(n) * size_t(K));
  cd.coeff_norms.resize(size_t(n));
  Eigen::Map<const RowMat> phi(basis.phi.data(), m, K);
  parallel_for(size_t(n_blocks), [&](size_t b) {
    const long lo = n * long(b) / n_blocks;
    const long hi = n * long(b + 1) / n_blocks;
    Eigen::Map<RowMat> out(&cd.coeffs[size_t(lo) * size_t(K)], hi - lo, K);
    out = atoms.middleRows(lo, hi - lo) * phi;
  });
  for (long i = 0; i < n; ++i) {
    double nrm2 = 0.0;
    for (int k = 0; k < K; ++k) nrm2 += std::norm(cd.coeffs[size_t(i) * size_t(K) + size_t(k)]);
    cd.coeff_norms[size_t(i)] = std::sqrt(nrm2);
  }
  cd.build_b1_groups();
  return {std::move(basis), std::move(cd)};
}

/// Dictionary-wide relative compression residual ||D - D phi phi^H||_F / ||D||_F,
/// computed literally from the atoms.
inline double compression_residual(const Dictionary &d, const SubspaceBasis &basis) {
  if (basis.n_tr != d.n_tr) fail("residual: basis n_tr mismatch");
  const long n = d.n_atoms();
  const long m = d.n_tr;
  const int K = basis.K;
  std::vector<double> partial_num(size_t(n), 0.0), partial_den(size_t(n), 0.0);
  parallel_for(size_t(n), [&](size_t i) {
    const cxd *row = d.atom(long(i));
    std::vector<cxd> proj(size_t(K), cxd(0, 0));
    for (long t = 0; t < m; ++t)
      for (int k = 0; k < K; ++k)
        proj[size_t(k)] += row[t] * basis.phi[size_t(t) * size_t(K) + size_t(k)];
    double num = 0.0, den = 0.0;
    for (long t = 0; t < m; ++t) {
      cxd recon(0.0, 0.0);
      for (int k = 0; k < K; ++k)
        recon += proj[size_t(k)] * std::conj(basis.phi[size_t(t) * size_t(K) + size_t(k)]);
      num += std::norm(row[t] - recon);
      den += std::norm(row[t]);
    }
    partial_num[i] = num;
    partial_den[i] = den;
  });
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < partial_num.size(); ++i) {
    num += partial_num[i];
    den += partial_den[i];
  }
  if (den <= 0.0) fail("residual: dictionary is zero");
  return std::sqrt(num / den);
}

// --- matching ---------------------------------------------------------------

enum class MatchMode { Uncorrected, B1Corrected, Joint };

struct MatchResult {
  double t1_ms = 0.0;
  double t2_ms = 0.0;
  double b1_used = 1.0;
  cxd pd{0.0, 0.0};
  double corr = 0.0;
  long atom = -1;
};

inline MatchResult match(const cxd *voxel, const CompressedDictionary &cd, MatchMode mode,
                         double b1_value = 1.0) {
  double vn2 = 0.0;
  for (int k = 0; k < cd.K; ++k) vn2 += std::norm(voxel[k]);
  if (!(vn2 > 0.0)) fail("match: voxel coefficients are zero (degenerate input)");
  const double vnorm = std::sqrt(vn2);

  const std::vector<long> *candidates = nullptr;
  std::vector<long> all;
  if (mode == MatchMode::Joint) {
    all.resize(size_t(cd.n_atoms()));
    std::iota(all.begin(), all.end(), 0);
    candidates = &all;
  } else {
    const double target = (mode == MatchMode::Uncorrected) ? 1.0 : b1_value;
    if (mode == MatchMode::B1Corrected) {
      const auto &axis = cd.index.grid.b1_rel;
      if (b1_value < axis.front() || b1_value > axis.back())
        fail("match: b1 value ", b1_value, " outside grid range [", axis.front(), ", ",
             axis.back(), "]");
    }
    const int ib = GridIndex::nearest(cd.index.grid.b1_rel, target);
    candidates = &cd.atoms_by_b1[size_t(ib)];
  }

  MatchResult best;
  double best_score = -1.0;
  cxd best_dot(0.0, 0.0);
  for (long i : *candidates) {
    const cxd *c = cd.coeff(i);
    cxd dot(0.0, 0.0);
    for (int k = 0; k < cd.K; ++k) dot += voxel[k] * std::conj(c[k]);
    const double score = std::abs(dot) / (vnorm * cd.coeff_norms[size_t(i)]);
    if (score > best_score) {
      best_score = score;
      best.atom = i;
      best_dot = dot;
    }
  }
  best.t1_ms = cd.params[size_t(best.atom)].t1_ms;
  best.t2_ms = cd.params[size_t(best.atom)].t2_ms;
  best.b1_used = cd.params[size_t(best.atom)].b1_rel;
  const double cn = cd.coeff_norms[size_t(best.atom)];
  best.pd = best_dot / (cn * cn);
  best.corr = best_score;
  return best;
}

inline MatchResult match(const std::vector<cxd> &voxel, const CompressedDictionary &cd,
                         MatchMode mode, double b1_value = 1.0) {
  if (int(voxel.size()) != cd.K)
    fail("match: voxel has ", voxel.size(), " coefficients, dictionary rank is ", cd.K);
  return match(voxel.data(), cd, mode, b1_value);
}

/// Per-voxel matching over coefficient channel images. Masked-out voxels
/// get t1 = t2 = 0 and pd = 0 without calling match(). In B1Corrected mode
/// a per-voxel b1 map must be supplied; values are clamped to the grid.
struct MatchedMaps {
  Image<double> t1_ms, t2_ms, corr;
  Image<cxd> pd;
};

inline MatchedMaps match_maps(const std::vector<Image<cxd>> &channels,
                              const Image<uint8_t> &mask, const CompressedDictionary &cd,
                              MatchMode mode, const Image<double> *b1_map = nullptr) {
  if (int(channels.size()) != cd.K)
    fail("match_maps: ", channels.size(), " channels but dictionary rank is ", cd.K);
  if (mode == MatchMode::B1Corrected && !b1_map)
    fail("match_maps: B1-corrected matching needs a b1 map");
  const int nx = mask.nx, ny = mask.ny;
  for (const auto &c : channels)
    if (c.nx != nx || c.ny != ny) fail("match_maps: channel/mask shapes differ");

  MatchedMaps out;
  out.t1_ms = Image<double>(nx, ny, 0.0);
  out.t2_ms = Image<double>(nx, ny, 0.0);
  out.corr = Image<double>(nx, ny, 0.0);
  out.pd = Image<cxd>(nx, ny, cxd(0, 0));

  const auto &axis = cd.index.grid.b1_rel;
  parallel_for(size_t(nx) * size_t(ny), [&](size_t i) {
    if (!mask.data[i]) return;
    std::vector<cxd> voxel(size_t(cd.K));
    double n2 = 0.0;
    for (int k = 0; k < cd.K; ++k) {
      voxel[size_t(k)] = channels[size_t(k)].data[i];
      n2 += std::norm(voxel[size_t(k)]);
    }
    if (!(n2 > 0.0)) return; // masked voxel with no signal: leave zeros
    double b1 = 1.0;
    if (mode == MatchMode::B1Corrected)
      b1 = std::clamp(b1_map->data[i], axis.front(), axis.back());
    const MatchResult r = match(voxel.data(), cd, mode, b1);
    out.t1_ms.data[i] = r.t1_ms;
    out.t2_ms.data[i] = r.t2_ms;
    out.corr.data[i] = r.corr;
    out.pd.data[i] = r.pd;
  });
  return out;
}

} // namespace mrfield
