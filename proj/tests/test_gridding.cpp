#include "mrfield/gridding.hpp"
#include "mrfield/sequence.hpp"

#include <catch_amalgamated.hpp>

using namespace mrfield;

namespace {

Image<cxd> smooth_test_image(int n, Rng &rng) {
  // sum of a few random Gaussian blobs, complex amplitudes
  Image<cxd> img(n, n, cxd(0.0, 0.0));
  for (int blob = 0; blob < 4; ++blob) {
    const double cx = rng.uniform(0.3, 0.7) * n;
    const double cy = rng.uniform(0.3, 0.7) * n;
    const double sx = rng.uniform(0.08, 0.2) * n;
    const double sy = rng.uniform(0.08, 0.2) * n;
    const cxd amp(rng.normal(), rng.normal());
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double dx = (x - cx) / sx, dy = (y - cy) / sy;
        img.at(x, y) += amp * std::exp(-0.5 * (dx * dx + dy * dy));
      }
  }
  return img;
}

double sample_nrmse(const SampleVector &a, const SampleVector &b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / den);
}

} // namespace

TEST_CASE("spiral design invariants") {
  auto traj = design_spiral(5.38, 256.0, 128, 4.0);
  REQUIRE(traj.n_samples() == 1345); // floor(5380 / 4)
  REQUIRE(traj.kmax == Catch::Approx(0.25)); // 1 / (2 * 2 mm)
  double prev_r = -1.0;
  for (size_t i = 0; i < traj.n_samples(); ++i) {
    const double r = std::hypot(traj.kx[i], traj.ky[i]);
    REQUIRE(r <= traj.kmax + 1e-12);
    REQUIRE(r >= prev_r - 1e-12); // radius is nondecreasing along the readout
    prev_r = r;
  }
  for (const char *name : {"seq1", "seq2"}) {
    auto s = builtin_sequence(name);
    auto t = design_spiral(s.readout_ms, 128.0, 64, 4.0);
    t.validate();
  }
  REQUIRE_THROWS_WITH(design_spiral(0.1, 128.0, 64, 4.0),
                      Catch::Matchers::ContainsSubstring("need >= 64"));
  REQUIRE_THROWS_AS(design_spiral(-1.0, 128.0, 64, 4.0), Error);
}

TEST_CASE("exact_forward of a centered delta is all ones") {
  auto traj = design_spiral(2.0, 64.0, 32, 4.0);
  Image<cxd> img(32, 32, cxd(0.0, 0.0));
  img.at(16, 16) = cxd(1.0, 0.0);
  auto d = exact_forward(img, traj);
  for (auto &v : d) {
    REQUIRE(v.real() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(v.imag() == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("exact_forward uniform-b0 factorization identity") {
  Rng rng(21);
  auto traj = design_spiral(2.0, 64.0, 32, 4.0);
  auto img = smooth_test_image(32, rng);
  Image<double> b0(32, 32, 70.0);
  auto with_b0 = exact_forward(img, traj, &b0);
  auto without = exact_forward(img, traj);
  for (size_t i = 0; i < with_b0.size(); ++i) {
    const double phase = two_pi * 70.0 * traj.t_ms[i] * 1e-3;
    const cxd expected = without[i] * cxd(std::cos(phase), std::sin(phase));
    REQUIRE(std::abs(with_b0[i] - expected) < 1e-9 * (1.0 + std::abs(expected)));
  }
}

TEST_CASE("exact_forward is linear") {
  Rng rng(22);
  auto traj = design_spiral(2.0, 64.0, 32, 4.0);
  auto x = smooth_test_image(32, rng);
  auto y = smooth_test_image(32, rng);
  const cxd a(1.3, -0.4), b(-0.2, 2.1);
  Image<cxd> combo(32, 32);
  for (size_t i = 0; i < combo.size(); ++i) combo.data[i] = a * x.data[i] + b * y.data[i];
  auto dc = exact_forward(combo, traj);
  auto dx = exact_forward(x, traj);
  auto dy = exact_forward(y, traj);
  double scale = 0.0;
  for (auto &v : dc) scale = std::max(scale, std::abs(v));
  for (size_t i = 0; i < dc.size(); ++i)
    REQUIRE(std::abs(dc[i] - (a * dx[i] + b * dy[i])) < 1e-12 * scale);
}

TEST_CASE("grid_forward matches exact_forward on smooth images") {
  Rng rng(23);
  auto traj = design_spiral(9.0, 128.0, 64, 4.0);
  Gridder g(traj);
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    auto img = smooth_test_image(64, rng);
    worst = std::max(worst, sample_nrmse(g.forward(img), exact_forward(img, traj)));
  }
  // measured ~3e-4 for width-4 kernel at 2x oversampling
  REQUIRE(worst < 1e-2);
}

TEST_CASE("grid_forward is linear and maps zero to zero") {
  Rng rng(24);
  auto traj = design_spiral(2.0, 64.0, 32, 4.0);
  Gridder g(traj);
  auto x = smooth_test_image(32, rng);
  auto y = smooth_test_image(32, rng);
  const cxd a(0.7, 1.1), b(-1.2, 0.3);
  Image<cxd> combo(32, 32);
  for (size_t i = 0; i < combo.size(); ++i) combo.data[i] = a * x.data[i] + b * y.data[i];
  auto dc = g.forward(combo);
  auto dx = g.forward(x);
  auto dy = g.forward(y);
  double scale = 0.0;
  for (auto &v : dc) scale = std::max(scale, std::abs(v));
  for (size_t i = 0; i < dc.size(); ++i)
    REQUIRE(std::abs(dc[i] - (a * dx[i] + b * dy[i])) < 1e-12 * scale);

  Image<cxd> zero(32, 32, cxd(0.0, 0.0));
  for (auto &v : g.forward(zero)) REQUIRE(v == cxd(0.0, 0.0));
}

TEST_CASE("adjoint identity holds at 1e-6 for random pairs") {
  Rng rng(25);
  for (int n : {32, 64}) {
    auto traj = design_spiral(4.0, 2.0 * n, n, 4.0);
    Gridder g(traj);
    for (int trial = 0; trial < 10; ++trial) {
      Image<cxd> x(n, n);
      for (auto &v : x.data) v = cxd(rng.normal(), rng.normal());
      SampleVector y(traj.n_samples());
      for (auto &v : y) v = cxd(rng.normal(), rng.normal());
      auto ax = g.forward(x);
      auto aty = g.adjoint(y, 0.0, false);
      cxd lhs(0.0, 0.0), rhs(0.0, 0.0);
      for (size_t i = 0; i < y.size(); ++i) lhs += ax[i] * std::conj(y[i]);
      for (size_t i = 0; i < x.size(); ++i) rhs += x.data[i] * std::conj(aty.data[i]);
      double nx = 0.0, ny = 0.0;
      for (auto &v : x.data) nx += std::norm(v);
      for (auto &v : y) ny += std::norm(v);
      REQUIRE(std::abs(lhs - rhs) / std::sqrt(nx * ny) < 1e-6);
    }
  }
}

TEST_CASE("adjoint of zero samples is a zero image") {
  auto traj = design_spiral(2.0, 64.0, 32, 4.0);
  SampleVector zeros(traj.n_samples(), cxd(0.0, 0.0));
  auto img = grid_adjoint(zeros, traj, 0.0, true);
  for (auto &v : img.data) REQUIRE(v == cxd(0.0, 0.0));
  REQUIRE_THROWS_WITH(grid_adjoint(SampleVector(3), traj, 0.0, false),
                      Catch::Matchers::ContainsSubstring("samples"));
}

TEST_CASE("density weights are nonnegative, finite, nondecreasing") {
  auto traj = design_spiral(5.38, 128.0, 64, 4.0); // seq1 readout
  auto w = density_weights(traj);
  REQUIRE(w.size() == traj.n_samples());
  for (size_t i = 0; i < w.size(); ++i) {
    REQUIRE(w[i] >= 0.0);
    REQUIRE(std::isfinite(w[i]));
    if (i > 0) REQUIRE(w[i] >= w[i - 1] - 1e-15);
  }
}

TEST_CASE("DCF recon of a uniform disk stays close to the disk") {
  // fully sampled at this matrix size so density compensation is what is
  // being measured, not aliasing
  auto traj = design_spiral(9.0, 64.0, 32, 4.0);
  Gridder g(traj);
  const int n = 32, r = 10;
  Image<cxd> disk(n, n, cxd(0.0, 0.0));
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if ((x - n / 2) * (x - n / 2) + (y - n / 2) * (y - n / 2) < r * r)
        disk.at(x, y) = cxd(1.0, 0.0);
  auto recon = g.adjoint(exact_forward(disk, traj), 0.0, true);
  double num = 0.0, den = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if ((x - n / 2) * (x - n / 2) + (y - n / 2) * (y - n / 2) < r * r) {
        num += std::norm(recon.at(x, y) - disk.at(x, y));
        den += std::norm(disk.at(x, y));
      }
  REQUIRE(std::sqrt(num / den) < 0.1); // measured ~0.06
}

TEST_CASE("demodulation removes uniform off-resonance") {
  Rng rng(26);
  auto traj = design_spiral(9.0, 128.0, 64, 4.0);
  Gridder g(traj);
  auto img = smooth_test_image(64, rng);
  Image<double> b0(64, 64, 120.0);
  auto corrupted = exact_forward(img, traj, &b0);
  auto clean = exact_forward(img, traj);

  auto recon_demod = g.adjoint(corrupted, 120.0, true);
  auto recon_clean = g.adjoint(clean, 0.0, true);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < recon_demod.size(); ++i) {
    num += std::norm(recon_demod.data[i] - recon_clean.data[i]);
    den += std::norm(recon_clean.data[i]);
  }
  REQUIRE(std::sqrt(num / den) < 1e-10); // exact demodulation identity
}

TEST_CASE("geometry mismatches are rejected") {
  auto traj = design_spiral(2.0, 64.0, 32, 4.0);
  Image<cxd> wrong(16, 16);
  REQUIRE_THROWS_WITH(exact_forward(wrong, traj),
                      Catch::Matchers::ContainsSubstring("16"));
  Gridder g(traj);
  REQUIRE_THROWS_AS(g.forward(wrong), Error);
}
