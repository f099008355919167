#include "mrfield/metrics.hpp"

#include <catch_amalgamated.hpp>

using namespace mrfield;

namespace {

Image<double> random_image(int n, Rng &rng, double lo = 0.0, double hi = 1.0) {
  Image<double> img(n, n);
  for (auto &v : img.data) v = rng.uniform(lo, hi);
  return img;
}

} // namespace

TEST_CASE("ssim of an image with itself is exactly 1") {
  Rng rng(5);
  auto x = random_image(16, rng);
  Image<uint8_t> mask(16, 16, 1);
  REQUIRE(ssim(x, x, mask) == 1.0);
}

TEST_CASE("ssim is symmetric") {
  Rng rng(6);
  auto a = random_image(16, rng);
  auto b = random_image(16, rng);
  Image<uint8_t> mask(16, 16, 1);
  REQUIRE(ssim(a, b, mask) == Catch::Approx(ssim(b, a, mask)).margin(1e-12));
}

TEST_CASE("ssim is strictly below 1 for different images") {
  Rng rng(7);
  auto x = random_image(16, rng);
  Image<double> inv(16, 16);
  for (size_t i = 0; i < x.size(); ++i) inv.data[i] = 1.0 - x.data[i];
  Image<uint8_t> mask(16, 16, 1);
  REQUIRE(ssim(x, inv, mask) < 1.0);
  REQUIRE(ssim(x, inv, mask) > -1.0);
}

TEST_CASE("ssim only evaluates windows fully inside the mask") {
  Rng rng(8);
  auto a = random_image(16, rng);
  auto b = a;
  // corrupt b only outside a central 9x9 masked block: ssim over the mask
  // must remain exactly 1 because no valid window touches the corruption
  Image<uint8_t> mask(16, 16, 0);
  for (int y = 4; y < 13; ++y)
    for (int x = 4; x < 13; ++x) mask.at(x, y) = 1;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (!(x >= 4 && x < 13 && y >= 4 && y < 13)) b.at(x, y) += 10.0;
  REQUIRE(ssim(a, b, mask, SsimConfig(7, 1.0)) == 1.0);
}

TEST_CASE("ssim errors when no window fits") {
  Rng rng(9);
  auto a = random_image(16, rng);
  Image<uint8_t> mask(16, 16, 0);
  mask.at(3, 3) = mask.at(4, 4) = mask.at(5, 5) = 1; // 3 scattered pixels
  REQUIRE_THROWS_WITH(ssim(a, a, mask), Catch::Matchers::ContainsSubstring("window"));
}

TEST_CASE("ssim config validation") {
  REQUIRE_THROWS_AS(SsimConfig(4, 1.0), Error);
  REQUIRE_THROWS_AS(SsimConfig(1, 1.0), Error);
  SsimConfig c(9, 2.0);
  REQUIRE(c.c1 == Catch::Approx((0.01 * 2.0) * (0.01 * 2.0)));
}

TEST_CASE("ssim gradient matches finite differences") {
  Rng rng(10);
  const int n = 12;
  auto a = random_image(n, rng);
  auto b = random_image(n, rng);
  Image<uint8_t> mask(n, n, 0);
  for (int y = 1; y < n - 1; ++y)
    for (int x = 0; x < n; ++x) mask.at(x, y) = 1;
  SsimConfig cfg(7, 1.0);
  Image<double> grad;
  ssim_with_grad(a, b, mask, cfg, grad);

  const double h = 1e-6;
  for (int probe = 0; probe < 30; ++probe) {
    const int x = int(rng.uniform_int(n)), y = int(rng.uniform_int(n));
    auto ap = a, am = a;
    ap.at(x, y) += h;
    am.at(x, y) -= h;
    const double fd = (ssim(ap, b, mask, cfg) - ssim(am, b, mask, cfg)) / (2 * h);
    REQUIRE(grad.at(x, y) == Catch::Approx(fd).margin(1e-6));
  }
}

TEST_CASE("nrmse identities") {
  Rng rng(11);
  const int n = 8;
  Image<double> b = random_image(n, rng, 0.5, 1.5);
  Image<double> two(n, n), zero(n, n, 0.0);
  for (size_t i = 0; i < b.size(); ++i) two.data[i] = 2.0 * b.data[i];
  Image<uint8_t> mask(n, n, 1);
  REQUIRE(nrmse(b, b, mask) == 0.0);
  REQUIRE(nrmse(two, b, mask) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(nrmse(zero, b, mask) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE_THROWS_WITH(nrmse(b, zero, mask), Catch::Matchers::ContainsSubstring("zero"));
}

TEST_CASE("nrmse grows monotonically with added orthogonal error") {
  Rng rng(12);
  const int n = 8;
  Image<double> b = random_image(n, rng, 0.5, 1.5);
  Image<uint8_t> mask(n, n, 1);
  double prev = 0.0;
  for (double amp : {0.1, 0.2, 0.4}) {
    Image<double> a = b;
    for (size_t i = 0; i < a.size(); ++i) a.data[i] += (i % 2 ? amp : -amp);
    const double e = nrmse(a, b, mask);
    REQUIRE(e > prev);
    prev = e;
  }
}

TEST_CASE("nrmse is complex aware") {
  const int n = 4;
  Image<cxd> b(n, n, cxd(1.0, 0.0));
  Image<cxd> a(n, n, cxd(0.0, 1.0)); // same magnitude, orthogonal phase
  Image<uint8_t> mask(n, n, 1);
  REQUIRE(nrmse(a, b, mask) == Catch::Approx(std::sqrt(2.0)).margin(1e-12));
}
