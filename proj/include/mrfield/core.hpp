#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mrfield {

using cxd = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

/// All library errors are reported through this type; the message names
/// the offending input or key.
struct Error : std::runtime_error {
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void cat_one(std::ostringstream &os) { (void)os; }
template <typename T, typename... Ts>
void cat_one(std::ostringstream &os, T &&v, Ts &&...rest) {
  os << v;
  cat_one(os, std::forward<Ts>(rest)...);
}
} // namespace detail

template <typename... Ts> std::string cat(Ts &&...parts) {
  std::ostringstream os;
  os.precision(17);
  detail::cat_one(os, std::forward<Ts>(parts)...);
  return os.str();
}

template <typename... Ts> [[noreturn]] void fail(Ts &&...parts) {
  throw Error(cat(std::forward<Ts>(parts)...));
}

/// 2-D row-major image. Pixel (x, y) lives at data[y * nx + x].
template <typename T> struct Image {
  int nx = 0;
  int ny = 0;
  std::vector<T> data;

  Image() = default;
  Image(int nx_, int ny_, T fill = T{}) : nx(nx_), ny(ny_), data(size_t(nx_) * ny_, fill) {}
  static Image square(int n, T fill = T{}) { return Image(n, n, fill); }

  T &at(int x, int y) { return data[size_t(y) * nx + x]; }
  const T &at(int x, int y) const { return data[size_t(y) * nx + x]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Image &o) const { return nx == o.nx && ny == o.ny; }

  auto begin() { return data.begin(); }
  auto end() { return data.end(); }
  auto begin() const { return data.begin(); }
  auto end() const { return data.end(); }
};

// ---------------------------------------------------------------------------
// Seeded RNG. Distributions are hand-rolled on top of mt19937_64 so that
// streams are reproducible independent of the standard library build.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed)), seed_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per pair of draws).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) { return n == 0 ? 0 : eng_() % n; }

  /// Independent child stream for item `id` (phantom index, epoch, ...).
  Rng derive(uint64_t id) const {
    return Rng(splitmix64(seed_ ^ splitmix64(id + 0x714e0c3a55c5d9e3ULL)));
  }

private:
  std::mt19937_64 eng_;
  uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Minimal deterministic parallel-for. Callers only ever write to disjoint
// outputs; reductions are done by the caller in a fixed order afterwards.
// ---------------------------------------------------------------------------

namespace detail {
inline int &thread_count_ref() {
  static int n = int(std::max(1u, std::thread::hardware_concurrency()));
  return n;
}
inline bool &in_parallel_ref() {
  thread_local bool flag = false;
  return flag;
}
} // namespace detail

inline void set_thread_count(int n) { detail::thread_count_ref() = std::max(1, n); }
inline int thread_count() { return detail::thread_count_ref(); }

template <typename Fn> void parallel_for(size_t n, Fn &&fn) {
  const size_t nt = detail::in_parallel_ref() ? 1 : std::min<size_t>(size_t(thread_count()), n);
  if (nt <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nt);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (size_t t = 0; t < nt; ++t) {
    size_t lo = n * t / nt;
    size_t hi = n * (t + 1) / nt;
    workers.emplace_back([&, lo, hi] {
      detail::in_parallel_ref() = true;
      try {
        for (size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto &w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(const void *bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto *p = static_cast<const unsigned char *>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char *digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[size_t(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

} // namespace mrfield
