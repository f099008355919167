#pragma once

#include "mrfield/config.hpp"
#include "mrfield/core.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

namespace mrfield {

// ---------------------------------------------------------------------------
// QMAP: the project's single self-describing binary array container.
//
//   magic   "QMAP1"          5 bytes
//   version u16 little-endian (currently 1)
//   dtype   u8  (0 = f32, 1 = c64 [two f32: re, im], 2 = u8)
//   ndim    u8
//   dims    ndim x u32 little-endian, row-major
//   payload prod(dims) * dtype_size bytes, little-endian
//
// A file may hold several records back to back (used for network weights).
// Optional sidecar metadata lives next to the file with extension ".meta".
// ---------------------------------------------------------------------------

enum class Dtype : uint8_t { f32 = 0, c64 = 1, u8 = 2 };

inline size_t dtype_size(Dtype d) {
  switch (d) {
  case Dtype::f32: return 4;
  case Dtype::c64: return 8;
  case Dtype::u8: return 1;
  }
  fail("unknown QMAP dtype code ", int(d));
}

struct QmapArray {
  Dtype dtype = Dtype::f32;
  std::vector<uint32_t> dims;
  std::vector<unsigned char> payload;

  size_t count() const {
    size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  std::vector<float> as_f32() const {
    if (dtype != Dtype::f32) fail("QMAP array is not f32");
    std::vector<float> out(count());
    std::memcpy(out.data(), payload.data(), payload.size());
    return out;
  }
  std::vector<std::complex<float>> as_c64() const {
    if (dtype != Dtype::c64) fail("QMAP array is not c64");
    std::vector<std::complex<float>> out(count());
    std::memcpy(out.data(), payload.data(), payload.size());
    return out;
  }
  std::vector<uint8_t> as_u8() const {
    if (dtype != Dtype::u8) fail("QMAP array is not u8");
    std::vector<uint8_t> out(count());
    std::memcpy(out.data(), payload.data(), payload.size());
    return out;
  }
};

namespace detail {

inline void put_u16(std::ostream &os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char *>(b), 2);
}
inline void put_u32(std::ostream &os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char *>(b), 4);
}
inline uint16_t get_u16(std::istream &is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char *>(b), 2);
  return uint16_t(b[0] | (uint16_t(b[1]) << 8));
}
inline uint32_t get_u32(std::istream &is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char *>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

// Payload bytes are LE on disk; x86 hosts match, so bulk copy applies.
// The per-element path below keeps the format well-defined elsewhere too.
inline bool host_is_little_endian() {
  const uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

} // namespace detail

inline void write_qmap(std::ostream &os, const QmapArray &arr) {
  if (arr.payload.size() != arr.count() * dtype_size(arr.dtype))
    fail("QMAP payload size mismatch: have ", arr.payload.size(), " bytes, expected ",
         arr.count() * dtype_size(arr.dtype));
  os.write("QMAP1", 5);
  detail::put_u16(os, 1);
  os.put(char(uint8_t(arr.dtype)));
  os.put(char(uint8_t(arr.dims.size())));
  for (auto d : arr.dims) detail::put_u32(os, d);
  if (!detail::host_is_little_endian()) fail("big-endian hosts are unsupported");
  os.write(reinterpret_cast<const char *>(arr.payload.data()),
           std::streamsize(arr.payload.size()));
  if (!os) fail("QMAP write failed");
}

inline QmapArray read_qmap(std::istream &is) {
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "QMAP1", 5) != 0) fail("not a QMAP file");
  uint16_t version = detail::get_u16(is);
  if (version != 1) fail("unsupported QMAP version ", version);
  int dtype_code = is.get();
  int ndim = is.get();
  if (dtype_code < 0 || ndim < 0) fail("truncated QMAP header");
  if (dtype_code > 2) fail("unknown QMAP dtype code ", dtype_code);
  QmapArray arr;
  arr.dtype = Dtype(uint8_t(dtype_code));
  arr.dims.resize(size_t(ndim));
  for (auto &d : arr.dims) d = detail::get_u32(is);
  if (!is) fail("truncated QMAP header");
  arr.payload.resize(arr.count() * dtype_size(arr.dtype));
  if (!detail::host_is_little_endian()) fail("big-endian hosts are unsupported");
  is.read(reinterpret_cast<char *>(arr.payload.data()), std::streamsize(arr.payload.size()));
  if (size_t(is.gcount()) != arr.payload.size()) fail("truncated payload in QMAP stream");
  return arr;
}

/// Writes one or more records atomically (temp file + rename).
inline void write_qmap_file(const std::string &path, const std::vector<QmapArray> &records) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot write QMAP file '", path, "'");
    for (const auto &r : records) write_qmap(os, r);
  }
  fs::rename(tmp, target);
}

inline void write_qmap_file(const std::string &path, const QmapArray &record) {
  write_qmap_file(path, std::vector<QmapArray>{record});
}

inline QmapArray read_qmap_file(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open QMAP file '", path, "'");
  return read_qmap(is);
}

inline std::vector<QmapArray> read_qmap_records(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open QMAP file '", path, "'");
  std::vector<QmapArray> out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    out.push_back(read_qmap(is));
  }
  return out;
}

// --- typed helpers ---------------------------------------------------------

inline QmapArray make_f32(const std::vector<float> &v, std::vector<uint32_t> dims) {
  QmapArray a;
  a.dtype = Dtype::f32;
  a.dims = std::move(dims);
  if (a.count() != v.size()) fail("QMAP dims do not match value count");
  a.payload.resize(v.size() * 4);
  std::memcpy(a.payload.data(), v.data(), a.payload.size());
  return a;
}

inline QmapArray make_c64(const std::vector<std::complex<float>> &v, std::vector<uint32_t> dims) {
  QmapArray a;
  a.dtype = Dtype::c64;
  a.dims = std::move(dims);
  if (a.count() != v.size()) fail("QMAP dims do not match value count");
  a.payload.resize(v.size() * 8);
  std::memcpy(a.payload.data(), v.data(), a.payload.size());
  return a;
}

inline QmapArray make_u8(const std::vector<uint8_t> &v, std::vector<uint32_t> dims) {
  QmapArray a;
  a.dtype = Dtype::u8;
  a.dims = std::move(dims);
  if (a.count() != v.size()) fail("QMAP dims do not match value count");
  a.payload.assign(v.begin(), v.end());
  return a;
}

inline QmapArray from_image(const Image<double> &img) {
  std::vector<float> v(img.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = float(img.data[i]);
  return make_f32(v, {uint32_t(img.ny), uint32_t(img.nx)});
}

inline QmapArray from_image(const Image<cxd> &img) {
  std::vector<std::complex<float>> v(img.size());
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = std::complex<float>(float(img.data[i].real()), float(img.data[i].imag()));
  return make_c64(v, {uint32_t(img.ny), uint32_t(img.nx)});
}

inline QmapArray from_mask(const Image<uint8_t> &img) {
  return make_u8(img.data, {uint32_t(img.ny), uint32_t(img.nx)});
}

inline Image<double> to_real_image(const QmapArray &a) {
  if (a.dims.size() != 2) fail("expected a 2-D QMAP array, got ", a.dims.size(), " dims");
  Image<double> img(int(a.dims[1]), int(a.dims[0]));
  auto v = a.as_f32();
  for (size_t i = 0; i < v.size(); ++i) img.data[i] = v[i];
  return img;
}

inline Image<cxd> to_complex_image(const QmapArray &a) {
  if (a.dims.size() != 2) fail("expected a 2-D QMAP array, got ", a.dims.size(), " dims");
  Image<cxd> img(int(a.dims[1]), int(a.dims[0]));
  auto v = a.as_c64();
  for (size_t i = 0; i < v.size(); ++i) img.data[i] = cxd(v[i].real(), v[i].imag());
  return img;
}

inline Image<uint8_t> to_mask_image(const QmapArray &a) {
  if (a.dims.size() != 2) fail("expected a 2-D QMAP array, got ", a.dims.size(), " dims");
  Image<uint8_t> img(int(a.dims[1]), int(a.dims[0]));
  auto v = a.as_u8();
  img.data = v;
  return img;
}

inline std::string meta_path(const std::string &qmap_path) {
  namespace fs = std::filesystem;
  fs::path p(qmap_path);
  p.replace_extension(".meta");
  return p.string();
}

inline void write_meta(const std::string &qmap_path, const Config &meta) {
  meta.save(meta_path(qmap_path));
}

inline Config read_meta(const std::string &qmap_path) {
  return Config::load(meta_path(qmap_path));
}

inline uint64_t hash_file(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open file '", path, "' for hashing");
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h = fnv1a64(buf, size_t(is.gcount()), h);
  }
  return h;
}

} // namespace mrfield
