#pragma once

#include "mrfield/config.hpp"
#include "mrfield/core.hpp"

#include <optional>

namespace mrfield {

/// Per-TR acquisition parameters of an MRF sequence. Immutable after
/// construction; validate() enforces the type invariants.
struct SequenceParams {
  std::string name;
  int n_tr = 0;
  std::vector<double> flip_deg;
  std::vector<double> tr_ms;
  std::vector<double> te_ms;
  double readout_ms = 0.0;
  std::optional<double> inversion_delay_ms;

  void validate() const {
    if (name.empty()) fail("sequence: empty name");
    if (n_tr <= 0) fail("sequence '", name, "': n_tr must be positive");
    auto check_len = [&](const std::vector<double> &v, const char *key) {
      if (int(v.size()) != n_tr)
        fail("sequence '", name, "': ", key, " length ", v.size(), " does not match n_tr ",
             n_tr);
    };
    check_len(flip_deg, "flip_deg");
    check_len(tr_ms, "tr_ms");
    check_len(te_ms, "te_ms");
    for (int n = 0; n < n_tr; ++n) {
      if (flip_deg[size_t(n)] < 0.0 || flip_deg[size_t(n)] > 90.0)
        fail("sequence '", name, "': flip_deg[", n, "] = ", flip_deg[size_t(n)],
             " outside [0, 90]");
      if (!(te_ms[size_t(n)] > 0.0 && te_ms[size_t(n)] < tr_ms[size_t(n)]))
        fail("sequence '", name, "': te_ms[", n, "] must satisfy 0 < te < tr");
    }
    if (!(readout_ms > 0.0)) fail("sequence '", name, "': readout_ms must be positive");
    if (inversion_delay_ms && !(*inversion_delay_ms > 0.0))
      fail("sequence '", name, "': inversion_delay_ms must be positive");
  }
};

namespace detail {

// Two half-sine flip-angle lobes (peaks 75 and 50 deg) with a 5 deg floor.
inline std::vector<double> lobed_flip_train(int n_tr) {
  std::vector<double> flips(static_cast<size_t>(n_tr));
  const int half = n_tr / 2;
  for (int i = 0; i < n_tr; ++i) {
    double f;
    if (i < half)
      f = 75.0 * std::sin(pi * (i + 0.5) / half);
    else
      f = 50.0 * std::sin(pi * (i - half + 0.5) / (n_tr - half));
    flips[size_t(i)] = std::max(5.0, f);
  }
  return flips;
}

} // namespace detail

/// seq1: 500 TRs, 5.38 ms readout, inversion-prepared.
/// seq2, seq3: 400 TRs, 9 ms readout, no inversion.
inline SequenceParams builtin_sequence(const std::string &name) {
  SequenceParams s;
  s.name = name;
  if (name == "seq1") {
    s.n_tr = 500;
    s.readout_ms = 5.38;
    s.inversion_delay_ms = 20.0;
  } else if (name == "seq2" || name == "seq3") {
    s.n_tr = 400;
    s.readout_ms = 9.0;
  } else {
    fail("unknown builtin sequence '", name, "' (expected seq1, seq2 or seq3)");
  }
  s.flip_deg = detail::lobed_flip_train(s.n_tr);
  s.tr_ms.assign(size_t(s.n_tr), 12.0);
  s.te_ms.assign(size_t(s.n_tr), 2.0);
  s.validate();
  return s;
}

inline std::string serialize_sequence(const SequenceParams &s) {
  Config cfg;
  cfg.set("name", s.name);
  cfg.set_num("n_tr", s.n_tr);
  cfg.set_num("readout_ms", s.readout_ms);
  if (s.inversion_delay_ms) cfg.set_num("inversion_delay_ms", *s.inversion_delay_ms);
  cfg.set_numbers("flip_deg", s.flip_deg);
  cfg.set_numbers("tr_ms", s.tr_ms);
  cfg.set_numbers("te_ms", s.te_ms);
  return cfg.serialize();
}

inline SequenceParams load_sequence(const std::string &text,
                                    const std::string &source = "sequence") {
  Config cfg = Config::parse(text, source);
  SequenceParams s;
  s.name = cfg.get_str("name");
  s.n_tr = int(cfg.get_int("n_tr"));
  s.readout_ms = cfg.get_double("readout_ms");
  if (cfg.has("inversion_delay_ms"))
    s.inversion_delay_ms = cfg.get_double("inversion_delay_ms");
  s.flip_deg = cfg.get_list("flip_deg");
  s.tr_ms = cfg.get_list("tr_ms");
  s.te_ms = cfg.get_list("te_ms");
  s.validate();
  return s;
}

inline SequenceParams load_sequence_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open sequence file '", path, "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_sequence(buf.str(), path);
}

} // namespace mrfield
