#pragma once

#include "mrfield/core.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>

namespace mrfield {

/// Plain-text key-value document. One `key value [value ...]` entry per
/// line, `#` starts a comment, keys are unique. The same schema backs
/// sequence files, phantom specs, pipeline configs and QMAP sidecars.
class Config {
public:
  Config() = default;

  static Config parse(const std::string &text, const std::string &source = "config") {
    Config cfg;
    cfg.source_ = source;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::string key;
      if (!(ls >> key)) continue;
      std::vector<std::string> values;
      std::string tok;
      while (ls >> tok) values.push_back(tok);
      if (cfg.entries_.count(key)) fail(source, ": duplicate key '", key, "'");
      cfg.order_.push_back(key);
      cfg.entries_[key] = std::move(values);
    }
    return cfg;
  }

  static Config load(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open config file '", path, "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  bool has(const std::string &key) const { return entries_.count(key) != 0; }

  const std::vector<std::string> &raw(const std::string &key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) fail(source_, ": missing key '", key, "'");
    return it->second;
  }

  std::string get_str(const std::string &key) const {
    const auto &v = raw(key);
    if (v.size() != 1) fail(source_, ": key '", key, "' expects a single value");
    return v[0];
  }
  std::string get_str(const std::string &key, const std::string &dflt) const {
    return has(key) ? get_str(key) : dflt;
  }

  double get_double(const std::string &key) const { return to_double(get_str(key), key); }
  double get_double(const std::string &key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
  }

  long get_int(const std::string &key) const {
    double d = get_double(key);
    long i = long(std::llround(d));
    if (double(i) != d) fail(source_, ": key '", key, "' expects an integer");
    return i;
  }
  long get_int(const std::string &key, long dflt) const {
    return has(key) ? get_int(key) : dflt;
  }

  std::vector<double> get_list(const std::string &key) const {
    const auto &v = raw(key);
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto &s : v) out.push_back(to_double(s, key));
    return out;
  }

  void set(const std::string &key, const std::string &value) { set_list(key, {value}); }
  template <typename T> void set_num(const std::string &key, T value) {
    set(key, cat(value));
  }
  void set_list(const std::string &key, std::vector<std::string> values) {
    if (!entries_.count(key)) order_.push_back(key);
    entries_[key] = std::move(values);
  }
  void set_numbers(const std::string &key, const std::vector<double> &values) {
    std::vector<std::string> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(cat(v));
    set_list(key, std::move(out));
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto &key : order_) {
      os << key;
      for (const auto &v : entries_.at(key)) os << ' ' << v;
      os << '\n';
    }
    return os.str();
  }

  void save(const std::string &path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write config file '", path, "'");
    out << serialize();
  }

  const std::vector<std::string> &keys() const { return order_; }

private:
  double to_double(const std::string &s, const std::string &key) const {
    try {
      size_t pos = 0;
      double d = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return d;
    } catch (const std::exception &) {
      fail(source_, ": key '", key, "' has non-numeric value '", s, "'");
    }
  }

  std::string source_ = "config";
  std::map<std::string, std::vector<std::string>> entries_;
  std::vector<std::string> order_;
};

} // namespace mrfield
