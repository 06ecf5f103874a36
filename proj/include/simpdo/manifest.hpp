#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "simpdo/detail/text.hpp"

namespace simpdo {

/// Canonical decimal form of a double: shortest text that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Flat key=value configuration file. '#' starts a comment, blank lines are
/// skipped, keys may not repeat.
inline std::map<std::string, std::string> parse_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::strip_comment_and_trim(line);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string::npos) {
      detail::parse_fail(path, lineno, "expected key=value, got '" + s + "'");
    }
    std::string key = detail::strip_comment_and_trim(s.substr(0, eq));
    std::string value = detail::strip_comment_and_trim(s.substr(eq + 1));
    if (key.empty()) detail::parse_fail(path, lineno, "empty key");
    if (!kv.emplace(key, value).second) {
      detail::parse_fail(path, lineno, "duplicate key '" + key + "'");
    }
  }
  return kv;
}

/// Resolved configuration of one command invocation plus the artifacts it
/// produced. The config holds every knob as its canonical string, so a
/// manifest is sufficient to reproduce the run bit for bit (given the same
/// input files).
struct RunManifest {
  std::string run_id;
  std::string command;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> artifacts;
};

/// Deterministic run id: FNV-1a over the command and canonical config.
inline std::string config_hash_id(
    const std::string& command,
    const std::map<std::string, std::string>& config) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0x1f;
    h *= 1099511628211ULL;
  };
  mix(command);
  for (const auto& [k, v] : config) {
    mix(k);
    mix(v);
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

inline void save_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::ordered_json doc;
  doc["format"] = "simpdo-manifest";
  doc["version"] = 1;
  doc["run_id"] = m.run_id;
  doc["command"] = m.command;
  doc["config"] = m.config;
  doc["artifacts"] = m.artifacts;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << doc.dump(1, '\t') << '\n';
  if (!out) throw std::runtime_error("failed writing manifest: " + path);
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  if (doc.value("format", "") != "simpdo-manifest") {
    throw std::runtime_error(path + ": not a manifest file");
  }
  RunManifest m;
  m.run_id = doc.value("run_id", "");
  m.command = doc.value("command", "");
  for (const auto& [k, v] : doc.at("config").items()) {
    m.config[k] = v.get<std::string>();
  }
  if (doc.contains("artifacts")) {
    for (const auto& [k, v] : doc.at("artifacts").items()) {
      m.artifacts[k] = v.get<std::string>();
    }
  }
  return m;
}

/// Typed view over a resolved key=value map with uniform error messages.
class Options {
 public:
  explicit Options(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  const std::map<std::string, std::string>& map() const { return kv_; }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string gets(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
      throw std::invalid_argument("missing required option '" + key + "'");
    }
    return it->second;
  }

  int geti(const std::string& key) const {
    return static_cast<int>(parse_ll(key));
  }

  std::uint64_t getu(const std::string& key) const {
    const std::string s = gets(key);
    try {
      std::size_t used = 0;
      std::uint64_t v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("option '" + key +
                                  "' expects an unsigned integer, got '" + s +
                                  "'");
    }
  }

  double getd(const std::string& key) const {
    const std::string s = gets(key);
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("option '" + key +
                                  "' expects a number, got '" + s + "'");
    }
  }

  std::vector<int> get_int_list(const std::string& key) const {
    const std::string s = gets(key);
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = detail::strip_comment_and_trim(tok);
      if (tok.empty()) continue;
      try {
        std::size_t used = 0;
        out.push_back(std::stoi(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::invalid_argument("option '" + key +
                                    "' expects a comma list of integers");
      }
    }
    if (out.empty()) {
      throw std::invalid_argument("option '" + key + "' is empty");
    }
    return out;
  }

 private:
  long long parse_ll(const std::string& key) const {
    const std::string s = gets(key);
    try {
      std::size_t used = 0;
      long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("option '" + key +
                                  "' expects an integer, got '" + s + "'");
    }
  }

  std::map<std::string, std::string> kv_;
};

/// Defaults, then config file values, then explicit command line values.
inline Options resolve_options(
    const std::map<std::string, std::string>& defaults,
    const std::map<std::string, std::string>& cli) {
  std::map<std::string, std::string> kv = defaults;
  auto file_it = cli.find("config");
  if (file_it != cli.end()) {
    for (const auto& [k, v] : parse_config_file(file_it->second)) {
      if (k == "config") continue;
      kv[k] = v;
    }
  }
  for (const auto& [k, v] : cli) {
    if (k == "config") continue;
    kv[k] = v;
  }
  return Options(std::move(kv));
}

}  // namespace simpdo
