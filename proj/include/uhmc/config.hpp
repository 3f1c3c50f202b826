#pragma once

// Flat experiment configs: `key = value` lines grouped under `[command]`
// sections, a key schema per command, and overrides from the command line.
// A CSV written by the toolkit is itself a valid config: its `# key=value`
// header block is read back as the section of the command that wrote it.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace uhmc::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { real, integer, count, text, real_list, count_list, boolean };

struct KeySpec {
  std::string name;
  Kind kind = Kind::real;
  std::string default_value;  ///< empty means unset
  std::string help;
  std::vector<std::string> choices;
};

/// Sections of a parsed file. The unnamed section "" holds keys that appear
/// before any header and applies to every command.
struct RawConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::string origin;
  std::string provenance_command;  ///< set when read from a CSV header
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace detail

/// Shortest-roundtrip-safe rendering: 17 significant digits.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_real(const std::string& key, const std::string& text) {
  const std::string t = detail::trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

inline long long parse_integer(const std::string& key, const std::string& text) {
  const std::string t = detail::trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& text) {
  const std::string t = detail::trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = detail::trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

/// Validates `text` against the spec and returns its canonical spelling,
/// so that a value read back from a header is byte-identical.
inline std::string canonical(const KeySpec& spec, const std::string& text) {
  const std::string t = detail::trim(text);
  if (t.empty()) return {};
  switch (spec.kind) {
    case Kind::real: return format_real(parse_real(spec.name, t));
    case Kind::integer: return std::to_string(parse_integer(spec.name, t));
    case Kind::count: return std::to_string(parse_count(spec.name, t));
    case Kind::boolean: return parse_bool(spec.name, t) ? "true" : "false";
    case Kind::real_list:
    case Kind::count_list: {
      std::string out;
      for (const auto& item : detail::split(t, ',')) {
        if (!out.empty()) out += ',';
        out += spec.kind == Kind::real_list ? format_real(parse_real(spec.name, item))
                                            : std::to_string(parse_count(spec.name, item));
      }
      return out;
    }
    case Kind::text:
    default:
      if (!spec.choices.empty()) {
        for (const auto& c : spec.choices)
          if (c == t) return t;
        std::string opts;
        for (const auto& c : spec.choices) opts += (opts.empty() ? "" : "|") + c;
        throw ConfigError(spec.name + ": expected one of " + opts + ", got '" + t + "'");
      }
      return t;
  }
}

/// Parses either a config file or a provenance header. A stream whose
/// first non-blank line is `# command=NAME` is a provenance header: every
/// following `# key=value` line up to the first non-comment line belongs
/// to section NAME, and `version` is dropped.
inline RawConfig parse(std::istream& in, const std::string& origin) {
  RawConfig cfg;
  cfg.origin = origin;
  std::string line;
  std::string section;
  int lineno = 0;
  bool first = true;
  bool provenance = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (first) {
      first = false;
      if (t.rfind("# command=", 0) == 0) {
        provenance = true;
        section = detail::trim(t.substr(10));
        cfg.provenance_command = section;
        cfg.sections[section];
        continue;
      }
    }
    if (provenance) {
      if (t[0] != '#') break;
      const std::string body = detail::trim(t.substr(1));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = detail::trim(body.substr(0, eq));
      if (key != "version") cfg.sections[section][key] = detail::trim(body.substr(eq + 1));
      continue;
    }
    if (t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(t.substr(1, t.size() - 2));
      cfg.sections[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    std::string value = detail::trim(t.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos)
      value = detail::trim(value.substr(0, hash));
    cfg.sections[section][key] = value;
  }
  return cfg;
}

inline RawConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return parse(in, path);
}

/// Fully resolved, canonical key/value set of one command.
class Resolved {
 public:
  Resolved() = default;
  Resolved(std::string command, std::map<std::string, std::string> values)
      : command_(std::move(command)), values_(std::move(values)) {}

  const std::string& command() const noexcept { return command_; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  bool has(const std::string& key) const { return !raw(key).empty(); }
  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key + ": not a key of command " + command_);
    return it->second;
  }
  std::string text(const std::string& key) const { return raw(key); }
  double real(const std::string& key) const { return parse_real(key, need(key)); }
  long long integer(const std::string& key) const { return parse_integer(key, need(key)); }
  std::uint64_t count(const std::string& key) const { return parse_count(key, need(key)); }
  bool flag(const std::string& key) const { return parse_bool(key, need(key)); }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : detail::split(need(key), ',')) out.push_back(parse_real(key, s));
    return out;
  }
  std::vector<std::uint64_t> counts(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& s : detail::split(need(key), ',')) out.push_back(parse_count(key, s));
    return out;
  }

 private:
  const std::string& need(const std::string& key) const {
    const std::string& v = raw(key);
    if (v.empty()) throw ConfigError(key + ": required but not set");
    return v;
  }

  std::string command_;
  std::map<std::string, std::string> values_;
};

/// defaults < file (unnamed section, then [command]) < overrides. Unknown
/// keys in any layer that applies to `command` are rejected by name.
inline Resolved resolve(const std::string& command, const std::vector<KeySpec>& schema,
                        const RawConfig* file,
                        const std::map<std::string, std::string>& overrides) {
  std::map<std::string, const KeySpec*> by_name;
  for (const auto& spec : schema) by_name[spec.name] = &spec;
  std::map<std::string, std::string> values;
  for (const auto& spec : schema) values[spec.name] = canonical(spec, spec.default_value);

  auto apply = [&](const std::map<std::string, std::string>& layer, const std::string& where) {
    for (const auto& [key, value] : layer) {
      const auto it = by_name.find(key);
      if (it == by_name.end())
        throw ConfigError(key + ": unknown key for command " + command + " (" + where + ")");
      values[key] = canonical(*it->second, value);
    }
  };
  if (file && !file->provenance_command.empty() && file->provenance_command != command)
    throw ConfigError("config: " + file->origin + " was written by command " +
                      file->provenance_command + ", not " + command);
  if (file) {
    if (auto it = file->sections.find(""); it != file->sections.end()) apply(it->second, file->origin);
    if (auto it = file->sections.find(command); it != file->sections.end())
      apply(it->second, file->origin + " [" + command + "]");
  }
  apply(overrides, "command line");
  return Resolved(command, std::move(values));
}

}  // namespace uhmc::config
