#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "uhmc/config.hpp"

namespace uhmc::csv {

using config::format_real;

inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Single writer per output: provenance block, then one header row, then
/// data rows, each flushed in call order.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(&out) {}

  /// `# command=...`, `# version=...`, then every resolved key in order.
  void provenance(const config::Resolved& cfg, const std::string& version) {
    *out_ << "# command=" << cfg.command() << '\n';
    *out_ << "# version=" << version << '\n';
    for (const auto& [key, value] : cfg.values()) *out_ << "# " << key << '=' << value << '\n';
  }

  void header(const std::vector<std::string>& columns) {
    width_ = columns.size();
    row(columns);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) *out_ << ',';
      *out_ << quote(fields[i]);
    }
    for (std::size_t i = fields.size(); i < width_; ++i) *out_ << ',';
    *out_ << '\n';
    out_->flush();
  }

 private:
  std::ostream* out_;
  std::size_t width_ = 0;
};

inline std::string num(double v) { return format_real(v); }
inline std::string num(std::uint64_t v) { return std::to_string(v); }
inline std::string num(long long v) { return std::to_string(v); }
inline std::string num(int v) { return std::to_string(v); }

}  // namespace uhmc::csv
