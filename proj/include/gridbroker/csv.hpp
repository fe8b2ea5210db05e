// Minimal RFC 4180 writer: comma separated, LF line endings, fields quoted
// only when they contain a comma, quote or line break. Doubles are written
// in the shortest form that reads back to the same value.
#pragma once

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <string_view>

namespace gridbroker::csv {

inline std::string format(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string quote(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  Writer& field(std::string_view s) {
    sep();
    out_ << quote(s);
    return *this;
  }
  Writer& field(const char* s) { return field(std::string_view(s)); }
  Writer& field(const std::string& s) { return field(std::string_view(s)); }
  Writer& field(double v) {
    sep();
    out_ << format(v);
    return *this;
  }
  Writer& field(int v) {
    sep();
    out_ << v;
    return *this;
  }
  Writer& field(long v) {
    sep();
    out_ << v;
    return *this;
  }
  template <typename... Ts>
  Writer& row(const Ts&... values) {
    (field(values), ...);
    return end();
  }
  Writer& end() {
    out_ << '\n';
    first_ = true;
    return *this;
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }

  std::ostream& out_;
  bool first_ = true;
};

}  // namespace gridbroker::csv
