#pragma once

#include <cstdlib>
#include <istream>
#include <string>
#include <vector>

#include "slicebench/core.hpp"

namespace slicebench {

// RFC-4180-ish record reader: double-quoted fields, "" escapes, quoted
// newlines, CRLF tolerated. Reads one record per call.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in, char delim = ',') : in_(in), delim_(delim) {}

  // Returns false at EOF. Blank lines are skipped. line() reports the
  // 1-based line the last record started on.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    std::string raw;
    for (;;) {
      if (!std::getline(in_, raw)) return false;
      ++line_;
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      if (!raw.empty()) break;
    }
    record_line_ = line_;
    std::string field;
    bool quoted = false;
    size_t i = 0;
    for (;;) {
      if (i >= raw.size()) {
        if (!quoted) break;
        // newline inside a quoted field: pull the next physical line
        std::string cont;
        if (!std::getline(in_, cont)) fail(Errc::malformed_row, "unterminated quote");
        ++line_;
        if (!cont.empty() && cont.back() == '\r') cont.pop_back();
        field.push_back('\n');
        raw = std::move(cont);
        i = 0;
        continue;
      }
      char c = raw[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < raw.size() && raw[i + 1] == '"') {
            field.push_back('"');
            ++i;
          } else {
            quoted = false;
          }
        } else {
          field.push_back(c);
        }
      } else if (c == '"' && field.empty()) {
        quoted = true;
      } else if (c == delim_) {
        fields.push_back(std::move(field));
        field.clear();
      } else {
        field.push_back(c);
      }
      ++i;
    }
    fields.push_back(std::move(field));
    return true;
  }

  size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  char delim_;
  size_t line_ = 0;
  size_t record_line_ = 0;
};

inline std::string csv_escape(const std::string& field, char delim = ',') {
  bool needs = false;
  for (char c : field)
    if (c == delim || c == '"' || c == '\n' || c == '\r') {
      needs = true;
      break;
    }
  if (!needs) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string csv_join(const std::vector<std::string>& fields, char delim = ',') {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(delim);
    out += csv_escape(fields[i], delim);
  }
  return out;
}

inline bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  out = v;
  return true;
}

inline bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  if (!(v == v) || v > 1.7e308 || v < -1.7e308) return false;
  out = v;
  return true;
}

}  // namespace slicebench
