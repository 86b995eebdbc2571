#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "convonet/error.hpp"

namespace convonet {

// RFC-4180 reader: quoted fields, doubled-quote escapes, embedded commas
// and newlines, CRLF or LF line endings.
class CsvReader {
 public:
  explicit CsvReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw InputError("cannot open CSV file: " + path);
  }

  // Reads one record; returns false at end of input.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    std::string field;
    bool quoted = false;
    while (true) {
      if (quoted) {
        if (c == EOF)
          throw InputError(path_ + ": unterminated quoted field at line " +
                           std::to_string(line_));
        if (c == '"') {
          int c2 = in_.get();
          if (c2 == '"') {
            field.push_back('"');
          } else {
            quoted = false;
            c = c2;
            continue;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(static_cast<char>(c));
        }
      } else {
        if (c == EOF || c == '\n') {
          if (c == '\n') ++line_;
          if (!field.empty() && field.back() == '\r') field.pop_back();
          fields.push_back(std::move(field));
          return true;
        }
        if (c == ',') {
          fields.push_back(std::move(field));
          field.clear();
        } else if (c == '"' && field.empty()) {
          quoted = true;
        } else {
          field.push_back(static_cast<char>(c));
        }
      }
      c = in_.get();
    }
  }

  std::size_t line() const { return line_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t line_ = 1;
};

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

// Fixed-width decimal keeps result CSVs byte-identical across reruns.
inline std::string format_real(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace convonet
