#pragma once

// Minimal RFC-4180 CSV reading and writing.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hhlink/error.hpp"

namespace hhlink::csv {

struct Record {
  /// 1-based line on which the record starts.
  std::size_t line = 0;
  std::vector<std::string> fields;
};

/// Splits text into records. Quoted fields may contain commas, doubled
/// quotes and line breaks. CRLF and LF endings are both accepted.
inline std::vector<Record> parse(std::string_view text) {
  std::vector<Record> out;
  std::size_t i = 0, line = 1;
  while (i < text.size()) {
    Record rec;
    rec.line = line;
    std::string field;
    bool done = false;
    while (!done) {
      field.clear();
      if (i < text.size() && text[i] == '"') {
        ++i;
        for (;;) {
          if (i >= text.size()) throw Error(ErrorCode::Parse, "line " + std::to_string(rec.line) + ": unterminated quote");
          const char c = text[i++];
          if (c == '"') {
            if (i < text.size() && text[i] == '"') {
              field += '"';
              ++i;
            } else {
              break;
            }
          } else {
            if (c == '\n') ++line;
            field += c;
          }
        }
        if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          throw Error(ErrorCode::Parse, "line " + std::to_string(line) + ": text after closing quote");
        }
      } else {
        while (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') field += text[i++];
      }
      rec.fields.push_back(field);
      if (i >= text.size()) {
        done = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        if (text[i] == '\r') ++i;
        if (i < text.size() && text[i] == '\n') ++i;
        ++line;
        done = true;
      }
    }
    if (!(rec.fields.size() == 1 && rec.fields[0].empty())) out.push_back(std::move(rec));
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void append_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += escape(fields[i]);
  }
  out += '\n';
}

/// Fixed-point with the given number of decimals.
inline std::string fixed(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// Shortest text that reads back to exactly the same double.
inline std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// A parsed file with a header, giving column access by name.
class Table {
 public:
  Table(std::string source, std::string_view text, const std::vector<std::string>& required)
      : source_(std::move(source)), records_(parse(text)) {
    if (records_.empty()) throw Error(ErrorCode::Schema, source_ + ": missing header");
    const auto& header = records_.front().fields;
    for (std::size_t i = 0; i < header.size(); ++i) index_[header[i]] = i;
    for (const auto& col : required) {
      if (!index_.count(col)) throw Error(ErrorCode::Schema, source_ + ": missing column '" + col + "'");
    }
    for (std::size_t r = 1; r < records_.size(); ++r) {
      if (records_[r].fields.size() != header.size()) {
        throw Error(ErrorCode::Schema, source_ + " line " + std::to_string(records_[r].line) + ": expected " +
                                           std::to_string(header.size()) + " fields, got " +
                                           std::to_string(records_[r].fields.size()));
      }
    }
  }

  static Table load(const std::string& path, const std::vector<std::string>& required) {
    return Table(path, read_file(path), required);
  }

  std::size_t rows() const noexcept { return records_.size() - 1; }
  bool has(const std::string& col) const { return index_.count(col) != 0; }
  std::size_t line(std::size_t row) const { return records_[row + 1].line; }

  const std::string& get(std::size_t row, const std::string& col) const {
    return records_[row + 1].fields[index_.at(col)];
  }

  long long get_int(std::size_t row, const std::string& col) const {
    const auto& s = get(row, col);
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail(row, col, "integer");
    return v;
  }

  double get_double(std::size_t row, const std::string& col) const {
    const auto& s = get(row, col);
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail(row, col, "number");
    return v;
  }

  [[noreturn]] void fail(std::size_t row, const std::string& col, const std::string& what) const {
    throw Error(ErrorCode::Parse, source_ + " line " + std::to_string(line(row)) + ": column '" + col + "' is not a valid " +
                                      what + " ('" + get(row, col) + "')");
  }

  const std::string& source() const noexcept { return source_; }

 private:
  std::string source_;
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace hhlink::csv
