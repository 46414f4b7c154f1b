#include "commonsense/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "commonsense/error.hpp"

namespace commonsense::csv {

Reader::Reader(std::istream& in, std::string source_name)
    : in_(in), source_(std::move(source_name)) {
  Record record;
  while (read_record(record)) {
    if (record.fields.size() == 1 && record.fields[0].empty()) continue;
    if (!record.fields.empty() && !record.fields[0].empty() && record.fields[0][0] == '#') continue;
    header_ = std::move(record.fields);
    return;
  }
  throw ValidationError(source_, 1, "empty file, expected a header row");
}

std::optional<std::size_t> Reader::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Reader::require_column(std::string_view name) const {
  if (auto idx = find_column(name)) return *idx;
  throw ValidationError(source_, 1, "missing required column '" + std::string(name) + "'");
}

std::optional<Record> Reader::next() {
  Record record;
  while (read_record(record)) {
    if (record.fields.size() == 1 && record.fields[0].empty()) continue;
    return record;
  }
  return std::nullopt;
}

bool Reader::read_record(Record& out) {
  out.fields.clear();
  int c = in_.get();
  if (c == std::char_traits<char>::eof()) return false;
  ++line_;
  out.line = line_;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  for (;; c = in_.get()) {
    if (c == std::char_traits<char>::eof()) {
      if (quoted) throw ValidationError(source_, out.line, "unterminated quoted field");
      break;
    }
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          field.push_back('"');
          in_.get();
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && field.empty() && !field_was_quoted) {
      quoted = true;
      field_was_quoted = true;
    } else if (ch == ',') {
      out.fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (ch == '\n') {
      break;
    } else if (ch == '\r' && in_.peek() == '\n') {
      continue;
    } else {
      field.push_back(ch);
    }
  }
  out.fields.push_back(std::move(field));
  return true;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

std::string format_double(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  if (ec != std::errc{}) return "nan";
  return std::string(buffer, end);
}

std::string format_fixed(double value, int decimals) {
  char buffer[64];
  // Avoid "-0.0" for tiny negatives.
  const double scale = std::pow(10.0, decimals);
  if (std::round(value * scale) == 0.0) value = 0.0;
  std::snprintf(buffer, sizeof buffer, "%.*f", decimals, value);
  return buffer;
}

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace commonsense::csv
