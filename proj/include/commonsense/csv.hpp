#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace commonsense::csv {

/// One parsed record with its 1-based starting line in the source.
struct Record {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

/// RFC 4180 reader: comma separated, double-quote escaping, LF or CRLF line
/// ends. Lines starting with '#' before the header are skipped (schema
/// banners written by this tool).
class Reader {
 public:
  Reader(std::istream& in, std::string source_name);

  /// Header row; throws ValidationError if the input is empty.
  const std::vector<std::string>& header() const { return header_; }

  /// Column index of `name` or throws ValidationError naming the source.
  std::size_t require_column(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;

  /// Next data record; std::nullopt at end of input. Blank lines are skipped.
  std::optional<Record> next();

  const std::string& source_name() const { return source_; }

 private:
  bool read_record(Record& out);

  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
  std::vector<std::string> header_;
};

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

/// Writes one row terminated by '\n'.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest round-trippable rendering of a double ("%.17g" trimmed).
std::string format_double(double value);

/// Fixed-point rendering, e.g. format_fixed(0.8236, 4) == "0.8236".
std::string format_fixed(double value, int decimals);

/// Parses a finite double; std::nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);

}  // namespace commonsense::csv
