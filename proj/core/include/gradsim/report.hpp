#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace gradsim {

/// Shortest decimal form that reads back to the same double; "nan", "inf"
/// and "-inf" for non-finite values.
std::string format_double(double v);

/// RFC 4180 CSV: fields containing a comma, quote, CR or LF are quoted and
/// inner quotes doubled; records end with CRLF.
class CsvWriter {
public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  void row(const std::vector<std::string>& fields);
  static std::string quote(std::string_view field);

private:
  std::ostream& os_;
};

/// Parses RFC 4180 text back into records.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

} // namespace gradsim
