#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace platoon::csv {

/// Shortest-safe decimal form: 17 significant digits, so parsing it back
/// yields the identical double.
std::string format(double x);
double parse_double(std::string_view text);

void write_header(std::ostream& os, std::span<const std::string> columns);
void write_row(std::ostream& os, std::span<const double> values);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws if absent
};

Table read(std::istream& is);

}  // namespace platoon::csv
