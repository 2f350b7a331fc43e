#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cscopf {

/// Shortest decimal form that round-trips to the same double.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Comma-separated values without quoting; blank lines are skipped.
/// Throws InputError on ragged rows.
CsvTable parse_csv(std::string_view text);

double parse_number(const std::string& cell);

}  // namespace cscopf
