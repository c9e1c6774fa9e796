#pragma once

#include <charconv>
#include <string>
#include <vector>

namespace fedgreen::csv {

// Shortest representation that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::vector<std::string> split_line(const std::string &line, char sep = ',');

double parse_double(const std::string &s);
long long parse_int(const std::string &s);

}  // namespace fedgreen::csv
