#include "fedgreen/csv.hpp"

#include "fedgreen/error.hpp"

namespace fedgreen::csv {

std::vector<std::string> split_line(const std::string &line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string &s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorKind::invalid_input, "not a number: '" + s + "'");
  return v;
}

long long parse_int(const std::string &s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorKind::invalid_input, "not an integer: '" + s + "'");
  return v;
}

}  // namespace fedgreen::csv
