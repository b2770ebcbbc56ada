#pragma once

#include <string>
#include <vector>

namespace xrnet {

// printf-style formatting into a std::string.
std::string str_printf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

// Splits on a single separator; keeps empty fields.
std::vector<std::string> split(const std::string& text, char sep);

// Shortest decimal form that parses back to exactly the same double.
std::string format_exact(double value);

}  // namespace xrnet
