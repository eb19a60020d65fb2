#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dsvit {

std::string trim(std::string_view text);
/// Splits on `sep`; fields are trimmed. No quoting.
std::vector<std::string> split_fields(std::string_view line, char sep = ',');
/// printf-style "%.17g": round-trips every double.
std::string format_exact(double value);
/// Whole-string parse; false on trailing garbage, overflow or an empty field.
bool parse_double(const std::string& text, double& out);
bool parse_size(const std::string& text, std::size_t& out);

}  // namespace dsvit
