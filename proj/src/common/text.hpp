#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace batchal::text {

std::vector<std::string_view> split(std::string_view line, char delimiter);
std::vector<std::string_view> split_whitespace(std::string_view line);
std::string_view trim(std::string_view s);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// Shortest representation that parses back to the identical double.
std::string format_double(double value);

}  // namespace batchal::text
