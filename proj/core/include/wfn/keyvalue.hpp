#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wfn {

/// Ordered `key = value` entries.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
/// Duplicate keys and lines without '=' raise ConfigError.
KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& entries);

bool parse_bool(std::string_view key, std::string_view value);
std::int64_t parse_int(std::string_view key, std::string_view value);
double parse_double(std::string_view key, std::string_view value);
std::string format_double(double v);

}  // namespace wfn
