#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dlstm {

// Seconds since 1970-01-01T00:00:00Z. All timestamps are UTC.
using Timestamp = std::int64_t;

// Accepts "YYYY-MM-DDTHH:MM:SS" with an optional trailing 'Z'; a space is
// accepted in place of 'T'. Throws ParseError.
Timestamp parse_iso8601(std::string_view text);

// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(Timestamp t);

}  // namespace dlstm
