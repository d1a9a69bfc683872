#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace hhmm {

// ISO-8601 "YYYY-MM-DDTHH:MM[:SS[.fff]][Z]" (a space may replace the T) to
// seconds since the Unix epoch. Fractional seconds are truncated. Timestamps
// carry no zone arithmetic; a trailing Z is accepted and ignored. Throws
// DataError on anything else.
std::int64_t parse_timestamp(std::string_view text);

// "YYYY-MM-DDTHH:MM:SS".
std::string format_timestamp(std::int64_t seconds);

}  // namespace hhmm
