#include "hhmm/time_format.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "hhmm/errors.hpp"

namespace hhmm {

namespace {

int read_digits(std::string_view text, std::size_t pos, std::size_t count) {
    if (pos + count > text.size()) throw DataError("truncated timestamp '" + std::string(text) + "'");
    int value = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const char c = text[pos + k];
        if (c < '0' || c > '9') throw DataError("malformed timestamp '" + std::string(text) + "'");
        value = value * 10 + (c - '0');
    }
    return value;
}

void expect(std::string_view text, std::size_t pos, char c) {
    if (pos >= text.size() || text[pos] != c) {
        throw DataError("malformed timestamp '" + std::string(text) + "'");
    }
}

}  // namespace

std::int64_t parse_timestamp(std::string_view text) {
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    const int year = read_digits(text, 0, 4);
    expect(text, 4, '-');
    const int month = read_digits(text, 5, 2);
    expect(text, 7, '-');
    const int day = read_digits(text, 8, 2);
    if (text.size() <= 10 || (text[10] != 'T' && text[10] != ' ')) {
        throw DataError("malformed timestamp '" + std::string(text) + "'");
    }
    const int hour = read_digits(text, 11, 2);
    expect(text, 13, ':');
    const int minute = read_digits(text, 14, 2);
    int second = 0;
    std::size_t pos = 16;
    if (pos < text.size() && text[pos] == ':') {
        second = read_digits(text, pos + 1, 2);
        pos += 3;
        if (pos < text.size() && text[pos] == '.') {
            ++pos;
            while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
        }
    }
    if (pos < text.size() && text[pos] == 'Z') ++pos;
    if (pos != text.size()) throw DataError("malformed timestamp '" + std::string(text) + "'");

    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) {
        throw DataError("invalid date or time in timestamp '" + std::string(text) + "'");
    }
    const auto days_since = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days_since) * 86400 + hour * 3600 + minute * 60 + second;
}

std::string format_timestamp(std::int64_t seconds) {
    using namespace std::chrono;
    std::int64_t days = seconds / 86400;
    std::int64_t rem = seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

}  // namespace hhmm
