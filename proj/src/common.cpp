#include "opinionmap/common.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>

namespace opinionmap {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::unknown_entity: return "unknown_entity";
    case ErrorCode::duplicate_entity: return "duplicate_entity";
    case ErrorCode::malformed_record: return "malformed_record";
    case ErrorCode::single_class: return "single_class";
    case ErrorCode::vocabulary_mismatch: return "vocabulary_mismatch";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::invariant_violation: return "invariant_violation";
    case ErrorCode::already_published: return "already_published";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::stale_lease: return "stale_lease";
    case ErrorCode::not_claimed: return "not_claimed";
    case ErrorCode::unknown_annotator: return "unknown_annotator";
    case ErrorCode::annotation_incomplete: return "annotation_incomplete";
    case ErrorCode::unavailable: return "unavailable";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::config_error: return "config_error";
    }
    return "unknown";
}

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len) {
    if (pos + len > text.size()) throw std::invalid_argument("truncated");
    int value = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) throw std::invalid_argument("digit");
        value = value * 10 + (text[i] - '0');
    }
    return value;
}

}  // namespace

TimePoint parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    auto fail = [&]() -> TimePoint {
        throw Error(ErrorCode::malformed_record, "bad timestamp '" + std::string(text) + "'");
    };
    try {
        if (text.size() < 10 || text[4] != '-' || text[7] != '-') return fail();
        const year_month_day ymd{year{read_int(text, 0, 4)}, month{static_cast<unsigned>(read_int(text, 5, 2))},
                                 day{static_cast<unsigned>(read_int(text, 8, 2))}};
        if (!ymd.ok()) return fail();
        TimePoint t = sys_days{ymd};
        std::size_t pos = 10;
        if (pos == text.size()) return t;
        if (text[pos] != 'T' && text[pos] != ' ') return fail();
        ++pos;
        if (pos + 8 > text.size() || text[pos + 2] != ':' || text[pos + 5] != ':') return fail();
        const int hh = read_int(text, pos, 2), mm = read_int(text, pos + 3, 2), ss = read_int(text, pos + 6, 2);
        if (hh > 23 || mm > 59 || ss > 60) return fail();
        t += hours{hh} + minutes{mm} + seconds{ss};
        pos += 8;
        if (pos < text.size() && text[pos] == '.') {
            ++pos;
            while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        }
        if (pos == text.size()) return t;
        if (text[pos] == 'Z' && pos + 1 == text.size()) return t;
        if ((text[pos] == '+' || text[pos] == '-') && pos + 6 == text.size() && text[pos + 3] == ':') {
            const int sign = text[pos] == '+' ? 1 : -1;
            const auto offset = hours{read_int(text, pos + 1, 2)} + minutes{read_int(text, pos + 4, 2)};
            return t - sign * offset;
        }
        return fail();
    } catch (const std::invalid_argument&) {
        return fail();
    }
}

Day parse_day(std::string_view text) { return day_of(parse_timestamp(text)); }

std::string format_timestamp(TimePoint t) {
    using namespace std::chrono;
    const auto d = floor<days>(t);
    const year_month_day ymd{d};
    const hh_mm_ss hms{t - d};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

std::string format_day(Day d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_double(double v) {
    // Shortest text that reads back to the same double.
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
    return std::string(buf, end);
}

}  // namespace opinionmap
