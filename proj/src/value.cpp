// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/value.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "relatape/error.hpp"

namespace relatape {
namespace {

std::strong_ordering compare_double(double a, double b) {
    const bool an = std::isnan(a), bn = std::isnan(b);
    if (an || bn) return an == bn ? std::strong_ordering::equal
                       : an        ? std::strong_ordering::greater
                                   : std::strong_ordering::less;
    if (a < b) return std::strong_ordering::less;
    if (a > b) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
}

template <typename T>
std::strong_ordering compare_seq(const std::vector<T>& a, const std::vector<T>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::strong_ordering c = std::strong_ordering::equal;
        if constexpr (std::is_same_v<T, double>) c = compare_double(a[i], b[i]);
        else c = a[i] <=> b[i];
        if (c != 0) return c;
    }
    return a.size() <=> b.size();
}

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

struct Civil {
    std::int64_t year;
    unsigned month, day, hour, minute, second;
    std::int64_t micros;
};

Civil to_civil(Datetime dt) {
    constexpr std::int64_t kDay = 86'400'000'000LL;
    std::int64_t days = dt.micros / kDay;
    std::int64_t rem = dt.micros % kDay;
    if (rem < 0) {
        rem += kDay;
        --days;
    }
    Civil c{};
    civil_from_days(days, c.year, c.month, c.day);
    c.micros = rem % 1'000'000;
    std::int64_t secs = rem / 1'000'000;
    c.hour = static_cast<unsigned>(secs / 3600);
    c.minute = static_cast<unsigned>((secs / 60) % 60);
    c.second = static_cast<unsigned>(secs % 60);
    return c;
}

std::string format_civil(Datetime dt, bool basic) {
    const Civil c = to_civil(dt);
    char buf[64];
    if (basic) {
        std::snprintf(buf, sizeof buf, "%04lld%02u%02uT%02u%02u%02u", static_cast<long long>(c.year),
                      c.month, c.day, c.hour, c.minute, c.second);
    } else {
        std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02u:%02u:%02u",
                      static_cast<long long>(c.year), c.month, c.day, c.hour, c.minute, c.second);
    }
    std::string out = buf;
    if (c.micros != 0) {
        std::snprintf(buf, sizeof buf, ".%06lld", static_cast<long long>(c.micros));
        out += buf;
    }
    return out + "Z";
}

} // namespace

std::strong_ordering compare(const Value& a, const Value& b) {
    if (a.index() != b.index()) return a.index() <=> b.index();
    return std::visit(
        [&](const auto& x) -> std::strong_ordering {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b);
            if constexpr (std::is_same_v<T, Null>) return std::strong_ordering::equal;
            else if constexpr (std::is_same_v<T, double>) return compare_double(x, y);
            else if constexpr (std::is_same_v<T, Datetime>) return x.micros <=> y.micros;
            else if constexpr (std::is_same_v<T, Uuid>) return x.bytes <=> y.bytes;
            else if constexpr (std::is_same_v<T, JsonText>) return x.canonical <=> y.canonical;
            else if constexpr (std::is_same_v<T, Bytes>) return compare_seq(x, y);
            else if constexpr (std::is_same_v<T, F64Array>) {
                if (auto c = compare_seq(x.shape, y.shape); c != 0) return c;
                return compare_seq(x.data, y.data);
            } else if constexpr (std::is_same_v<T, ObjectRef>) {
                if (auto c = x.address.path <=> y.address.path; c != 0) return c;
                if (auto c = x.address.content_hash <=> y.address.content_hash; c != 0) return c;
                if (auto c = x.address.size <=> y.address.size; c != 0) return c;
                if (auto c = x.address.scheme <=> y.address.scheme; c != 0) return c;
                return x.metadata.dump() <=> y.metadata.dump();
            } else {
                return x <=> y;
            }
        },
        a);
}

std::strong_ordering compare_rows(const Row& a, const Row& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
        if (auto c = compare(a[i], b[i]); c != 0) return c;
    return a.size() <=> b.size();
}

std::string to_display(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Null>) return "null";
            else if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
            else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
            else if constexpr (std::is_same_v<T, double>) return Json(x).dump();
            else if constexpr (std::is_same_v<T, std::string>) return x;
            else if constexpr (std::is_same_v<T, Datetime>) return format_datetime(x);
            else if constexpr (std::is_same_v<T, Uuid>) return format_uuid(x);
            else if constexpr (std::is_same_v<T, JsonText>) return x.canonical;
            else if constexpr (std::is_same_v<T, Bytes>) return "0x" + to_hex(x);
            else if constexpr (std::is_same_v<T, F64Array>) {
                return "f64_array" + Json(x.shape).dump();
            } else {
                std::string codec = x.metadata.value("codec", std::string("object"));
                std::string out = "<" + codec;
                if (x.metadata.contains("shape")) out += " shape=" + x.metadata["shape"].dump();
                return out + " " + x.address.content_hash.substr(0, 12) + ">";
            }
        },
        v);
}

Json to_json(const Value& v) {
    return std::visit(
        [](const auto& x) -> Json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Null>) return nullptr;
            else if constexpr (std::is_same_v<T, bool> || std::is_same_v<T, std::int64_t> ||
                               std::is_same_v<T, double> || std::is_same_v<T, std::string>)
                return x;
            else if constexpr (std::is_same_v<T, Datetime>) return format_datetime(x);
            else if constexpr (std::is_same_v<T, Uuid>) return format_uuid(x);
            else if constexpr (std::is_same_v<T, JsonText>) return Json::parse(x.canonical);
            else if constexpr (std::is_same_v<T, Bytes>) return to_hex(x);
            else if constexpr (std::is_same_v<T, F64Array>)
                return Json{{"data", x.data}, {"shape", x.shape}};
            else {
                return Json{{"$ref",
                             {{"hash", x.address.content_hash},
                              {"metadata", x.metadata},
                              {"path", x.address.path},
                              {"scheme", x.address.scheme == AddressScheme::Hash ? "hash" : "schema"},
                              {"size", x.address.size}}}};
            }
        },
        v);
}

Json to_json(const Record& r) {
    Json j = Json::object();
    for (const auto& [k, v] : r) j[k] = to_json(v);
    return j;
}

std::string canonical_json(const Json& j) { return j.dump(); }

std::string to_hex(const std::uint8_t* data, std::size_t size) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(size * 2);
    for (std::size_t i = 0; i < size; ++i) {
        out.push_back(kDigits[data[i] >> 4]);
        out.push_back(kDigits[data[i] & 0xf]);
    }
    return out;
}

std::string to_hex(const Bytes& bytes) { return to_hex(bytes.data(), bytes.size()); }

Bytes from_hex(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) throw Error(ErrorCode::TypeMismatch, "odd-length hex string");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw Error(ErrorCode::TypeMismatch, "invalid hex digit");
        out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return out;
}

Datetime parse_datetime(std::string_view text) {
    auto fail = [&]() -> Error {
        return Error(ErrorCode::TypeMismatch, "invalid datetime: '" + std::string(text) + "'");
    };
    std::size_t pos = 0;
    auto digits = [&](std::size_t n) -> std::int64_t {
        if (pos + n > text.size()) throw fail();
        std::int64_t v = 0;
        for (std::size_t i = 0; i < n; ++i) {
            char c = text[pos + i];
            if (c < '0' || c > '9') throw fail();
            v = v * 10 + (c - '0');
        }
        pos += n;
        return v;
    };
    auto expect = [&](char c) {
        if (pos >= text.size() || text[pos] != c) throw fail();
        ++pos;
    };
    const std::int64_t year = digits(4);
    expect('-');
    const auto month = static_cast<unsigned>(digits(2));
    expect('-');
    const auto day = static_cast<unsigned>(digits(2));
    if (month < 1 || month > 12 || day < 1 || day > 31) throw fail();
    std::int64_t hour = 0, minute = 0, second = 0, micros = 0;
    if (pos < text.size()) {
        if (text[pos] != 'T' && text[pos] != ' ') throw fail();
        ++pos;
        hour = digits(2);
        expect(':');
        minute = digits(2);
        if (pos < text.size() && text[pos] == ':') {
            ++pos;
            second = digits(2);
        }
        if (pos < text.size() && text[pos] == '.') {
            ++pos;
            std::size_t start = pos;
            while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
            std::string frac(text.substr(start, pos - start));
            if (frac.empty() || frac.size() > 6) throw fail();
            frac.resize(6, '0');
            micros = std::stoll(frac);
        }
        if (pos < text.size() && text[pos] == 'Z') ++pos;
        if (hour > 23 || minute > 59 || second > 60) throw fail();
    }
    if (pos != text.size()) throw fail();
    const std::int64_t days = days_from_civil(year, month, day);
    return Datetime{((days * 24 + hour) * 60 + minute) * 60'000'000LL + second * 1'000'000LL + micros};
}

std::string format_datetime(Datetime dt) { return format_civil(dt, false); }
std::string format_datetime_basic(Datetime dt) { return format_civil(dt, true); }

Uuid parse_uuid(std::string_view text) {
    std::string hex;
    for (char c : text)
        if (c != '-') hex.push_back(c);
    if (hex.size() != 32) throw Error(ErrorCode::TypeMismatch, "invalid uuid: '" + std::string(text) + "'");
    Bytes raw = from_hex(hex);
    Uuid u;
    std::copy(raw.begin(), raw.end(), u.bytes.begin());
    return u;
}

std::string format_uuid(const Uuid& u) {
    std::string hex = to_hex(u.bytes.data(), u.bytes.size());
    return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" +
           hex.substr(16, 4) + "-" + hex.substr(20);
}

} // namespace relatape
