// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace relatape {

using Json = nlohmann::json;

struct Null {
    bool operator==(const Null&) const = default;
};

/// UTC instant with microsecond resolution.
struct Datetime {
    std::int64_t micros = 0;
    bool operator==(const Datetime&) const = default;
};

struct Uuid {
    std::array<std::uint8_t, 16> bytes{};
    bool operator==(const Uuid&) const = default;
};

/// JSON document held in canonical text form (sorted keys, no whitespace).
struct JsonText {
    std::string canonical;
    bool operator==(const JsonText&) const = default;
};

using Bytes = std::vector<std::uint8_t>;

/// Dense row-major float64 array; product(shape) == data.size().
struct F64Array {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    bool operator==(const F64Array&) const = default;
};

enum class AddressScheme { Hash, Schema };

struct ObjectAddress {
    AddressScheme scheme = AddressScheme::Hash;
    std::string path;
    std::string content_hash;  // lowercase hex SHA-256
    std::uint64_t size = 0;
    bool operator==(const ObjectAddress&) const = default;
};

/// Tuple-side handle of a codec value living in the object store.
struct ObjectRef {
    ObjectAddress address;
    Json metadata = Json::object();
    bool operator==(const ObjectRef&) const = default;
};

using Value = std::variant<Null, bool, std::int64_t, double, std::string, Datetime, Uuid,
                           JsonText, Bytes, F64Array, ObjectRef>;

/// Positional tuple, aligned with a heading.
using Row = std::vector<Value>;
/// Named tuple.
using Record = std::map<std::string, Value>;

inline bool is_null(const Value& v) { return std::holds_alternative<Null>(v); }

/// Total order over values: by alternative first, then by content.
std::strong_ordering compare(const Value& a, const Value& b);
std::strong_ordering compare_rows(const Row& a, const Row& b);

struct ValueLess {
    bool operator()(const Value& a, const Value& b) const { return compare(a, b) < 0; }
};
struct RowLess {
    bool operator()(const Row& a, const Row& b) const { return compare_rows(a, b) < 0; }
};

/// Short human-readable rendering (no object-store access).
std::string to_display(const Value& v);

/// Canonical JSON form used by snapshots, rows files and key records.
Json to_json(const Value& v);
Json to_json(const Record& r);

std::string canonical_json(const Json& j);

std::string to_hex(const std::uint8_t* data, std::size_t size);
std::string to_hex(const Bytes& bytes);
Bytes from_hex(std::string_view hex);

Datetime parse_datetime(std::string_view text);
/// `2024-01-02T03:04:05Z`, with `.ffffff` only when micros are non-zero.
std::string format_datetime(Datetime dt);
/// ISO-8601 basic form: `20240102T030405Z` (`.ffffff` when needed).
std::string format_datetime_basic(Datetime dt);

Uuid parse_uuid(std::string_view text);
std::string format_uuid(const Uuid& u);

} // namespace relatape
