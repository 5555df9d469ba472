// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "relatape/value.hpp"

namespace relatape {

enum class TypeLayer { Native, Core, Codec };
enum class StoreHint { Inline, HashAddressed, SchemaAddressed };

/// Value domain an attribute type accepts, independent of its layer.
enum class ValueKind { Int, Float, String, Bool, Datetime, Uuid, Json, Bytes, Codec };

struct TypeSpec {
    TypeLayer layer = TypeLayer::Core;
    std::string name;                  // int64, varchar, text, f64_array ...
    std::vector<std::int64_t> params;  // varchar length, decimal precision ...
    std::string codec_id;              // codec layer only
    StoreHint store = StoreHint::Inline;

    bool operator==(const TypeSpec&) const = default;

    /// Renders the type back to its definition-language token.
    std::string token() const;
    ValueKind kind() const;
};

/// Parses `int64`, `varchar(16)`, `<f64_array>`, `<blob@schema>`, native SQL tokens.
/// Throws Error(InvalidDefinition) on an unknown token.
TypeSpec parse_type(std::string_view token);

TypeSpec core_type(std::string_view name, std::vector<std::int64_t> params = {});
TypeSpec codec_type(std::string_view codec_id, StoreHint store = StoreHint::HashAddressed);

/// Checks `value` against `spec` and returns its normalized form (e.g. int widened to
/// float64, datetime strings parsed). Null is returned unchanged; nullability is the
/// caller's concern. Throws Error(TypeMismatch).
Value conform(const TypeSpec& spec, const Value& value);

/// Reads a definition-language / CLI literal (`42`, `"abc"`, `null`, `s1`).
Value parse_literal(const TypeSpec& spec, std::string_view text);
/// Reads the canonical JSON form written by `to_json`.
Value value_from_json(const TypeSpec& spec, const Json& j);

/// Deterministic byte encoding of an inline value: little-endian fixed-width numbers,
/// datetimes as UTC microseconds, uuids as 16 raw bytes, json in canonical text.
Bytes canonical_bytes(const Value& v);
Bytes canonical_bytes(const Row& values);

struct Encoded {
    Bytes payload;
    Json metadata = Json::object();
};

class Codec {
public:
    virtual ~Codec() = default;

    virtual std::string id() const = 0;
    virtual int version() const = 0;
    /// Identifies the serialization behavior; two codecs with the same id and version
    /// must agree on it.
    virtual std::string fingerprint() const = 0;
    virtual std::string extension() const = 0;

    virtual Encoded encode(const Value& value) const = 0;
    virtual Value decode(const Bytes& payload, const Json& metadata) const = 0;
    /// Summary computed from metadata alone.
    virtual Json describe(const Json& metadata) const = 0;
    /// Whether `value` is in this codec's domain.
    virtual bool accepts(const Value& value) const = 0;
};

/// n-dimensional float64 array: row-major little-endian payload, metadata {shape, dtype}.
class F64ArrayCodec final : public Codec {
public:
    std::string id() const override { return "f64_array"; }
    int version() const override { return 1; }
    std::string fingerprint() const override { return "f64_array:1:le-f64-row-major"; }
    std::string extension() const override { return "f64"; }
    Encoded encode(const Value& value) const override;
    Value decode(const Bytes& payload, const Json& metadata) const override;
    Json describe(const Json& metadata) const override;
    bool accepts(const Value& value) const override;
};

/// Opaque bytes.
class BlobCodec final : public Codec {
public:
    std::string id() const override { return "blob"; }
    int version() const override { return 1; }
    std::string fingerprint() const override { return "blob:1:raw"; }
    std::string extension() const override { return "bin"; }
    Encoded encode(const Value& value) const override;
    Value decode(const Bytes& payload, const Json& metadata) const override;
    Json describe(const Json& metadata) const override;
    bool accepts(const Value& value) const override;
};

class CodecRegistry {
public:
    /// Registry preloaded with `f64_array` and `blob`.
    static CodecRegistry with_builtins();

    /// Re-registering an identical codec is a no-op; same id+version with another
    /// fingerprint throws Error(DuplicateCodec).
    void register_codec(std::shared_ptr<const Codec> codec);

    /// Latest version when `version` is empty. Throws Error(UnknownCodec).
    std::shared_ptr<const Codec> resolve(std::string_view id, std::optional<int> version = {}) const;
    bool contains(std::string_view id) const;
    std::size_t size() const { return codecs_.size(); }

private:
    std::map<std::pair<std::string, int>, std::shared_ptr<const Codec>, std::less<>> codecs_;
};

struct CodecPayload {
    std::string codec_id;
    int version = 0;
    Bytes payload;
    Json metadata = Json::object();
};

/// Inline scalar or codec payload awaiting object storage.
using StoredForm = std::variant<Value, CodecPayload>;

StoredForm encode_value(const TypeSpec& spec, const Value& value, const CodecRegistry& codecs);

class ObjectLoader {
public:
    virtual ~ObjectLoader() = default;
    virtual Bytes load(const std::string& path) const = 0;
};

/// Handle to a stored codec value. Metadata is available immediately; the payload is
/// fetched, hash-verified and decoded on the first `materialize()`.
class LazyRef {
public:
    LazyRef(ObjectRef ref, std::shared_ptr<const Codec> codec, std::shared_ptr<const ObjectLoader> loader);

    const ObjectAddress& address() const { return ref_.address; }
    const Json& metadata() const { return ref_.metadata; }
    const ObjectRef& ref() const { return ref_; }
    Json describe() const { return codec_->describe(ref_.metadata); }
    std::vector<std::int64_t> shape() const;

    bool is_materialized() const;
    /// Throws Error(CorruptPayload) when the payload does not match its content hash.
    const Value& materialize() const;

private:
    ObjectRef ref_;
    std::shared_ptr<const Codec> codec_;
    std::shared_ptr<const ObjectLoader> loader_;
    struct Cache {
        std::mutex mutex;
        std::optional<Value> value;
    };
    std::shared_ptr<Cache> cache_;
};

using Decoded = std::variant<Value, LazyRef>;

/// Inline values come back materialized; object references become LazyRef; a
/// not-yet-stored CodecPayload is decoded directly.
Decoded decode_value(const TypeSpec& spec, const StoredForm& stored, const CodecRegistry& codecs,
                     std::shared_ptr<const ObjectLoader> loader);

} // namespace relatape
