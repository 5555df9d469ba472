// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/types.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

#include "relatape/error.hpp"
#include "relatape/hash.hpp"

namespace relatape {
namespace {

const std::map<std::string, ValueKind, std::less<>>& native_kinds() {
    static const std::map<std::string, ValueKind, std::less<>> kinds = {
        {"tinyint", ValueKind::Int},     {"smallint", ValueKind::Int},    {"int", ValueKind::Int},
        {"integer", ValueKind::Int},     {"bigint", ValueKind::Int},      {"float", ValueKind::Float},
        {"double", ValueKind::Float},    {"real", ValueKind::Float},      {"decimal", ValueKind::Float},
        {"text", ValueKind::String},     {"char", ValueKind::String},     {"time", ValueKind::String},
        {"date", ValueKind::Datetime},   {"timestamp", ValueKind::Datetime},
        {"boolean", ValueKind::Bool},    {"blob", ValueKind::Bytes},      {"longblob", ValueKind::Bytes},
        {"mediumblob", ValueKind::Bytes},
    };
    return kinds;
}

const std::map<std::string, ValueKind, std::less<>>& core_kinds() {
    static const std::map<std::string, ValueKind, std::less<>> kinds = {
        {"int64", ValueKind::Int},       {"float64", ValueKind::Float}, {"varchar", ValueKind::String},
        {"datetime", ValueKind::Datetime}, {"uuid", ValueKind::Uuid},   {"json", ValueKind::Json},
        {"bool", ValueKind::Bool},       {"bytes", ValueKind::Bytes},
    };
    return kinds;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

Error mismatch(const TypeSpec& spec, const Value& v, std::string_view why = {}) {
    std::string msg = "value " + to_display(v) + " does not conform to " + spec.token();
    if (!why.empty()) msg += " (" + std::string(why) + ")";
    return Error(ErrorCode::TypeMismatch, msg);
}

std::size_t utf8_length(std::string_view s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_bytes(Bytes& out, const void* data, std::size_t n) {
    put_u64(out, n);
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
}

} // namespace

std::string TypeSpec::token() const {
    if (layer == TypeLayer::Codec) {
        std::string out = "<" + codec_id;
        if (store == StoreHint::SchemaAddressed) out += "@schema";
        return out + ">";
    }
    std::string out = name;
    if (!params.empty()) {
        out += "(";
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(params[i]);
        }
        out += ")";
    }
    return out;
}

ValueKind TypeSpec::kind() const {
    if (layer == TypeLayer::Codec) return ValueKind::Codec;
    const auto& table = layer == TypeLayer::Core ? core_kinds() : native_kinds();
    auto it = table.find(name);
    return it == table.end() ? ValueKind::String : it->second;
}

TypeSpec parse_type(std::string_view raw) {
    std::string_view token = raw;
    while (!token.empty() && std::isspace(static_cast<unsigned char>(token.front()))) token.remove_prefix(1);
    while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back()))) token.remove_suffix(1);
    auto unknown = [&]() { return Error(ErrorCode::InvalidDefinition, "unknown type token '" + std::string(raw) + "'"); };
    if (token.empty()) throw unknown();

    if (token.front() == '<') {
        if (token.back() != '>') throw unknown();
        std::string_view inner = token.substr(1, token.size() - 2);
        TypeSpec spec;
        spec.layer = TypeLayer::Codec;
        spec.store = StoreHint::HashAddressed;
        if (auto at = inner.find('@'); at != std::string_view::npos) {
            std::string_view hint = inner.substr(at + 1);
            inner = inner.substr(0, at);
            if (hint == "schema") spec.store = StoreHint::SchemaAddressed;
            else if (hint != "hash") throw unknown();
        }
        if (inner.empty() || !std::islower(static_cast<unsigned char>(inner.front())) ||
            !std::all_of(inner.begin(), inner.end(), [](char c) {
                return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
            }))
            throw unknown();
        spec.codec_id = std::string(inner);
        spec.name = spec.codec_id;
        return spec;
    }

    std::string_view base = token;
    std::vector<std::int64_t> params;
    if (auto open = token.find('('); open != std::string_view::npos) {
        if (token.back() != ')') throw unknown();
        base = token.substr(0, open);
        std::string_view args = token.substr(open + 1, token.size() - open - 2);
        while (true) {
            auto comma = args.find(',');
            std::string_view arg = args.substr(0, comma);
            while (!arg.empty() && arg.front() == ' ') arg.remove_prefix(1);
            while (!arg.empty() && arg.back() == ' ') arg.remove_suffix(1);
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), v);
            if (ec != std::errc() || p != arg.data() + arg.size() || v < 0) throw unknown();
            params.push_back(v);
            if (comma == std::string_view::npos) break;
            args.remove_prefix(comma + 1);
        }
    }

    if (core_kinds().contains(base)) {
        const bool is_varchar = base == "varchar";
        if (is_varchar != (params.size() == 1) || (is_varchar && (params[0] < 1 || params[0] > 65535)))
            throw unknown();
        return TypeSpec{TypeLayer::Core, std::string(base), std::move(params), {}, StoreHint::Inline};
    }
    const std::string lowered = lower(base);
    if (native_kinds().contains(lowered)) {
        return TypeSpec{TypeLayer::Native, lowered, std::move(params), {}, StoreHint::Inline};
    }
    throw unknown();
}

TypeSpec core_type(std::string_view name, std::vector<std::int64_t> params) {
    std::string token(name);
    for (std::size_t i = 0; i < params.size(); ++i) token += (i ? "," : "(") + std::to_string(params[i]);
    if (!params.empty()) token += ")";
    return parse_type(token);
}

TypeSpec codec_type(std::string_view codec_id, StoreHint store) {
    return TypeSpec{TypeLayer::Codec, std::string(codec_id), {}, std::string(codec_id), store};
}

Value conform(const TypeSpec& spec, const Value& value) {
    if (is_null(value)) return value;
    switch (spec.kind()) {
    case ValueKind::Int:
        if (std::holds_alternative<std::int64_t>(value)) return value;
        break;
    case ValueKind::Float:
        if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
        if (const auto* d = std::get_if<double>(&value)) {
            if (!std::isfinite(*d)) throw mismatch(spec, value, "non-finite");
            return value;
        }
        break;
    case ValueKind::String:
        if (const auto* s = std::get_if<std::string>(&value)) {
            if (!spec.params.empty() && (spec.name == "varchar" || spec.name == "char") &&
                utf8_length(*s) > static_cast<std::size_t>(spec.params[0]))
                throw mismatch(spec, value, "length " + std::to_string(utf8_length(*s)) + " > " +
                                                std::to_string(spec.params[0]));
            return value;
        }
        break;
    case ValueKind::Bool:
        if (std::holds_alternative<bool>(value)) return value;
        break;
    case ValueKind::Datetime:
        if (std::holds_alternative<Datetime>(value)) return value;
        if (const auto* s = std::get_if<std::string>(&value)) return parse_datetime(*s);
        break;
    case ValueKind::Uuid:
        if (std::holds_alternative<Uuid>(value)) return value;
        if (const auto* s = std::get_if<std::string>(&value)) return parse_uuid(*s);
        break;
    case ValueKind::Json:
        if (const auto* j = std::get_if<JsonText>(&value)) {
            try {
                return JsonText{canonical_json(Json::parse(j->canonical))};
            } catch (const Json::exception&) {
                throw mismatch(spec, value, "invalid json");
            }
        }
        break;
    case ValueKind::Bytes:
        if (std::holds_alternative<Bytes>(value)) return value;
        break;
    case ValueKind::Codec:
        if (const auto* ref = std::get_if<ObjectRef>(&value)) {
            if (ref->metadata.value("codec", std::string()) != spec.codec_id)
                throw mismatch(spec, value, "object encoded by another codec");
            return value;
        }
        // Domain checks happen in encode_value, where the codec registry is known.
        if (std::holds_alternative<F64Array>(value) || std::holds_alternative<Bytes>(value)) return value;
        break;
    }
    throw mismatch(spec, value);
}

Value parse_literal(const TypeSpec& spec, std::string_view text) {
    if (text == "null") return Null{};
    std::string body(text);
    if (body.size() >= 2 && (body.front() == '"' || body.front() == '\'') && body.back() == body.front())
        body = body.substr(1, body.size() - 2);
    auto bad = [&]() {
        return Error(ErrorCode::TypeMismatch, "literal '" + std::string(text) + "' is not a valid " + spec.token());
    };
    switch (spec.kind()) {
    case ValueKind::Int: {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
        if (ec != std::errc() || p != body.data() + body.size()) throw bad();
        return v;
    }
    case ValueKind::Float: {
        char* end = nullptr;
        double v = std::strtod(body.c_str(), &end);
        if (body.empty() || end != body.c_str() + body.size()) throw bad();
        return conform(spec, v);
    }
    case ValueKind::String: return conform(spec, body);
    case ValueKind::Bool:
        if (body == "true") return true;
        if (body == "false") return false;
        throw bad();
    case ValueKind::Datetime: return parse_datetime(body);
    case ValueKind::Uuid: return parse_uuid(body);
    case ValueKind::Json:
        try {
            return JsonText{canonical_json(Json::parse(body))};
        } catch (const Json::exception&) {
            throw bad();
        }
    case ValueKind::Bytes:
        if (body.rfind("0x", 0) == 0) return from_hex(std::string_view(body).substr(2));
        throw bad();
    case ValueKind::Codec: break;
    }
    throw bad();
}

Value value_from_json(const TypeSpec& spec, const Json& j) {
    if (j.is_null()) return Null{};
    auto bad = [&]() { return Error(ErrorCode::TypeMismatch, "json " + j.dump() + " is not a valid " + spec.token()); };
    switch (spec.kind()) {
    case ValueKind::Int:
        if (j.is_number_integer()) return j.get<std::int64_t>();
        throw bad();
    case ValueKind::Float:
        if (j.is_number_integer()) return static_cast<double>(j.get<std::int64_t>());
        if (j.is_number()) return conform(spec, j.get<double>());
        throw bad();
    case ValueKind::String:
        if (j.is_string()) return conform(spec, j.get<std::string>());
        throw bad();
    case ValueKind::Bool:
        if (j.is_boolean()) return j.get<bool>();
        throw bad();
    case ValueKind::Datetime:
        if (j.is_string()) return parse_datetime(j.get<std::string>());
        throw bad();
    case ValueKind::Uuid:
        if (j.is_string()) return parse_uuid(j.get<std::string>());
        throw bad();
    case ValueKind::Json: return JsonText{canonical_json(j)};
    case ValueKind::Bytes:
        if (j.is_string()) return from_hex(j.get<std::string>());
        throw bad();
    case ValueKind::Codec:
        if (j.is_object() && j.contains("$ref")) {
            const Json& r = j["$ref"];
            ObjectRef ref;
            ref.address.scheme = r.at("scheme") == "schema" ? AddressScheme::Schema : AddressScheme::Hash;
            ref.address.path = r.at("path").get<std::string>();
            ref.address.content_hash = r.at("hash").get<std::string>();
            ref.address.size = r.at("size").get<std::uint64_t>();
            ref.metadata = r.at("metadata");
            return ref;
        }
        throw bad();
    }
    throw bad();
}

Bytes canonical_bytes(const Value& v) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(v.index()));
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Null>) {
            } else if constexpr (std::is_same_v<T, bool>) {
                out.push_back(x ? 1 : 0);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                put_u64(out, static_cast<std::uint64_t>(x));
            } else if constexpr (std::is_same_v<T, double>) {
                put_u64(out, std::bit_cast<std::uint64_t>(x));
            } else if constexpr (std::is_same_v<T, std::string>) {
                put_bytes(out, x.data(), x.size());
            } else if constexpr (std::is_same_v<T, Datetime>) {
                put_u64(out, static_cast<std::uint64_t>(x.micros));
            } else if constexpr (std::is_same_v<T, Uuid>) {
                out.insert(out.end(), x.bytes.begin(), x.bytes.end());
            } else if constexpr (std::is_same_v<T, JsonText>) {
                put_bytes(out, x.canonical.data(), x.canonical.size());
            } else if constexpr (std::is_same_v<T, Bytes>) {
                put_bytes(out, x.data(), x.size());
            } else if constexpr (std::is_same_v<T, F64Array>) {
                put_u64(out, x.shape.size());
                for (auto d : x.shape) put_u64(out, static_cast<std::uint64_t>(d));
                put_u64(out, x.data.size());
                for (double d : x.data) put_u64(out, std::bit_cast<std::uint64_t>(d));
            } else {
                put_bytes(out, x.address.content_hash.data(), x.address.content_hash.size());
                put_bytes(out, x.address.path.data(), x.address.path.size());
            }
        },
        v);
    return out;
}

Bytes canonical_bytes(const Row& values) {
    Bytes out;
    for (const auto& v : values) {
        Bytes part = canonical_bytes(v);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

// ---- codecs ----------------------------------------------------------------

Encoded F64ArrayCodec::encode(const Value& value) const {
    const auto* arr = std::get_if<F64Array>(&value);
    if (!arr) throw Error(ErrorCode::TypeMismatch, "f64_array codec expects an array, got " + to_display(value));
    std::int64_t count = 1;
    for (auto d : arr->shape) {
        if (d < 0) throw Error(ErrorCode::TypeMismatch, "negative array dimension");
        count *= d;
    }
    if (count != static_cast<std::int64_t>(arr->data.size()))
        throw Error(ErrorCode::TypeMismatch, "array shape does not match element count");
    Encoded enc;
    enc.payload.reserve(arr->data.size() * 8);
    for (double d : arr->data) put_u64(enc.payload, std::bit_cast<std::uint64_t>(d));
    enc.metadata = Json{{"dtype", "f64"}, {"shape", arr->shape}};
    return enc;
}

Value F64ArrayCodec::decode(const Bytes& payload, const Json& metadata) const {
    F64Array arr;
    arr.shape = metadata.at("shape").get<std::vector<std::int64_t>>();
    std::int64_t count = 1;
    for (auto d : arr.shape) count *= d;
    if (payload.size() != static_cast<std::size_t>(count) * 8)
        throw Error(ErrorCode::CorruptPayload, "f64_array payload size does not match shape");
    arr.data.resize(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < arr.data.size(); ++i) arr.data[i] = std::bit_cast<double>(get_u64(&payload[8 * i]));
    return arr;
}

Json F64ArrayCodec::describe(const Json& metadata) const {
    return Json{{"dtype", metadata.value("dtype", "f64")}, {"shape", metadata.at("shape")}};
}

bool F64ArrayCodec::accepts(const Value& value) const { return std::holds_alternative<F64Array>(value); }

Encoded BlobCodec::encode(const Value& value) const {
    const auto* bytes = std::get_if<Bytes>(&value);
    if (!bytes) throw Error(ErrorCode::TypeMismatch, "blob codec expects bytes, got " + to_display(value));
    return Encoded{*bytes, Json{{"length", bytes->size()}}};
}

Value BlobCodec::decode(const Bytes& payload, const Json& metadata) const {
    if (metadata.contains("length") && metadata["length"].get<std::size_t>() != payload.size())
        throw Error(ErrorCode::CorruptPayload, "blob payload length mismatch");
    return payload;
}

Json BlobCodec::describe(const Json& metadata) const { return Json{{"length", metadata.value("length", 0)}}; }

bool BlobCodec::accepts(const Value& value) const { return std::holds_alternative<Bytes>(value); }

CodecRegistry CodecRegistry::with_builtins() {
    CodecRegistry r;
    r.register_codec(std::make_shared<F64ArrayCodec>());
    r.register_codec(std::make_shared<BlobCodec>());
    return r;
}

void CodecRegistry::register_codec(std::shared_ptr<const Codec> codec) {
    auto key = std::make_pair(codec->id(), codec->version());
    auto it = codecs_.find(key);
    if (it != codecs_.end()) {
        if (it->second->fingerprint() != codec->fingerprint())
            throw Error(ErrorCode::DuplicateCodec, "codec " + key.first + " v" + std::to_string(key.second) +
                                                       " already registered with a different fingerprint");
        return;
    }
    codecs_.emplace(std::move(key), std::move(codec));
}

std::shared_ptr<const Codec> CodecRegistry::resolve(std::string_view id, std::optional<int> version) const {
    std::shared_ptr<const Codec> best;
    for (const auto& [key, codec] : codecs_) {
        if (key.first != id) continue;
        if (version ? key.second == *version : true) best = codec;
    }
    if (!best)
        throw Error(ErrorCode::UnknownCodec, "unknown codec '" + std::string(id) + "'" +
                                                 (version ? " v" + std::to_string(*version) : ""));
    return best;
}

bool CodecRegistry::contains(std::string_view id) const {
    return std::any_of(codecs_.begin(), codecs_.end(), [&](const auto& e) { return e.first.first == id; });
}

StoredForm encode_value(const TypeSpec& spec, const Value& value, const CodecRegistry& codecs) {
    if (spec.layer != TypeLayer::Codec) return conform(spec, value);
    if (is_null(value) || std::holds_alternative<ObjectRef>(value)) return conform(spec, value);
    auto codec = codecs.resolve(spec.codec_id);
    if (!codec->accepts(value))
        throw Error(ErrorCode::TypeMismatch, "value " + to_display(value) + " is outside codec " + spec.codec_id);
    Encoded enc = codec->encode(value);
    return CodecPayload{codec->id(), codec->version(), std::move(enc.payload), std::move(enc.metadata)};
}

// ---- lazy references -------------------------------------------------------

LazyRef::LazyRef(ObjectRef ref, std::shared_ptr<const Codec> codec, std::shared_ptr<const ObjectLoader> loader)
    : ref_(std::move(ref)), codec_(std::move(codec)), loader_(std::move(loader)), cache_(std::make_shared<Cache>()) {}

std::vector<std::int64_t> LazyRef::shape() const {
    if (!ref_.metadata.contains("shape")) return {};
    return ref_.metadata["shape"].get<std::vector<std::int64_t>>();
}

bool LazyRef::is_materialized() const {
    std::lock_guard lock(cache_->mutex);
    return cache_->value.has_value();
}

const Value& LazyRef::materialize() const {
    std::lock_guard lock(cache_->mutex);
    if (!cache_->value) {
        Bytes payload = loader_->load(ref_.address.path);
        if (sha256_hex(payload) != ref_.address.content_hash)
            throw Error(ErrorCode::CorruptPayload, "content hash mismatch for " + ref_.address.path);
        cache_->value = codec_->decode(payload, ref_.metadata);
    }
    return *cache_->value;
}

Decoded decode_value(const TypeSpec& spec, const StoredForm& stored, const CodecRegistry& codecs,
                     std::shared_ptr<const ObjectLoader> loader) {
    if (const auto* payload = std::get_if<CodecPayload>(&stored)) {
        auto codec = codecs.resolve(payload->codec_id, payload->version);
        return codec->decode(payload->payload, payload->metadata);
    }
    const Value& v = std::get<Value>(stored);
    if (spec.layer == TypeLayer::Codec) {
        if (const auto* ref = std::get_if<ObjectRef>(&v)) {
            std::optional<int> version;
            if (ref->metadata.contains("version")) version = ref->metadata["version"].get<int>();
            auto codec = codecs.resolve(ref->metadata.value("codec", spec.codec_id), version);
            return LazyRef(*ref, std::move(codec), std::move(loader));
        }
    }
    return conform(spec, v);
}

} // namespace relatape
