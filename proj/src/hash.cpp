// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/hash.hpp"

#include <memory>

#include <openssl/evp.h>

#include "relatape/error.hpp"
#include "relatape/value.hpp"

namespace relatape {

Digest sha256(std::span<const std::uint8_t> data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    Digest out{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size()) {
        throw Error(ErrorCode::StorageFailure, "sha256 digest failed");
    }
    return out;
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
    const Digest d = sha256(data);
    return to_hex(d.data(), d.size());
}

std::string sha256_hex(std::string_view data) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

} // namespace relatape
