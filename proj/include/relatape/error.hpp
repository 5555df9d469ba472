// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace relatape {

enum class ErrorCode {
    ParseError,
    CycleError,
    UnknownParent,
    DuplicateAttribute,
    PartWithoutMaster,
    InvalidDefinition,
    DefinitionConflict,
    UnknownTable,
    UnknownSchema,
    UnknownAttribute,
    TypeMismatch,
    UnknownCodec,
    DuplicateCodec,
    CorruptPayload,
    FKViolation,
    DuplicatePrimaryKey,
    StorageFailure,
    SemanticMismatch,
    NameCollision,
    HeadingMismatch,
    ConflictingDuplicate,
    UnknownAggregate,
    NotAutoPopulated,
    MakeError,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Definition-language error carrying a 1-based source position.
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& message);

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string detail_;
};

} // namespace relatape
