// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/error.hpp"

namespace relatape {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::CycleError: return "CycleError";
    case ErrorCode::UnknownParent: return "UnknownParent";
    case ErrorCode::DuplicateAttribute: return "DuplicateAttribute";
    case ErrorCode::PartWithoutMaster: return "PartWithoutMaster";
    case ErrorCode::InvalidDefinition: return "InvalidDefinition";
    case ErrorCode::DefinitionConflict: return "DefinitionConflict";
    case ErrorCode::UnknownTable: return "UnknownTable";
    case ErrorCode::UnknownSchema: return "UnknownSchema";
    case ErrorCode::UnknownAttribute: return "UnknownAttribute";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::UnknownCodec: return "UnknownCodec";
    case ErrorCode::DuplicateCodec: return "DuplicateCodec";
    case ErrorCode::CorruptPayload: return "CorruptPayload";
    case ErrorCode::FKViolation: return "FKViolation";
    case ErrorCode::DuplicatePrimaryKey: return "DuplicatePrimaryKey";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::SemanticMismatch: return "SemanticMismatch";
    case ErrorCode::NameCollision: return "NameCollision";
    case ErrorCode::HeadingMismatch: return "HeadingMismatch";
    case ErrorCode::ConflictingDuplicate: return "ConflictingDuplicate";
    case ErrorCode::UnknownAggregate: return "UnknownAggregate";
    case ErrorCode::NotAutoPopulated: return "NotAutoPopulated";
    case ErrorCode::MakeError: return "MakeError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Error";
}

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& message)
    : Error(ErrorCode::ParseError,
            "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line), column_(column), detail_(message) {}

} // namespace relatape
