// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relatape/model.hpp"

namespace relatape {

/// Definition text plus the naming context the text itself does not carry.
struct DefinitionSource {
    std::string text;
    std::string table_name;
    Tier tier = Tier::Manual;
    std::string schema_name;
    std::optional<TableRef> master;  // part tables only
};

/// Parses the line-oriented table grammar:
///
///     # table comment
///     -> Subject                       (foreign key, above --- : part of the key)
///     session_id : int64  # comment
///     ---
///     -> lab.Rig (rig = rig_id)        (below --- : plain reference)
///     weight = null : float64
///
/// Throws ParseError carrying the line and column of the offending token.
TableDef parse_definition(const DefinitionSource& src);

/// Inverse of parse_definition up to whitespace and comment placement.
std::string render_definition(const TableDef& def);

/// `PeakDetection` -> `peak_detection`, `PeakDetection.Peak` -> `peak_detection__peak`.
std::string to_snake_case(std::string_view class_name);

/// A `.djt` file: optional `@tier <tier>` / `@master <table>` directive lines followed
/// by the definition body. The table name is the file stem.
DefinitionSource read_definition_file(const std::filesystem::path& path, const std::string& schema_name);
std::string render_definition_file(const TableDef& def);

/// Parses every `.djt` file in `dir` and orders the definitions so parents come first.
/// Throws Error(CycleError) naming the tables involved when no such order exists.
std::vector<TableDef> load_definition_directory(const std::filesystem::path& dir, const std::string& schema_name);

/// Canonical registry manifest: one `@table schema.name` block per table in
/// declaration order. Two registries built from the same definitions serialize to the
/// same bytes.
std::string serialize_registry(const SchemaRegistry& registry);
std::vector<TableDef> parse_manifest(std::string_view manifest);

} // namespace relatape
