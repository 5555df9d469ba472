// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relatape/types.hpp"

namespace relatape {

enum class Tier { Manual, Lookup, Imported, Computed, Part };

std::string_view to_string(Tier tier);
/// Accepts the lowercase tier names. Throws Error(InvalidDefinition).
Tier parse_tier(std::string_view name);
inline bool is_auto_populated(Tier t) { return t == Tier::Imported || t == Tier::Computed; }

/// `[a-z][a-z0-9_]*`, at most 64 characters.
bool is_identifier(std::string_view name);

struct TableRef {
    std::string schema;
    std::string table;

    std::string qualified() const { return schema + "." + table; }
    auto operator<=>(const TableRef&) const = default;
};

struct Attribute {
    std::string name;
    TypeSpec type;
    std::optional<std::string> default_literal;  // literal text as written; "null" for nullable
    bool nullable = false;
    std::string comment;
    bool in_primary_key = false;

    bool operator==(const Attribute&) const = default;
};

struct ForeignKey {
    TableRef parent;
    /// Explicit (child attribute, parent attribute) renames; parent key attributes not
    /// listed keep their names.
    std::vector<std::pair<std::string, std::string>> attribute_map;
    bool into_primary_key = true;

    bool operator==(const ForeignKey&) const = default;
};

/// A table as written by its author: only the attributes declared here, plus FKs.
struct TableDef {
    std::string schema_name;
    std::string table_name;
    Tier tier = Tier::Manual;
    std::string comment;
    std::vector<Attribute> primary_attrs;
    std::vector<Attribute> secondary_attrs;
    std::vector<ForeignKey> foreign_keys;
    std::optional<TableRef> master;

    TableRef ref() const { return {schema_name, table_name}; }
    bool operator==(const TableDef&) const = default;
};

struct AttributeSource {
    std::size_t fk_index;
    std::string parent_attr;
    bool operator==(const AttributeSource&) const = default;
};

struct ResolvedAttribute {
    Attribute attr;
    /// Empty for attributes declared in this table.
    std::vector<AttributeSource> sources;

    bool inherited() const { return !sources.empty(); }
};

struct ResolvedForeignKey {
    TableRef parent;
    /// Complete (child, parent) map in parent key order.
    std::vector<std::pair<std::string, std::string>> attribute_map;
    bool into_primary_key = true;
};

/// A registered table with its fully resolved heading (key attributes first).
struct Table {
    TableDef def;
    std::size_t declaration_index = 0;
    std::vector<ResolvedAttribute> heading;
    std::size_t key_size = 0;
    std::vector<ResolvedForeignKey> foreign_keys;

    TableRef ref() const { return def.ref(); }
    std::vector<std::string> primary_key() const;
    std::vector<std::string> attribute_names() const;
    const ResolvedAttribute* find(std::string_view name) const;
    std::optional<std::size_t> index_of(std::string_view name) const;
};

struct Edge {
    TableRef child;
    TableRef parent;
    bool into_primary_key = true;
    auto operator<=>(const Edge&) const = default;
};

struct Diagnostic {
    TableRef table;
    std::string rule;
    std::string message;
    bool operator==(const Diagnostic&) const = default;
};

class SchemaRegistry {
public:
    /// Registers `def`, resolving inherited attributes. Re-declaring an identical
    /// definition returns the existing table. Errors: CycleError, UnknownParent,
    /// DuplicateAttribute, PartWithoutMaster, InvalidDefinition, DefinitionConflict.
    const Table& declare_table(const TableDef& def);

    const Table* find(const TableRef& ref) const;
    const Table& table(const TableRef& ref) const;
    /// Resolves `schema.table` or an unambiguous bare table name.
    const Table& lookup(std::string_view name) const;

    /// Declaration order.
    std::vector<const Table*> tables() const;
    std::vector<std::string> schemas() const;
    std::size_t size() const { return tables_.size(); }

    std::vector<Edge> edges() const;
    /// Parents before children; ties broken by declaration order.
    std::vector<TableRef> topo_order() const;
    /// Tables declaring at least one key attribute of their own.
    std::set<TableRef> dimensions() const;

    std::vector<TableRef> children(const TableRef& ref) const;
    std::vector<TableRef> parts(const TableRef& master) const;
    std::set<TableRef> ancestors(const TableRef& ref) const;
    std::set<TableRef> descendants(const TableRef& ref) const;

private:
    std::vector<std::shared_ptr<const Table>> tables_;
    std::map<TableRef, std::size_t> index_;
};

std::vector<Diagnostic> lint_workflow_normalization(const SchemaRegistry& registry);

} // namespace relatape
