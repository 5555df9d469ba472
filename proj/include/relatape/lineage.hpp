// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relatape/error.hpp"
#include "relatape/model.hpp"

namespace relatape {

/// Declaration site of an attribute.
struct Origin {
    std::string schema;
    std::string table;
    std::string attribute;

    std::string str() const { return schema + "." + table + "." + attribute; }
    auto operator<=>(const Origin&) const = default;
};

using OriginSet = std::set<Origin>;

std::string to_string(const OriginSet& origins);

/// Synthetic origin for a query-computed attribute; never equal to any other origin.
Origin fresh_origin(std::string_view attribute);

inline bool is_synthetic(const Origin& o) { return o.schema == "~expr"; }

class SemanticMismatch : public Error {
public:
    SemanticMismatch(std::string attribute, OriginSet left, OriginSet right);

    const std::string& attribute() const noexcept { return attribute_; }
    const OriginSet& left_origins() const noexcept { return left_; }
    const OriginSet& right_origins() const noexcept { return right_; }

private:
    std::string attribute_;
    OriginSet left_;
    OriginSet right_;
};

/// Origin sets of every registered (table, attribute), following FK renames.
class LineageGraph {
public:
    explicit LineageGraph(const SchemaRegistry& registry);

    /// Throws Error(UnknownAttribute) / Error(UnknownTable).
    const OriginSet& origins_of(const TableRef& table, std::string_view attribute) const;

private:
    std::map<std::pair<TableRef, std::string>, OriginSet, std::less<>> origins_;
};

/// Lineage of one attribute of a heading.
struct AttributeLineage {
    std::string name;
    OriginSet origins;
};

/// True iff the two origin sets share an ancestor.
bool semantically_compatible(const OriginSet& a, const OriginSet& b);

/// Namesake attributes of `left` and `right` (in left order). Throws SemanticMismatch on
/// the first namesake pair without a shared origin.
std::vector<std::string> resolve_join_attrs(const std::vector<AttributeLineage>& left,
                                            const std::vector<AttributeLineage>& right);

} // namespace relatape
