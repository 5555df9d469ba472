// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/lineage.hpp"

#include <algorithm>
#include <atomic>

namespace relatape {

std::string to_string(const OriginSet& origins) {
    std::string out = "{";
    for (const auto& o : origins) {
        if (out.size() > 1) out += ", ";
        out += o.str();
    }
    return out + "}";
}

Origin fresh_origin(std::string_view attribute) {
    static std::atomic<std::uint64_t> counter{0};
    return {"~expr", "e" + std::to_string(++counter), std::string(attribute)};
}

SemanticMismatch::SemanticMismatch(std::string attribute, OriginSet left, OriginSet right)
    : Error(ErrorCode::SemanticMismatch,
            "attribute '" + attribute + "' has incompatible lineage: " + to_string(left) + " vs " +
                to_string(right) + "; rename one side by projection"),
      attribute_(std::move(attribute)), left_(std::move(left)), right_(std::move(right)) {}

LineageGraph::LineageGraph(const SchemaRegistry& registry) {
    // Declaration order is a topological order, so parents are always resolved first.
    for (const Table* t : registry.tables()) {
        for (const auto& a : t->heading) {
            OriginSet set;
            if (!a.inherited()) {
                set.insert({t->def.schema_name, t->def.table_name, a.attr.name});
            } else {
                for (const auto& src : a.sources) {
                    const auto& parent = t->foreign_keys[src.fk_index].parent;
                    const auto& up = origins_.at({parent, src.parent_attr});
                    set.insert(up.begin(), up.end());
                }
            }
            origins_.emplace(std::make_pair(t->ref(), a.attr.name), std::move(set));
        }
    }
}

const OriginSet& LineageGraph::origins_of(const TableRef& table, std::string_view attribute) const {
    auto it = origins_.find(std::make_pair(table, std::string(attribute)));
    if (it == origins_.end())
        throw Error(ErrorCode::UnknownAttribute,
                    "unknown attribute '" + std::string(attribute) + "' of " + table.qualified());
    return it->second;
}

bool semantically_compatible(const OriginSet& a, const OriginSet& b) {
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) ++ia;
        else if (*ib < *ia) ++ib;
        else return true;
    }
    return false;
}

std::vector<std::string> resolve_join_attrs(const std::vector<AttributeLineage>& left,
                                            const std::vector<AttributeLineage>& right) {
    std::vector<std::string> matched;
    for (const auto& l : left) {
        auto r = std::find_if(right.begin(), right.end(), [&](const auto& x) { return x.name == l.name; });
        if (r == right.end()) continue;
        if (!semantically_compatible(l.origins, r->origins)) throw SemanticMismatch(l.name, l.origins, r->origins);
        matched.push_back(l.name);
    }
    return matched;
}

} // namespace relatape
