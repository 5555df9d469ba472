// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/model.hpp"

#include <algorithm>
#include <queue>

#include "relatape/error.hpp"

namespace relatape {
namespace {

Error invalid(const TableDef& def, const std::string& msg) {
    return Error(ErrorCode::InvalidDefinition, def.schema_name + "." + def.table_name + ": " + msg);
}

void validate_attribute(const TableDef& def, const Attribute& a, bool primary) {
    if (!is_identifier(a.name)) throw invalid(def, "invalid attribute name '" + a.name + "'");
    if (primary && a.nullable) throw invalid(def, "key attribute '" + a.name + "' cannot be nullable");
    if (a.default_literal) {
        if (*a.default_literal == "null") {
            if (primary) throw invalid(def, "key attribute '" + a.name + "' cannot default to null");
        } else if (a.type.layer == TypeLayer::Codec) {
            throw invalid(def, "codec attribute '" + a.name + "' only accepts a null default");
        } else {
            try {
                (void)parse_literal(a.type, *a.default_literal);
            } catch (const Error& e) {
                throw invalid(def, "bad default for '" + a.name + "': " + e.what());
            }
        }
    }
}

} // namespace

std::string_view to_string(Tier tier) {
    switch (tier) {
    case Tier::Manual: return "manual";
    case Tier::Lookup: return "lookup";
    case Tier::Imported: return "imported";
    case Tier::Computed: return "computed";
    case Tier::Part: return "part";
    }
    return "manual";
}

Tier parse_tier(std::string_view name) {
    for (Tier t : {Tier::Manual, Tier::Lookup, Tier::Imported, Tier::Computed, Tier::Part})
        if (to_string(t) == name) return t;
    throw Error(ErrorCode::InvalidDefinition, "unknown tier '" + std::string(name) + "'");
}

bool is_identifier(std::string_view name) {
    if (name.empty() || name.size() > 64 || name.front() < 'a' || name.front() > 'z') return false;
    return std::all_of(name.begin(), name.end(),
                       [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; });
}

std::vector<std::string> Table::primary_key() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < key_size; ++i) out.push_back(heading[i].attr.name);
    return out;
}

std::vector<std::string> Table::attribute_names() const {
    std::vector<std::string> out;
    for (const auto& a : heading) out.push_back(a.attr.name);
    return out;
}

const ResolvedAttribute* Table::find(std::string_view name) const {
    for (const auto& a : heading)
        if (a.attr.name == name) return &a;
    return nullptr;
}

std::optional<std::size_t> Table::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < heading.size(); ++i)
        if (heading[i].attr.name == name) return i;
    return std::nullopt;
}

const Table& SchemaRegistry::declare_table(const TableDef& def) {
    const TableRef self = def.ref();
    if (!is_identifier(def.schema_name)) throw invalid(def, "invalid schema name");
    if (!is_identifier(def.table_name)) throw invalid(def, "invalid table name");

    if (const Table* existing = find(self)) {
        if (existing->def == def) return *existing;
        const auto below = descendants(self);
        for (const auto& fk : def.foreign_keys) {
            if (fk.parent == self || below.contains(fk.parent))
                throw Error(ErrorCode::CycleError, "foreign key " + self.qualified() + " -> " +
                                                       fk.parent.qualified() + " would close a cycle");
        }
        throw Error(ErrorCode::DefinitionConflict,
                    "table " + self.qualified() + " is already declared with a different definition");
    }

    // Tier / master consistency.
    if (def.tier == Tier::Part && !def.master)
        throw Error(ErrorCode::PartWithoutMaster, "part table " + self.qualified() + " declares no master");
    if (def.tier != Tier::Part && def.master) throw invalid(def, "only part tables may declare a master");
    const Table* master = nullptr;
    if (def.master) {
        if (def.master->schema != def.schema_name) throw invalid(def, "master must be in the same schema");
        master = find(*def.master);
        if (!master)
            throw Error(ErrorCode::PartWithoutMaster,
                        "master " + def.master->qualified() + " of " + self.qualified() + " is not declared");
        if (master->def.tier == Tier::Part) throw invalid(def, "part tables cannot have parts of their own");
    }

    auto table = std::make_shared<Table>();
    table->def = def;
    table->declaration_index = tables_.size();

    // Resolve foreign keys.
    for (const auto& fk : def.foreign_keys) {
        if (fk.parent == self)
            throw Error(ErrorCode::CycleError, "table " + self.qualified() + " references itself");
        const Table* parent = find(fk.parent);
        if (!parent)
            throw Error(ErrorCode::UnknownParent,
                        self.qualified() + " references undeclared table " + fk.parent.qualified());
        const auto parent_key = parent->primary_key();
        std::set<std::string> seen_child, seen_parent;
        for (const auto& [child, par] : fk.attribute_map) {
            if (!is_identifier(child)) throw invalid(def, "invalid renamed attribute '" + child + "'");
            if (std::find(parent_key.begin(), parent_key.end(), par) == parent_key.end())
                throw invalid(def, "'" + par + "' is not a key attribute of " + fk.parent.qualified());
            if (!seen_child.insert(child).second || !seen_parent.insert(par).second)
                throw invalid(def, "foreign key to " + fk.parent.qualified() + " maps an attribute twice");
        }
        ResolvedForeignKey resolved{fk.parent, {}, fk.into_primary_key};
        for (const auto& p : parent_key) {
            std::string child = p;
            for (const auto& [c, par] : fk.attribute_map)
                if (par == p) child = c;
            resolved.attribute_map.emplace_back(child, p);
        }
        table->foreign_keys.push_back(std::move(resolved));
    }

    // Schema-level DAG.
    for (const auto& fk : def.foreign_keys) {
        if (fk.parent.schema == def.schema_name) continue;
        std::set<std::string> visited;
        std::vector<std::string> stack{fk.parent.schema};
        std::map<std::string, std::set<std::string>> schema_parents;
        for (const auto& e : edges())
            if (e.child.schema != e.parent.schema) schema_parents[e.child.schema].insert(e.parent.schema);
        while (!stack.empty()) {
            std::string s = stack.back();
            stack.pop_back();
            if (s == def.schema_name)
                throw Error(ErrorCode::CycleError, "schema dependency " + def.schema_name + " -> " +
                                                       fk.parent.schema + " would close a schema cycle");
            if (!visited.insert(s).second) continue;
            for (const auto& p : schema_parents[s]) stack.push_back(p);
        }
    }

    auto add_inherited = [&](std::vector<ResolvedAttribute>& section, bool primary, std::size_t fk_index) {
        const auto& fk = table->foreign_keys[fk_index];
        const Table& parent = *find(fk.parent);
        for (const auto& [child, par] : fk.attribute_map) {
            const ResolvedAttribute& source = *parent.find(par);
            auto match = std::find_if(table->heading.begin(), table->heading.end(),
                                      [&](const auto& a) { return a.attr.name == child; });
            auto in_section = std::find_if(section.begin(), section.end(),
                                           [&](const auto& a) { return a.attr.name == child; });
            ResolvedAttribute* target = in_section != section.end() ? &*in_section
                                        : match != table->heading.end() ? &*match
                                                                        : nullptr;
            if (target) {
                if (!target->inherited())
                    throw Error(ErrorCode::DuplicateAttribute, "foreign key to " + fk.parent.qualified() +
                                                                   " redeclares own attribute '" + child + "' in " +
                                                                   self.qualified());
                if (target->attr.type != source.attr.type)
                    throw invalid(def, "attribute '" + child + "' inherited with conflicting types");
                target->sources.push_back({fk_index, par});
                continue;
            }
            Attribute a;
            a.name = child;
            a.type = source.attr.type;
            a.comment = source.attr.comment;
            a.in_primary_key = primary;
            section.push_back({a, {{fk_index, par}}});
        }
    };
    auto add_own = [&](std::vector<ResolvedAttribute>& section, const Attribute& own, bool primary) {
        validate_attribute(def, own, primary);
        auto clash = [&](const auto& a) { return a.attr.name == own.name; };
        if (std::any_of(table->heading.begin(), table->heading.end(), clash) ||
            std::any_of(section.begin(), section.end(), clash))
            throw Error(ErrorCode::DuplicateAttribute,
                        "duplicate attribute '" + own.name + "' in " + self.qualified());
        Attribute a = own;
        a.in_primary_key = primary;
        section.push_back({a, {}});
    };

    std::vector<ResolvedAttribute> key;
    for (std::size_t i = 0; i < table->foreign_keys.size(); ++i)
        if (table->foreign_keys[i].into_primary_key) add_inherited(key, true, i);
    for (const auto& a : def.primary_attrs) add_own(key, a, true);
    if (key.empty()) throw invalid(def, "table has no primary key");
    table->heading = std::move(key);
    table->key_size = table->heading.size();

    std::vector<ResolvedAttribute> secondary;
    for (std::size_t i = 0; i < table->foreign_keys.size(); ++i)
        if (!table->foreign_keys[i].into_primary_key) add_inherited(secondary, false, i);
    for (const auto& a : def.secondary_attrs) add_own(secondary, a, false);
    for (auto& a : secondary) table->heading.push_back(std::move(a));

    if (master) {
        const bool has_master_fk = std::any_of(table->foreign_keys.begin(), table->foreign_keys.end(),
                                               [&](const auto& fk) { return fk.parent == *def.master && fk.into_primary_key; });
        if (!has_master_fk)
            throw invalid(def, "part table must inherit its master's key through a foreign key above the separator");
    }

    index_.emplace(self, tables_.size());
    tables_.push_back(std::move(table));
    return *tables_.back();
}

const Table* SchemaRegistry::find(const TableRef& ref) const {
    auto it = index_.find(ref);
    return it == index_.end() ? nullptr : tables_[it->second].get();
}

const Table& SchemaRegistry::table(const TableRef& ref) const {
    if (const Table* t = find(ref)) return *t;
    throw Error(ErrorCode::UnknownTable, "unknown table " + ref.qualified());
}

const Table& SchemaRegistry::lookup(std::string_view name) const {
    if (auto dot = name.find('.'); dot != std::string_view::npos)
        return table({std::string(name.substr(0, dot)), std::string(name.substr(dot + 1))});
    const Table* found = nullptr;
    for (const auto& t : tables_) {
        if (t->def.table_name != name) continue;
        if (found) throw Error(ErrorCode::UnknownTable, "table name '" + std::string(name) + "' is ambiguous");
        found = t.get();
    }
    if (!found) throw Error(ErrorCode::UnknownTable, "unknown table '" + std::string(name) + "'");
    return *found;
}

std::vector<const Table*> SchemaRegistry::tables() const {
    std::vector<const Table*> out;
    for (const auto& t : tables_) out.push_back(t.get());
    return out;
}

std::vector<std::string> SchemaRegistry::schemas() const {
    std::vector<std::string> out;
    for (const auto& t : tables_)
        if (std::find(out.begin(), out.end(), t->def.schema_name) == out.end()) out.push_back(t->def.schema_name);
    return out;
}

std::vector<Edge> SchemaRegistry::edges() const {
    std::vector<Edge> out;
    for (const auto& t : tables_)
        for (const auto& fk : t->foreign_keys) out.push_back({t->ref(), fk.parent, fk.into_primary_key});
    return out;
}

std::vector<TableRef> SchemaRegistry::topo_order() const {
    const std::size_t n = tables_.size();
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> out_edges(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::set<std::size_t> parents;
        for (const auto& fk : tables_[i]->foreign_keys) parents.insert(index_.at(fk.parent));
        indegree[i] = parents.size();
        for (auto p : parents) out_edges[p].push_back(i);
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) ready.push(i);
    std::vector<TableRef> order;
    while (!ready.empty()) {
        std::size_t i = ready.top();
        ready.pop();
        order.push_back(tables_[i]->ref());
        for (auto c : out_edges[i])
            if (--indegree[c] == 0) ready.push(c);
    }
    return order;
}

std::set<TableRef> SchemaRegistry::dimensions() const {
    std::set<TableRef> out;
    for (const auto& t : tables_)
        for (std::size_t i = 0; i < t->key_size; ++i)
            if (!t->heading[i].inherited()) {
                out.insert(t->ref());
                break;
            }
    return out;
}

std::vector<TableRef> SchemaRegistry::children(const TableRef& ref) const {
    std::vector<TableRef> out;
    for (const auto& t : tables_)
        if (std::any_of(t->foreign_keys.begin(), t->foreign_keys.end(), [&](const auto& fk) { return fk.parent == ref; }))
            out.push_back(t->ref());
    return out;
}

std::vector<TableRef> SchemaRegistry::parts(const TableRef& master) const {
    std::vector<TableRef> out;
    for (const auto& t : tables_)
        if (t->def.master == master) out.push_back(t->ref());
    return out;
}

std::set<TableRef> SchemaRegistry::ancestors(const TableRef& ref) const {
    std::set<TableRef> out;
    std::vector<TableRef> stack{ref};
    while (!stack.empty()) {
        TableRef cur = stack.back();
        stack.pop_back();
        for (const auto& fk : table(cur).foreign_keys)
            if (out.insert(fk.parent).second) stack.push_back(fk.parent);
    }
    return out;
}

std::set<TableRef> SchemaRegistry::descendants(const TableRef& ref) const {
    std::set<TableRef> out;
    std::vector<TableRef> stack{ref};
    while (!stack.empty()) {
        TableRef cur = stack.back();
        stack.pop_back();
        for (const auto& c : children(cur))
            if (out.insert(c).second) stack.push_back(c);
    }
    return out;
}

std::vector<Diagnostic> lint_workflow_normalization(const SchemaRegistry& registry) {
    std::vector<Diagnostic> out;
    for (const Table* t : registry.tables()) {
        const TableRef ref = t->ref();
        const Tier tier = t->def.tier;

        if (is_auto_populated(tier) && t->foreign_keys.empty()) {
            out.push_back({ref, "no-upstream",
                           std::string(to_string(tier)) + " table has no upstream dependency"});
        }

        if (tier == Tier::Part && t->def.master) {
            const auto master_key = registry.table(*t->def.master).primary_key();
            const auto own_key = t->primary_key();
            if (own_key.size() < master_key.size() ||
                !std::equal(master_key.begin(), master_key.end(), own_key.begin())) {
                out.push_back({ref, "part-key-prefix", "part table key does not begin with its master's key"});
            }
        }

        if (tier == Tier::Manual) {
            for (const auto& fk : t->foreign_keys) {
                if (registry.table(fk.parent).def.tier == Tier::Computed) {
                    out.push_back({ref, "direction-inversion",
                                   "manual table references computed table " + fk.parent.qualified()});
                }
            }
        }

        std::map<std::string, TableRef> upstream_secondary;
        for (const auto& anc : registry.ancestors(ref)) {
            const Table& a = registry.table(anc);
            for (std::size_t i = a.key_size; i < a.heading.size(); ++i)
                if (!a.heading[i].inherited()) upstream_secondary.emplace(a.heading[i].attr.name, anc);
        }
        for (const auto& own : t->def.secondary_attrs) {
            if (auto it = upstream_secondary.find(own.name); it != upstream_secondary.end()) {
                out.push_back({ref, "kitchen-sink",
                               "secondary attribute '" + own.name + "' duplicates upstream attribute of " +
                                   it->second.qualified() + " without shared lineage"});
            }
        }

        for (const auto& a : t->heading) {
            if (!a.inherited() && a.attr.type.layer == TypeLayer::Native) {
                out.push_back({ref, "native-type",
                               "attribute '" + a.attr.name + "' uses native type " + a.attr.type.token() +
                                   "; prefer a core type"});
            }
        }
    }
    return out;
}

} // namespace relatape
