// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "generators.hpp"

#include <algorithm>

namespace relatape::testing {

namespace {

const std::vector<std::string> kKeyNames{"id", "k", "n"};
const std::vector<std::string> kAttrNames{"x", "y", "s", "v"};

TypeSpec random_type(Rng& rng) {
    switch (pick(rng, 3)) {
    case 0: return core_type("int64");
    case 1: return core_type("float64");
    default: return core_type("varchar", {8});
    }
}

} // namespace

Value random_value(Rng& rng, const TypeSpec& type) {
    switch (type.kind()) {
    case ValueKind::Int: return static_cast<std::int64_t>(pick(rng, 4));
    case ValueKind::Float: return std::vector<double>{0.5, 1.0, 1.5, 2.5}[pick(rng, 4)];
    case ValueKind::String: return std::string(1, static_cast<char>('a' + pick(rng, 3)));
    case ValueKind::Bool: return chance(rng, 0.5);
    default: return Null{};
    }
}

RandomSchema random_schema(Rng& rng, std::size_t max_tables, std::size_t max_rows) {
    RandomSchema out{Database::in_memory(), {}};
    const std::size_t n = 1 + pick(rng, max_tables);
    for (std::size_t i = 0; i < n; ++i) {
        TableDef def;
        def.schema_name = "r";
        def.table_name = "t" + std::to_string(i);
        def.tier = chance(rng, 0.2) ? Tier::Lookup : Tier::Manual;
        bool keyed_by_parent = false;
        if (!out.tables.empty()) {
            std::vector<TableRef> parents = out.tables;
            std::shuffle(parents.begin(), parents.end(), rng);
            parents.resize(std::min(parents.size(), pick(rng, 3)));
            for (const auto& p : parents) {
                ForeignKey fk{p, {}, chance(rng, 0.7)};
                if (!fk.into_primary_key || chance(rng, 0.2)) {
                    // Rename to dodge merges with other parents' keys.
                    for (const auto& key : out.db->registry().table(p).primary_key())
                        if (chance(rng, 0.5)) fk.attribute_map.emplace_back(key + "_" + p.table, key);
                }
                keyed_by_parent = keyed_by_parent || fk.into_primary_key;
                def.foreign_keys.push_back(std::move(fk));
            }
        }
        const std::size_t own_keys = keyed_by_parent ? pick(rng, 2) : 1 + pick(rng, 2);
        std::vector<std::string> key_pool = kKeyNames;
        std::shuffle(key_pool.begin(), key_pool.end(), rng);
        for (std::size_t k = 0; k < own_keys; ++k)
            def.primary_attrs.push_back({key_pool[k], random_type(rng), {}, false, "", true});
        std::vector<std::string> attr_pool = kAttrNames;
        std::shuffle(attr_pool.begin(), attr_pool.end(), rng);
        const std::size_t secondaries = pick(rng, 4);
        for (std::size_t k = 0; k < secondaries; ++k) {
            Attribute a{attr_pool[k], random_type(rng), {}, false, "", false};
            if (chance(rng, 0.3)) {
                a.nullable = true;
                a.default_literal = "null";
            }
            def.secondary_attrs.push_back(std::move(a));
        }
        try {
            out.db->declare(def);
            out.tables.push_back(def.ref());
        } catch (const Error&) {
            // Colliding inherited names; the table is simply left out.
        }
    }

    for (const auto& ref : out.tables) {
        const Table& t = out.db->registry().table(ref);
        const std::size_t rows = pick(rng, max_rows + 1);
        for (std::size_t r = 0; r < rows; ++r) {
            Record rec;
            for (const auto& fk : t.foreign_keys) {
                auto parent_rows = out.db->fetch_records(fk.parent);
                if (parent_rows.empty()) break;
                const Record& pr = parent_rows[pick(rng, parent_rows.size())];
                for (const auto& [child, parent] : fk.attribute_map) {
                    if (!fk.into_primary_key && chance(rng, 0.2) && t.find(child)->attr.nullable) continue;
                    rec[child] = pr.at(parent);
                }
            }
            for (const auto& ra : t.heading) {
                if (ra.inherited()) continue;
                if (ra.attr.nullable && chance(rng, 0.25)) rec[ra.attr.name] = Null{};
                else rec[ra.attr.name] = random_value(rng, ra.attr.type);
            }
            try {
                out.db->insert(ref, {rec});
            } catch (const Error&) {
                // Key clash, missing parent or conflicting inherited values.
            }
        }
    }
    return out;
}

ExprGen::ExprGen(const Database& db, std::vector<TableRef> tables, Rng& rng)
    : db_(db), tables_(std::move(tables)), rng_(rng), lineage_(db.registry()) {}

Query ExprGen::random_table() {
    return Query::table(db_.registry(), lineage_, tables_[pick(rng_, tables_.size())]);
}

Predicate ExprGen::random_predicate(const Heading& h) {
    Predicate p;
    const std::size_t atoms = 1 + pick(rng_, 2);
    for (std::size_t i = 0; i < atoms; ++i) {
        const HeadingAttr& a = h.attrs()[pick(rng_, h.size())];
        if (a.type.layer == TypeLayer::Codec) continue;
        switch (pick(rng_, 3)) {
        case 0: p.where(a.name, static_cast<CompareOp>(pick(rng_, 6)), random_value(rng_, a.type)); break;
        case 1: p.in(a.name, {random_value(rng_, a.type), random_value(rng_, a.type)}); break;
        default: p.key({{a.name, random_value(rng_, a.type)}});
        }
    }
    return p;
}

ProjectSpec ExprGen::random_projection(const Heading& h) {
    ProjectSpec spec;
    std::vector<std::string> numeric;
    for (const auto& a : h.attrs()) {
        if (!a.in_pk && chance(rng_, 0.5)) spec.keep.push_back(a.name);
        if (chance(rng_, 0.15)) spec.renames.emplace_back("r" + std::to_string(fresh_++), a.name);
        const auto k = a.type.kind();
        if (k == ValueKind::Int || k == ValueKind::Float) numeric.push_back(a.name);
    }
    if (!numeric.empty() && chance(rng_, 0.5)) {
        const std::string x = numeric[pick(rng_, numeric.size())];
        const std::string y = numeric[pick(rng_, numeric.size())];
        const char op = "+-*/"[pick(rng_, 4)];
        ScalarExpr rhs = chance(rng_, 0.5) ? ScalarExpr::attr(y) : ScalarExpr::literal(static_cast<std::int64_t>(pick(rng_, 3)));
        spec.computed.emplace_back("c" + std::to_string(fresh_++), ScalarExpr::binary(op, ScalarExpr::attr(x), rhs));
    }
    if (chance(rng_, 0.05)) spec.computed.emplace_back(h.attrs().front().name, ScalarExpr::literal(std::int64_t{1}));
    return spec;
}

std::vector<AggSpec> ExprGen::random_aggregates(const Heading& h) {
    std::vector<AggSpec> specs{{"cnt" + std::to_string(fresh_++), "count", std::nullopt}};
    const HeadingAttr& a = h.attrs()[pick(rng_, h.size())];
    static const std::vector<std::string> fns{"sum", "mean", "min", "max", "count", "median"};
    specs.push_back({"agg" + std::to_string(fresh_++), fns[pick(rng_, fns.size())], a.name});
    return specs;
}

Query ExprGen::random_query(int depth) {
    if (depth <= 0 || chance(rng_, 0.25)) return random_table();
    for (int attempt = 0; attempt < 4; ++attempt) {
        Query a = random_query(depth - 1);
        try {
            switch (pick(rng_, 7)) {
            case 0: return a.restrict(random_predicate(a.heading()));
            case 1: return a.restrict(random_query(depth - 1));
            case 2: return a.exclude(random_query(depth - 1));
            case 3: return a.project(random_projection(a.heading()));
            case 4: return a.join(random_query(depth - 1));
            case 5: {
                Query b = random_query(depth - 1);
                return a.aggregate(b, random_aggregates(b.heading()));
            }
            default:
                if (chance(rng_, 0.7)) return a.restrict(random_predicate(a.heading())).unite(a.restrict(random_predicate(a.heading())));
                return a.unite(random_query(depth - 1));
            }
        } catch (const Error&) {
            ++rejected_;
        }
    }
    return random_table();
}

} // namespace relatape::testing
