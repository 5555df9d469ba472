// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "oracle.hpp"

#include <algorithm>
#include <cmath>

namespace relatape::testing {

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::string> common(const OracleRelation& a, const OracleRelation& b) {
    std::vector<std::string> out;
    for (const auto& n : a.names)
        if (contains(b.names, n)) out.push_back(n);
    return out;
}

bool agree(const Record& a, const Record& b, const std::vector<std::string>& on) {
    for (const auto& n : on) {
        const Value& x = a.at(n);
        const Value& y = b.at(n);
        if (is_null(x) || is_null(y) || !(x == y)) return false;
    }
    return true;
}

bool holds(const Atom& atom, const Record& r) {
    if (const auto* c = std::get_if<Comparison>(&atom)) {
        const Value& v = r.at(c->attr);
        if (is_null(v) || is_null(c->literal)) return false;
        const int s = compare(v, c->literal) < 0 ? -1 : (compare(v, c->literal) > 0 ? 1 : 0);
        switch (c->op) {
        case CompareOp::Eq: return s == 0;
        case CompareOp::Ne: return s != 0;
        case CompareOp::Lt: return s < 0;
        case CompareOp::Le: return s <= 0;
        case CompareOp::Gt: return s > 0;
        case CompareOp::Ge: return s >= 0;
        }
    }
    if (const auto* m = std::get_if<Membership>(&atom)) {
        const Value& v = r.at(m->attr);
        if (is_null(v)) return false;
        for (const auto& x : m->values)
            if (x == v) return true;
        return false;
    }
    for (const auto& [n, v] : std::get<KeyMatch>(atom).key) {
        const Value& have = r.at(n);
        if (is_null(have) || is_null(v) || !(have == v)) return false;
    }
    return true;
}

Value scalar(const ScalarExpr& e, const Record& r) {
    const auto& n = e.node();
    if (n.kind == ScalarExpr::Node::Kind::Attr) return r.at(n.name);
    if (n.kind == ScalarExpr::Node::Kind::Literal) return n.value;
    Value a = scalar(*n.lhs, r);
    Value b = scalar(*n.rhs, r);
    if (is_null(a) || is_null(b)) return Null{};
    if (std::holds_alternative<std::string>(a)) return std::get<std::string>(a) + std::get<std::string>(b);
    if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b) && n.op != '/') {
        // Two's-complement wraparound, spelled out.
        const auto x = static_cast<std::uint64_t>(std::get<std::int64_t>(a));
        const auto y = static_cast<std::uint64_t>(std::get<std::int64_t>(b));
        if (n.op == '+') return static_cast<std::int64_t>(x + y);
        if (n.op == '-') return static_cast<std::int64_t>(x - y);
        return static_cast<std::int64_t>(x * y);
    }
    auto num = [](const Value& v) {
        return std::holds_alternative<double>(v) ? std::get<double>(v) : static_cast<double>(std::get<std::int64_t>(v));
    };
    const double x = num(a);
    const double y = num(b);
    double out = 0;
    if (n.op == '+') out = x + y;
    else if (n.op == '-') out = x - y;
    else if (n.op == '*') out = x * y;
    else if (y == 0) return Null{};
    else out = x / y;
    if (std::isnan(out) || std::isinf(out)) return Null{};
    return out;
}

Value aggregate(const AggSpec& s, const std::vector<const Record*>& group) {
    if (s.fn == "count") {
        if (!s.attr) return static_cast<std::int64_t>(group.size());
        std::int64_t n = 0;
        for (const Record* r : group)
            if (!is_null(r->at(*s.attr))) ++n;
        return n;
    }
    std::vector<Value> vals;
    for (const Record* r : group)
        if (!is_null(r->at(*s.attr))) vals.push_back(r->at(*s.attr));
    if (vals.empty()) return Null{};
    if (s.fn == "min") return *std::min_element(vals.begin(), vals.end(), ValueLess{});
    if (s.fn == "max") return *std::max_element(vals.begin(), vals.end(), ValueLess{});
    if (s.fn == "sum" && std::holds_alternative<std::int64_t>(vals.front())) {
        std::int64_t total = 0;
        for (const auto& v : vals) total = static_cast<std::int64_t>(static_cast<std::uint64_t>(total) + static_cast<std::uint64_t>(std::get<std::int64_t>(v)));
        return total;
    }
    double total = 0;
    for (const auto& v : vals)
        total += std::holds_alternative<double>(v) ? std::get<double>(v) : static_cast<double>(std::get<std::int64_t>(v));
    if (s.fn == "mean") total /= static_cast<double>(vals.size());
    if (std::isnan(total) || std::isinf(total)) return Null{};
    return total;
}

} // namespace

OracleRelation oracle_eval(const Query& q, const SchemaRegistry& registry, const OracleData& data) {
    const QueryNode& n = q.node();
    switch (n.kind) {
    case NodeKind::Table: {
        const Table& t = registry.lookup(n.storage_name);
        OracleRelation r{t.attribute_names(), t.primary_key(), {}};
        if (auto it = data.find(n.storage_name); it != data.end()) r.rows = it->second;
        return r;
    }
    case NodeKind::Restrict: {
        OracleRelation a = oracle_eval(n.children[0], registry, data);
        OracleRelation out{a.names, a.pk, {}};
        if (!n.by_relation) {
            for (const auto& r : a.rows)
                if (std::all_of(n.predicate.atoms.begin(), n.predicate.atoms.end(),
                                [&](const Atom& atom) { return holds(atom, r); }))
                    out.rows.push_back(r);
            return out;
        }
        OracleRelation b = oracle_eval(n.children[1], registry, data);
        auto on = common(a, b);
        for (const auto& ra : a.rows) {
            bool found = false;
            for (const auto& rb : b.rows) found = found || agree(ra, rb, on);
            if (found != n.negate) out.rows.push_back(ra);
        }
        return out;
    }
    case NodeKind::Project: {
        OracleRelation a = oracle_eval(n.children[0], registry, data);
        OracleRelation out;
        std::map<std::string, std::string> renamed;
        for (const auto& [to, from] : n.project.renames) renamed[from] = to;
        std::vector<std::pair<std::string, std::string>> mapping;  // (out, in)
        for (const auto& name : a.names) {
            if (renamed.count(name)) mapping.emplace_back(renamed[name], name);
            else if (contains(a.pk, name) || contains(n.project.keep, name)) mapping.emplace_back(name, name);
        }
        for (const auto& [o, i] : mapping) out.names.push_back(o);
        for (const auto& [name, expr] : n.project.computed) out.names.push_back(name);
        for (const auto& k : a.pk) out.pk.push_back(renamed.count(k) ? renamed[k] : k);
        for (const auto& r : a.rows) {
            Record o;
            for (const auto& [to, from] : mapping) o[to] = r.at(from);
            for (const auto& [name, expr] : n.project.computed) o[name] = scalar(expr, r);
            out.rows.push_back(std::move(o));
        }
        return out;
    }
    case NodeKind::Join: {
        OracleRelation a = oracle_eval(n.children[0], registry, data);
        OracleRelation b = oracle_eval(n.children[1], registry, data);
        auto on = common(a, b);
        OracleRelation out{a.names, a.pk, {}};
        for (const auto& x : b.names)
            if (!contains(out.names, x)) out.names.push_back(x);
        for (const auto& k : b.pk)
            if (!contains(out.pk, k)) out.pk.push_back(k);
        for (const auto& ra : a.rows)
            for (const auto& rb : b.rows)
                if (agree(ra, rb, on)) {
                    Record o = ra;
                    for (const auto& [k, v] : rb) o.emplace(k, v);
                    out.rows.push_back(std::move(o));
                }
        return out;
    }
    case NodeKind::Aggregate: {
        OracleRelation a = oracle_eval(n.children[0], registry, data);
        OracleRelation b = oracle_eval(n.children[1], registry, data);
        auto on = common(a, b);
        OracleRelation out{a.names, a.pk, {}};
        for (const auto& s : n.aggregates) out.names.push_back(s.name);
        for (const auto& ra : a.rows) {
            std::vector<const Record*> group;
            for (const auto& rb : b.rows)
                if (agree(ra, rb, on)) group.push_back(&rb);
            Record o = ra;
            for (const auto& s : n.aggregates) o[s.name] = aggregate(s, group);
            out.rows.push_back(std::move(o));
        }
        return out;
    }
    case NodeKind::Union: {
        OracleRelation a = oracle_eval(n.children[0], registry, data);
        OracleRelation b = oracle_eval(n.children[1], registry, data);
        OracleRelation out{a.names, a.pk, a.rows};
        for (const auto& rb : b.rows) {
            bool dup = false;
            for (const auto& ra : out.rows) {
                if (!agree(ra, rb, a.pk)) continue;
                if (!(ra == rb)) throw OracleConflict{};
                dup = true;
            }
            if (!dup) out.rows.push_back(rb);
        }
        return out;
    }
    }
    return {};
}

OracleData snapshot_data(Database& db) {
    OracleData out;
    for (const Table* t : db.registry().tables()) out[t->ref().qualified()] = db.fetch_records(t->ref());
    return out;
}

namespace {

bool close(const Value& a, const Value& b) {
    if (a == b) return true;
    const auto* x = std::get_if<double>(&a);
    const auto* y = std::get_if<double>(&b);
    if (!x || !y) return false;
    return std::fabs(*x - *y) <= 1e-9 * std::max({1.0, std::fabs(*x), std::fabs(*y)});
}

std::vector<Record> sorted_by(std::vector<Record> rows, const std::vector<std::string>& pk) {
    std::sort(rows.begin(), rows.end(), [&](const Record& a, const Record& b) {
        for (const auto& k : pk)
            if (auto c = compare(a.at(k), b.at(k)); c != 0) return c < 0;
        return false;
    });
    return rows;
}

} // namespace

bool same_rows(const OracleRelation& expected, const Relation& actual, std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (expected.rows.size() != actual.rows.size())
        return fail("row count " + std::to_string(actual.rows.size()) + " != oracle " +
                    std::to_string(expected.rows.size()));
    std::vector<Record> got;
    for (const Row& row : actual.rows) {
        Record r;
        for (std::size_t i = 0; i < row.size(); ++i) r[actual.heading.attrs()[i].name] = row[i];
        got.push_back(std::move(r));
    }
    auto a = sorted_by(expected.rows, expected.pk);
    auto b = sorted_by(std::move(got), expected.pk);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size()) return fail("attribute count differs");
        for (const auto& [k, v] : a[i]) {
            auto it = b[i].find(k);
            if (it == b[i].end()) return fail("missing attribute " + k);
            if (!close(v, it->second))
                return fail("row " + std::to_string(i) + " attribute " + k + ": " + to_display(it->second) +
                            " != oracle " + to_display(v));
        }
    }
    return true;
}

std::set<std::string> oracle_origins(const SchemaRegistry& registry, const TableRef& table, const std::string& attr) {
    const Table& t = registry.table(table);
    const TableDef& def = t.def;
    std::set<std::string> out;
    auto declared_here = [&](const std::vector<Attribute>& attrs) {
        return std::any_of(attrs.begin(), attrs.end(), [&](const Attribute& a) { return a.name == attr; });
    };
    if (declared_here(def.primary_attrs) || declared_here(def.secondary_attrs)) {
        out.insert(table.qualified() + "." + attr);
        return out;
    }
    for (const auto& fk : def.foreign_keys) {
        const Table& parent = registry.table(fk.parent);
        for (const auto& key : parent.primary_key()) {
            std::string child = key;
            for (const auto& [c, p] : fk.attribute_map)
                if (p == key) child = c;
            if (child != attr) continue;
            auto up = oracle_origins(registry, fk.parent, key);
            out.insert(up.begin(), up.end());
        }
    }
    return out;
}

} // namespace relatape::testing
