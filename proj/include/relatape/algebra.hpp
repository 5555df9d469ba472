// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "relatape/lineage.hpp"
#include "relatape/storage.hpp"

namespace relatape {

struct HeadingAttr {
    std::string name;
    TypeSpec type;
    OriginSet origins;
    bool in_pk = false;
    bool nullable = false;
};

/// Ordered attributes, key attributes first. Names are unique and the key is non-empty.
class Heading {
public:
    Heading() = default;
    explicit Heading(std::vector<HeadingAttr> attrs);

    const std::vector<HeadingAttr>& attrs() const { return attrs_; }
    std::size_t size() const { return attrs_.size(); }
    std::size_t key_size() const { return key_size_; }
    std::optional<std::size_t> index_of(std::string_view name) const;
    /// Throws Error(UnknownAttribute).
    const HeadingAttr& at(std::string_view name) const;
    std::vector<std::string> names() const;
    std::vector<std::string> primary_key() const;
    std::vector<AttributeLineage> lineage() const;

private:
    std::string str_names() const;

    std::vector<HeadingAttr> attrs_;
    std::size_t key_size_ = 0;
};

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(CompareOp op);

struct Comparison {
    std::string attr;
    CompareOp op = CompareOp::Eq;
    Value literal;
};

struct Membership {
    std::string attr;
    std::vector<Value> values;
};

/// Every listed attribute equals the given value.
struct KeyMatch {
    Record key;
};

using Atom = std::variant<Comparison, Membership, KeyMatch>;

/// Conjunction of atoms; the empty predicate holds for every row.
struct Predicate {
    std::vector<Atom> atoms;

    Predicate& where(std::string attr, CompareOp op, Value literal);
    Predicate& in(std::string attr, std::vector<Value> values);
    Predicate& key(Record key);
};

/// Arithmetic (+ - * /) and string concatenation (+) over attributes and literals.
class ScalarExpr {
public:
    static ScalarExpr attr(std::string name);
    static ScalarExpr literal(Value v);
    static ScalarExpr binary(char op, ScalarExpr lhs, ScalarExpr rhs);

    struct Node;
    const Node& node() const { return *node_; }
    std::string str() const;

private:
    std::shared_ptr<const Node> node_;
};

struct ScalarExpr::Node {
    enum class Kind { Attr, Literal, Binary } kind = Kind::Literal;
    std::string name;
    Value value;
    char op = '+';
    std::optional<ScalarExpr> lhs;
    std::optional<ScalarExpr> rhs;
};

/// Parses `t_end - t_start`, `name + "_x"`, `(a + 1) * 2.5`.
ScalarExpr parse_scalar(std::string_view text);

struct AggSpec {
    std::string name;
    std::string fn;  // count, sum, mean, min, max
    std::optional<std::string> attr;  // bare count when empty
};

enum class NodeKind { Table, Restrict, Project, Join, Aggregate, Union };

struct ProjectSpec {
    std::vector<std::string> keep;
    std::vector<std::pair<std::string, std::string>> renames;  // (new, old)
    std::vector<std::pair<std::string, ScalarExpr>> computed;
};

struct QueryNode;

/// Immutable relational expression. Every operator checks its operands and infers the
/// result heading at construction, so an expression that exists is well-typed.
class Query {
public:
    static Query table(const SchemaRegistry& registry, const TableRef& ref);
    static Query table(const SchemaRegistry& registry, const LineageGraph& lineage, const TableRef& ref);

    Query restrict(Predicate predicate) const;
    /// Semijoin on matched attributes.
    Query restrict(const Query& relation) const;
    /// Antijoin on matched attributes.
    Query exclude(const Query& relation) const;
    Query project(ProjectSpec spec) const;
    Query join(const Query& other) const;
    Query aggregate(const Query& other, std::vector<AggSpec> specs) const;
    Query unite(const Query& other) const;

    const Heading& heading() const;
    NodeKind kind() const;
    const QueryNode& node() const { return *node_; }
    std::string str() const;

private:
    explicit Query(std::shared_ptr<const QueryNode> node) : node_(std::move(node)) {}
    std::shared_ptr<const QueryNode> node_;
};

struct QueryNode {
    NodeKind kind = NodeKind::Table;
    Heading heading;
    std::vector<Query> children;
    std::string storage_name;  // Table
    Predicate predicate;  // Restrict by predicate
    bool by_relation = false;  // Restrict by children[1]
    bool negate = false;
    std::vector<std::string> matched;  // Restrict by relation, Join, Aggregate
    ProjectSpec project;
    std::vector<std::size_t> project_sources;  // child column per kept/renamed output attr
    std::vector<AggSpec> aggregates;
};

struct Relation {
    Heading heading;
    std::vector<Row> rows;  // key order

    /// Codec attributes hold object references; this wraps one for lazy loading.
    std::optional<LazyRef> lazy(std::size_t row, std::string_view attr, const Database& db) const;
};

/// Whether `row` (aligned with `heading`) satisfies a predicate whose literals were
/// checked by Query::restrict.
bool predicate_holds(const Predicate& predicate, const Heading& heading, const Row& row);

Relation evaluate(const Query& query, const TableReader& reader);
Relation evaluate(const Query& query, Database& db);

} // namespace relatape
