// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/algebra.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "relatape/error.hpp"

namespace relatape {

// ---- heading -----------------------------------------------------------------

Heading::Heading(std::vector<HeadingAttr> attrs) : attrs_(std::move(attrs)) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < attrs_.size(); ++i) {
        if (!seen.insert(attrs_[i].name).second)
            throw Error(ErrorCode::NameCollision, "attribute '" + attrs_[i].name + "' appears twice in the result");
        if (attrs_[i].in_pk) {
            if (i != key_size_) throw Error(ErrorCode::InvalidArgument, "key attributes must lead the heading");
            ++key_size_;
        }
    }
    if (key_size_ == 0) throw Error(ErrorCode::InvalidArgument, "heading has no primary key");
}

std::optional<std::size_t> Heading::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < attrs_.size(); ++i)
        if (attrs_[i].name == name) return i;
    return std::nullopt;
}

const HeadingAttr& Heading::at(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw Error(ErrorCode::UnknownAttribute, "no attribute '" + std::string(name) + "' in " + str_names());
    return attrs_[*i];
}

std::vector<std::string> Heading::names() const {
    std::vector<std::string> out;
    for (const auto& a : attrs_) out.push_back(a.name);
    return out;
}

std::vector<std::string> Heading::primary_key() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < key_size_; ++i) out.push_back(attrs_[i].name);
    return out;
}

std::vector<AttributeLineage> Heading::lineage() const {
    std::vector<AttributeLineage> out;
    for (const auto& a : attrs_) out.push_back({a.name, a.origins});
    return out;
}

std::string Heading::str_names() const {
    std::string out = "[";
    for (std::size_t i = 0; i < attrs_.size(); ++i) out += (i ? ", " : "") + attrs_[i].name;
    return out + "]";
}

std::string_view to_string(CompareOp op) {
    switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Ne: return "!=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
    }
    return "?";
}

Predicate& Predicate::where(std::string attr, CompareOp op, Value literal) {
    atoms.emplace_back(Comparison{std::move(attr), op, std::move(literal)});
    return *this;
}

Predicate& Predicate::in(std::string attr, std::vector<Value> values) {
    atoms.emplace_back(Membership{std::move(attr), std::move(values)});
    return *this;
}

Predicate& Predicate::key(Record key) {
    atoms.emplace_back(KeyMatch{std::move(key)});
    return *this;
}

// ---- scalar expressions -------------------------------------------------------

ScalarExpr ScalarExpr::attr(std::string name) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Attr;
    n->name = std::move(name);
    ScalarExpr e;
    e.node_ = std::move(n);
    return e;
}

ScalarExpr ScalarExpr::literal(Value v) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Literal;
    n->value = std::move(v);
    ScalarExpr e;
    e.node_ = std::move(n);
    return e;
}

ScalarExpr ScalarExpr::binary(char op, ScalarExpr lhs, ScalarExpr rhs) {
    if (op != '+' && op != '-' && op != '*' && op != '/')
        throw Error(ErrorCode::InvalidArgument, std::string("unknown operator '") + op + "'");
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Binary;
    n->op = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    ScalarExpr e;
    e.node_ = std::move(n);
    return e;
}

std::string ScalarExpr::str() const {
    switch (node_->kind) {
    case Node::Kind::Attr: return node_->name;
    case Node::Kind::Literal: return to_json(node_->value).dump();
    case Node::Kind::Binary:
        return "(" + node_->lhs->str() + " " + node_->op + " " + node_->rhs->str() + ")";
    }
    return "";
}

namespace {

class ScalarParser {
public:
    explicit ScalarParser(std::string_view text) : s_(text) {}

    ScalarExpr parse() {
        ScalarExpr e = sum();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(1, pos_ + 1, "expression: " + msg);
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    ScalarExpr sum() {
        ScalarExpr e = product();
        for (;;) {
            if (eat('+')) e = ScalarExpr::binary('+', e, product());
            else if (eat('-')) e = ScalarExpr::binary('-', e, product());
            else return e;
        }
    }
    ScalarExpr product() {
        ScalarExpr e = primary();
        for (;;) {
            if (eat('*')) e = ScalarExpr::binary('*', e, primary());
            else if (eat('/')) e = ScalarExpr::binary('/', e, primary());
            else return e;
        }
    }
    ScalarExpr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            ScalarExpr e = sum();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (c == '"' || c == '\'') {
            std::size_t end = s_.find(c, pos_ + 1);
            if (end == std::string_view::npos) fail("unterminated string");
            std::string body(s_.substr(pos_ + 1, end - pos_ - 1));
            pos_ = end + 1;
            return ScalarExpr::literal(body);
        }
        if (c == '-' || std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t start = pos_;
            if (c == '-') {
                ++pos_;
                skip();
                if (pos_ >= s_.size() || !(std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
                    return ScalarExpr::binary('-', ScalarExpr::literal(std::int64_t{0}), primary());
            }
            bool is_float = false;
            while (pos_ < s_.size()) {
                char d = s_[pos_];
                if (std::isdigit(static_cast<unsigned char>(d))) {
                } else if (d == '.' || d == 'e' || d == 'E') {
                    is_float = true;
                } else if ((d == '+' || d == '-') && (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E')) {
                } else {
                    break;
                }
                ++pos_;
            }
            std::string num(s_.substr(start, pos_ - start));
            num.erase(std::remove_if(num.begin(), num.end(), [](char x) { return std::isspace(static_cast<unsigned char>(x)); }),
                      num.end());
            try {
                if (is_float) return ScalarExpr::literal(std::stod(num));
                return ScalarExpr::literal(static_cast<std::int64_t>(std::stoll(num)));
            } catch (const std::exception&) {
                fail("bad number '" + num + "'");
            }
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            return ScalarExpr::attr(std::string(s_.substr(start, pos_ - start)));
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

ValueKind literal_kind(const Value& v) {
    if (std::holds_alternative<std::int64_t>(v)) return ValueKind::Int;
    if (std::holds_alternative<double>(v)) return ValueKind::Float;
    if (std::holds_alternative<std::string>(v)) return ValueKind::String;
    throw Error(ErrorCode::TypeMismatch, "literal " + to_display(v) + " cannot appear in an expression");
}

ValueKind infer_kind(const ScalarExpr& e, const Heading& h) {
    const auto& n = e.node();
    switch (n.kind) {
    case ScalarExpr::Node::Kind::Attr: {
        ValueKind k = h.at(n.name).type.kind();
        if (k != ValueKind::Int && k != ValueKind::Float && k != ValueKind::String)
            throw Error(ErrorCode::TypeMismatch, "attribute '" + n.name + "' cannot appear in an expression");
        return k;
    }
    case ScalarExpr::Node::Kind::Literal: return literal_kind(n.value);
    case ScalarExpr::Node::Kind::Binary: {
        ValueKind l = infer_kind(*n.lhs, h);
        ValueKind r = infer_kind(*n.rhs, h);
        if (l == ValueKind::String || r == ValueKind::String) {
            if (l == r && n.op == '+') return ValueKind::String;
            throw Error(ErrorCode::TypeMismatch, "operator '" + std::string(1, n.op) + "' in " + e.str() +
                                                     " needs numeric operands");
        }
        if (l == ValueKind::Int && r == ValueKind::Int && n.op != '/') return ValueKind::Int;
        return ValueKind::Float;
    }
    }
    return ValueKind::Float;
}

double as_double(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    return std::get<double>(v);
}

Value eval_scalar(const ScalarExpr& e, const Heading& h, const Row& row) {
    const auto& n = e.node();
    switch (n.kind) {
    case ScalarExpr::Node::Kind::Attr: return row[*h.index_of(n.name)];
    case ScalarExpr::Node::Kind::Literal: return n.value;
    case ScalarExpr::Node::Kind::Binary: break;
    }
    Value l = eval_scalar(*n.lhs, h, row);
    Value r = eval_scalar(*n.rhs, h, row);
    if (is_null(l) || is_null(r)) return Null{};
    if (const auto* ls = std::get_if<std::string>(&l)) return *ls + std::get<std::string>(r);
    const auto* li = std::get_if<std::int64_t>(&l);
    const auto* ri = std::get_if<std::int64_t>(&r);
    if (li && ri && n.op != '/') {
        auto a = static_cast<std::uint64_t>(*li);
        auto b = static_cast<std::uint64_t>(*ri);
        std::uint64_t out = n.op == '+' ? a + b : n.op == '-' ? a - b : a * b;
        return static_cast<std::int64_t>(out);
    }
    double a = as_double(l);
    double b = as_double(r);
    double out = 0;
    switch (n.op) {
    case '+': out = a + b; break;
    case '-': out = a - b; break;
    case '*': out = a * b; break;
    default:
        if (b == 0) return Null{};
        out = a / b;
    }
    if (!std::isfinite(out)) return Null{};
    return out;
}

TypeSpec type_for(ValueKind k) {
    switch (k) {
    case ValueKind::Int: return core_type("int64");
    case ValueKind::String: return core_type("varchar", {65535});
    default: return core_type("float64");
    }
}

bool same_domain(const TypeSpec& a, const TypeSpec& b) {
    if (a.kind() != b.kind()) return false;
    return a.kind() != ValueKind::Codec || a.codec_id == b.codec_id;
}

void require_domains(const Heading& a, const Heading& b, const std::vector<std::string>& matched) {
    for (const auto& name : matched)
        if (!same_domain(a.at(name).type, b.at(name).type))
            throw Error(ErrorCode::TypeMismatch, "attribute '" + name + "' is " + a.at(name).type.token() +
                                                     " on the left and " + b.at(name).type.token() + " on the right");
}

Value check_literal(const HeadingAttr& attr, const Value& v) {
    if (attr.type.layer == TypeLayer::Codec)
        throw Error(ErrorCode::TypeMismatch, "codec attribute '" + attr.name + "' cannot be restricted by value");
    if (is_null(v)) return v;
    return conform(attr.type, v);
}

std::shared_ptr<QueryNode> make_node(NodeKind kind, std::vector<Query> children) {
    auto n = std::make_shared<QueryNode>();
    n->kind = kind;
    n->children = std::move(children);
    return n;
}

} // namespace

ScalarExpr parse_scalar(std::string_view text) { return ScalarParser(text).parse(); }

// ---- construction ---------------------------------------------------------------

Query Query::table(const SchemaRegistry& registry, const TableRef& ref) {
    LineageGraph lineage(registry);
    return table(registry, lineage, ref);
}

Query Query::table(const SchemaRegistry& registry, const LineageGraph& lineage, const TableRef& ref) {
    const Table& t = registry.table(ref);
    std::vector<HeadingAttr> attrs;
    for (std::size_t i = 0; i < t.heading.size(); ++i) {
        const auto& a = t.heading[i].attr;
        attrs.push_back({a.name, a.type, lineage.origins_of(ref, a.name), i < t.key_size, a.nullable && i >= t.key_size});
    }
    auto n = make_node(NodeKind::Table, {});
    n->heading = Heading(std::move(attrs));
    n->storage_name = Database::storage_name(ref);
    return Query(std::move(n));
}

Query Query::restrict(Predicate predicate) const {
    const Heading& h = heading();
    for (auto& atom : predicate.atoms) {
        if (auto* c = std::get_if<Comparison>(&atom)) {
            c->literal = check_literal(h.at(c->attr), c->literal);
        } else if (auto* m = std::get_if<Membership>(&atom)) {
            for (auto& v : m->values) v = check_literal(h.at(m->attr), v);
        } else {
            for (auto& [name, v] : std::get<KeyMatch>(atom).key) v = check_literal(h.at(name), v);
        }
    }
    auto n = make_node(NodeKind::Restrict, {*this});
    n->heading = h;
    n->predicate = std::move(predicate);
    return Query(std::move(n));
}

Query Query::restrict(const Query& relation) const {
    auto matched = resolve_join_attrs(heading().lineage(), relation.heading().lineage());
    require_domains(heading(), relation.heading(), matched);
    auto n = make_node(NodeKind::Restrict, {*this, relation});
    n->heading = heading();
    n->by_relation = true;
    n->matched = std::move(matched);
    return Query(std::move(n));
}

Query Query::exclude(const Query& relation) const {
    Query q = restrict(relation);
    auto n = std::make_shared<QueryNode>(*q.node_);
    n->negate = true;
    return Query(std::move(n));
}

Query Query::project(ProjectSpec spec) const {
    const Heading& h = heading();
    std::set<std::string> keep;
    for (const auto& k : spec.keep) {
        h.at(k);
        keep.insert(k);
    }
    std::map<std::string, std::string> renamed;  // old -> new
    for (const auto& [to, from] : spec.renames) {
        h.at(from);
        if (!renamed.emplace(from, to).second)
            throw Error(ErrorCode::NameCollision, "attribute '" + from + "' is renamed twice");
    }
    std::vector<HeadingAttr> attrs;
    std::vector<std::size_t> sources;
    for (std::size_t i = 0; i < h.size(); ++i) {
        HeadingAttr a = h.attrs()[i];
        if (auto r = renamed.find(a.name); r != renamed.end()) {
            a.name = r->second;
        } else if (!a.in_pk && !keep.count(a.name)) {
            continue;
        }
        attrs.push_back(std::move(a));
        sources.push_back(i);
    }
    for (const auto& [name, expr] : spec.computed) {
        ValueKind k = infer_kind(expr, h);
        attrs.push_back({name, type_for(k), {fresh_origin(name)}, false, true});
    }
    auto n = make_node(NodeKind::Project, {*this});
    n->heading = Heading(std::move(attrs));
    n->project = std::move(spec);
    n->project_sources = std::move(sources);
    return Query(std::move(n));
}

Query Query::join(const Query& other) const {
    const Heading& a = heading();
    const Heading& b = other.heading();
    auto matched = resolve_join_attrs(a.lineage(), b.lineage());
    require_domains(a, b, matched);
    const std::set<std::string> matched_set(matched.begin(), matched.end());

    std::vector<std::string> pk = a.primary_key();
    for (const auto& k : b.primary_key())
        if (std::find(pk.begin(), pk.end(), k) == pk.end()) pk.push_back(k);
    const std::set<std::string> pk_set(pk.begin(), pk.end());

    auto make_attr = [&](const std::string& name) {
        HeadingAttr out;
        auto ia = a.index_of(name);
        const HeadingAttr& src = ia ? a.attrs()[*ia] : b.at(name);
        out = src;
        if (matched_set.count(name)) {
            const auto& other_origins = b.at(name).origins;
            out.origins.insert(other_origins.begin(), other_origins.end());
            out.nullable = false;
        }
        out.in_pk = pk_set.count(name) > 0;
        if (out.in_pk) out.nullable = false;
        return out;
    };
    std::vector<HeadingAttr> attrs;
    for (const auto& k : pk) attrs.push_back(make_attr(k));
    for (const auto& x : a.attrs())
        if (!pk_set.count(x.name)) attrs.push_back(make_attr(x.name));
    for (const auto& x : b.attrs())
        if (!pk_set.count(x.name) && !matched_set.count(x.name)) attrs.push_back(make_attr(x.name));

    auto n = make_node(NodeKind::Join, {*this, other});
    n->heading = Heading(std::move(attrs));
    n->matched = std::move(matched);
    return Query(std::move(n));
}

Query Query::aggregate(const Query& other, std::vector<AggSpec> specs) const {
    const Heading& a = heading();
    const Heading& b = other.heading();
    auto matched = resolve_join_attrs(a.lineage(), b.lineage());
    require_domains(a, b, matched);
    std::vector<HeadingAttr> attrs = a.attrs();
    for (const auto& s : specs) {
        static const std::set<std::string> known{"count", "sum", "mean", "min", "max"};
        if (!known.count(s.fn)) throw Error(ErrorCode::UnknownAggregate, "unknown aggregate function '" + s.fn + "'");
        HeadingAttr out{s.name, core_type("int64"), {fresh_origin(s.name)}, false, false};
        if (!s.attr) {
            if (s.fn != "count")
                throw Error(ErrorCode::InvalidArgument, "aggregate '" + s.fn + "' needs an attribute");
        } else {
            const HeadingAttr& src = b.at(*s.attr);
            const ValueKind k = src.type.kind();
            if (s.fn == "sum" || s.fn == "mean") {
                if (k != ValueKind::Int && k != ValueKind::Float)
                    throw Error(ErrorCode::TypeMismatch, s.fn + " needs a numeric attribute, got '" + *s.attr + "'");
                out.type = (s.fn == "sum" && k == ValueKind::Int) ? core_type("int64") : core_type("float64");
                out.nullable = true;
            } else if (s.fn == "min" || s.fn == "max") {
                if (k == ValueKind::Codec || k == ValueKind::Json)
                    throw Error(ErrorCode::TypeMismatch, s.fn + " needs an ordered attribute, got '" + *s.attr + "'");
                out.type = src.type;
                out.nullable = true;
            }
        }
        attrs.push_back(std::move(out));
    }
    auto n = make_node(NodeKind::Aggregate, {*this, other});
    n->heading = Heading(std::move(attrs));
    n->matched = std::move(matched);
    n->aggregates = std::move(specs);
    return Query(std::move(n));
}

Query Query::unite(const Query& other) const {
    const Heading& a = heading();
    const Heading& b = other.heading();
    if (a.size() != b.size() || a.key_size() != b.key_size())
        throw Error(ErrorCode::HeadingMismatch, "union operands have different headings");
    std::vector<HeadingAttr> attrs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a.attrs()[i];
        const auto& y = b.attrs()[i];
        if (x.name != y.name || x.in_pk != y.in_pk || !(x.type == y.type))
            throw Error(ErrorCode::HeadingMismatch, "union operands differ at attribute '" + x.name + "'");
        if (!semantically_compatible(x.origins, y.origins)) throw SemanticMismatch(x.name, x.origins, y.origins);
        HeadingAttr out = x;
        out.origins.insert(y.origins.begin(), y.origins.end());
        out.nullable = x.nullable || y.nullable;
        attrs.push_back(std::move(out));
    }
    auto n = make_node(NodeKind::Union, {*this, other});
    n->heading = Heading(std::move(attrs));
    return Query(std::move(n));
}

const Heading& Query::heading() const { return node_->heading; }
NodeKind Query::kind() const { return node_->kind; }

std::string Query::str() const {
    const auto& n = *node_;
    switch (n.kind) {
    case NodeKind::Table: return n.storage_name;
    case NodeKind::Restrict: {
        if (n.by_relation)
            return "(" + n.children[0].str() + (n.negate ? " - " : " & ") + n.children[1].str() + ")";
        std::string out = "(" + n.children[0].str() + " & {";
        for (std::size_t i = 0; i < n.predicate.atoms.size(); ++i) {
            if (i) out += " and ";
            const auto& atom = n.predicate.atoms[i];
            if (const auto* c = std::get_if<Comparison>(&atom))
                out += c->attr + std::string(to_string(c->op)) + to_json(c->literal).dump();
            else if (const auto* m = std::get_if<Membership>(&atom))
                out += m->attr + " in " + std::to_string(m->values.size()) + " values";
            else
                out += to_json(std::get<KeyMatch>(atom).key).dump();
        }
        return out + "})";
    }
    case NodeKind::Project: {
        std::string out = n.children[0].str() + ".proj(";
        const auto names = n.heading.names();
        for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
        return out + ")";
    }
    case NodeKind::Join: return "(" + n.children[0].str() + " * " + n.children[1].str() + ")";
    case NodeKind::Aggregate: {
        std::string out = n.children[0].str() + ".aggr(" + n.children[1].str();
        for (const auto& s : n.aggregates) out += ", " + s.name + "=" + s.fn + "(" + s.attr.value_or("*") + ")";
        return out + ")";
    }
    case NodeKind::Union: return "(" + n.children[0].str() + " + " + n.children[1].str() + ")";
    }
    return "";
}

// ---- evaluation -------------------------------------------------------------------

namespace {

struct KeyLess {
    std::size_t key_size;
    bool operator()(const Row& a, const Row& b) const {
        for (std::size_t i = 0; i < key_size; ++i)
            if (auto c = compare(a[i], b[i]); c != 0) return c < 0;
        return false;
    }
};

void sort_rows(std::vector<Row>& rows, std::size_t key_size) {
    std::sort(rows.begin(), rows.end(), KeyLess{key_size});
}

bool compare_holds(CompareOp op, const Value& v, const Value& lit) {
    if (is_null(v) || is_null(lit)) return false;
    auto c = compare(v, lit);
    switch (op) {
    case CompareOp::Eq: return c == 0;
    case CompareOp::Ne: return c != 0;
    case CompareOp::Lt: return c < 0;
    case CompareOp::Le: return c <= 0;
    case CompareOp::Gt: return c > 0;
    case CompareOp::Ge: return c >= 0;
    }
    return false;
}

std::vector<std::size_t> columns(const Heading& h, const std::vector<std::string>& names) {
    std::vector<std::size_t> out;
    for (const auto& n : names) out.push_back(*h.index_of(n));
    return out;
}

/// Matched-attribute values, or nullopt when any is null (null never matches).
std::optional<Row> probe(const Row& row, const std::vector<std::size_t>& cols) {
    Row out;
    out.reserve(cols.size());
    for (std::size_t c : cols) {
        if (is_null(row[c])) return std::nullopt;
        out.push_back(row[c]);
    }
    return out;
}

using Index = std::map<Row, std::vector<const Row*>, RowLess>;

Index build_index(const std::vector<Row>& rows, const std::vector<std::size_t>& cols) {
    Index idx;
    for (const Row& r : rows)
        if (auto k = probe(r, cols)) idx[*k].push_back(&r);
    return idx;
}

Value aggregate_value(const AggSpec& spec, std::optional<std::size_t> col, const std::vector<const Row*>& group) {
    if (spec.fn == "count") {
        if (!col) return static_cast<std::int64_t>(group.size());
        std::int64_t n = 0;
        for (const Row* r : group) n += !is_null((*r)[*col]);
        return n;
    }
    std::vector<const Value*> vals;
    for (const Row* r : group)
        if (!is_null((*r)[*col])) vals.push_back(&(*r)[*col]);
    if (vals.empty()) return Null{};
    if (spec.fn == "min" || spec.fn == "max") {
        const Value* best = vals.front();
        for (const Value* v : vals)
            if (spec.fn == "min" ? compare(*v, *best) < 0 : compare(*v, *best) > 0) best = v;
        return *best;
    }
    if (std::holds_alternative<std::int64_t>(*vals.front()) && spec.fn == "sum") {
        std::uint64_t s = 0;
        for (const Value* v : vals) s += static_cast<std::uint64_t>(std::get<std::int64_t>(*v));
        return static_cast<std::int64_t>(s);
    }
    double s = 0;
    for (const Value* v : vals) s += as_double(*v);
    if (spec.fn == "mean") s /= static_cast<double>(vals.size());
    if (!std::isfinite(s)) return Null{};
    return s;
}

std::vector<Row> eval(const Query& q, const TableReader& reader) {
    const QueryNode& n = q.node();
    const Heading& h = n.heading;
    switch (n.kind) {
    case NodeKind::Table: return reader.scan(n.storage_name);
    case NodeKind::Restrict: {
        std::vector<Row> in = eval(n.children[0], reader);
        std::vector<Row> out;
        if (!n.by_relation) {
            for (Row& r : in)
                if (predicate_holds(n.predicate, h, r)) out.push_back(std::move(r));
            return out;
        }
        std::vector<Row> other = eval(n.children[1], reader);
        const Heading& oh = n.children[1].heading();
        Index idx = build_index(other, columns(oh, n.matched));
        auto cols = columns(h, n.matched);
        for (Row& r : in) {
            auto k = probe(r, cols);
            bool member = k && idx.count(*k);
            if (member != n.negate) out.push_back(std::move(r));
        }
        return out;
    }
    case NodeKind::Project: {
        std::vector<Row> in = eval(n.children[0], reader);
        const Heading& ih = n.children[0].heading();
        std::vector<Row> out;
        out.reserve(in.size());
        for (const Row& r : in) {
            Row o;
            o.reserve(h.size());
            for (std::size_t s : n.project_sources) o.push_back(r[s]);
            for (const auto& [name, expr] : n.project.computed) o.push_back(eval_scalar(expr, ih, r));
            out.push_back(std::move(o));
        }
        // Renaming a key attribute can change the sort order.
        sort_rows(out, h.key_size());
        return out;
    }
    case NodeKind::Join: {
        std::vector<Row> left = eval(n.children[0], reader);
        std::vector<Row> right = eval(n.children[1], reader);
        const Heading& lh = n.children[0].heading();
        const Heading& rh = n.children[1].heading();
        Index idx = build_index(right, columns(rh, n.matched));
        auto lcols = columns(lh, n.matched);
        // output column -> (side, index)
        std::vector<std::pair<int, std::size_t>> src;
        for (const auto& a : h.attrs()) {
            if (auto i = lh.index_of(a.name)) src.emplace_back(0, *i);
            else src.emplace_back(1, *rh.index_of(a.name));
        }
        std::vector<Row> out;
        for (const Row& l : left) {
            auto k = probe(l, lcols);
            if (!k) continue;
            auto it = idx.find(*k);
            if (it == idx.end()) continue;
            for (const Row* r : it->second) {
                Row o;
                o.reserve(src.size());
                for (auto [side, i] : src) o.push_back(side == 0 ? l[i] : (*r)[i]);
                out.push_back(std::move(o));
            }
        }
        sort_rows(out, h.key_size());
        return out;
    }
    case NodeKind::Aggregate: {
        std::vector<Row> left = eval(n.children[0], reader);
        std::vector<Row> right = eval(n.children[1], reader);
        const Heading& lh = n.children[0].heading();
        const Heading& rh = n.children[1].heading();
        Index idx = build_index(right, columns(rh, n.matched));
        auto lcols = columns(lh, n.matched);
        std::vector<std::optional<std::size_t>> agg_cols;
        for (const auto& s : n.aggregates) agg_cols.push_back(s.attr ? rh.index_of(*s.attr) : std::nullopt);
        static const std::vector<const Row*> empty;
        for (Row& l : left) {
            auto k = probe(l, lcols);
            const std::vector<const Row*>* group = &empty;
            if (k)
                if (auto it = idx.find(*k); it != idx.end()) group = &it->second;
            for (std::size_t i = 0; i < n.aggregates.size(); ++i)
                l.push_back(aggregate_value(n.aggregates[i], agg_cols[i], *group));
        }
        return left;
    }
    case NodeKind::Union: {
        std::vector<Row> left = eval(n.children[0], reader);
        std::vector<Row> right = eval(n.children[1], reader);
        std::map<Row, Row, KeyLess> merged(KeyLess{h.key_size()});
        for (Row& r : left) {
            Row key(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(h.key_size()));
            merged.emplace(std::move(key), std::move(r));
        }
        for (Row& r : right) {
            Row key(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(h.key_size()));
            auto [it, fresh] = merged.emplace(key, r);
            if (!fresh && !(it->second == r)) {
                std::string k;
                for (const auto& v : key) k += (k.empty() ? "" : ", ") + to_display(v);
                throw Error(ErrorCode::ConflictingDuplicate, "union operands disagree on key (" + k + ")");
            }
        }
        std::vector<Row> out;
        out.reserve(merged.size());
        for (auto& [key, row] : merged) out.push_back(std::move(row));
        return out;
    }
    }
    return {};
}

} // namespace

bool predicate_holds(const Predicate& p, const Heading& h, const Row& row) {
    for (const auto& atom : p.atoms) {
        if (const auto* c = std::get_if<Comparison>(&atom)) {
            if (!compare_holds(c->op, row[*h.index_of(c->attr)], c->literal)) return false;
        } else if (const auto* m = std::get_if<Membership>(&atom)) {
            const Value& v = row[*h.index_of(m->attr)];
            if (is_null(v)) return false;
            if (std::none_of(m->values.begin(), m->values.end(), [&](const Value& x) { return x == v; })) return false;
        } else {
            for (const auto& [name, want] : std::get<KeyMatch>(atom).key) {
                const Value& v = row[*h.index_of(name)];
                if (is_null(v) || is_null(want) || !(v == want)) return false;
            }
        }
    }
    return true;
}

std::optional<LazyRef> Relation::lazy(std::size_t row, std::string_view attr, const Database& db) const {
    const Value& v = rows.at(row).at(heading.index_of(attr).value());
    if (const auto* ref = std::get_if<ObjectRef>(&v)) return db.lazy(*ref);
    return std::nullopt;
}

Relation evaluate(const Query& query, const TableReader& reader) {
    // Rows first: GCC 11 leaks earlier aggregate members when a later initializer throws.
    std::vector<Row> rows = eval(query, reader);
    return Relation{query.heading(), std::move(rows)};
}

Relation evaluate(const Query& query, Database& db) {
    auto reader = db.store().read();
    return evaluate(query, *reader);
}

} // namespace relatape
