// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "relatape/error.hpp"

namespace relatape {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// Cursor over one source line with 1-based column reporting.
class LineCursor {
public:
    LineCursor(std::string_view line, std::size_t line_no) : line_(line), line_no_(line_no) {}

    void skip_space() {
        while (pos_ < line_.size() && is_space(line_[pos_])) ++pos_;
    }
    bool at_end() const { return pos_ >= line_.size(); }
    char peek() const { return at_end() ? '\0' : line_[pos_]; }
    std::size_t column() const { return pos_ + 1; }
    void advance(std::size_t n = 1) { pos_ = std::min(pos_ + n, line_.size()); }
    std::string_view rest() const { return line_.substr(pos_); }

    std::string_view take_while(auto pred) {
        std::size_t start = pos_;
        while (pos_ < line_.size() && pred(line_[pos_])) ++pos_;
        return line_.substr(start, pos_ - start);
    }

    [[noreturn]] void fail(const std::string& msg, std::size_t col = 0) const {
        throw ParseError(line_no_, col ? col : column(), msg);
    }

private:
    std::string_view line_;
    std::size_t line_no_;
    std::size_t pos_ = 0;
};

TableRef resolve_reference(std::string_view token, const std::string& default_schema) {
    std::string schema = default_schema;
    std::string_view name = token;
    if (auto dot = token.find('.'); dot != std::string_view::npos) {
        std::string_view head = token.substr(0, dot);
        if (!head.empty() && std::islower(static_cast<unsigned char>(head.front()))) {
            schema = std::string(head);
            name = token.substr(dot + 1);
        }
    }
    return {schema, to_snake_case(name)};
}

ForeignKey parse_foreign_key(LineCursor& cur, const DefinitionSource& src, bool into_key) {
    cur.advance(2);
    cur.skip_space();
    const std::size_t ref_col = cur.column();
    std::string_view token = cur.take_while([](char c) { return is_ident_char(c) || c == '.'; });
    if (token.empty()) cur.fail("expected a table reference after '->'");
    ForeignKey fk;
    fk.parent = resolve_reference(token, src.schema_name);
    fk.into_primary_key = into_key;
    if (!is_identifier(fk.parent.schema) || !is_identifier(fk.parent.table))
        cur.fail("malformed table reference '" + std::string(token) + "'", ref_col);

    cur.skip_space();
    if (cur.peek() == '(') {
        cur.advance();
        while (true) {
            cur.skip_space();
            const std::size_t child_col = cur.column();
            std::string child(cur.take_while(is_ident_char));
            if (!is_identifier(child)) cur.fail("bad identifier '" + child + "' in rename map", child_col);
            cur.skip_space();
            if (cur.peek() != '=') cur.fail("expected '=' in rename map");
            cur.advance();
            cur.skip_space();
            const std::size_t parent_col = cur.column();
            std::string parent(cur.take_while(is_ident_char));
            if (!is_identifier(parent)) cur.fail("bad identifier '" + parent + "' in rename map", parent_col);
            fk.attribute_map.emplace_back(std::move(child), std::move(parent));
            cur.skip_space();
            if (cur.peek() == ',') {
                cur.advance();
                continue;
            }
            if (cur.peek() == ')') {
                cur.advance();
                break;
            }
            cur.fail("expected ',' or ')' in rename map");
        }
        cur.skip_space();
    }
    if (!cur.at_end() && cur.peek() != '#') cur.fail("unexpected text after foreign key");
    return fk;
}

Attribute parse_attribute(LineCursor& cur, bool primary) {
    Attribute a;
    a.in_primary_key = primary;
    const std::size_t name_col = cur.column();
    a.name = std::string(cur.take_while(is_ident_char));
    if (!is_identifier(a.name)) {
        if (a.name.empty()) cur.fail("expected an attribute name", name_col);
        cur.fail("bad identifier '" + a.name + "'", name_col);
    }
    cur.skip_space();
    if (cur.peek() == '=') {
        cur.advance();
        cur.skip_space();
        std::string literal;
        if (cur.peek() == '"' || cur.peek() == '\'') {
            const char quote = cur.peek();
            const std::size_t open_col = cur.column();
            literal.push_back(quote);
            cur.advance();
            while (!cur.at_end() && cur.peek() != quote) {
                literal.push_back(cur.peek());
                cur.advance();
            }
            if (cur.at_end()) cur.fail("unterminated string literal", open_col);
            literal.push_back(quote);
            cur.advance();
        } else {
            literal = std::string(cur.take_while([](char c) { return !is_space(c) && c != ':' && c != '#'; }));
        }
        if (literal.empty()) cur.fail("expected a default literal after '='");
        a.default_literal = literal;
        a.nullable = literal == "null";
        cur.skip_space();
    }
    if (cur.peek() != ':') cur.fail("expected ':' before the attribute type");
    cur.advance();
    cur.skip_space();
    const std::size_t type_col = cur.column();
    std::string_view type_text = trim(cur.take_while([](char c) { return c != '#'; }));
    if (type_text.empty()) cur.fail("missing attribute type", type_col);
    try {
        a.type = parse_type(type_text);
    } catch (const Error&) {
        cur.fail("unknown type token '" + std::string(type_text) + "'", type_col);
    }
    if (cur.peek() == '#') {
        cur.advance();
        a.comment = std::string(trim(cur.rest()));
    }
    return a;
}

std::string render_reference(const TableRef& ref, const std::string& schema) {
    return ref.schema == schema ? ref.table : ref.qualified();
}

void render_fk(std::ostringstream& out, const ForeignKey& fk, const std::string& schema) {
    out << "-> " << render_reference(fk.parent, schema);
    if (!fk.attribute_map.empty()) {
        out << " (";
        for (std::size_t i = 0; i < fk.attribute_map.size(); ++i) {
            if (i) out << ", ";
            out << fk.attribute_map[i].first << " = " << fk.attribute_map[i].second;
        }
        out << ")";
    }
    out << "\n";
}

void render_attribute(std::ostringstream& out, const Attribute& a) {
    out << a.name;
    if (a.default_literal) out << " = " << *a.default_literal;
    out << " : " << a.type.token();
    if (!a.comment.empty()) out << "  # " << a.comment;
    out << "\n";
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

/// Splits leading `@directive value` lines from a definition body.
struct Directives {
    std::optional<std::string> tier;
    std::optional<std::string> master;
    std::optional<std::string> table;
    std::string body;
};

Directives split_directives(std::string_view text, const std::string& where) {
    Directives d;
    std::ostringstream body;
    std::size_t line_no = 0;
    bool in_header = true;
    for (auto line : split_lines(text)) {
        ++line_no;
        std::string_view t = trim(line);
        if (in_header && !t.empty() && t.front() == '@') {
            auto space = t.find(' ');
            std::string key(t.substr(1, space == std::string_view::npos ? std::string_view::npos : space - 1));
            std::string value(space == std::string_view::npos ? std::string_view{} : trim(t.substr(space + 1)));
            if (key == "tier") d.tier = value;
            else if (key == "master") d.master = value;
            else if (key == "table") d.table = value;
            else throw ParseError(line_no, 1, "unknown directive '@" + key + "' in " + where);
            body << "\n";  // keep line numbers aligned
            continue;
        }
        in_header = false;
        body << line << "\n";
    }
    d.body = body.str();
    return d;
}

} // namespace

std::string to_snake_case(std::string_view name) {
    std::string out;
    for (std::size_t i = 0; i < name.size(); ++i) {
        const char c = name[i];
        if (c == '.') {
            out += "__";
        } else if (std::isupper(static_cast<unsigned char>(c))) {
            if (i > 0 && (std::islower(static_cast<unsigned char>(name[i - 1])) ||
                          std::isdigit(static_cast<unsigned char>(name[i - 1]))))
                out.push_back('_');
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            out.push_back(c);
        }
    }
    return out;
}

TableDef parse_definition(const DefinitionSource& src) {
    TableDef def;
    def.schema_name = src.schema_name;
    def.table_name = src.table_name;
    def.tier = src.tier;
    def.master = src.master;

    bool below_separator = false;
    bool seen_separator = false;
    bool seen_content = false;
    std::set<std::string> names;
    std::size_t line_no = 0;

    for (auto raw : split_lines(src.text)) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        LineCursor cur(line, line_no);
        cur.skip_space();
        if (cur.at_end()) continue;

        if (cur.peek() == '#') {
            if (!seen_content && !below_separator && def.comment.empty()) {
                cur.advance();
                def.comment = std::string(trim(cur.rest()));
            }
            continue;
        }
        seen_content = true;

        std::string_view body = trim(cur.rest());
        if (body.size() >= 3 && body.find_first_not_of('-') == std::string_view::npos) {
            if (seen_separator) cur.fail("duplicate '---' separator");
            seen_separator = below_separator = true;
            continue;
        }

        if (body.rfind("->", 0) == 0) {
            def.foreign_keys.push_back(parse_foreign_key(cur, src, !below_separator));
            continue;
        }

        const std::size_t col = cur.column();
        Attribute a = parse_attribute(cur, !below_separator);
        if (!names.insert(a.name).second) cur.fail("duplicate attribute '" + a.name + "'", col);
        (below_separator ? def.secondary_attrs : def.primary_attrs).push_back(std::move(a));
    }

    if (!seen_separator) throw ParseError(line_no == 0 ? 1 : line_no, 1, "missing '---' separator");
    return def;
}

std::string render_definition(const TableDef& def) {
    std::ostringstream out;
    if (!def.comment.empty()) out << "# " << def.comment << "\n";
    for (const auto& fk : def.foreign_keys)
        if (fk.into_primary_key) render_fk(out, fk, def.schema_name);
    for (const auto& a : def.primary_attrs) render_attribute(out, a);
    out << "---\n";
    for (const auto& fk : def.foreign_keys)
        if (!fk.into_primary_key) render_fk(out, fk, def.schema_name);
    for (const auto& a : def.secondary_attrs) render_attribute(out, a);
    return out.str();
}

DefinitionSource read_definition_file(const std::filesystem::path& path, const std::string& schema_name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read definition file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Directives d = split_directives(ss.str(), path.string());
    DefinitionSource src;
    src.text = std::move(d.body);
    src.table_name = path.stem().string();
    src.schema_name = schema_name;
    src.tier = d.tier ? parse_tier(*d.tier) : Tier::Manual;
    if (d.master) src.master = resolve_reference(*d.master, schema_name);
    if (!is_identifier(src.table_name))
        throw Error(ErrorCode::InvalidDefinition, "definition file name '" + src.table_name + "' is not a valid table name");
    return src;
}

std::string render_definition_file(const TableDef& def) {
    std::string out = "@tier " + std::string(to_string(def.tier)) + "\n";
    if (def.master) out += "@master " + render_reference(*def.master, def.schema_name) + "\n";
    return out + render_definition(def);
}

std::vector<TableDef> load_definition_directory(const std::filesystem::path& dir, const std::string& schema_name) {
    if (!std::filesystem::is_directory(dir))
        throw Error(ErrorCode::InvalidArgument, "not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".djt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    // Pass one: names and bodies.
    std::map<std::string, TableDef> defs;
    for (const auto& f : files) {
        TableDef def = parse_definition(read_definition_file(f, schema_name));
        defs.emplace(def.table_name, std::move(def));
    }

    // Pass two: order by in-directory references (parents first, then by name).
    std::map<std::string, std::set<std::string>> deps;
    for (const auto& [name, def] : defs) {
        auto& d = deps[name];
        for (const auto& fk : def.foreign_keys)
            if (fk.parent.schema == schema_name && defs.contains(fk.parent.table)) d.insert(fk.parent.table);
        if (def.master && defs.contains(def.master->table)) d.insert(def.master->table);
    }
    std::vector<TableDef> ordered;
    std::set<std::string> done;
    while (ordered.size() < defs.size()) {
        bool progressed = false;
        for (const auto& [name, d] : deps) {
            if (done.contains(name)) continue;
            if (std::all_of(d.begin(), d.end(), [&](const auto& p) { return done.contains(p); })) {
                ordered.push_back(defs.at(name));
                done.insert(name);
                progressed = true;
                break;
            }
        }
        if (!progressed) {
            std::string names;
            for (const auto& [name, d] : deps)
                if (!done.contains(name)) names += (names.empty() ? "" : ", ") + name;
            throw Error(ErrorCode::CycleError, "cyclic foreign keys among: " + names);
        }
    }
    return ordered;
}

std::string serialize_registry(const SchemaRegistry& registry) {
    std::string out;
    for (const Table* t : registry.tables()) {
        out += "@table " + t->ref().qualified() + "\n";
        out += render_definition_file(t->def);
        out += "\n";
    }
    return out;
}

std::vector<TableDef> parse_manifest(std::string_view manifest) {
    std::vector<TableDef> defs;
    std::vector<std::string_view> lines = split_lines(manifest);
    std::size_t i = 0;
    while (i < lines.size()) {
        std::string_view t = trim(lines[i]);
        if (t.empty()) {
            ++i;
            continue;
        }
        if (t.rfind("@table ", 0) != 0) throw ParseError(i + 1, 1, "expected '@table' in manifest");
        const std::size_t header_line = i + 1;
        std::string qualified(trim(t.substr(7)));
        std::string block;
        ++i;
        while (i < lines.size() && trim(lines[i]).rfind("@table ", 0) != 0) {
            block += std::string(lines[i]) + "\n";
            ++i;
        }
        auto dot = qualified.find('.');
        if (dot == std::string::npos) throw ParseError(header_line, 8, "manifest table name must be qualified");
        Directives d = split_directives(block, qualified);
        DefinitionSource src;
        src.schema_name = qualified.substr(0, dot);
        src.table_name = qualified.substr(dot + 1);
        src.text = std::move(d.body);
        src.tier = d.tier ? parse_tier(*d.tier) : Tier::Manual;
        if (d.master) src.master = resolve_reference(*d.master, src.schema_name);
        defs.push_back(parse_definition(src));
    }
    return defs;
}

} // namespace relatape
