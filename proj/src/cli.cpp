// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/cli.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "relatape/diagram.hpp"
#include "relatape/dsl.hpp"
#include "relatape/error.hpp"
#include "relatape/lcms.hpp"
#include "relatape/populate.hpp"

namespace relatape {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

/// Splits on `sep` outside quotes and parentheses.
std::vector<std::string> split_top(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    char quote = 0;
    int depth = 0;
    for (char c : s) {
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '(') {
            ++depth;
        } else if (c == ')') {
            --depth;
        } else if (c == sep && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
            continue;
        }
        cur += c;
    }
    if (quote) throw Error(ErrorCode::InvalidArgument, "unterminated quote in '" + std::string(s) + "'");
    out.push_back(trim(cur));
    return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
        s.replace(pos, from.size(), to);
    return s;
}

bool is_table_token(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    });
}

std::pair<std::string, std::string> split_word(std::string_view s) {
    std::string t = trim(s);
    auto sp = t.find_first_of(" \t");
    if (sp == std::string::npos) return {t, ""};
    return {t.substr(0, sp), trim(std::string_view(t).substr(sp))};
}

Json record_json(const Heading& h, const Row& row) {
    Json j = Json::object();
    for (std::size_t i = 0; i < h.size(); ++i) j[h.attrs()[i].name] = to_json(row[i]);
    return j;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageFailure, "cannot write " + p.string());
    out << body;
}

// ---- codec payloads in rows files ---------------------------------------------------

void flatten(const Json& j, std::vector<std::int64_t>& shape, std::vector<double>& data, std::size_t depth) {
    if (j.is_array()) {
        if (shape.size() == depth) shape.push_back(static_cast<std::int64_t>(j.size()));
        else if (shape[depth] != static_cast<std::int64_t>(j.size()))
            throw Error(ErrorCode::TypeMismatch, "ragged array");
        for (const auto& x : j) flatten(x, shape, data, depth + 1);
    } else if (j.is_number()) {
        if (shape.size() != depth) throw Error(ErrorCode::TypeMismatch, "ragged array");
        data.push_back(j.get<double>());
    } else {
        throw Error(ErrorCode::TypeMismatch, "array elements must be numbers");
    }
}

F64Array array_from_json(const Json& j) {
    F64Array a;
    flatten(j, a.shape, a.data, 0);
    return a;
}

Value codec_value(const Json& spec, const TypeSpec& type, const fs::path& base) {
    const std::string codec = spec.value("$codec", type.codec_id);
    if (codec != type.codec_id)
        throw Error(ErrorCode::TypeMismatch, "attribute expects <" + type.codec_id + ">, rows file says " + codec);
    if (spec.contains("$value")) {
        const Json& v = spec["$value"];
        if (codec == "f64_array") return array_from_json(v);
        if (v.is_string()) return from_hex(v.get<std::string>());
        throw Error(ErrorCode::TypeMismatch, "inline " + codec + " values are hex strings");
    }
    fs::path file = spec.at("$file").get<std::string>();
    if (file.is_relative()) file = base / file;
    std::string body = read_text(file);
    if (codec == "f64_array") {
        if (file.extension() == ".json") return array_from_json(Json::parse(body));
        if (body.size() % 8 != 0) throw Error(ErrorCode::TypeMismatch, file.string() + " is not a whole number of doubles");
        F64Array a;
        a.shape = {static_cast<std::int64_t>(body.size() / 8)};
        a.data.resize(body.size() / 8);
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            std::uint64_t bits = 0;
            for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(body[i * 8 + static_cast<std::size_t>(b)]);
            std::memcpy(&a.data[i], &bits, 8);
        }
        return a;
    }
    return Bytes(body.begin(), body.end());
}

Record record_from_json(const Json& j, const Table& t, const fs::path& base) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "each row must be a JSON object");
    Record r;
    for (const auto& [name, v] : j.items()) {
        if (name == "$parts") continue;
        const ResolvedAttribute* a = t.find(name);
        if (!a)
            throw Error(ErrorCode::UnknownAttribute, "table " + t.ref().qualified() + " has no attribute '" + name + "'");
        if (a->attr.type.layer == TypeLayer::Codec && v.is_object() && (v.contains("$file") || v.contains("$value")))
            r[name] = codec_value(v, a->attr.type, base);
        else
            r[name] = value_from_json(a->attr.type, v);
    }
    return r;
}

// ---- conditions and pipelines --------------------------------------------------

Value literal_for(const HeadingAttr& a, std::string_view text) {
    std::string t = trim(text);
    if (t.empty()) throw Error(ErrorCode::InvalidArgument, "missing value for '" + a.name + "'");
    return parse_literal(a.type, t);
}

Query table_query(std::string_view name, const SchemaRegistry& registry, const LineageGraph& lineage) {
    std::string n = trim(name);
    if (!is_table_token(n)) throw Error(ErrorCode::InvalidArgument, "expected a table name, got '" + n + "'");
    return Query::table(registry, lineage, registry.lookup(n).ref());
}

AggSpec parse_agg(std::string_view text) {
    std::string t = replace_all(trim(text), "→", "->");
    auto arrow = t.find("->");
    if (arrow == std::string::npos)
        throw Error(ErrorCode::InvalidArgument, "aggregate '" + t + "' needs '-> name'");
    AggSpec spec;
    spec.name = trim(std::string_view(t).substr(arrow + 2));
    std::string call = trim(std::string_view(t).substr(0, arrow));
    if (auto open = call.find('('); open != std::string::npos) {
        if (call.back() != ')') throw Error(ErrorCode::InvalidArgument, "malformed aggregate '" + call + "'");
        spec.fn = trim(std::string_view(call).substr(0, open));
        std::string attr = trim(std::string_view(call).substr(open + 1, call.size() - open - 2));
        if (!attr.empty() && attr != "*") spec.attr = attr;
    } else {
        spec.fn = call;
    }
    if (!is_identifier(spec.name)) throw Error(ErrorCode::InvalidArgument, "bad aggregate name '" + spec.name + "'");
    return spec;
}

} // namespace

std::chrono::microseconds parse_duration(std::string_view text) {
    std::string t = trim(text);
    if (t.empty()) throw Error(ErrorCode::InvalidArgument, "empty duration");
    std::int64_t scale = 1'000'000;
    switch (t.back()) {
    case 's': t.pop_back(); break;
    case 'm': scale = 60'000'000; t.pop_back(); break;
    case 'h': scale = 3'600'000'000LL; t.pop_back(); break;
    case 'd': scale = 86'400'000'000LL; t.pop_back(); break;
    default: break;
    }
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        throw Error(ErrorCode::InvalidArgument, "bad duration '" + std::string(text) + "'");
    return std::chrono::microseconds(std::stoll(t) * scale);
}

Predicate parse_conditions(std::string_view text, const Heading& heading) {
    Predicate p;
    for (const std::string& cond : split_top(text, ',')) {
        if (cond.empty()) throw Error(ErrorCode::InvalidArgument, "empty condition in '" + std::string(text) + "'");
        // `attr in (a, b)`
        if (auto in = cond.find(" in "); in != std::string::npos && cond.find('(') != std::string::npos) {
            std::string attr = trim(std::string_view(cond).substr(0, in));
            std::string list = trim(std::string_view(cond).substr(in + 4));
            if (list.size() < 2 || list.front() != '(' || list.back() != ')')
                throw Error(ErrorCode::InvalidArgument, "expected (values) in '" + cond + "'");
            const HeadingAttr& a = heading.at(attr);
            std::vector<Value> values;
            for (const auto& item : split_top(std::string_view(list).substr(1, list.size() - 2), ','))
                values.push_back(literal_for(a, item));
            p.in(attr, std::move(values));
            continue;
        }
        static const std::pair<std::string_view, CompareOp> ops[] = {
            {"!=", CompareOp::Ne}, {"<=", CompareOp::Le}, {">=", CompareOp::Ge},
            {"=", CompareOp::Eq},  {"<", CompareOp::Lt},  {">", CompareOp::Gt}};
        std::size_t best = std::string::npos;
        std::pair<std::string_view, CompareOp> found{"", CompareOp::Eq};
        for (const auto& op : ops) {
            auto pos = cond.find(op.first);
            if (pos != std::string::npos && (pos < best || (pos == best && op.first.size() > found.first.size()))) {
                best = pos;
                found = op;
            }
        }
        if (best == std::string::npos) throw Error(ErrorCode::InvalidArgument, "no operator in condition '" + cond + "'");
        std::string attr = trim(std::string_view(cond).substr(0, best));
        const HeadingAttr& a = heading.at(attr);
        p.where(attr, found.second, literal_for(a, std::string_view(cond).substr(best + found.first.size())));
    }
    return p;
}

Query parse_pipeline(std::string_view text, const SchemaRegistry& registry) {
    LineageGraph lineage(registry);
    std::vector<std::string> stages = split_top(text, '|');
    Query q = table_query(stages.front(), registry, lineage);
    for (std::size_t i = 1; i < stages.size(); ++i) {
        auto [verb, rest] = split_word(stages[i]);
        if (rest.empty()) throw Error(ErrorCode::InvalidArgument, "stage '" + verb + "' needs an argument");
        if (verb == "restrict") {
            q = is_table_token(rest) && !q.heading().index_of(rest) ? q.restrict(table_query(rest, registry, lineage))
                                                                    : q.restrict(parse_conditions(rest, q.heading()));
        } else if (verb == "exclude") {
            q = q.exclude(table_query(rest, registry, lineage));
        } else if (verb == "join") {
            q = q.join(table_query(rest, registry, lineage));
        } else if (verb == "union") {
            q = q.unite(table_query(rest, registry, lineage));
        } else if (verb == "proj") {
            ProjectSpec spec;
            for (const auto& item : split_top(rest, ',')) {
                if (item.empty()) continue;
                auto eq = item.find('=');
                if (eq == std::string::npos) {
                    spec.keep.push_back(item);
                    continue;
                }
                std::string name = trim(std::string_view(item).substr(0, eq));
                std::string rhs = trim(std::string_view(item).substr(eq + 1));
                if (!is_identifier(name)) throw Error(ErrorCode::InvalidArgument, "bad attribute name '" + name + "'");
                if (is_identifier(rhs) && q.heading().index_of(rhs))
                    spec.renames.emplace_back(name, rhs);
                else
                    spec.computed.emplace_back(name, parse_scalar(rhs));
            }
            q = q.project(std::move(spec));
        } else if (verb == "aggr") {
            auto [table, specs_text] = split_word(rest);
            std::vector<AggSpec> specs;
            for (const auto& s : split_top(specs_text, ','))
                if (!s.empty()) specs.push_back(parse_agg(s));
            if (specs.empty()) throw Error(ErrorCode::InvalidArgument, "aggr needs at least one 'fn(attr)->name'");
            q = q.aggregate(table_query(table, registry, lineage), std::move(specs));
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown stage '" + verb + "'");
        }
    }
    return q;
}

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->code()) {
        case ErrorCode::SemanticMismatch: return 2;
        case ErrorCode::StorageFailure:
        case ErrorCode::CorruptPayload: return 3;
        default: return 1;
        }
    }
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return 3;
    return 1;
}

namespace {

struct Cli {
    std::ostream& out;
    std::ostream& err;
    std::string store;
    std::string objects;
    std::string worker_id;
    std::string format = "text";

    bool json() const { return format == "json"; }

    fs::path manifest() const { return fs::path(store) / "registry.manifest"; }
    fs::path object_root() const { return objects.empty() ? fs::path(store) / "objects" : fs::path(objects); }

    std::unique_ptr<Database> open() const {
        if (store.empty()) throw Error(ErrorCode::InvalidArgument, "no store given; pass --store or set RELATAPE_STORE");
        if (!fs::exists(manifest()))
            throw Error(ErrorCode::InvalidArgument, "no store at " + store + "; run `relatape init` first");
        return Database::open(store, object_root());
    }

    void emit(const Json& j, const std::string& text) const {
        if (json()) out << j.dump() << "\n";
        else out << text;
    }
};

void print_relation(const Cli& cli, const Relation& r) {
    if (cli.json()) {
        for (const Row& row : r.rows) cli.out << record_json(r.heading, row).dump() << "\n";
        return;
    }
    const auto& attrs = r.heading.attrs();
    std::vector<std::vector<std::string>> cells;
    std::vector<std::size_t> width(attrs.size());
    std::vector<std::string> head;
    for (std::size_t i = 0; i < attrs.size(); ++i) {
        head.push_back((attrs[i].in_pk ? "*" : "") + attrs[i].name);
        width[i] = head[i].size();
    }
    for (const Row& row : r.rows) {
        std::vector<std::string> line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            line.push_back(to_display(row[i]));
            width[i] = std::max(width[i], line.back().size());
        }
        cells.push_back(std::move(line));
    }
    auto print_line = [&](const std::vector<std::string>& line) {
        std::string s;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (i) s += "  ";
            s += line[i];
            if (i + 1 < line.size()) s += std::string(width[i] - line[i].size(), ' ');
        }
        cli.out << s << "\n";
    };
    print_line(head);
    for (const auto& line : cells) print_line(line);
    cli.out << "(" << r.rows.size() << (r.rows.size() == 1 ? " row)\n" : " rows)\n");
}

Json report_json(const PopulateReport& r) {
    return {{"succeeded", r.succeeded}, {"failed", r.failed}, {"skipped", r.skipped}, {"crashed", r.crashed}};
}

Json job_json(const JobRecord& j) {
    Json o{{"key", j.key},
           {"key_hash", j.key_hash},
           {"reserved_at", format_datetime(j.reserved_at)},
           {"status", j.status},
           {"worker_id", j.worker_id}};
    o["error_message"] = j.error_message ? Json(*j.error_message) : Json();
    o["error_stack"] = j.error_stack ? Json(*j.error_stack) : Json();
    return o;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Cli cli{out, err, {}, {}, {}, "text"};
    CLI::App app{"relatape: relational workflow pipelines with object-augmented storage", "relatape"};
    app.require_subcommand(1);
    app.add_option("--store", cli.store, "Store root directory")->envname("RELATAPE_STORE");
    app.add_option("--objects", cli.objects, "Object store root (default <store>/objects)");
    app.add_option("--worker-id", cli.worker_id, "Worker identity for job records")->envname("RELATAPE_WORKER_ID");
    app.add_option("--format", cli.format, "Output format")->check(CLI::IsMember({"text", "json"}));

    std::function<void()> action;

    auto* init = app.add_subcommand("init", "Create the store layout (idempotent)");
    init->callback([&] {
        action = [&] {
            if (cli.store.empty()) throw Error(ErrorCode::InvalidArgument, "no store given; pass --store or set RELATAPE_STORE");
            try {
                fs::create_directories(cli.store);
                fs::create_directories(cli.object_root());
            } catch (const fs::filesystem_error& e) {
                throw Error(ErrorCode::StorageFailure, e.what());
            }
            const bool fresh = !fs::exists(cli.manifest());
            if (fresh) write_text(cli.manifest(), "");
            Database::open(cli.store, cli.object_root());
            cli.emit({{"created", fresh}, {"store", cli.store}},
                     (fresh ? "initialized store at " : "store already initialized at ") + cli.store + "\n");
        };
    });

    std::string declare_dir;
    std::string declare_schema;
    auto* declare = app.add_subcommand("declare", "Declare every .djt definition in a directory");
    declare->add_option("dir", declare_dir, "Definition directory")->required();
    declare->add_option("--schema", declare_schema, "Schema name (default: directory name)");
    declare->callback([&] {
        action = [&] {
            auto db = cli.open();
            std::string schema = declare_schema.empty() ? fs::path(declare_dir).lexically_normal().filename().string()
                                                        : declare_schema;
            if (schema.empty()) schema = fs::path(declare_dir).lexically_normal().parent_path().filename().string();
            auto defs = load_definition_directory(declare_dir, schema);
            std::size_t fresh = 0;
            for (const auto& def : defs) {
                fresh += db->registry().find(def.ref()) == nullptr;
                db->declare(def);
            }
            for (const auto& d : lint_workflow_normalization(db->registry()))
                if (d.table.schema == schema)
                    cli.err << "warning: " << d.table.qualified() << ": [" << d.rule << "] " << d.message << "\n";
            cli.emit({{"declared", defs.size()}, {"new", fresh}, {"schema", schema}},
                     "declared " + std::to_string(defs.size()) + " tables (" + std::to_string(fresh) +
                         " new) in schema " + schema + "\n");
        };
    });

    std::string insert_table;
    std::string insert_file;
    bool insert_direct = false;
    auto* insert = app.add_subcommand("insert", "Insert rows from a JSON-lines file");
    insert->add_option("table", insert_table, "Target table")->required();
    insert->add_option("rows", insert_file, "Rows file (one JSON object per line)")->required();
    insert->add_flag("--allow-direct", insert_direct, "Allow rows for imported/computed tables");
    insert->callback([&] {
        action = [&] {
            auto db = cli.open();
            const Table& t = db->registry().lookup(insert_table);
            const fs::path base = fs::path(insert_file).parent_path();
            std::vector<Record> rows;
            PartRows parts;
            std::istringstream lines(read_text(insert_file));
            std::string line;
            std::size_t lineno = 0;
            while (std::getline(lines, line)) {
                ++lineno;
                if (trim(line).empty()) continue;
                try {
                    Json j = Json::parse(line);
                    rows.push_back(record_from_json(j, t, base));
                    if (j.contains("$parts"))
                        for (const auto& [pname, prows] : j["$parts"].items()) {
                            const Table* part = db->registry().find({t.def.schema_name, pname});
                            if (!part) part = &db->registry().lookup(pname);
                            for (const auto& pr : prows) {
                                // Nested part rows inherit the master key from the enclosing row.
                                Record rec = record_from_json(pr, *part, base);
                                for (std::size_t k = 0; k < t.key_size; ++k) {
                                    const std::string& kn = t.heading[k].attr.name;
                                    if (auto it = rows.back().find(kn); it != rows.back().end()) rec.try_emplace(kn, it->second);
                                }
                                parts[part->ref()].push_back(std::move(rec));
                            }
                        }
                } catch (const Json::exception& e) {
                    throw Error(ErrorCode::InvalidArgument, insert_file + " line " + std::to_string(lineno) + ": " + e.what());
                }
            }
            InsertOptions options;
            options.allow_direct = insert_direct;
            InsertReport r = db->insert(t.ref(), rows, parts, options);
            cli.emit({{"inserted", r.inserted}, {"skipped", r.skipped}, {"objects_written", r.objects_written}},
                     "inserted " + std::to_string(r.inserted) + " rows into " + t.ref().qualified() + " (" +
                         std::to_string(r.skipped) + " identical duplicates skipped)\n");
        };
    });

    std::string populate_table;
    std::size_t populate_workers = 1;
    std::optional<std::size_t> populate_limit;
    auto* populate_cmd = app.add_subcommand("populate", "Compute pending keys of an imported/computed table");
    populate_cmd->add_option("table", populate_table, "Target table")->required();
    populate_cmd->add_option("--workers", populate_workers, "Concurrent workers")->check(CLI::Range(1, 256));
    populate_cmd->add_option("--limit", populate_limit, "Maximum keys per worker");
    populate_cmd->callback([&] {
        action = [&] {
            auto db = cli.open();
            const Table& t = db->registry().lookup(populate_table);
            auto makes = lcms::makes(t.def.schema_name);
            auto it = makes.find(t.ref().qualified());
            if (!is_auto_populated(t.def.tier) || it == makes.end())
                throw Error(ErrorCode::NotAutoPopulated, "no make registered for " + t.ref().qualified());
            PopulateOptions options;
            options.worker_id = cli.worker_id;
            options.limit = populate_limit;
            PopulateReport r = populate_parallel(*db, t.ref(), it->second, populate_workers, options);
            cli.emit(report_json(r), t.ref().qualified() + ": succeeded=" + std::to_string(r.succeeded) +
                                         " failed=" + std::to_string(r.failed) + " skipped=" +
                                         std::to_string(r.skipped) + "\n");
        };
    });

    std::string query_text;
    auto* query = app.add_subcommand("query", "Evaluate a pipeline expression");
    query->add_option("pipeline", query_text, "e.g. 'session | restrict sample_id=s1 | join scan'")->required();
    query->callback([&] {
        action = [&] {
            auto db = cli.open();
            Query q = parse_pipeline(query_text, db->registry());
            print_relation(cli, evaluate(q, *db));
        };
    });

    std::string delete_table;
    std::vector<std::string> delete_where;
    bool delete_all = false;
    auto* del = app.add_subcommand("delete", "Delete rows and everything that depends on them");
    del->add_option("table", delete_table, "Table")->required();
    del->add_option("--where", delete_where, "Condition, e.g. sample_id=s1 (repeatable)");
    del->add_flag("--all", delete_all, "Delete every row of the table");
    del->callback([&] {
        action = [&] {
            auto db = cli.open();
            const Table& t = db->registry().lookup(delete_table);
            if (delete_where.empty() && !delete_all)
                throw Error(ErrorCode::InvalidArgument, "give --where conditions or --all");
            Query base = Query::table(db->registry(), t.ref());
            Predicate pred;
            for (const auto& w : delete_where)
                for (auto& atom : parse_conditions(w, base.heading()).atoms) pred.atoms.push_back(std::move(atom));
            Query checked = base.restrict(pred);
            const Predicate& p = checked.node().predicate;
            const Heading& h = checked.heading();
            DeleteReport r = db->remove(t.ref(), [&](const Row& row) { return predicate_holds(p, h, row); });
            std::string text;
            for (const auto& [name, n] : r.rows_removed) text += name + ": " + std::to_string(n) + "\n";
            text += "objects released: " + std::to_string(r.objects_released) + "\n";
            cli.emit({{"rows_removed", r.rows_removed},
                      {"objects_released", r.objects_released},
                      {"objects_removed", r.objects_removed}},
                     text);
        };
    });

    auto* gc = app.add_subcommand("gc", "Remove unreferenced hash-addressed objects");
    gc->callback([&] {
        action = [&] {
            auto db = cli.open();
            GcReport r = db->gc();
            cli.emit({{"scanned", r.scanned}, {"referenced", r.referenced}, {"deleted", r.deleted}},
                     "scanned=" + std::to_string(r.scanned) + " referenced=" + std::to_string(r.referenced) +
                         " deleted=" + std::to_string(r.deleted) + "\n");
        };
    });

    std::vector<std::string> status_tables;
    auto* status = app.add_subcommand("status", "Job counts and records of imported/computed tables");
    status->add_option("tables", status_tables, "Tables (default: all auto-populated)");
    status->callback([&] {
        action = [&] {
            auto db = cli.open();
            std::vector<TableRef> refs;
            for (const auto& name : status_tables) refs.push_back(db->registry().lookup(name).ref());
            if (refs.empty())
                for (const Table* t : db->registry().tables())
                    if (is_auto_populated(t->def.tier)) refs.push_back(t->ref());
            Json all = Json::array();
            std::string text;
            for (const auto& ref : refs) {
                JobStatus s = job_status(*db, ref);
                Json jobs = Json::array();
                for (const auto& j : s.jobs) jobs.push_back(job_json(j));
                all.push_back({{"table", ref.qualified()},
                               {"pending", s.pending},
                               {"reserved", s.reserved},
                               {"error", s.error},
                               {"done", s.done},
                               {"jobs", jobs}});
                text += ref.qualified() + ": pending=" + std::to_string(s.pending) + " reserved=" +
                        std::to_string(s.reserved) + " error=" + std::to_string(s.error) +
                        " done=" + std::to_string(s.done) + "\n";
                for (const auto& j : s.jobs)
                    text += "  " + j.status + " " + j.key.dump() + " by " + j.worker_id +
                            (j.error_message ? ": " + *j.error_message : std::string()) + "\n";
            }
            cli.emit(all, text);
        };
    });

    std::optional<std::string> diagram_schema;
    std::string diagram_out;
    bool diagram_attrs = false;
    auto* diagram = app.add_subcommand("diagram", "Emit the schema diagram as DOT");
    diagram->add_option("--schema", diagram_schema, "Only this schema");
    diagram->add_flag("--attrs", diagram_attrs, "List attributes in nodes");
    diagram->add_option("-o,--output", diagram_out, "Write to a file instead of stdout");
    diagram->callback([&] {
        action = [&] {
            auto db = cli.open();
            std::string dot = emit_dot(db->registry(), {diagram_schema, diagram_attrs});
            if (diagram_out.empty()) cli.out << dot;
            else write_text(diagram_out, dot);
        };
    });

    std::string lineage_target;
    auto* lineage = app.add_subcommand("lineage", "Print the origins of <table>.<attribute>");
    lineage->add_option("attribute", lineage_target, "e.g. session.sample_id")->required();
    lineage->callback([&] {
        action = [&] {
            auto db = cli.open();
            auto dot = lineage_target.rfind('.');
            if (dot == std::string::npos) throw Error(ErrorCode::InvalidArgument, "expected <table>.<attribute>");
            const Table& t = db->registry().lookup(lineage_target.substr(0, dot));
            const std::string attr = lineage_target.substr(dot + 1);
            LineageGraph graph(db->registry());
            const OriginSet& origins = graph.origins_of(t.ref(), attr);
            Json list = Json::array();
            for (const auto& o : origins) list.push_back(o.str());
            cli.emit({{"attribute", t.ref().qualified() + "." + attr}, {"origins", list}},
                     t.ref().qualified() + "." + attr + " <- " + to_string(origins) + "\n");
        };
    });

    std::string clear_table;
    std::vector<std::string> clear_where;
    std::string clear_stale;
    auto* clear = app.add_subcommand("clear-errors", "Delete error (and optionally stale) job records");
    clear->add_option("table", clear_table, "Target table")->required();
    clear->add_option("--where", clear_where, "Key condition attr=value (repeatable)");
    clear->add_option("--stale-after", clear_stale, "Also clear reservations older than this (e.g. 30m)");
    clear->callback([&] {
        action = [&] {
            auto db = cli.open();
            const Table& t = db->registry().lookup(clear_table);
            ClearOptions options;
            if (!clear_where.empty()) {
                Query base = Query::table(db->registry(), t.ref());
                Record key;
                for (const auto& w : clear_where)
                    for (const auto& atom : parse_conditions(w, base.heading()).atoms) {
                        const auto* c = std::get_if<Comparison>(&atom);
                        if (!c || c->op != CompareOp::Eq)
                            throw Error(ErrorCode::InvalidArgument, "clear-errors takes attr=value conditions only");
                        key[c->attr] = conform(base.heading().at(c->attr).type, c->literal);
                    }
                options.restriction = key;
            }
            if (!clear_stale.empty()) options.stale_after = parse_duration(clear_stale);
            std::size_t n = clear_errors(*db, t.ref(), options);
            cli.emit({{"cleared", n}}, "cleared " + std::to_string(n) + " job records\n");
        };
    });

    std::string snapshot_out;
    auto* snapshot = app.add_subcommand("snapshot", "Print the canonical store snapshot");
    snapshot->add_option("-o,--output", snapshot_out, "Write to a file instead of stdout");
    snapshot->callback([&] {
        action = [&] {
            auto db = cli.open();
            std::string s = db->snapshot();
            if (snapshot_out.empty()) cli.out << s;
            else write_text(snapshot_out, s);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }
    try {
        if (action) action();
        return 0;
    } catch (const SemanticMismatch& e) {
        err << "error: SemanticMismatch: attribute '" << e.attribute() << "' has no common origin\n"
            << "  left origins:  " << to_string(e.left_origins()) << "\n"
            << "  right origins: " << to_string(e.right_origins()) << "\n"
            << "  rename one side with proj to disambiguate\n";
        return exit_code_for(e);
    } catch (const Error& e) {
        err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

} // namespace relatape
