// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/populate.hpp"

#include <cxxabi.h>
#include <unistd.h>

#include <algorithm>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <typeinfo>

#include "relatape/error.hpp"
#include "relatape/hash.hpp"

namespace relatape {

namespace {

constexpr std::size_t kMaxMessage = 4000;

Datetime now() {
    auto us = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::system_clock::now().time_since_epoch());
    return Datetime{us.count()};
}

std::string truncate_utf8(std::string s) {
    if (s.size() <= kMaxMessage) return s;
    std::size_t cut = kMaxMessage;
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    s.resize(cut);
    return s;
}

std::string type_name(const std::exception& e) {
    const char* mangled = typeid(e).name();
    int status = 0;
    std::unique_ptr<char, void (*)(void*)> demangled(abi::__cxa_demangle(mangled, nullptr, nullptr, &status),
                                                     std::free);
    std::string name = status == 0 ? demangled.get() : mangled;
    // std::throw_with_nested wraps the thrown type in a library-private template.
    constexpr std::string_view wrapper = "std::_Nested_exception<";
    if (name.rfind(wrapper, 0) == 0 && name.back() == '>') name = name.substr(wrapper.size(), name.size() - wrapper.size() - 1);
    if (const auto* err = dynamic_cast<const Error*>(&e)) name += "[" + std::string(to_string(err->code())) + "]";
    return name;
}

const Table& auto_table(const Database& db, const TableRef& ref) {
    const Table& t = db.registry().table(ref);
    if (!is_auto_populated(t.def.tier))
        throw Error(ErrorCode::NotAutoPopulated,
                    ref.qualified() + " is a " + std::string(to_string(t.def.tier)) + " table, not populated by make");
    return t;
}

void collect_tables(const Query& q, std::set<std::string>& out) {
    if (q.kind() == NodeKind::Table) out.insert(q.node().storage_name);
    for (const auto& c : q.node().children) collect_tables(c, out);
}

Record to_record(const Heading& h, const Row& row) {
    Record r;
    for (std::size_t i = 0; i < h.size(); ++i) r[h.attrs()[i].name] = row[i];
    return r;
}

Row key_row(const Table& t, const Record& key) {
    Row out;
    for (std::size_t i = 0; i < t.key_size; ++i)
        if (auto it = key.find(t.heading[i].attr.name); it != key.end()) out.push_back(it->second);
    return out;
}

void record_error(Database& db, const Table& t, const std::string& hash, const Record& key,
                  const std::string& worker, const std::exception& e) {
    const std::string job = Database::job_table_name(t.ref());
    auto txn = db.store().begin();
    txn->delete_rows(job, {Row{hash}});
    txn->insert_rows(job, {Row{hash, JsonText{canonical_json(to_json(key))}, std::string("error"), worker, now(),
                               truncate_utf8(e.what()), truncate_utf8(describe_exception(e))}});
    txn->commit();
}

JobRecord to_job(const Row& row) {
    JobRecord j;
    j.key_hash = std::get<std::string>(row[0]);
    j.key = Json::parse(std::get<JsonText>(row[1]).canonical);
    j.status = std::get<std::string>(row[2]);
    j.worker_id = std::get<std::string>(row[3]);
    j.reserved_at = std::get<Datetime>(row[4]);
    if (const auto* m = std::get_if<std::string>(&row[5])) j.error_message = *m;
    if (const auto* s = std::get_if<std::string>(&row[6])) j.error_stack = *s;
    return j;
}

PopulateReport populate_keys(Database& db, const TableRef& ref, const MakeCallback& make,
                             const PopulateOptions& options, std::vector<Record> keys, std::size_t rotate) {
    PopulateReport report;
    const std::string worker = options.worker_id.empty() ? default_worker_id() : options.worker_id;
    PopulateOptions opts = options;
    opts.worker_id = worker;
    if (!keys.empty()) std::rotate(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(rotate % keys.size()), keys.end());
    std::size_t attempted = 0;
    try {
        for (const Record& key : keys) {
            if (options.limit && attempted >= *options.limit) break;
            if (!reserve(db, ref, key, worker)) {
                ++report.skipped;
                continue;
            }
            ++attempted;
            if (options.fault) options.fault("after_reserve", key);
            switch (run_make(db, ref, key, make, opts)) {
            case MakeOutcome::Inserted: ++report.succeeded; break;
            case MakeOutcome::Failed: ++report.failed; break;
            case MakeOutcome::AlreadyPresent: ++report.skipped; break;
            }
        }
    } catch (const WorkerCrash&) {
        ++report.crashed;
    }
    return report;
}

} // namespace

// ---- make context ---------------------------------------------------------------

MakeContext::MakeContext(Database& db, const TableRef& target, Record key)
    : db_(db), target_(target), key_(std::move(key)), ancestors_(db.registry().ancestors(target)) {}

const Table& MakeContext::upstream(std::string_view name) const {
    const Table& t = db_.registry().lookup(name);
    if (!ancestors_.count(t.ref()))
        throw Error(ErrorCode::InvalidArgument,
                    t.ref().qualified() + " is not upstream of " + target_.qualified() + "; make may only read ancestors");
    return t;
}

Query MakeContext::table(std::string_view name) const { return Query::table(db_.registry(), upstream(name).ref()); }

Relation MakeContext::fetch(const Query& query) const {
    std::set<std::string> used;
    collect_tables(query, used);
    for (const auto& name : used) upstream(name);
    return evaluate(query, db_);
}

std::vector<Record> MakeContext::fetch_key(std::string_view name) const {
    Query q = table(name);
    Record sub;
    for (const auto& [attr, value] : key_)
        if (q.heading().index_of(attr)) sub[attr] = value;
    if (!sub.empty()) q = q.restrict(Predicate().key(sub));
    Relation r = evaluate(q, db_);
    std::vector<Record> out;
    for (const Row& row : r.rows) out.push_back(to_record(r.heading, row));
    return out;
}

Value MakeContext::materialize(const Value& v) const {
    if (const auto* ref = std::get_if<ObjectRef>(&v)) return lazy(*ref).materialize();
    return v;
}

// ---- jobs -------------------------------------------------------------------------

PopulateReport& PopulateReport::operator+=(const PopulateReport& o) {
    succeeded += o.succeeded;
    failed += o.failed;
    skipped += o.skipped;
    crashed += o.crashed;
    return *this;
}

std::string default_worker_id() {
    char host[256] = {0};
    if (::gethostname(host, sizeof host - 1) != 0) std::snprintf(host, sizeof host, "localhost");
    return std::string(host) + ":" + std::to_string(::getpid());
}

std::string key_hash(const Table& table, const Record& key) {
    return sha256_hex(canonical_bytes(key_row(table, key)));
}

Query key_source(const Database& db, const TableRef& ref) {
    const Table& t = auto_table(db, ref);
    LineageGraph lineage(db.registry());
    std::optional<Query> q;
    for (const auto& fk : t.foreign_keys) {
        if (!fk.into_primary_key) continue;
        ProjectSpec spec;
        for (const auto& [child, parent] : fk.attribute_map)
            if (child != parent) spec.renames.emplace_back(child, parent);
        Query p = Query::table(db.registry(), lineage, fk.parent).project(spec);
        q = q ? q->join(p) : p;
    }
    if (!q) throw Error(ErrorCode::InvalidDefinition, ref.qualified() + " has no key-contributing parent");
    return q->exclude(Query::table(db.registry(), lineage, ref));
}

std::vector<Record> pending_keys(Database& db, const TableRef& ref) {
    const Table& t = auto_table(db, ref);
    Query ks = key_source(db, ref);
    Relation keys;
    std::set<std::string> jobs;
    {
        auto reader = db.store().read();
        keys = evaluate(ks, *reader);
        for (const Row& row : reader->scan(Database::job_table_name(ref))) jobs.insert(std::get<std::string>(row[0]));
    }
    std::vector<std::pair<Row, Record>> out;
    for (const Row& row : keys.rows) {
        Record key = to_record(keys.heading, row);
        if (jobs.count(key_hash(t, key))) continue;
        out.emplace_back(key_row(t, key), std::move(key));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return compare_rows(a.first, b.first) < 0; });
    std::vector<Record> result;
    result.reserve(out.size());
    for (auto& [k, r] : out) result.push_back(std::move(r));
    return result;
}

bool reserve(Database& db, const TableRef& ref, const Record& key, const std::string& worker_id) {
    const Table& t = auto_table(db, ref);
    Row job{key_hash(t, key), JsonText{canonical_json(to_json(key))}, std::string("reserved"), worker_id, now(),
            Null{}, Null{}};
    return db.store().atomic_insert_unique(Database::job_table_name(ref), job);
}

MakeOutcome run_make(Database& db, const TableRef& ref, const Record& key, const MakeCallback& make,
                     const PopulateOptions& options) {
    const Table& t = auto_table(db, ref);
    const std::string hash = key_hash(t, key);
    const std::string worker = options.worker_id.empty() ? default_worker_id() : options.worker_id;
    const std::string target = Database::storage_name(ref);
    const std::string job = Database::job_table_name(ref);

    MakeResult result;
    Row target_key;
    try {
        MakeContext ctx(db, ref, key);
        result = make(key, ctx);
        for (const auto& [name, value] : key) {
            auto [it, fresh] = result.master.emplace(name, value);
            if (!fresh && !(it->second == value))
                throw Error(ErrorCode::MakeError, "make changed key attribute '" + name + "'");
        }
        for (auto& [part, rows] : result.parts)
            for (Record& row : rows)
                for (const auto& [name, value] : key) row.emplace(name, value);
        Row full = db.to_row(t, result.master);
        target_key.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(t.key_size));
    } catch (const std::exception& e) {
        record_error(db, t, hash, key, worker, e);
        return MakeOutcome::Failed;
    }

    InsertOptions insert_options;
    insert_options.allow_direct = true;
    insert_options.precondition = [&](StoreTransaction& txn) {
        if (!txn.index_lookup(target, target_key)) return true;
        // Another worker finished this key under a stale reservation.
        txn.delete_rows(job, {Row{hash}});
        return false;
    };
    insert_options.before_commit = [&](StoreTransaction& txn) { txn.delete_rows(job, {Row{hash}}); };
    InsertReport report;
    try {
        report = db.insert(ref, {result.master}, result.parts, insert_options);
    } catch (const std::exception& e) {
        record_error(db, t, hash, key, worker, e);
        return MakeOutcome::Failed;
    }
    if (report.abandoned) return MakeOutcome::AlreadyPresent;
    if (options.on_insert) options.on_insert(key);
    return MakeOutcome::Inserted;
}

PopulateReport populate(Database& db, const TableRef& table, const MakeCallback& make,
                        const PopulateOptions& options) {
    auto_table(db, table);
    return populate_keys(db, table, make, options, pending_keys(db, table), 0);
}

PopulateReport populate_parallel(Database& db, const TableRef& table, const MakeCallback& make, std::size_t workers,
                                 const PopulateOptions& options) {
    auto_table(db, table);
    if (workers <= 1) return populate(db, table, make, options);
    const std::vector<Record> keys = pending_keys(db, table);
    const std::string base = options.worker_id.empty() ? default_worker_id() : options.worker_id;
    std::mutex mutex;
    PopulateReport total;
    std::exception_ptr failure;
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < workers; ++i) {
        threads.emplace_back([&, i] {
            PopulateOptions opts = options;
            opts.worker_id = base + "/" + std::to_string(i + 1);
            try {
                PopulateReport r = populate_keys(db, table, make, opts, keys, i * keys.size() / workers);
                std::lock_guard lock(mutex);
                total += r;
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    if (failure) std::rethrow_exception(failure);
    return total;
}

JobStatus job_status(Database& db, const TableRef& table) {
    auto_table(db, table);
    JobStatus status;
    {
        auto reader = db.store().read();
        for (const Row& row : reader->scan(Database::job_table_name(table))) status.jobs.push_back(to_job(row));
        status.done = reader->count(Database::storage_name(table));
    }
    for (const auto& j : status.jobs) (j.status == "error" ? status.error : status.reserved)++;
    status.pending = pending_keys(db, table).size();
    return status;
}

std::size_t clear_errors(Database& db, const TableRef& table, const ClearOptions& options) {
    auto_table(db, table);
    const std::string job = Database::job_table_name(table);
    const Datetime cutoff{options.stale_after ? now().micros - options.stale_after->count() : 0};
    auto txn = db.store().begin();
    std::vector<Row> doomed;
    for (const Row& row : txn->scan(job)) {
        JobRecord j = to_job(row);
        bool match = true;
        if (options.restriction)
            for (const auto& [name, value] : *options.restriction)
                match = match && j.key.contains(name) && j.key[name] == to_json(value);
        if (!match) continue;
        const bool stale = options.stale_after && j.status == "reserved" && j.reserved_at.micros <= cutoff.micros;
        if (j.status == "error" || stale) doomed.push_back(Row{row[0]});
    }
    std::size_t n = txn->delete_rows(job, doomed);
    txn->commit();
    return n;
}

std::string describe_exception(const std::exception& e) {
    std::string out = type_name(e) + ": " + e.what();
    try {
        std::rethrow_if_nested(e);
    } catch (const std::exception& inner) {
        out += "\n" + describe_exception(inner);
    } catch (...) {
        out += "\nunknown exception";
    }
    return out;
}

} // namespace relatape
