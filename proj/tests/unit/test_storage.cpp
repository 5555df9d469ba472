// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>

#include "fixture.hpp"
#include "relatape/dsl.hpp"
#include "relatape/error.hpp"
#include "relatape/hash.hpp"
#include "relatape/storage.hpp"

using namespace relatape;
using relatape::testing::TempDir;

namespace {

namespace fs = std::filesystem;

TableDef def(const std::string& name, const std::string& body, Tier tier = Tier::Manual,
             std::optional<TableRef> master = std::nullopt) {
    return parse_definition({body, name, tier, "lab", master});
}

void declare_lab(Database& db) {
    db.declare(def("subject", "subject_id : varchar(16)\n---\n"));
    db.declare(def("session", "-> Subject\nsession_id : int64\n---\n"));
    db.declare(def("scan", "-> Session\nscan_id : int64\n---\nraw = null : <f64_array>\n"));
    db.declare(def("recording", "-> Session\n---\nfile : <blob@schema>\n"));
    db.declare(def("analysis", "-> Scan\n---\nscore : float64\n", Tier::Computed));
    db.declare(def("analysis__item", "-> Analysis\nitem : int64\n---\n", Tier::Part, TableRef{"lab", "analysis"}));
}

ErrorCode error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::InvalidArgument;
}

TableSchema two_column(const std::string& name) {
    return TableSchema{name, {{"k", core_type("int64"), false}, {"v", core_type("varchar", {8}), true}}, 1, "h"};
}

Row row(std::int64_t k, const std::string& v) { return {k, v}; }

} // namespace

TEST_SUITE("storage") {

TEST_CASE("object paths") {
    const Bytes abc{'a', 'b', 'c'};
    auto db = Database::in_memory();
    ObjectAddress a = db->put_object(AddressScheme::Hash, abc);
    CHECK(a.content_hash == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(a.path == "hash/ba/ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(db->objects().get(a.path) == abc);
    CHECK(schema_object_path({"lab", "recording", {{"subject_id", std::string("s1")}, {"session_id", std::int64_t{3}}}, "raw", "nwb"}) ==
          "schema/lab/recording/subject_id=s1/session_id=3/raw.nwb");
    CHECK(render_path_value(std::string("a/b c")) == "a%2Fb%20c");
    CHECK(render_path_value(std::string("..")) == "%2E%2E");
    CHECK(render_path_value(Datetime{0}) == "19700101T000000Z");
    CHECK(sidecar_path("hash/ab/abc") == "hash/ab/abc.meta.json");
    CHECK(error_of([&] { db->put_object(AddressScheme::Hash, {}); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([&] { db->put_object(AddressScheme::Schema, abc); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("memory store transactions commit, roll back and keep key order") {
    MemoryStore store;
    store.create_table(two_column("t"));
    store.create_table(two_column("t"));
    CHECK(error_of([&] { store.create_table(TableSchema{"t", {{"k", core_type("int64"), false}}, 1, ""}); }) ==
          ErrorCode::DefinitionConflict);
    {
        auto txn = store.begin();
        txn->insert_rows("t", {row(3, "c"), row(1, "a")});
        txn->commit();
    }
    {
        auto txn = store.begin();
        txn->insert_rows("t", {row(2, "b")});
        CHECK(txn->delete_rows("t", {{std::int64_t{1}}, {std::int64_t{9}}}) == 1);
        CHECK(txn->count("t") == 2);
        // Dropped without commit.
    }
    auto reader = store.read();
    CHECK(reader->scan("t") == std::vector<Row>{row(1, "a"), row(3, "c")});
    CHECK(reader->index_lookup("t", {std::int64_t{3}}) == row(3, "c"));
    reader.reset();
    {
        auto txn = store.begin();
        CHECK(error_of([&] { txn->insert_rows("t", {row(1, "z")}); }) == ErrorCode::DuplicatePrimaryKey);
    }
    CHECK(store.atomic_insert_unique("t", row(5, "e")));
    CHECK_FALSE(store.atomic_insert_unique("t", row(5, "other")));
    CHECK(store.read()->count("t") == 3);
}

TEST_CASE("persistent store shares committed state across instances") {
    TempDir dir("relatape-store");
    MemoryStore a(dir.path());
    a.create_table(two_column("lab.t"));
    {
        auto txn = a.begin();
        txn->insert_rows("lab.t", {row(2, "b"), row(1, "a")});
        txn->commit();
    }
    MemoryStore b(dir.path());
    CHECK(b.read()->scan("lab.t") == std::vector<Row>{row(1, "a"), row(2, "b")});
    {
        auto txn = b.begin();
        txn->delete_rows("lab.t", {{std::int64_t{1}}});
        txn->commit();
    }
    CHECK(a.read()->scan("lab.t") == std::vector<Row>{row(2, "b")});
    std::ifstream in(dir.path() / "tables" / "lab.t.jsonl");
    std::string header, line;
    std::getline(in, header);
    std::getline(in, line);
    CHECK(Json::parse(header).at("table") == "lab.t");
    CHECK(line == R"({"k":2,"v":"b"})");
    CHECK(a.snapshot() == b.snapshot());
}

TEST_CASE("local object store writes atomically and lists sorted") {
    TempDir dir("relatape-objects");
    LocalObjectStore store(dir.path());
    CHECK(store.put("hash/ab/x", Bytes{1, 2}));
    CHECK_FALSE(store.put("hash/ab/x", Bytes{9}));
    CHECK(store.get("hash/ab/x") == Bytes{1, 2});
    CHECK(store.put("hash/aa/y", Bytes{3}));
    std::ofstream(dir.path() / "hash" / "aa" / "z.tmp.123") << "partial";
    CHECK(store.list("hash/") == std::vector<std::string>{"hash/aa/y", "hash/ab/x"});
    CHECK(store.remove("hash/aa/y"));
    CHECK_FALSE(store.exists("hash/aa/y"));
    CHECK(error_of([&] { store.get("missing"); }) == ErrorCode::StorageFailure);
}

TEST_CASE("insert validates types, keys and references") {
    auto db = Database::in_memory();
    declare_lab(*db);
    const TableRef subject{"lab", "subject"}, session{"lab", "session"}, analysis{"lab", "analysis"};
    db->insert(subject, {{{"subject_id", std::string("s1")}}});
    auto again = db->insert(subject, {{{"subject_id", std::string("s1")}}});
    CHECK(again.inserted == 0);
    CHECK(again.skipped == 1);
    CHECK(error_of([&] { db->insert(session, {{{"subject_id", std::string("s9")}, {"session_id", std::int64_t{1}}}}); }) ==
          ErrorCode::FKViolation);
    CHECK(error_of([&] { db->insert(session, {{{"subject_id", std::string("s1")}, {"session_id", 1.5}}}); }) ==
          ErrorCode::TypeMismatch);
    CHECK(error_of([&] { db->insert(session, {{{"subject_id", std::string("s1")}}}); }) == ErrorCode::TypeMismatch);
    CHECK(error_of([&] { db->insert(session, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}, {"bogus", std::int64_t{1}}}}); }) ==
          ErrorCode::UnknownAttribute);
    CHECK(error_of([&] { db->insert(analysis, {}); }) == ErrorCode::InvalidArgument);
    // Rows referencing a parent staged in the same call are accepted.
    db->insert(session, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}}});
    CHECK(error_of([&] { db->insert(TableRef{"lab", "scan"}, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}, {"scan_id", std::int64_t{1}}, {"raw", Bytes{1}}}}); }) ==
          ErrorCode::TypeMismatch);
    // A batch is all or nothing.
    CHECK(error_of([&] {
              db->insert(session, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{2}}},
                                   {{"subject_id", std::string("s2")}, {"session_id", std::int64_t{3}}}});
          }) == ErrorCode::FKViolation);
    CHECK(db->fetch(session).size() == 1);
}

TEST_CASE("part rows travel with their master") {
    auto db = Database::in_memory();
    declare_lab(*db);
    db->insert({"lab", "subject"}, {{{"subject_id", std::string("s1")}}});
    db->insert({"lab", "session"}, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}}});
    db->insert({"lab", "scan"}, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}, {"scan_id", std::int64_t{1}}}});
    const TableRef analysis{"lab", "analysis"}, item{"lab", "analysis__item"};
    Record key{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}, {"scan_id", std::int64_t{1}}};
    Record master = key;
    master["score"] = 0.5;
    std::vector<Record> items;
    for (std::int64_t i = 0; i < 3; ++i) {
        Record r = key;
        r["item"] = i;
        items.push_back(r);
    }
    InsertOptions direct;
    direct.allow_direct = true;
    CHECK(error_of([&] { db->insert(item, items); }) == ErrorCode::InvalidArgument);
    CHECK(error_of([&] { db->insert(analysis, {master}, {{TableRef{"lab", "scan"}, {}}}, direct); }) ==
          ErrorCode::InvalidArgument);
    db->insert(analysis, {master}, {{item, items}}, direct);
    CHECK(db->fetch(item).size() == 3);
    // Deleting one part removes the whole entity.
    auto report = db->remove(item, [](const Row& r) { return r.back() == Value{std::int64_t{1}}; });
    CHECK(report.rows_removed.at("lab.analysis") == 1);
    CHECK(report.rows_removed.at("lab.analysis__item") == 3);
    CHECK(db->fetch(analysis).empty());
}

TEST_CASE("delete cascades to every dependent row") {
    auto db = Database::in_memory();
    declare_lab(*db);
    // Independent count: s1 owns 2 sessions with 3 scans each; s2 owns 1 session with 1 scan.
    std::vector<Record> subjects, sessions, scans;
    for (const char* s : {"s1", "s2"}) subjects.push_back({{"subject_id", std::string(s)}});
    for (auto [s, n] : std::vector<std::pair<std::string, int>>{{"s1", 2}, {"s2", 1}})
        for (std::int64_t i = 1; i <= n; ++i) {
            sessions.push_back({{"subject_id", s}, {"session_id", i}});
            for (std::int64_t j = 1; j <= (s == "s1" ? 3 : 1); ++j)
                scans.push_back({{"subject_id", s}, {"session_id", i}, {"scan_id", j}});
        }
    db->insert({"lab", "subject"}, subjects);
    db->insert({"lab", "session"}, sessions);
    db->insert({"lab", "scan"}, scans);
    auto report = db->remove({"lab", "subject"}, [](const Row& r) { return r[0] == Value{std::string("s1")}; });
    CHECK(report.rows_removed == std::map<std::string, std::size_t>{{"lab.subject", 1}, {"lab.session", 2}, {"lab.scan", 6}});
    CHECK(report.total() == 9);
    CHECK(db->fetch({"lab", "scan"}).size() == 1);
    CHECK(db->fetch({"lab", "subject"}).size() == 1);
    auto none = db->remove({"lab", "subject"}, [](const Row&) { return false; });
    CHECK(none.total() == 0);
}

TEST_CASE("codec values are deduplicated, released and collected") {
    auto db = Database::in_memory();
    declare_lab(*db);
    db->insert({"lab", "subject"}, {{{"subject_id", std::string("s1")}}});
    db->insert({"lab", "session"}, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}}});
    const F64Array same{{2}, {1.0, 2.0}};
    std::vector<Record> scans;
    for (std::int64_t j = 1; j <= 3; ++j)
        scans.push_back({{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}, {"scan_id", j}, {"raw", same}});
    auto ins = db->insert({"lab", "scan"}, scans);
    CHECK(ins.objects_written == 1);
    CHECK(db->objects().list("hash/").size() == 2);  // payload plus sidecar
    auto rows = db->fetch_records({"lab", "scan"});
    const auto& ref = std::get<ObjectRef>(rows[0].at("raw"));
    CHECK(ref.metadata.at("shape") == Json::array({2}));
    auto meta = db->objects().get(sidecar_path(ref.address.path));
    CHECK(Json::parse(std::string(meta.begin(), meta.end())) == ref.metadata);
    CHECK(std::get<F64Array>(db->lazy(ref).materialize()) == same);

    db->remove({"lab", "scan"}, [](const Row& r) { return r[2] != Value{std::int64_t{3}}; });
    CHECK(db->gc().deleted == 0);
    db->remove({"lab", "scan"}, [](const Row&) { return true; });
    auto gc = db->gc();
    CHECK(gc.deleted == 1);
    CHECK(db->objects().list("").empty());
    CHECK(db->gc().deleted == 0);
}

TEST_CASE("schema-addressed objects live at key paths and go with their row") {
    auto db = Database::in_memory();
    declare_lab(*db);
    db->insert({"lab", "subject"}, {{{"subject_id", std::string("s 1")}}});
    db->insert({"lab", "session"}, {{{"subject_id", std::string("s 1")}, {"session_id", std::int64_t{3}}}});
    db->insert({"lab", "recording"}, {{{"subject_id", std::string("s 1")}, {"session_id", std::int64_t{3}}, {"file", Bytes{7, 7}}}});
    const std::string path = "schema/lab/recording/subject_id=s%201/session_id=3/file.bin";
    CHECK(db->objects().exists(path));
    CHECK(db->objects().exists(path + ".meta.json"));
    auto report = db->remove({"lab", "subject"}, [](const Row&) { return true; });
    CHECK(report.objects_removed == 1);
    CHECK_FALSE(db->objects().exists(path));
    CHECK(db->objects().list("").empty());
}

TEST_CASE("a fault before commit leaves no rows and no new objects") {
    auto db = Database::in_memory();
    declare_lab(*db);
    db->insert({"lab", "subject"}, {{{"subject_id", std::string("s1")}}});
    db->insert({"lab", "session"}, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}}});
    for (const char* point : {"objects_written", "before_commit"}) {
        db->set_fault_hook([&](std::string_view p) {
            if (p == point) throw Error(ErrorCode::StorageFailure, "injected");
        });
        CHECK(error_of([&] {
                  db->insert({"lab", "scan"}, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}, {"scan_id", std::int64_t{1}}, {"raw", F64Array{{1}, {4.0}}}}});
              }) == ErrorCode::StorageFailure);
        CHECK(db->fetch({"lab", "scan"}).empty());
        CHECK(db->objects().list("").empty());
    }
    db->set_fault_hook({});
    auto log = db->transaction_log();
    REQUIRE(log.size() >= 2);
    CHECK(log.back().phase == TxnPhase::RolledBack);
    CHECK(log.back().object_paths.size() == 2);
}

TEST_CASE("a durable database reopens with its registry and rows") {
    TempDir dir("relatape-db");
    std::string before;
    {
        auto db = Database::open(dir.path() / "store", dir.path() / "objects");
        declare_lab(*db);
        db->insert({"lab", "subject"}, {{{"subject_id", std::string("s1")}}});
        db->insert({"lab", "session"}, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}}});
        db->insert({"lab", "scan"}, {{{"subject_id", std::string("s1")}, {"session_id", std::int64_t{1}}, {"scan_id", std::int64_t{1}}, {"raw", F64Array{{1}, {4.0}}}}});
        before = db->snapshot();
    }
    auto db = Database::open(dir.path() / "store", dir.path() / "objects");
    CHECK(db->registry().size() == 6);
    CHECK(db->snapshot() == before);
    CHECK(before.rfind("%% registry\n", 0) == 0);
    CHECK(before.find("%% table lab.scan\n") != std::string::npos);
    CHECK(before.find("%% table lab.~jobs.analysis\n") != std::string::npos);
    auto ref = std::get<ObjectRef>(db->fetch_records({"lab", "scan"})[0].at("raw"));
    CHECK(std::get<F64Array>(db->lazy(ref).materialize()).data == std::vector<double>{4.0});
}

TEST_CASE("job tables have the documented layout") {
    TableSchema s = job_table_schema({"lab", "analysis"});
    CHECK(s.name == "lab.~jobs.analysis");
    CHECK(s.key_size == 1);
    std::vector<std::string> names;
    for (const auto& c : s.columns) names.push_back(c.name);
    CHECK(names == std::vector<std::string>{"key_hash", "key", "status", "worker_id", "reserved_at", "error_message", "error_stack"});
    CHECK(s.columns[0].type == core_type("varchar", {64}));
}

}
