// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "relatape/algebra.hpp"
#include "relatape/storage.hpp"

namespace relatape {

/// Read-only view handed to a make callback. Only ancestors of the target table are
/// readable; anything else throws Error(InvalidArgument).
class MakeContext {
public:
    MakeContext(Database& db, const TableRef& target, Record key);

    const Record& key() const { return key_; }
    const TableRef& target() const { return target_; }
    const SchemaRegistry& registry() const { return db_.registry(); }

    Query table(std::string_view name) const;
    Relation fetch(const Query& query) const;
    /// Rows of an upstream table restricted to the key attributes it carries.
    std::vector<Record> fetch_key(std::string_view table) const;
    LazyRef lazy(const ObjectRef& ref) const { return db_.lazy(ref); }
    /// Decodes a codec value; inline values pass through.
    Value materialize(const Value& v) const;

private:
    const Table& upstream(std::string_view name) const;

    Database& db_;
    TableRef target_;
    Record key_;
    std::set<TableRef> ancestors_;
};

/// Thrown by fault hooks to simulate a worker dying mid-job.
class WorkerCrash : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MakeResult {
    Record master;
    PartRows parts;
};

using MakeCallback = std::function<MakeResult(const Record& key, MakeContext& ctx)>;

struct JobRecord {
    std::string key_hash;
    Json key;
    std::string status;  // reserved | error
    std::string worker_id;
    Datetime reserved_at;
    std::optional<std::string> error_message;
    std::optional<std::string> error_stack;
};

struct PopulateOptions {
    std::string worker_id;  // default_worker_id() when empty
    std::optional<std::size_t> limit;  // keys attempted per worker
    /// Called with "after_reserve" once a key is claimed; throwing simulates a worker
    /// crash that leaves the reservation behind.
    std::function<void(std::string_view point, const Record& key)> fault;
    /// Called after the target rows for `key` are committed.
    std::function<void(const Record& key)> on_insert;
};

struct PopulateReport {
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    std::size_t skipped = 0;
    std::size_t crashed = 0;  // workers lost to injected faults

    PopulateReport& operator+=(const PopulateReport& o);
    bool operator==(const PopulateReport&) const = default;
};

enum class MakeOutcome { Inserted, Failed, AlreadyPresent };

struct JobStatus {
    std::vector<JobRecord> jobs;
    std::size_t pending = 0;
    std::size_t reserved = 0;
    std::size_t error = 0;
    std::size_t done = 0;
};

struct ClearOptions {
    /// Only records whose key matches every listed attribute.
    std::optional<Record> restriction;
    /// Also clears reservations at least this old.
    std::optional<std::chrono::microseconds> stale_after;
};

/// `<hostname>:<pid>`.
std::string default_worker_id();

/// SHA-256 of the canonical encoding of the key attributes in heading order.
std::string key_hash(const Table& table, const Record& key);

/// Join of the key-contributing parents' keys, minus existing target rows.
Query key_source(const Database& db, const TableRef& table);

/// Key-source keys without target rows or job records, in key order.
/// Throws Error(NotAutoPopulated) for manual, lookup and part tables.
std::vector<Record> pending_keys(Database& db, const TableRef& table);

/// Claims `key` for `worker_id`; false if any job record for the key exists.
bool reserve(Database& db, const TableRef& table, const Record& key, const std::string& worker_id);

/// Runs `make` outside any transaction, then inserts its rows and releases the job in
/// one transaction. Make failures become error job records.
MakeOutcome run_make(Database& db, const TableRef& table, const Record& key, const MakeCallback& make,
                     const PopulateOptions& options = {});

PopulateReport populate(Database& db, const TableRef& table, const MakeCallback& make,
                        const PopulateOptions& options = {});

/// `workers` threads populating concurrently; each gets worker id `<id>/<n>`.
PopulateReport populate_parallel(Database& db, const TableRef& table, const MakeCallback& make,
                                 std::size_t workers, const PopulateOptions& options = {});

JobStatus job_status(Database& db, const TableRef& table);

std::size_t clear_errors(Database& db, const TableRef& table, const ClearOptions& options = {});

/// `Type: message` per level of a nested exception chain, outermost first.
std::string describe_exception(const std::exception& e);

} // namespace relatape
