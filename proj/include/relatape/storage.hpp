// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "relatape/model.hpp"
#include "relatape/types.hpp"

namespace relatape {

// ---- relational side -------------------------------------------------------

struct ColumnSpec {
    std::string name;
    TypeSpec type;
    bool nullable = false;
    bool operator==(const ColumnSpec&) const = default;
};

struct TableSchema {
    std::string name;  // storage name, e.g. "lab.subject"
    std::vector<ColumnSpec> columns;  // key columns first
    std::size_t key_size = 0;
    std::string header;  // rendered definition, written as the snapshot header

    Row key_of(const Row& row) const { return Row(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(key_size)); }
    std::optional<std::size_t> index_of(std::string_view column) const;
    bool operator==(const TableSchema&) const = default;
};

class TableReader {
public:
    virtual ~TableReader() = default;
    virtual bool has_table(const std::string& table) const = 0;
    virtual const TableSchema& schema(const std::string& table) const = 0;
    /// Rows in key order.
    virtual std::vector<Row> scan(const std::string& table) const = 0;
    virtual std::optional<Row> index_lookup(const std::string& table, const Row& key) const = 0;
    virtual std::size_t count(const std::string& table) const = 0;
    virtual std::vector<std::string> table_names() const = 0;
};

/// Exclusive, serializable unit of work. Destruction without commit rolls back.
class StoreTransaction : public TableReader {
public:
    /// Throws Error(DuplicatePrimaryKey) if a key is already present.
    virtual void insert_rows(const std::string& table, const std::vector<Row>& rows) = 0;
    /// Returns the number of keys that were present.
    virtual std::size_t delete_rows(const std::string& table, const std::vector<Row>& keys) = 0;
    virtual void commit() = 0;
    virtual void rollback() = 0;
};

class RelationalStore {
public:
    virtual ~RelationalStore() = default;
    /// Idempotent for an identical schema; a different schema under the same name throws
    /// Error(DefinitionConflict).
    virtual void create_table(const TableSchema& schema) = 0;
    virtual std::unique_ptr<StoreTransaction> begin() = 0;
    /// Consistent read view; blocks writers while alive.
    virtual std::unique_ptr<TableReader> read() = 0;
    /// Compare-and-insert on the primary key. Returns false (without waiting on the
    /// holder) when the key exists.
    virtual bool atomic_insert_unique(const std::string& table, const Row& row) = 0;
    /// One file body per table: header line, then one canonical JSON record per row.
    virtual std::map<std::string, std::string> snapshot() = 0;
};

/// Bundled reference store: in-memory ordered tables behind one store-wide lock.
/// With a directory it becomes durable and shareable across processes: every lock
/// acquisition takes an flock on `<dir>/LOCK` and reloads tables if another process
/// committed since; commits go through a write-ahead file before table files change.
class MemoryStore final : public RelationalStore {
public:
    MemoryStore();
    explicit MemoryStore(std::filesystem::path dir);
    ~MemoryStore() override;

    MemoryStore(const MemoryStore&) = delete;
    MemoryStore& operator=(const MemoryStore&) = delete;

    void create_table(const TableSchema& schema) override;
    std::unique_ptr<StoreTransaction> begin() override;
    std::unique_ptr<TableReader> read() override;
    bool atomic_insert_unique(const std::string& table, const Row& row) override;
    std::map<std::string, std::string> snapshot() override;

    struct TableData {
        TableSchema schema;
        std::map<Row, Row, RowLess> rows;  // key -> full row
    };

private:
    friend class MemoryTransaction;
    friend class MemoryReader;
    class ProcessLock;
    class Guard;

    void sync_from_disk();
    void invalidate() { generation_ = ~std::uint64_t{0}; }
    void persist(const std::vector<std::string>& changed);
    std::string render_table(const TableData& data) const;

    std::optional<std::filesystem::path> dir_;
    std::shared_mutex mutex_;
    std::unique_ptr<ProcessLock> process_lock_;
    std::uint64_t generation_ = 0;
    std::map<std::string, TableData> tables_;
};

// ---- object side -----------------------------------------------------------

class ObjectStore : public ObjectLoader {
public:
    /// Atomic at path granularity. Returns true when the path was newly created; an
    /// existing path is left untouched.
    virtual bool put(const std::string& path, const Bytes& bytes) = 0;
    virtual Bytes get(const std::string& path) const = 0;
    virtual bool exists(const std::string& path) const = 0;
    virtual bool remove(const std::string& path) = 0;
    /// Sorted paths starting with `prefix`.
    virtual std::vector<std::string> list(const std::string& prefix) const = 0;

    Bytes load(const std::string& path) const override { return get(path); }
    /// Number of `get` calls served so far.
    std::uint64_t reads() const { return reads_.load(); }

protected:
    mutable std::atomic<std::uint64_t> reads_{0};
};

class MemoryObjectStore final : public ObjectStore {
public:
    bool put(const std::string& path, const Bytes& bytes) override;
    Bytes get(const std::string& path) const override;
    bool exists(const std::string& path) const override;
    bool remove(const std::string& path) override;
    std::vector<std::string> list(const std::string& prefix) const override;

    /// Test hook: overwrite an object in place.
    void corrupt(const std::string& path, const Bytes& bytes);

private:
    mutable std::mutex mutex_;
    std::map<std::string, Bytes> objects_;
};

/// Directory tree rooted at `root`; writes go to a temp file and are renamed into place.
class LocalObjectStore final : public ObjectStore {
public:
    explicit LocalObjectStore(std::filesystem::path root);

    bool put(const std::string& path, const Bytes& bytes) override;
    Bytes get(const std::string& path) const override;
    bool exists(const std::string& path) const override;
    bool remove(const std::string& path) override;
    std::vector<std::string> list(const std::string& prefix) const override;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

/// Naming context for schema-addressed objects.
struct KeyContext {
    std::string schema;
    std::string table;
    std::vector<std::pair<std::string, Value>> key;
    std::string attribute;
    std::string extension;
};

/// `hash/<h[0:2]>/<h>`.
std::string hash_object_path(const std::string& content_hash);
/// `schema/<schema>/<table>/<k1=v1>/.../<attr>.<ext>`.
std::string schema_object_path(const KeyContext& ctx);
/// Path-safe rendering of a key value.
std::string render_path_value(const Value& v);
std::string sidecar_path(const std::string& object_path);

// ---- object-augmented database --------------------------------------------

struct InsertOptions {
    /// Allows rows for imported/computed tables and part tables without their master.
    bool allow_direct = false;
    /// Runs first inside the transaction; returning false skips the insert and commits
    /// only what the precondition itself changed.
    std::function<bool(StoreTransaction&)> precondition;
    /// Runs inside the transaction after the tuples, before commit.
    std::function<void(StoreTransaction&)> before_commit;
};

using PartRows = std::map<TableRef, std::vector<Record>>;

struct InsertReport {
    std::size_t inserted = 0;
    std::size_t skipped = 0;  // byte-identical duplicates
    std::size_t objects_written = 0;
    bool abandoned = false;  // precondition returned false
};

struct DeleteReport {
    std::map<std::string, std::size_t> rows_removed;  // qualified table -> rows
    std::size_t objects_released = 0;
    std::size_t objects_removed = 0;  // schema-addressed, removed after commit

    std::size_t total() const;
};

struct GcReport {
    std::size_t scanned = 0;
    std::size_t referenced = 0;
    std::size_t deleted = 0;
};

enum class TxnPhase { ObjectsWritten, TuplesCommitted, RolledBack };

struct TxnLogEntry {
    std::uint64_t txn_id = 0;
    TxnPhase phase = TxnPhase::ObjectsWritten;
    std::vector<std::string> object_paths;
};

/// Called at named commit points (`objects_written`, `master_inserted`,
/// `before_commit`, `gc_delete`); throwing aborts the operation.
using FaultHook = std::function<void(std::string_view point)>;

using RowFilter = std::function<bool(const Row&)>;

class Database {
public:
    Database(std::shared_ptr<RelationalStore> store, std::shared_ptr<ObjectStore> objects,
             CodecRegistry codecs = CodecRegistry::with_builtins());

    /// In-memory store and objects.
    static std::unique_ptr<Database> in_memory();
    /// Durable store under `store_root`, objects under `object_root`; reloads the
    /// registry manifest if one exists.
    static std::unique_ptr<Database> open(const std::filesystem::path& store_root,
                                          const std::filesystem::path& object_root);

    const SchemaRegistry& registry() const { return registry_; }
    const CodecRegistry& codecs() const { return codecs_; }
    RelationalStore& store() { return *store_; }
    ObjectStore& objects() { return *objects_; }
    std::shared_ptr<ObjectStore> object_store() const { return objects_; }

    /// Declares in the registry and creates the backing (and job) tables. Idempotent.
    const Table& declare(const TableDef& def);

    InsertReport insert(const TableRef& table, const std::vector<Record>& rows, const PartRows& parts = {},
                        InsertOptions options = {});

    /// Deletes matching rows plus everything depending on them in one transaction.
    DeleteReport remove(const TableRef& table, const RowFilter& restriction);

    /// Removes every hash-addressed object no tuple references.
    GcReport gc();

    ObjectAddress put_object(AddressScheme scheme, const Bytes& content,
                             const std::optional<KeyContext>& key_context = {});

    std::vector<Row> fetch(const TableRef& table);
    std::vector<Record> fetch_records(const TableRef& table);
    LazyRef lazy(const ObjectRef& ref) const;

    /// Registry manifest, every table body and the object listing.
    std::string snapshot();

    void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }
    std::vector<TxnLogEntry> transaction_log() const;

    static std::string storage_name(const TableRef& table) { return table.qualified(); }
    static std::string job_table_name(const TableRef& table) { return table.schema + ".~jobs." + table.table; }

    /// Typed row for `table` from a named record (defaults and nulls filled in, codec
    /// values left unencoded).
    Row to_row(const Table& table, const Record& record) const;
    Record to_record(const Table& table, const Row& row) const;

private:
    struct PendingObject {
        std::string path;
        Bytes payload;
        Json metadata;
    };

    ObjectRef prepare_object(const Table& table, const Row& key, const ResolvedAttribute& attr,
                             const CodecPayload& payload, std::vector<PendingObject>& pending) const;
    void fault(std::string_view point) const;
    std::uint64_t log(TxnPhase phase, std::vector<std::string> paths, std::uint64_t txn = 0);
    void save_manifest();

    std::shared_ptr<RelationalStore> store_;
    std::shared_ptr<ObjectStore> objects_;
    CodecRegistry codecs_;
    SchemaRegistry registry_;
    FaultHook fault_hook_;
    std::optional<std::filesystem::path> manifest_path_;

    mutable std::mutex log_mutex_;
    std::vector<TxnLogEntry> log_;
    std::uint64_t next_txn_ = 1;
};

TableSchema table_schema(const Table& table);
TableSchema job_table_schema(const TableRef& target);

} // namespace relatape
