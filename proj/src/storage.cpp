// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/storage.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "relatape/dsl.hpp"
#include "relatape/error.hpp"
#include "relatape/hash.hpp"

namespace relatape {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::StorageFailure, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const fs::path& path, std::string_view content) {
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::StorageFailure, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::StorageFailure, "short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string key_text(const Row& key) {
    std::string out = "(";
    for (std::size_t i = 0; i < key.size(); ++i) out += (i ? ", " : "") + to_display(key[i]);
    return out + ")";
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

template <class F>
auto storage_call(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::StorageFailure, e.what());
    }
}

} // namespace

std::optional<std::size_t> TableSchema::index_of(std::string_view column) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == column) return i;
    return std::nullopt;
}

// ---- MemoryStore -----------------------------------------------------------

class MemoryStore::ProcessLock {
public:
    explicit ProcessLock(const fs::path& file) {
        fd_ = ::open(file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error(ErrorCode::StorageFailure, "cannot open lock file " + file.string());
    }
    ~ProcessLock() { ::close(fd_); }
    void lock() {
        while (::flock(fd_, LOCK_EX) != 0)
            if (errno != EINTR) throw Error(ErrorCode::StorageFailure, "flock failed");
    }
    void unlock() { ::flock(fd_, LOCK_UN); }

private:
    int fd_ = -1;
};

/// Holds the store lock: shared for in-memory reads, exclusive otherwise. Persistent
/// stores always take the exclusive path because syncing mutates the table map.
class MemoryStore::Guard {
public:
    Guard(MemoryStore& store, bool exclusive) : store_(store) {
        if (!exclusive && !store.dir_) {
            shared_ = std::shared_lock(store.mutex_);
            return;
        }
        unique_ = std::unique_lock(store.mutex_);
        if (store.dir_) {
            store.process_lock_->lock();
            flocked_ = true;
            try {
                store.sync_from_disk();
            } catch (...) {
                store.process_lock_->unlock();
                throw;
            }
        }
    }
    ~Guard() {
        if (flocked_) store_.process_lock_->unlock();
    }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

private:
    MemoryStore& store_;
    std::shared_lock<std::shared_mutex> shared_;
    std::unique_lock<std::shared_mutex> unique_;
    bool flocked_ = false;
};

namespace {

const MemoryStore::TableData& table_data(const std::map<std::string, MemoryStore::TableData>& tables,
                                         const std::string& name) {
    auto it = tables.find(name);
    if (it == tables.end()) throw Error(ErrorCode::UnknownTable, "no stored table '" + name + "'");
    return it->second;
}

} // namespace

class MemoryReader : public TableReader {
public:
    MemoryReader(MemoryStore& store, std::unique_ptr<MemoryStore::Guard> guard)
        : store_(store), guard_(std::move(guard)) {}

    bool has_table(const std::string& table) const override { return store_.tables_.count(table) > 0; }
    const TableSchema& schema(const std::string& table) const override {
        return table_data(store_.tables_, table).schema;
    }
    std::vector<Row> scan(const std::string& table) const override {
        const auto& data = table_data(store_.tables_, table);
        std::vector<Row> out;
        out.reserve(data.rows.size());
        for (const auto& [key, row] : data.rows) out.push_back(row);
        return out;
    }
    std::optional<Row> index_lookup(const std::string& table, const Row& key) const override {
        const auto& data = table_data(store_.tables_, table);
        auto it = data.rows.find(key);
        if (it == data.rows.end()) return std::nullopt;
        return it->second;
    }
    std::size_t count(const std::string& table) const override { return table_data(store_.tables_, table).rows.size(); }
    std::vector<std::string> table_names() const override {
        std::vector<std::string> out;
        for (const auto& [name, data] : store_.tables_) out.push_back(name);
        return out;
    }

protected:
    MemoryStore& store_;
    std::unique_ptr<MemoryStore::Guard> guard_;
};

class MemoryTransaction final : public StoreTransaction {
public:
    MemoryTransaction(MemoryStore& store, std::unique_ptr<MemoryStore::Guard> guard)
        : reader_(store, std::move(guard)), store_(store) {}
    ~MemoryTransaction() override {
        if (open_) undo();
    }

    bool has_table(const std::string& t) const override { return reader_.has_table(t); }
    const TableSchema& schema(const std::string& t) const override { return reader_.schema(t); }
    std::vector<Row> scan(const std::string& t) const override { return reader_.scan(t); }
    std::optional<Row> index_lookup(const std::string& t, const Row& key) const override {
        return reader_.index_lookup(t, key);
    }
    std::size_t count(const std::string& t) const override { return reader_.count(t); }
    std::vector<std::string> table_names() const override { return reader_.table_names(); }

    void insert_rows(const std::string& table, const std::vector<Row>& rows) override {
        require_open();
        auto it = store_.tables_.find(table);
        if (it == store_.tables_.end()) throw Error(ErrorCode::UnknownTable, "no stored table '" + table + "'");
        auto& data = it->second;
        for (const Row& row : rows) {
            if (row.size() != data.schema.columns.size())
                throw Error(ErrorCode::InvalidArgument, "row arity mismatch for " + table);
            Row key = data.schema.key_of(row);
            auto [pos, inserted] = data.rows.emplace(key, row);
            if (!inserted)
                throw Error(ErrorCode::DuplicatePrimaryKey, "duplicate key " + key_text(key) + " in " + table);
            undo_.push_back({table, std::move(key), std::nullopt});
            changed_.insert(table);
        }
    }

    std::size_t delete_rows(const std::string& table, const std::vector<Row>& keys) override {
        require_open();
        auto it = store_.tables_.find(table);
        if (it == store_.tables_.end()) throw Error(ErrorCode::UnknownTable, "no stored table '" + table + "'");
        std::size_t n = 0;
        for (const Row& key : keys) {
            auto pos = it->second.rows.find(key);
            if (pos == it->second.rows.end()) continue;
            undo_.push_back({table, key, pos->second});
            it->second.rows.erase(pos);
            changed_.insert(table);
            ++n;
        }
        return n;
    }

    void commit() override {
        require_open();
        open_ = false;
        if (store_.dir_ && !changed_.empty()) {
            try {
                store_.persist({changed_.begin(), changed_.end()});
            } catch (...) {
                undo();
                store_.invalidate();
                throw;
            }
        }
        undo_.clear();
    }

    void rollback() override {
        if (!open_) return;
        open_ = false;
        undo();
    }

private:
    struct UndoEntry {
        std::string table;
        Row key;
        std::optional<Row> previous;  // nullopt: the key was inserted
    };

    void require_open() const {
        if (!open_) throw Error(ErrorCode::StorageFailure, "transaction is closed");
    }

    void undo() {
        for (auto it = undo_.rbegin(); it != undo_.rend(); ++it) {
            auto& rows = store_.tables_.at(it->table).rows;
            if (it->previous)
                rows[it->key] = *it->previous;
            else
                rows.erase(it->key);
        }
        undo_.clear();
    }

    MemoryReader reader_;
    MemoryStore& store_;
    bool open_ = true;
    std::vector<UndoEntry> undo_;
    std::set<std::string> changed_;
};

MemoryStore::MemoryStore() = default;

MemoryStore::MemoryStore(fs::path dir) : dir_(std::move(dir)) {
    storage_call([&] {
        fs::create_directories(*dir_ / "tables");
        process_lock_ = std::make_unique<ProcessLock>(*dir_ / "LOCK");
    });
    invalidate();
}

MemoryStore::~MemoryStore() = default;

std::string MemoryStore::render_table(const TableData& data) const {
    Json columns = Json::array();
    for (const auto& c : data.schema.columns)
        columns.push_back({{"name", c.name}, {"nullable", c.nullable}, {"type", c.type.token()}});
    Json header{{"columns", columns},
                {"definition", data.schema.header},
                {"key_size", data.schema.key_size},
                {"table", data.schema.name}};
    std::string out = canonical_json(header) + "\n";
    for (const auto& [key, row] : data.rows) {
        Json j = Json::object();
        for (std::size_t i = 0; i < row.size(); ++i) j[data.schema.columns[i].name] = to_json(row[i]);
        out += canonical_json(j) + "\n";
    }
    return out;
}

namespace {

MemoryStore::TableData parse_table(const std::string& body) {
    std::istringstream in(body);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::StorageFailure, "empty table file");
    Json header = Json::parse(line);
    MemoryStore::TableData data;
    data.schema.name = header.at("table").get<std::string>();
    data.schema.header = header.at("definition").get<std::string>();
    data.schema.key_size = header.at("key_size").get<std::size_t>();
    for (const auto& c : header.at("columns"))
        data.schema.columns.push_back(
            {c.at("name").get<std::string>(), parse_type(c.at("type").get<std::string>()), c.at("nullable").get<bool>()});
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Json j = Json::parse(line);
        Row row;
        for (const auto& c : data.schema.columns) row.push_back(value_from_json(c.type, j.at(c.name)));
        Row key = data.schema.key_of(row);
        data.rows.emplace(std::move(key), std::move(row));
    }
    return data;
}

fs::path table_file(const fs::path& dir, const std::string& name) { return dir / "tables" / (name + ".jsonl"); }

} // namespace

void MemoryStore::sync_from_disk() {
    storage_call([&] {
        const fs::path& dir = *dir_;
        fs::remove(dir / "wal.pending.tmp");
        if (fs::exists(dir / "wal.pending")) {
            // A commit died after its write-ahead record became durable: replay it.
            Json wal = Json::parse(read_file(dir / "wal.pending"));
            for (const auto& [name, body] : wal.at("tables").items())
                write_atomic(table_file(dir, name), body.get<std::string>());
            write_atomic(dir / "GENERATION", std::to_string(wal.at("generation").get<std::uint64_t>()));
            fs::remove(dir / "wal.pending");
        }
        std::uint64_t gen = 0;
        if (fs::exists(dir / "GENERATION")) gen = std::stoull(read_file(dir / "GENERATION"));
        if (gen == generation_) return;
        std::map<std::string, TableData> tables;
        for (const auto& entry : fs::directory_iterator(dir / "tables")) {
            const std::string fname = entry.path().filename().string();
            if (!ends_with(fname, ".jsonl")) continue;
            TableData data = parse_table(read_file(entry.path()));
            std::string name = data.schema.name;
            tables.emplace(std::move(name), std::move(data));
        }
        tables_ = std::move(tables);
        generation_ = gen;
    });
}

void MemoryStore::persist(const std::vector<std::string>& changed) {
    storage_call([&] {
        const fs::path& dir = *dir_;
        const std::uint64_t next = generation_ + 1;
        Json wal{{"generation", next}, {"tables", Json::object()}};
        std::map<std::string, std::string> bodies;
        for (const auto& name : changed) bodies[name] = render_table(tables_.at(name));
        for (const auto& [name, body] : bodies) wal["tables"][name] = body;
        {
            std::ofstream out(dir / "wal.pending.tmp", std::ios::binary | std::ios::trunc);
            out << wal.dump();
            out.flush();
            if (!out) throw Error(ErrorCode::StorageFailure, "cannot write write-ahead record");
        }
        fs::rename(dir / "wal.pending.tmp", dir / "wal.pending");
        for (const auto& [name, body] : bodies) write_atomic(table_file(dir, name), body);
        write_atomic(dir / "GENERATION", std::to_string(next));
        fs::remove(dir / "wal.pending");
        generation_ = next;
    });
}

void MemoryStore::create_table(const TableSchema& schema) {
    Guard guard(*this, true);
    if (auto it = tables_.find(schema.name); it != tables_.end()) {
        const TableSchema& have = it->second.schema;
        if (have.columns != schema.columns || have.key_size != schema.key_size)
            throw Error(ErrorCode::DefinitionConflict, "stored table '" + schema.name + "' has a different layout");
        return;
    }
    if (schema.key_size == 0 || schema.key_size > schema.columns.size())
        throw Error(ErrorCode::InvalidDefinition, "table '" + schema.name + "' needs a primary key");
    tables_.emplace(schema.name, TableData{schema, {}});
    if (dir_) {
        try {
            persist({schema.name});
        } catch (...) {
            tables_.erase(schema.name);
            invalidate();
            throw;
        }
    }
}

std::unique_ptr<StoreTransaction> MemoryStore::begin() {
    return std::make_unique<MemoryTransaction>(*this, std::make_unique<Guard>(*this, true));
}

std::unique_ptr<TableReader> MemoryStore::read() {
    return std::make_unique<MemoryReader>(*this, std::make_unique<Guard>(*this, false));
}

bool MemoryStore::atomic_insert_unique(const std::string& table, const Row& row) {
    MemoryTransaction txn(*this, std::make_unique<Guard>(*this, true));
    if (txn.index_lookup(table, txn.schema(table).key_of(row))) return false;
    txn.insert_rows(table, {row});
    txn.commit();
    return true;
}

std::map<std::string, std::string> MemoryStore::snapshot() {
    Guard guard(*this, !dir_ ? false : true);
    std::map<std::string, std::string> out;
    for (const auto& [name, data] : tables_) out[name] = render_table(data);
    return out;
}

// ---- object stores -----------------------------------------------------------

bool MemoryObjectStore::put(const std::string& path, const Bytes& bytes) {
    std::lock_guard lock(mutex_);
    return objects_.emplace(path, bytes).second;
}

Bytes MemoryObjectStore::get(const std::string& path) const {
    std::lock_guard lock(mutex_);
    ++reads_;
    auto it = objects_.find(path);
    if (it == objects_.end()) throw Error(ErrorCode::StorageFailure, "missing object " + path);
    return it->second;
}

bool MemoryObjectStore::exists(const std::string& path) const {
    std::lock_guard lock(mutex_);
    return objects_.count(path) > 0;
}

bool MemoryObjectStore::remove(const std::string& path) {
    std::lock_guard lock(mutex_);
    return objects_.erase(path) > 0;
}

std::vector<std::string> MemoryObjectStore::list(const std::string& prefix) const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (auto it = objects_.lower_bound(prefix); it != objects_.end() && it->first.rfind(prefix, 0) == 0; ++it)
        out.push_back(it->first);
    return out;
}

void MemoryObjectStore::corrupt(const std::string& path, const Bytes& bytes) {
    std::lock_guard lock(mutex_);
    objects_[path] = bytes;
}

LocalObjectStore::LocalObjectStore(fs::path root) : root_(std::move(root)) {
    storage_call([&] { fs::create_directories(root_); });
}

bool LocalObjectStore::put(const std::string& path, const Bytes& bytes) {
    return storage_call([&] {
        fs::path target = root_ / path;
        if (fs::exists(target)) return false;
        write_atomic(target, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        return true;
    });
}

Bytes LocalObjectStore::get(const std::string& path) const {
    ++reads_;
    std::string body = read_file(root_ / path);
    return Bytes(body.begin(), body.end());
}

bool LocalObjectStore::exists(const std::string& path) const {
    return storage_call([&] { return fs::exists(root_ / path); });
}

bool LocalObjectStore::remove(const std::string& path) {
    return storage_call([&] { return fs::remove(root_ / path); });
}

std::vector<std::string> LocalObjectStore::list(const std::string& prefix) const {
    return storage_call([&] {
        std::vector<std::string> out;
        for (const auto& entry : fs::recursive_directory_iterator(root_)) {
            if (!entry.is_regular_file()) continue;
            std::string rel = fs::relative(entry.path(), root_).generic_string();
            if (rel.find(".tmp.") != std::string::npos) continue;
            if (rel.rfind(prefix, 0) == 0) out.push_back(std::move(rel));
        }
        std::sort(out.begin(), out.end());
        return out;
    });
}

// ---- object paths ------------------------------------------------------------

std::string hash_object_path(const std::string& content_hash) {
    return "hash/" + content_hash.substr(0, 2) + "/" + content_hash;
}

namespace {

std::string percent_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '_' || c == '-') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

} // namespace

std::string render_path_value(const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return percent_encode(*s);
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    if (const auto* d = std::get_if<Datetime>(&v)) return percent_encode(format_datetime_basic(*d));
    if (const auto* u = std::get_if<Uuid>(&v)) return format_uuid(*u);
    return percent_encode(to_display(v));
}

std::string schema_object_path(const KeyContext& ctx) {
    std::string out = "schema/" + ctx.schema + "/" + ctx.table + "/";
    for (const auto& [name, value] : ctx.key) out += name + "=" + render_path_value(value) + "/";
    return out + ctx.attribute + "." + ctx.extension;
}

std::string sidecar_path(const std::string& object_path) { return object_path + ".meta.json"; }

// ---- Database ------------------------------------------------------------------

std::size_t DeleteReport::total() const {
    std::size_t n = 0;
    for (const auto& [t, c] : rows_removed) n += c;
    return n;
}

TableSchema table_schema(const Table& table) {
    TableSchema s;
    s.name = Database::storage_name(table.ref());
    for (const auto& ra : table.heading) s.columns.push_back({ra.attr.name, ra.attr.type, ra.attr.nullable});
    s.key_size = table.key_size;
    s.header = render_definition(table.def);
    return s;
}

TableSchema job_table_schema(const TableRef& target) {
    TableSchema s;
    s.name = Database::job_table_name(target);
    s.columns = {
        {"key_hash", core_type("varchar", {64}), false},
        {"key", core_type("json"), false},
        {"status", core_type("varchar", {16}), false},
        {"worker_id", core_type("varchar", {255}), false},
        {"reserved_at", core_type("datetime"), false},
        {"error_message", core_type("varchar", {65535}), true},
        {"error_stack", core_type("varchar", {65535}), true},
    };
    s.key_size = 1;
    s.header = "job reservations for " + target.qualified();
    return s;
}

Database::Database(std::shared_ptr<RelationalStore> store, std::shared_ptr<ObjectStore> objects,
                   CodecRegistry codecs)
    : store_(std::move(store)), objects_(std::move(objects)), codecs_(std::move(codecs)) {}

std::unique_ptr<Database> Database::in_memory() {
    return std::make_unique<Database>(std::make_shared<MemoryStore>(), std::make_shared<MemoryObjectStore>());
}

std::unique_ptr<Database> Database::open(const fs::path& store_root, const fs::path& object_root) {
    auto db = std::make_unique<Database>(std::make_shared<MemoryStore>(store_root),
                                         std::make_shared<LocalObjectStore>(object_root));
    fs::path manifest = store_root / "registry.manifest";
    if (fs::exists(manifest))
        for (const TableDef& def : parse_manifest(read_file(manifest))) db->declare(def);
    db->manifest_path_ = manifest;
    return db;
}

const Table& Database::declare(const TableDef& def) {
    const std::size_t before = registry_.size();
    const Table& t = registry_.declare_table(def);
    store_->create_table(table_schema(t));
    if (is_auto_populated(t.def.tier)) store_->create_table(job_table_schema(t.ref()));
    if (registry_.size() != before) save_manifest();
    return t;
}

void Database::save_manifest() {
    if (manifest_path_) storage_call([&] { write_atomic(*manifest_path_, serialize_registry(registry_)); });
}

Row Database::to_row(const Table& table, const Record& record) const {
    for (const auto& [name, value] : record)
        if (!table.find(name))
            throw Error(ErrorCode::UnknownAttribute,
                        "table " + table.ref().qualified() + " has no attribute '" + name + "'");
    Row row;
    row.reserve(table.heading.size());
    for (std::size_t i = 0; i < table.heading.size(); ++i) {
        const Attribute& a = table.heading[i].attr;
        Value v;
        if (auto it = record.find(a.name); it != record.end())
            v = it->second;
        else if (a.default_literal)
            v = parse_literal(a.type, *a.default_literal);
        else if (a.nullable)
            v = Null{};
        else
            throw Error(ErrorCode::TypeMismatch, "missing value for attribute '" + a.name + "' of " +
                                                     table.ref().qualified());
        if (is_null(v)) {
            if (i < table.key_size || !a.nullable)
                throw Error(ErrorCode::TypeMismatch, "attribute '" + a.name + "' of " + table.ref().qualified() +
                                                         " is not nullable");
        } else if (a.type.layer != TypeLayer::Codec) {
            v = conform(a.type, v);
        }
        row.push_back(std::move(v));
    }
    return row;
}

Record Database::to_record(const Table& table, const Row& row) const {
    Record r;
    for (std::size_t i = 0; i < table.heading.size() && i < row.size(); ++i) r[table.heading[i].attr.name] = row[i];
    return r;
}

ObjectRef Database::prepare_object(const Table& table, const Row& key, const ResolvedAttribute& attr,
                                   const CodecPayload& payload, std::vector<PendingObject>& pending) const {
    ObjectRef ref;
    ref.address.content_hash = sha256_hex(payload.payload);
    ref.address.size = payload.payload.size();
    ref.metadata = payload.metadata;
    ref.metadata["codec"] = payload.codec_id;
    ref.metadata["version"] = payload.version;
    if (attr.attr.type.store == StoreHint::SchemaAddressed) {
        KeyContext ctx{table.def.schema_name, table.def.table_name, {}, attr.attr.name,
                       codecs_.resolve(payload.codec_id, payload.version)->extension()};
        for (std::size_t i = 0; i < table.key_size; ++i) ctx.key.emplace_back(table.heading[i].attr.name, key[i]);
        ref.address.scheme = AddressScheme::Schema;
        ref.address.path = schema_object_path(ctx);
    } else {
        ref.address.scheme = AddressScheme::Hash;
        ref.address.path = hash_object_path(ref.address.content_hash);
    }
    pending.push_back({ref.address.path, payload.payload, ref.metadata});
    return ref;
}

void Database::fault(std::string_view point) const {
    if (fault_hook_) fault_hook_(point);
}

std::uint64_t Database::log(TxnPhase phase, std::vector<std::string> paths, std::uint64_t txn) {
    std::lock_guard lock(log_mutex_);
    if (txn == 0) txn = next_txn_++;
    log_.push_back({txn, phase, std::move(paths)});
    return txn;
}

std::vector<TxnLogEntry> Database::transaction_log() const {
    std::lock_guard lock(log_mutex_);
    return log_;
}

InsertReport Database::insert(const TableRef& ref, const std::vector<Record>& rows, const PartRows& parts,
                              InsertOptions options) {
    const Table& master = registry_.table(ref);
    if (!options.allow_direct) {
        if (master.def.tier == Tier::Part)
            throw Error(ErrorCode::InvalidArgument,
                        "part table " + ref.qualified() + " is inserted together with its master");
        if (is_auto_populated(master.def.tier))
            throw Error(ErrorCode::InvalidArgument,
                        to_string(master.def.tier).data() + std::string(" table ") + ref.qualified() +
                            " is filled by populate");
    }
    const auto part_refs = registry_.parts(ref);
    for (const auto& [pref, prows] : parts)
        if (std::find(part_refs.begin(), part_refs.end(), pref) == part_refs.end())
            throw Error(ErrorCode::InvalidArgument, pref.qualified() + " is not a part of " + ref.qualified());

    std::vector<std::pair<const Table*, const std::vector<Record>*>> batches{{&master, &rows}};
    for (const auto& [pref, prows] : parts) batches.emplace_back(&registry_.table(pref), &prows);

    InsertReport report;
    auto txn = store_->begin();
    if (options.precondition && !options.precondition(*txn)) {
        txn->commit();
        report.abandoned = true;
        return report;
    }
    std::vector<PendingObject> pending;
    // storage name -> key -> row, in batch order
    std::map<std::string, std::map<Row, Row, RowLess>> staged;
    std::vector<std::string> order;

    for (const auto& [table, records] : batches) {
        const std::string name = storage_name(table->ref());
        order.push_back(name);
        auto& mine = staged[name];
        for (std::size_t i = 0; i < records->size(); ++i) {
            const std::string where = "row " + std::to_string(i + 1) + " of " + name;
            Row row;
            const std::size_t pending_mark = pending.size();
            try {
                row = to_row(*table, (*records)[i]);
                Row key(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(table->key_size));
                for (std::size_t j = 0; j < row.size(); ++j) {
                    const auto& ra = table->heading[j];
                    if (ra.attr.type.layer != TypeLayer::Codec || is_null(row[j])) continue;
                    StoredForm form = encode_value(ra.attr.type, row[j], codecs_);
                    if (const auto* p = std::get_if<CodecPayload>(&form))
                        row[j] = prepare_object(*table, key, ra, *p, pending);
                    else
                        row[j] = std::get<Value>(form);
                }
            } catch (const Error& e) {
                throw Error(e.code(), where + ": " + e.what());
            }
            Row key(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(table->key_size));
            std::optional<Row> existing;
            if (auto it = mine.find(key); it != mine.end())
                existing = it->second;
            else
                existing = txn->index_lookup(name, key);
            if (existing) {
                if (*existing != row)
                    throw Error(ErrorCode::DuplicatePrimaryKey,
                                where + ": key " + key_text(key) + " already holds a different row");
                pending.resize(pending_mark);
                ++report.skipped;
                continue;
            }
            for (const auto& fk : table->foreign_keys) {
                Row parent_key;
                bool has_null = false;
                for (const auto& [child_attr, parent_attr] : fk.attribute_map) {
                    const Value& v = row[*table->index_of(child_attr)];
                    has_null = has_null || is_null(v);
                    parent_key.push_back(v);
                }
                if (has_null) continue;
                const std::string pname = storage_name(fk.parent);
                auto sit = staged.find(pname);
                const bool staged_hit = sit != staged.end() && sit->second.count(parent_key);
                if (!staged_hit && !txn->index_lookup(pname, parent_key))
                    throw Error(ErrorCode::FKViolation,
                                where + ": no row " + key_text(parent_key) + " in referenced table " + pname);
            }
            mine.emplace(std::move(key), std::move(row));
        }
    }

    std::vector<std::string> created;
    std::uint64_t txn_id = 0;
    try {
        for (const auto& p : pending) {
            if (objects_->put(p.path, p.payload)) {
                created.push_back(p.path);
                ++report.objects_written;
            }
            const std::string meta = canonical_json(p.metadata);
            if (objects_->put(sidecar_path(p.path), Bytes(meta.begin(), meta.end())))
                created.push_back(sidecar_path(p.path));
        }
        txn_id = log(TxnPhase::ObjectsWritten, created);
        fault("objects_written");
        for (std::size_t b = 0; b < order.size(); ++b) {
            std::vector<Row> batch;
            for (auto& [key, row] : staged[order[b]]) batch.push_back(row);
            txn->insert_rows(order[b], batch);
            report.inserted += batch.size();
            if (b == 0 && order.size() > 1) fault("master_inserted");
        }
        if (options.before_commit) options.before_commit(*txn);
        fault("before_commit");
        txn->commit();
    } catch (...) {
        txn->rollback();
        for (const auto& path : created) {
            try {
                objects_->remove(path);
            } catch (...) {
                // An unremovable orphan is left for gc.
            }
        }
        log(TxnPhase::RolledBack, created, txn_id);
        try {
            throw;
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(ErrorCode::StorageFailure, e.what());
        }
    }
    log(TxnPhase::TuplesCommitted, {}, txn_id);
    return report;
}

DeleteReport Database::remove(const TableRef& ref, const RowFilter& restriction) {
    registry_.table(ref);
    DeleteReport report;
    auto txn = store_->begin();

    std::map<TableRef, std::map<Row, Row, RowLess>> doomed;
    std::deque<std::pair<TableRef, Row>> queue;
    auto add = [&](const TableRef& t, const Row& row) {
        const Table& table = registry_.table(t);
        Row key(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(table.key_size));
        if (doomed[t].emplace(std::move(key), row).second) queue.emplace_back(t, row);
    };
    for (const Row& row : txn->scan(storage_name(ref)))
        if (restriction(row)) add(ref, row);

    // (child, fk index) -> parent key -> child rows
    std::map<std::pair<TableRef, std::size_t>, std::multimap<Row, Row, RowLess>> fk_index;
    auto index_for = [&](const Table& child, std::size_t fk) -> const std::multimap<Row, Row, RowLess>& {
        auto [it, fresh] = fk_index.try_emplace({child.ref(), fk});
        if (fresh) {
            std::vector<std::size_t> cols;
            for (const auto& [c, p] : child.foreign_keys[fk].attribute_map) cols.push_back(*child.index_of(c));
            for (Row& row : txn->scan(storage_name(child.ref()))) {
                Row pk;
                for (std::size_t c : cols) pk.push_back(row[c]);
                it->second.emplace(std::move(pk), std::move(row));
            }
        }
        return it->second;
    };

    while (!queue.empty()) {
        auto [tref, row] = queue.front();
        queue.pop_front();
        const Table& table = registry_.table(tref);
        if (table.def.master) {
            // A part row never outlives its master; removing one removes the whole entity.
            for (const auto& fk : table.foreign_keys) {
                if (fk.parent != *table.def.master) continue;
                Row mkey;
                for (const auto& [c, p] : fk.attribute_map) mkey.push_back(row[*table.index_of(c)]);
                if (auto mrow = txn->index_lookup(storage_name(fk.parent), mkey)) add(fk.parent, *mrow);
            }
        }
        Row key(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(table.key_size));
        for (const TableRef& cref : registry_.children(tref)) {
            const Table& child = registry_.table(cref);
            for (std::size_t f = 0; f < child.foreign_keys.size(); ++f) {
                if (child.foreign_keys[f].parent != tref) continue;
                const auto& idx = index_for(child, f);
                auto [lo, hi] = idx.equal_range(key);
                for (auto it = lo; it != hi; ++it) add(cref, it->second);
            }
        }
    }

    std::vector<std::string> schema_objects;
    report.rows_removed[ref.qualified()] = 0;
    auto topo = registry_.topo_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        auto d = doomed.find(*it);
        if (d == doomed.end() || d->second.empty()) continue;
        std::vector<Row> keys;
        for (const auto& [key, row] : d->second) {
            keys.push_back(key);
            for (const Value& v : row)
                if (const auto* obj = std::get_if<ObjectRef>(&v)) {
                    ++report.objects_released;
                    if (obj->address.scheme == AddressScheme::Schema) schema_objects.push_back(obj->address.path);
                }
        }
        report.rows_removed[it->qualified()] = txn->delete_rows(storage_name(*it), keys);
    }
    fault("before_commit");
    txn->commit();
    log(TxnPhase::TuplesCommitted, schema_objects);
    for (const auto& path : schema_objects) {
        if (objects_->remove(path)) ++report.objects_removed;
        objects_->remove(sidecar_path(path));
    }
    return report;
}

GcReport Database::gc() {
    GcReport report;
    auto txn = store_->begin();
    std::set<std::string> referenced;
    for (const auto& name : txn->table_names())
        for (const Row& row : txn->scan(name))
            for (const Value& v : row)
                if (const auto* obj = std::get_if<ObjectRef>(&v)) referenced.insert(obj->address.path);
    const auto listing = objects_->list("hash/");
    const std::set<std::string> present(listing.begin(), listing.end());
    for (const auto& path : listing) {
        if (ends_with(path, ".meta.json")) {
            const std::string owner = path.substr(0, path.size() - std::string_view(".meta.json").size());
            if (!present.count(owner)) objects_->remove(path);
            continue;
        }
        ++report.scanned;
        if (referenced.count(path)) {
            ++report.referenced;
            continue;
        }
        fault("gc_delete");
        objects_->remove(path);
        objects_->remove(sidecar_path(path));
        ++report.deleted;
    }
    txn->commit();
    return report;
}

ObjectAddress Database::put_object(AddressScheme scheme, const Bytes& content,
                                   const std::optional<KeyContext>& key_context) {
    if (content.empty()) throw Error(ErrorCode::InvalidArgument, "object content is empty");
    ObjectAddress addr;
    addr.scheme = scheme;
    addr.content_hash = sha256_hex(content);
    addr.size = content.size();
    if (scheme == AddressScheme::Schema) {
        if (!key_context) throw Error(ErrorCode::InvalidArgument, "schema addressing needs a key context");
        addr.path = schema_object_path(*key_context);
    } else {
        addr.path = hash_object_path(addr.content_hash);
    }
    objects_->put(addr.path, content);
    return addr;
}

std::vector<Row> Database::fetch(const TableRef& table) {
    registry_.table(table);
    return store_->read()->scan(storage_name(table));
}

std::vector<Record> Database::fetch_records(const TableRef& table) {
    const Table& t = registry_.table(table);
    std::vector<Record> out;
    for (const Row& row : fetch(table)) out.push_back(to_record(t, row));
    return out;
}

LazyRef Database::lazy(const ObjectRef& ref) const {
    std::optional<int> version;
    if (ref.metadata.contains("version")) version = ref.metadata["version"].get<int>();
    auto codec = codecs_.resolve(ref.metadata.value("codec", std::string()), version);
    return LazyRef(ref, std::move(codec), objects_);
}

std::string Database::snapshot() {
    std::string out = "%% registry\n" + serialize_registry(registry_);
    for (const auto& [name, body] : store_->snapshot()) out += "%% table " + name + "\n" + body;
    out += "%% objects\n";
    for (const auto& path : objects_->list("")) out += path + "\n";
    return out;
}

} // namespace relatape
