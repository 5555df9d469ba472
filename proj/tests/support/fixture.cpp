// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "fixture.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "relatape/cli.hpp"
#include "relatape/dsl.hpp"
#include "relatape/lcms.hpp"

namespace relatape::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& stem) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::vector<Record> read_rows(const Table& table, const fs::path& jsonl) {
    std::ifstream in(jsonl);
    std::vector<Record> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Record r;
        const Json j = Json::parse(line);
        for (const auto& [name, v] : j.items()) r[name] = value_from_json(table.find(name)->attr.type, v);
        out.push_back(std::move(r));
    }
    return out;
}

void load_lcms(Database& db, const std::string& schema) {
    for (const auto& def : load_definition_directory(kFixtureDir / "schema", schema)) db.declare(def);
    for (const char* name : {"sample", "instrument", "detection_params", "session", "scan"}) {
        const TableRef ref{schema, name};
        db.insert(ref, read_rows(db.registry().table(ref), kFixtureDir / "data" / (std::string(name) + ".jsonl")));
    }
}

PopulateReport populate_lcms(Database& db, std::size_t workers, const std::string& schema) {
    auto makes = lcms::makes(schema);
    PopulateReport r = populate(db, {schema, "spectrum"}, makes.at(schema + ".spectrum"));
    r += populate_parallel(db, {schema, "peak_detection"}, makes.at(schema + ".peak_detection"), workers);
    return r;
}

ToolResult run_tool(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"relatape"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    ToolResult r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

} // namespace relatape::testing
