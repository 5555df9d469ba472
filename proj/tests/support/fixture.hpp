// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "relatape/populate.hpp"

namespace relatape::testing {

inline const std::filesystem::path kFixtureDir{RELATAPE_FIXTURE_DIR};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& stem);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Declares the LC-MS schema under `schema` and inserts the manual/lookup rows.
void load_lcms(Database& db, const std::string& schema = "lcms");

/// Populates spectrum, then peak_detection with `workers` threads.
PopulateReport populate_lcms(Database& db, std::size_t workers = 1, const std::string& schema = "lcms");

std::vector<Record> read_rows(const Table& table, const std::filesystem::path& jsonl);

struct ToolResult {
    int code = 0;
    std::string out;
    std::string err;
};

/// Runs the command-line tool in-process.
ToolResult run_tool(const std::vector<std::string>& args);

} // namespace relatape::testing
