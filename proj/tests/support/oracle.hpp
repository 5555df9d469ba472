// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relatape/algebra.hpp"

namespace relatape::testing {

/// Named-record relation used by the brute-force evaluator.
struct OracleRelation {
    std::vector<std::string> names;
    std::vector<std::string> pk;
    std::vector<Record> rows;
};

/// Table contents keyed by storage name.
using OracleData = std::map<std::string, std::vector<Record>>;

struct OracleConflict {};

/// Nested-loop evaluation straight from the operator definitions. It reads only the
/// user-supplied payload of each node (table, predicate, projection list, aggregate
/// specs) and derives names, keys and matches itself. Throws OracleConflict when a
/// union meets two different rows under one key.
OracleRelation oracle_eval(const Query& q, const SchemaRegistry& registry, const OracleData& data);

OracleData snapshot_data(Database& db);

/// Row-set equality with a relative tolerance on floats. On mismatch `why` explains.
bool same_rows(const OracleRelation& expected, const Relation& actual, std::string* why = nullptr);

/// Independent origin computation straight from the table definitions.
std::set<std::string> oracle_origins(const SchemaRegistry& registry, const TableRef& table, const std::string& attr);

} // namespace relatape::testing
