// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <random>
#include <vector>

#include "relatape/algebra.hpp"

namespace relatape::testing {

using Rng = std::mt19937_64;

inline std::size_t pick(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }
inline bool chance(Rng& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

/// Random in-memory database: up to six tables with FK chains, shared attribute names
/// across unrelated tables (homonyms), nullable secondaries and a handful of rows each.
struct RandomSchema {
    std::unique_ptr<Database> db;
    std::vector<TableRef> tables;
};

RandomSchema random_schema(Rng& rng, std::size_t max_tables = 6, std::size_t max_rows = 8);

/// Small per-kind domains so equality joins and restrictions hit often.
Value random_value(Rng& rng, const TypeSpec& type);

/// Builds random expressions over a schema. Operator construction errors are part of
/// the contract under test, so `attempt` returns nullopt when construction threw.
class ExprGen {
public:
    ExprGen(const Database& db, std::vector<TableRef> tables, Rng& rng);

    Query random_query(int depth);
    Query random_table();
    Predicate random_predicate(const Heading& h);
    ProjectSpec random_projection(const Heading& h);
    std::vector<AggSpec> random_aggregates(const Heading& h);

    std::size_t rejected() const { return rejected_; }

private:
    const Database& db_;
    std::vector<TableRef> tables_;
    Rng& rng_;
    LineageGraph lineage_;
    std::size_t rejected_ = 0;
    std::size_t fresh_ = 0;
};

} // namespace relatape::testing
