// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <exception>
#include <ostream>
#include <string_view>

#include "relatape/algebra.hpp"

namespace relatape {

/// Process exit codes: 0 success, 1 operational error, 2 semantic mismatch,
/// 3 storage failure.
int exit_code_for(const std::exception& e);

/// Entry point of the `relatape` tool, with output streams injectable for tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Linear query notation, stages separated by `|`:
///
///     session | restrict sample_id="s1" | join scan | proj mz_low, span=mz_high - mz_low
///     session | aggr scan count->n, max(mz_high)->top
///
/// Stages: `restrict <conds>|<table>`, `exclude <table>`, `join <table>`,
/// `union <table>`, `proj <items>`, `aggr <table> <specs>`. `→` may stand for `->`.
Query parse_pipeline(std::string_view text, const SchemaRegistry& registry);

/// Comma-separated `attr OP literal` or `attr in (v1, v2)` conditions.
Predicate parse_conditions(std::string_view text, const Heading& heading);

/// `90`, `90s`, `15m`, `2h`, `1d`.
std::chrono::microseconds parse_duration(std::string_view text);

} // namespace relatape
