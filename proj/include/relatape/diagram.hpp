// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "relatape/model.hpp"

namespace relatape {

struct TierStyle {
    std::string_view shape;
    std::string_view fill;  // empty for parts
};

TierStyle tier_style(Tier tier);

struct DiagramOptions {
    std::optional<std::string> schema;  // all schemas when empty
    bool show_attrs = false;
};

/// Graphviz DOT for the registry. Nodes appear in topological order with parts
/// clustered beside their master; edges run parent to child, solid when the foreign
/// key is part of the child's key. Throws Error(UnknownSchema).
std::string emit_dot(const SchemaRegistry& registry, const DiagramOptions& options = {});

/// `peak_detection__peak` -> `PeakDetection.Peak`.
std::string display_name(std::string_view table_name);

} // namespace relatape
