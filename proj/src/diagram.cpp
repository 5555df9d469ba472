// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "relatape/diagram.hpp"

#include <algorithm>
#include <set>
#include <vector>

#include "relatape/error.hpp"

namespace relatape {

namespace {

std::string html_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string dot_id(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string camel(std::string_view snake) {
    std::string out;
    bool up = true;
    for (char c : snake) {
        if (c == '_') {
            up = true;
            continue;
        }
        out += up ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c;
        up = false;
    }
    return out;
}

} // namespace

TierStyle tier_style(Tier tier) {
    switch (tier) {
    case Tier::Manual: return {"box", "#9ccc9c"};
    case Tier::Lookup: return {"box", "#d3d3d3"};
    case Tier::Imported: return {"ellipse", "#9fb7e8"};
    case Tier::Computed: return {"ellipse", "#e89f9f"};
    case Tier::Part: return {"plaintext", ""};
    }
    return {"box", ""};
}

std::string display_name(std::string_view table_name) {
    std::string out;
    std::size_t start = 0;
    for (;;) {
        std::size_t sep = table_name.find("__", start);
        out += camel(table_name.substr(start, sep == std::string_view::npos ? sep : sep - start));
        if (sep == std::string_view::npos) return out;
        out += '.';
        start = sep + 2;
    }
}

std::string emit_dot(const SchemaRegistry& registry, const DiagramOptions& options) {
    if (options.schema) {
        auto schemas = registry.schemas();
        if (std::find(schemas.begin(), schemas.end(), *options.schema) == schemas.end())
            throw Error(ErrorCode::UnknownSchema, "no schema named '" + *options.schema + "'");
    }
    auto included = [&](const TableRef& r) { return !options.schema || r.schema == *options.schema; };
    const bool qualify = !options.schema && registry.schemas().size() > 1;
    const auto dims = registry.dimensions();

    auto node = [&](const Table& t, const std::string& indent) {
        const TableRef ref = t.ref();
        const TierStyle style = tier_style(t.def.tier);
        std::string name = html_escape((qualify ? ref.schema + "." : "") + display_name(ref.table));
        if (dims.count(ref)) name = "<u>" + name + "</u>";
        std::string label = name;
        if (options.show_attrs) {
            label = "<table border=\"0\" cellspacing=\"0\"><tr><td align=\"left\"><b>" + name + "</b></td></tr>";
            for (std::size_t i = 0; i < t.heading.size(); ++i) {
                if (i == t.key_size) label += "<tr><td align=\"left\">---</td></tr>";
                const auto& a = t.heading[i].attr;
                label += "<tr><td align=\"left\">" + html_escape(a.name + " : " + a.type.token()) + "</td></tr>";
            }
            label += "</table>";
        }
        std::string out = indent + dot_id(ref.qualified()) + " [shape=" + std::string(style.shape);
        if (!style.fill.empty()) out += ", style=filled, fillcolor=" + dot_id(style.fill);
        out += ", label=<" + label + ">";
        if (!t.def.comment.empty()) out += ", tooltip=" + dot_id(t.def.comment);
        return out + "];\n";
    };

    std::string out = "digraph schema {\n";
    out += "  rankdir=LR;\n";
    out += "  node [fontname=\"Helvetica\", fontsize=10];\n";
    out += "  edge [arrowhead=none];\n";
    std::set<TableRef> emitted;
    for (const TableRef& ref : registry.topo_order()) {
        if (!included(ref) || emitted.count(ref)) continue;
        const Table& t = registry.table(ref);
        if (t.def.master && included(*t.def.master) && !emitted.count(*t.def.master)) continue;
        auto parts = registry.parts(ref);
        if (parts.empty() || t.def.master) {
            out += node(t, "  ");
            emitted.insert(ref);
            continue;
        }
        out += "  subgraph " + dot_id("cluster_" + ref.qualified()) + " {\n";
        out += "    style=dotted;\n    label=\"\";\n";
        out += node(t, "    ");
        emitted.insert(ref);
        for (const TableRef& p : parts) {
            if (!included(p)) continue;
            out += node(registry.table(p), "    ");
            emitted.insert(p);
        }
        out += "  }\n";
    }
    std::vector<std::pair<std::pair<std::string, std::string>, bool>> edges;
    for (const Edge& e : registry.edges())
        if (included(e.child) && included(e.parent))
            edges.push_back({{e.parent.qualified(), e.child.qualified()}, e.into_primary_key});
    std::sort(edges.begin(), edges.end());
    for (const auto& [ends, solid] : edges)
        out += "  " + dot_id(ends.first) + " -> " + dot_id(ends.second) +
               (solid ? " [style=solid];\n" : " [style=dashed];\n");
    out += "}\n";
    return out;
}

} // namespace relatape
