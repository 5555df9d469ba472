// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "relatape/dsl.hpp"
#include "relatape/error.hpp"
#include "relatape/model.hpp"

using namespace relatape;

namespace {

TableDef def(const std::string& name, const std::string& body, Tier tier = Tier::Manual,
             std::optional<TableRef> master = std::nullopt, const std::string& schema = "lab") {
    return parse_definition({body, name, tier, schema, master});
}

ErrorCode declare_error(SchemaRegistry& reg, const TableDef& d) {
    try {
        reg.declare_table(d);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("declared without error: " << d.table_name);
    return ErrorCode::InvalidArgument;
}

SchemaRegistry lab() {
    SchemaRegistry reg;
    reg.declare_table(def("subject", "subject_id : varchar(16)\n---\nspecies : varchar(32)\n"));
    reg.declare_table(def("rig", "rig_id : int64\n---\n", Tier::Lookup));
    reg.declare_table(def("session", "-> Subject\nsession_id : int64\n---\n-> Rig (rig = rig_id)\n"));
    reg.declare_table(def("scan", "-> Session\nscan_id : int64\n---\nduration : float64\n"));
    return reg;
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("inherited key attributes come first and follow renames") {
    SchemaRegistry reg = lab();
    const Table& session = reg.table({"lab", "session"});
    CHECK(session.attribute_names() == std::vector<std::string>{"subject_id", "session_id", "rig"});
    CHECK(session.primary_key() == std::vector<std::string>{"subject_id", "session_id"});
    CHECK(session.key_size == 2);
    const auto* rig = session.find("rig");
    REQUIRE(rig);
    CHECK(rig->inherited());
    CHECK(rig->sources[0].parent_attr == "rig_id");
    CHECK(rig->attr.type == core_type("int64"));
    CHECK(reg.table({"lab", "scan"}).primary_key() == std::vector<std::string>{"subject_id", "session_id", "scan_id"});
}

TEST_CASE("graph queries") {
    SchemaRegistry reg = lab();
    CHECK(reg.edges().size() == 3);
    CHECK(reg.dimensions() == std::set<TableRef>{{"lab", "subject"}, {"lab", "rig"}, {"lab", "session"}, {"lab", "scan"}});
    CHECK(reg.ancestors({"lab", "scan"}) == std::set<TableRef>{{"lab", "subject"}, {"lab", "rig"}, {"lab", "session"}});
    CHECK(reg.descendants({"lab", "rig"}) == std::set<TableRef>{{"lab", "session"}, {"lab", "scan"}});
    CHECK(reg.lookup("scan").ref() == TableRef{"lab", "scan"});
    CHECK(reg.lookup("lab.scan").ref() == TableRef{"lab", "scan"});
}

TEST_CASE("declaration errors") {
    SchemaRegistry reg = lab();
    CHECK(declare_error(reg, def("x", "-> Nowhere\nid : int64\n---\n")) == ErrorCode::UnknownParent);
    CHECK(declare_error(reg, def("x", "-> Subject\nsubject_id : int64\n---\n")) == ErrorCode::DuplicateAttribute);
    CHECK(declare_error(reg, def("x", "---\nv : int64\n")) == ErrorCode::InvalidDefinition);
    CHECK(declare_error(reg, def("x", "id = null : int64\n---\n")) == ErrorCode::InvalidDefinition);
    CHECK(declare_error(reg, def("p", "-> Scan\nk : int64\n---\n", Tier::Part)) == ErrorCode::PartWithoutMaster);
    CHECK(declare_error(reg, def("subject", "subject_id : varchar(16)\n---\n")) == ErrorCode::DefinitionConflict);
    // Re-declaring an ancestor with a reference to its own descendant closes a cycle.
    CHECK(declare_error(reg, def("subject", "subject_id : varchar(16)\n---\n-> Scan\n")) == ErrorCode::CycleError);
    CHECK(reg.size() == 4);
}

TEST_CASE("redeclaring an identical definition is a no-op") {
    SchemaRegistry reg = lab();
    const Table& again = reg.declare_table(def("scan", "-> Session\nscan_id : int64\n---\nduration : float64\n"));
    CHECK(&again == &reg.table({"lab", "scan"}));
    CHECK(reg.size() == 4);
}

TEST_CASE("part tables require their master's key") {
    SchemaRegistry reg = lab();
    reg.declare_table(def("scan__frame", "-> Scan\nframe : int64\n---\n", Tier::Part, TableRef{"lab", "scan"}));
    CHECK(reg.parts({"lab", "scan"}) == std::vector<TableRef>{{"lab", "scan__frame"}});
    CHECK(declare_error(reg, def("scan__bad", "frame : int64\n---\n-> Scan\n", Tier::Part, TableRef{"lab", "scan"})) ==
          ErrorCode::InvalidDefinition);
}

TEST_CASE("schema-level cycles are rejected") {
    SchemaRegistry reg = lab();
    reg.declare_table(def("device", "-> lab.Rig\ndevice_id : int64\n---\n", Tier::Manual, std::nullopt, "hw"));
    CHECK(declare_error(reg, def("probe", "-> hw.Device\nprobe_id : int64\n---\n")) == ErrorCode::CycleError);
}

TEST_CASE("topological order puts parents before children on random DAGs") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        SchemaRegistry reg;
        const int n = 2 + static_cast<int>(rng() % 10);
        for (int i = 0; i < n; ++i) {
            std::string body;
            for (int j = 0; j < i; ++j)
                if (rng() % 4 == 0) body += "-> T" + std::to_string(j) + " (p" + std::to_string(j) + "_" + std::to_string(i) + " = id" + std::to_string(j) + ")\n";
            body += "id" + std::to_string(i) + " : int64\n---\n";
            reg.declare_table(def("t" + std::to_string(i), body));
        }
        auto order = reg.topo_order();
        REQUIRE(order.size() == static_cast<std::size_t>(n));
        std::map<TableRef, std::size_t> pos;
        for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
        for (const auto& e : reg.edges()) CHECK(pos.at(e.parent) < pos.at(e.child));
    }
}

TEST_CASE("workflow lint rules") {
    SchemaRegistry reg = lab();
    reg.declare_table(def("orphan", "id : int64\n---\n", Tier::Computed));
    reg.declare_table(def("analysis", "-> Scan\n---\nscore : float64\n", Tier::Computed));
    reg.declare_table(def("annotation", "-> Analysis\nnote_id : int64\n---\nduration : float64\nlegacy : BIGINT\n"));
    std::set<std::pair<std::string, std::string>> got;
    for (const auto& d : lint_workflow_normalization(reg)) got.insert({d.table.table, d.rule});
    CHECK(got == std::set<std::pair<std::string, std::string>>{{"orphan", "no-upstream"},
                                                               {"annotation", "direction-inversion"},
                                                               {"annotation", "kitchen-sink"},
                                                               {"annotation", "native-type"}});
}

TEST_CASE("identifier rules") {
    CHECK(is_identifier("a"));
    CHECK(is_identifier("peak_detection__peak"));
    CHECK_FALSE(is_identifier("Peak"));
    CHECK_FALSE(is_identifier("1a"));
    CHECK_FALSE(is_identifier(std::string(65, 'a')));
    CHECK(parse_tier("computed") == Tier::Computed);
    CHECK_THROWS_AS(parse_tier("derived"), Error);
}

}
