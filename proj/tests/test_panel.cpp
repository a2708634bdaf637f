#include <algorithm>
#include <string>
#include <vector>

#include "attrition/errors.hpp"
#include "attrition/panel.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace attrition;

namespace {

Schema one_column_schema() {
    Schema s;
    s.attributes = {{"family", ColumnType::categorical}};
    return s;
}

// Monthly snapshots for one employee over [from, to] inclusive.
void add_employee(SnapshotTable& t, const std::string& id, YearMonth from, YearMonth to,
                  const std::string& family = "eng") {
    if (t.columns.empty()) {
        AttributeColumn col;
        col.name = "family";
        col.type = ColumnType::categorical;
        t.columns.push_back(col);
    }
    for (YearMonth ym = from; ym <= to; ym = add_months(ym, 1)) {
        t.employee_ids.push_back(id);
        t.snapshot_dates.push_back(month_end(ym));
        t.columns[0].push_categorical(family);
    }
}

EventTable one_event(const std::string& id, const Date& date, EventType type) {
    EventTable e;
    e.rows.push_back({id, date, type});
    return e;
}

PanelSpec spec_2024_01() {
    PanelSpec spec;
    spec.prediction_month = {2024, 1};
    spec.horizon_months = 3;
    spec.lookback_months = 12;
    return spec;
}

} // namespace

TEST_CASE("compute_label window and outcome type") {
    PanelSpec spec;
    spec.prediction_month = {2023, 6};
    spec.horizon_months = 3;
    spec.lookback_months = 12;

    const EventTable term =
        one_event("E1", Date{2023, 3, 15}, EventType::termination_regretted);
    spec.outcome_type = OutcomeType::regretted;
    CHECK(compute_label("E1", Date{2023, 1, 31}, spec, term) == 1);

    const EventTable late =
        one_event("E1", Date{2023, 6, 15}, EventType::termination_regretted);
    CHECK(compute_label("E1", Date{2023, 1, 31}, spec, late) == 0);

    spec.outcome_type = OutcomeType::transfer;
    CHECK(compute_label("E1", Date{2023, 1, 31}, spec, term) == 0);

    // Window boundary: event exactly at month_end(snapshot + horizon) counts.
    spec.outcome_type = OutcomeType::total_attrition;
    const EventTable edge =
        one_event("E1", Date{2023, 4, 30}, EventType::termination_unregretted);
    CHECK(compute_label("E1", Date{2023, 1, 31}, spec, edge) == 1);
    const EventTable past = one_event("E1", Date{2023, 5, 1}, EventType::termination_unregretted);
    CHECK(compute_label("E1", Date{2023, 1, 31}, spec, past) == 0);

    // Already terminated on/before the snapshot: precondition error.
    const EventTable before = one_event("E1", Date{2023, 1, 15}, EventType::termination_regretted);
    CHECK_THROWS_AS(compute_label("E1", Date{2023, 1, 31}, spec, before), DataError);

    spec.outcome_type = OutcomeType::total_movement;
    const EventTable tr = one_event("E1", Date{2023, 2, 10}, EventType::transfer);
    CHECK(compute_label("E1", Date{2023, 1, 31}, spec, tr) == 1);
}

TEST_CASE("build_panel window enumeration") {
    SnapshotTable snaps;
    add_employee(snaps, "E1", {2022, 6}, {2024, 1});
    const PanelDataset panel = build_panel(snaps, {}, spec_2024_01(), {"family"});
    // Window 2023-01 .. 2023-10 inclusive: 10 monthly snapshots.
    CHECK(panel.n_rows() == 10);
    CHECK(panel.rows.front().snapshot_date == Date{2023, 1, 31});
    CHECK(panel.rows.back().snapshot_date == Date{2023, 10, 31});
    for (const PanelRow& row : panel.rows) CHECK(row.label == 0);
}

TEST_CASE("terminated employee stops contributing rows") {
    SnapshotTable snaps;
    add_employee(snaps, "E1", {2023, 1}, {2023, 10});
    const EventTable events =
        one_event("E1", Date{2023, 5, 10}, EventType::termination_regretted);
    const PanelDataset panel = build_panel(snaps, events, spec_2024_01(), {});
    CHECK(panel.n_rows() == 4); // 2023-01 .. 2023-04
    CHECK(panel.rows.back().snapshot_date == Date{2023, 4, 30});
    // Snapshots 02..04 see the termination within 3 months.
    CHECK(panel.rows[0].label == 0);
    CHECK(panel.rows[1].label == 1);
    CHECK(panel.rows[3].label == 1);
}

TEST_CASE("empty window errors") {
    SnapshotTable snaps;
    add_employee(snaps, "E1", {2023, 1}, {2023, 10});
    PanelSpec spec = spec_2024_01();
    spec.horizon_months = 12;
    CHECK_THROWS_AS(build_panel(snaps, {}, spec, {}), ConfigError);

    PanelSpec none = spec_2024_01();
    none.prediction_month = {2030, 1};
    CHECK_THROWS_AS(build_panel(snaps, {}, none, {}), DataError);
}

TEST_CASE("strata key must be a declared categorical column") {
    SnapshotTable snaps;
    add_employee(snaps, "E1", {2023, 1}, {2023, 10});
    CHECK_THROWS_AS(build_panel(snaps, {}, spec_2024_01(), {"nosuch"}), ConfigError);
}

TEST_CASE("panel rows are ordered by employee then date") {
    SnapshotTable snaps;
    add_employee(snaps, "E2", {2023, 1}, {2023, 3});
    add_employee(snaps, "E1", {2023, 2}, {2023, 4});
    const PanelDataset panel = build_panel(snaps, {}, spec_2024_01(), {});
    REQUIRE(panel.n_rows() == 6);
    CHECK(panel.rows[0].employee_id == "E1");
    CHECK(std::is_sorted(panel.rows.begin(), panel.rows.end(),
                         [](const PanelRow& a, const PanelRow& b) {
                             return std::tie(a.employee_id, a.snapshot_date) <
                                    std::tie(b.employee_id, b.snapshot_date);
                         }));
}

TEST_CASE("labels are reproducible from events alone") {
    SnapshotTable snaps;
    add_employee(snaps, "E1", {2023, 1}, {2023, 10});
    add_employee(snaps, "E2", {2023, 1}, {2023, 10});
    const EventTable events =
        one_event("E2", Date{2023, 8, 20}, EventType::termination_unregretted);
    const PanelSpec spec = spec_2024_01();
    const PanelDataset panel = build_panel(snaps, events, spec, {});
    for (size_t i = 0; i < panel.n_rows(); ++i) {
        const PanelRow& row = panel.rows[i];
        CHECK(compute_label(row.employee_id, row.snapshot_date, spec, events) == row.label);
    }

    // Shifting all events beyond snapshot + horizon zeroes every label.
    EventTable shifted = events;
    for (EventRecord& ev : shifted.rows) ev.event_date = Date{2024, 6, 15};
    const PanelDataset zeroed = build_panel(snaps, shifted, spec, {});
    for (const PanelRow& row : zeroed.rows) CHECK(row.label == 0);
}

TEST_CASE("leakage audit flags the three violation kinds") {
    SnapshotTable snaps;
    add_employee(snaps, "E1", {2023, 1}, {2023, 10});
    const PanelSpec spec = spec_2024_01();
    PanelDataset panel = build_panel(snaps, {}, spec, {});

    // Well-formed panel with extraction covering the horizon: clean.
    CHECK(leakage_audit(panel, {}, Date{2024, 1, 31}).empty());

    // (a) label not resolvable yet: horizon extends past extraction date.
    const std::vector<AuditViolation> early = leakage_audit(panel, {}, Date{2023, 10, 31});
    CHECK(!early.empty());
    CHECK(std::all_of(early.begin(), early.end(), [](const AuditViolation& v) {
        return v.kind == ViolationKind::unresolvable_label;
    }));

    // (b) row after the employee's termination.
    const EventTable events =
        one_event("E1", Date{2023, 5, 10}, EventType::termination_regretted);
    const std::vector<AuditViolation> post = leakage_audit(panel, events, Date{2024, 1, 31});
    const size_t post_count =
        std::count_if(post.begin(), post.end(), [](const AuditViolation& v) {
            return v.kind == ViolationKind::post_termination_row;
        });
    CHECK(post_count == 6); // 2023-05 .. 2023-10 snapshots sit on or after the termination

    // (c) row outside the window.
    PanelDataset outside = panel;
    outside.rows.push_back({"E1", Date{2022, 12, 31}, 0});
    for (AttributeColumn& col : outside.attributes) col.push_missing();
    const std::vector<AuditViolation> oob = leakage_audit(outside, {}, Date{2024, 1, 31});
    REQUIRE(oob.size() == 1);
    CHECK(oob[0].kind == ViolationKind::outside_window);
    CHECK(oob[0].snapshot_date == Date{2022, 12, 31});
}

TEST_CASE("audit report json names kind, employee and date") {
    const std::vector<AuditViolation> violations = {
        {ViolationKind::unresolvable_label, "E9", Date{2023, 12, 31}}};
    const std::string json = audit_report_json(violations);
    CHECK(json.find("unresolvable_label") != std::string::npos);
    CHECK(json.find("E9") != std::string::npos);
    CHECK(json.find("2023-12-31") != std::string::npos);
}

TEST_CASE("panel csv round-trip") {
    TempDir dir("panel");
    SnapshotTable snaps;
    add_employee(snaps, "E1", {2023, 1}, {2023, 10}, "eng");
    add_employee(snaps, "E2", {2023, 1}, {2023, 6}, "sales");
    const EventTable events =
        one_event("E2", Date{2023, 8, 20}, EventType::termination_regretted);
    const PanelSpec spec = spec_2024_01();
    const PanelDataset panel = build_panel(snaps, events, spec, {"family"});
    write_panel_csv(panel, dir.file("panel.csv"));
    const PanelDataset back =
        read_panel_csv(dir.file("panel.csv"), one_column_schema(), spec, {"family"});
    REQUIRE(back.n_rows() == panel.n_rows());
    for (size_t i = 0; i < panel.n_rows(); ++i) {
        CHECK(back.rows[i].employee_id == panel.rows[i].employee_id);
        CHECK(back.rows[i].snapshot_date == panel.rows[i].snapshot_date);
        CHECK(back.rows[i].label == panel.rows[i].label);
    }
    REQUIRE(back.attributes.size() == panel.attributes.size());
    CHECK(back.attributes[0].categorical == panel.attributes[0].categorical);
}
