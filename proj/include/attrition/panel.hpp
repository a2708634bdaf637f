#pragma once

#include <string>
#include <vector>

#include "attrition/dates.hpp"
#include "attrition/ingest.hpp"

namespace attrition {

enum class OutcomeType { regretted, unregretted, total_attrition, transfer, total_movement };

const char* outcome_type_name(OutcomeType t);
OutcomeType parse_outcome_type(const std::string& s);

struct PanelSpec {
    YearMonth prediction_month;
    int horizon_months = 3;
    int lookback_months = 12;
    OutcomeType outcome_type = OutcomeType::total_attrition;

    // Inclusive snapshot window.
    YearMonth window_start() const { return add_months(prediction_month, -lookback_months); }
    YearMonth window_end() const { return add_months(prediction_month, -horizon_months); }

    void validate() const; // horizon >= 1, lookback > horizon
};

struct PanelRow {
    std::string employee_id;
    Date snapshot_date;
    int label = 0;
};

// Snapshot rows inside the window joined with forward-looking labels.
// Attribute columns run parallel to `rows`; strata_keys name the
// categorical columns used for stratified splitting.
struct PanelDataset {
    std::vector<PanelRow> rows;
    std::vector<AttributeColumn> attributes;
    std::vector<std::string> strata_keys;
    PanelSpec spec;

    size_t n_rows() const { return rows.size(); }
    const AttributeColumn* find_attribute(const std::string& name) const;
};

// 1 iff an event matching spec.outcome_type falls in
// (snapshot_date, month_end(snapshot_date + horizon)]. Throws DataError if
// the employee was already terminated on or before snapshot_date.
int compute_label(const std::string& employee_id, const Date& snapshot_date,
                  const PanelSpec& spec, const EventTable& events);

// One row per (employee, snapshot month) in the window, ordered by
// (employee_id, snapshot_date). Snapshots on or after an employee's
// termination date are dropped.
PanelDataset build_panel(const SnapshotTable& snapshots, const EventTable& events,
                         const PanelSpec& spec, const std::vector<std::string>& strata_keys);

enum class ViolationKind { unresolvable_label, post_termination_row, outside_window };

const char* violation_kind_name(ViolationKind k);

struct AuditViolation {
    ViolationKind kind;
    std::string employee_id;
    Date snapshot_date;
};

// Temporal-leakage audit. An empty report means the panel is safe to train
// on as of extraction_date.
std::vector<AuditViolation> leakage_audit(const PanelDataset& panel, const EventTable& events,
                                          const Date& extraction_date);

void write_panel_csv(const PanelDataset& panel, const std::string& path);
PanelDataset read_panel_csv(const std::string& path, const Schema& schema,
                            const PanelSpec& spec, const std::vector<std::string>& strata_keys);
std::string audit_report_json(const std::vector<AuditViolation>& violations);

} // namespace attrition
