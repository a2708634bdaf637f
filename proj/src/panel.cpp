#include "attrition/panel.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>

#include "attrition/csv.hpp"
#include "attrition/errors.hpp"

#include <json.hpp>

namespace attrition {

const char* outcome_type_name(OutcomeType t) {
    switch (t) {
        case OutcomeType::regretted: return "regretted";
        case OutcomeType::unregretted: return "unregretted";
        case OutcomeType::total_attrition: return "total_attrition";
        case OutcomeType::transfer: return "transfer";
        case OutcomeType::total_movement: return "total_movement";
    }
    return "?";
}

OutcomeType parse_outcome_type(const std::string& s) {
    if (s == "regretted") return OutcomeType::regretted;
    if (s == "unregretted") return OutcomeType::unregretted;
    if (s == "total_attrition") return OutcomeType::total_attrition;
    if (s == "transfer") return OutcomeType::transfer;
    if (s == "total_movement") return OutcomeType::total_movement;
    throw ConfigError("unknown outcome_type '" + s + "'");
}

void PanelSpec::validate() const {
    if (horizon_months < 1) throw ConfigError("horizon_months must be >= 1");
    if (lookback_months <= horizon_months) {
        throw ConfigError("empty panel window: lookback_months (" +
                          std::to_string(lookback_months) + ") must exceed horizon_months (" +
                          std::to_string(horizon_months) + ")");
    }
}

namespace {

bool event_matches(OutcomeType outcome, EventType type) {
    switch (outcome) {
        case OutcomeType::regretted: return type == EventType::termination_regretted;
        case OutcomeType::unregretted: return type == EventType::termination_unregretted;
        case OutcomeType::total_attrition:
            return type == EventType::termination_regretted ||
                   type == EventType::termination_unregretted;
        case OutcomeType::transfer: return type == EventType::transfer;
        case OutcomeType::total_movement: return true;
    }
    return false;
}

bool is_termination(EventType type) {
    return type != EventType::transfer;
}

// Per-employee event view used by labeling and the audit.
struct EventIndex {
    std::map<std::string, std::vector<const EventRecord*>> by_employee;
    std::map<std::string, Date> termination_of;

    explicit EventIndex(const EventTable& events) {
        for (const auto& rec : events.rows) {
            by_employee[rec.employee_id].push_back(&rec);
            if (is_termination(rec.type)) {
                auto [it, inserted] = termination_of.insert({rec.employee_id, rec.event_date});
                if (!inserted) {
                    throw DataError("employee " + rec.employee_id +
                                    " has more than one termination event");
                }
            }
        }
    }

    std::optional<Date> termination(const std::string& id) const {
        auto it = termination_of.find(id);
        if (it == termination_of.end()) return std::nullopt;
        return it->second;
    }
};

int label_from_index(const EventIndex& index, const std::string& employee_id,
                     const Date& snapshot_date, const PanelSpec& spec) {
    auto term = index.termination(employee_id);
    if (term && *term <= snapshot_date) {
        throw DataError("employee " + employee_id + " was terminated on " + format_date(*term) +
                        ", on or before snapshot " + format_date(snapshot_date));
    }
    Date window_end = add_months_month_end(snapshot_date, spec.horizon_months);
    auto it = index.by_employee.find(employee_id);
    if (it == index.by_employee.end()) return 0;
    for (const EventRecord* rec : it->second) {
        if (rec->event_date > snapshot_date && rec->event_date <= window_end &&
            event_matches(spec.outcome_type, rec->type)) {
            return 1;
        }
    }
    return 0;
}

} // namespace

const AttributeColumn* PanelDataset::find_attribute(const std::string& name) const {
    for (const auto& col : attributes) {
        if (col.name == name) return &col;
    }
    return nullptr;
}

int compute_label(const std::string& employee_id, const Date& snapshot_date,
                  const PanelSpec& spec, const EventTable& events) {
    return label_from_index(EventIndex(events), employee_id, snapshot_date, spec);
}

PanelDataset build_panel(const SnapshotTable& snapshots, const EventTable& events,
                         const PanelSpec& spec, const std::vector<std::string>& strata_keys) {
    spec.validate();
    for (const auto& key : strata_keys) {
        const AttributeColumn* col = snapshots.find_column(key);
        if (!col) throw ConfigError("strata key '" + key + "' is not a declared column");
        if (col->type != ColumnType::categorical) {
            throw ConfigError("strata key '" + key + "' must be a categorical column");
        }
    }

    EventIndex index(events);
    YearMonth start = spec.window_start();
    YearMonth end = spec.window_end();

    std::vector<size_t> selected;
    for (size_t r = 0; r < snapshots.n_rows(); ++r) {
        YearMonth ym = year_month_of(snapshots.snapshot_dates[r]);
        if (ym < start || ym > end) continue;
        auto term = index.termination(snapshots.employee_ids[r]);
        if (term && *term <= snapshots.snapshot_dates[r]) continue;
        selected.push_back(r);
    }
    if (selected.empty()) {
        throw DataError("empty panel: no snapshots in window " + format_year_month(start) +
                        " .. " + format_year_month(end));
    }
    std::sort(selected.begin(), selected.end(), [&](size_t a, size_t b) {
        if (snapshots.employee_ids[a] != snapshots.employee_ids[b]) {
            return snapshots.employee_ids[a] < snapshots.employee_ids[b];
        }
        return snapshots.snapshot_dates[a] < snapshots.snapshot_dates[b];
    });

    PanelDataset panel;
    panel.spec = spec;
    panel.strata_keys = strata_keys;
    for (const auto& col : snapshots.columns) {
        AttributeColumn out;
        out.name = col.name;
        out.type = col.type;
        panel.attributes.push_back(std::move(out));
    }
    for (size_t r : selected) {
        PanelRow row;
        row.employee_id = snapshots.employee_ids[r];
        row.snapshot_date = snapshots.snapshot_dates[r];
        row.label = label_from_index(index, row.employee_id, row.snapshot_date, spec);
        panel.rows.push_back(std::move(row));
        for (size_t c = 0; c < snapshots.columns.size(); ++c) {
            panel.attributes[c].push_from(snapshots.columns[c], r);
        }
    }
    return panel;
}

const char* violation_kind_name(ViolationKind k) {
    switch (k) {
        case ViolationKind::unresolvable_label: return "unresolvable_label";
        case ViolationKind::post_termination_row: return "post_termination_row";
        case ViolationKind::outside_window: return "outside_window";
    }
    return "?";
}

std::vector<AuditViolation> leakage_audit(const PanelDataset& panel, const EventTable& events,
                                          const Date& extraction_date) {
    EventIndex index(events);
    YearMonth start = panel.spec.window_start();
    YearMonth end = panel.spec.window_end();

    std::vector<AuditViolation> violations;
    for (const auto& row : panel.rows) {
        Date resolve_date = add_months_month_end(row.snapshot_date, panel.spec.horizon_months);
        if (resolve_date > extraction_date) {
            violations.push_back({ViolationKind::unresolvable_label, row.employee_id,
                                  row.snapshot_date});
        }
        auto term = index.termination(row.employee_id);
        if (term && *term <= row.snapshot_date) {
            violations.push_back({ViolationKind::post_termination_row, row.employee_id,
                                  row.snapshot_date});
        }
        YearMonth ym = year_month_of(row.snapshot_date);
        if (ym < start || ym > end) {
            violations.push_back({ViolationKind::outside_window, row.employee_id,
                                  row.snapshot_date});
        }
    }
    return violations;
}

void write_panel_csv(const PanelDataset& panel, const std::string& path) {
    CsvTable csv;
    csv.header = {"employee_id", "snapshot_date", "label"};
    // Strata columns first, remaining attribute columns after.
    std::vector<const AttributeColumn*> ordered;
    for (const auto& key : panel.strata_keys) ordered.push_back(panel.find_attribute(key));
    for (const auto& col : panel.attributes) {
        bool is_stratum = std::find(panel.strata_keys.begin(), panel.strata_keys.end(),
                                    col.name) != panel.strata_keys.end();
        if (!is_stratum) ordered.push_back(&col);
    }
    for (const auto* col : ordered) csv.header.push_back(col->name);

    for (size_t r = 0; r < panel.n_rows(); ++r) {
        std::vector<std::string> row;
        row.push_back(panel.rows[r].employee_id);
        row.push_back(format_date(panel.rows[r].snapshot_date));
        row.push_back(std::to_string(panel.rows[r].label));
        for (const auto* col : ordered) {
            if (col->missing[r]) {
                row.emplace_back();
            } else if (col->type == ColumnType::numeric) {
                row.push_back(format_double(col->numeric[r]));
            } else {
                row.push_back(col->categorical[r]);
            }
        }
        csv.rows.push_back(std::move(row));
    }
    write_csv(path, csv);
}

PanelDataset read_panel_csv(const std::string& path, const Schema& schema,
                            const PanelSpec& spec, const std::vector<std::string>& strata_keys) {
    CsvTable csv = read_csv(path);
    auto col_index = [&](const std::string& name) -> size_t {
        for (size_t i = 0; i < csv.header.size(); ++i) {
            if (csv.header[i] == name) return i;
        }
        throw DataError(path + ": missing column '" + name + "'");
    };
    size_t id_col = col_index("employee_id");
    size_t date_col = col_index("snapshot_date");
    size_t label_col = col_index("label");

    PanelDataset panel;
    panel.spec = spec;
    panel.strata_keys = strata_keys;
    std::vector<size_t> attr_cols;
    for (const auto& [name, type] : schema.attributes) {
        attr_cols.push_back(col_index(name));
        AttributeColumn col;
        col.name = name;
        col.type = type;
        panel.attributes.push_back(std::move(col));
    }
    for (size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& src = csv.rows[r];
        PanelRow row;
        row.employee_id = src[id_col];
        row.snapshot_date = parse_date(src[date_col]);
        if (src[label_col] != "0" && src[label_col] != "1") {
            throw DataError(path + ": label must be 0 or 1 at row " + std::to_string(r + 2));
        }
        row.label = src[label_col] == "1" ? 1 : 0;
        panel.rows.push_back(std::move(row));
        for (size_t a = 0; a < attr_cols.size(); ++a) {
            const std::string& cell = src[attr_cols[a]];
            AttributeColumn& col = panel.attributes[a];
            if (cell.empty() || cell == "NA") {
                col.push_missing();
            } else if (col.type == ColumnType::numeric) {
                size_t pos = 0;
                double v = std::stod(cell, &pos);
                if (pos != cell.size()) {
                    throw DataError(path + ": unparseable numeric cell '" + cell + "'");
                }
                col.push_numeric(v);
            } else {
                col.push_categorical(cell);
            }
        }
    }
    return panel;
}

std::string audit_report_json(const std::vector<AuditViolation>& violations) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : violations) {
        arr.push_back({{"violation_kind", violation_kind_name(v.kind)},
                       {"employee_id", v.employee_id},
                       {"snapshot_date", format_date(v.snapshot_date)}});
    }
    return arr.dump(2) + "\n";
}

} // namespace attrition
