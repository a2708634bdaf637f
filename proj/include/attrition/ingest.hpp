#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attrition/dates.hpp"

namespace attrition {

enum class ColumnType { numeric, categorical };

// Declares the attribute columns of the snapshot table.
struct Schema {
    std::vector<std::pair<std::string, ColumnType>> attributes;

    const ColumnType* type_of(const std::string& name) const;
};

// One attribute column in columnar form. `missing` is authoritative; for
// numeric columns missing cells also hold NaN so either check works.
struct AttributeColumn {
    std::string name;
    ColumnType type = ColumnType::numeric;
    std::vector<double> numeric;
    std::vector<std::string> categorical;
    std::vector<uint8_t> missing;

    size_t size() const { return missing.size(); }
    void push_missing();
    void push_numeric(double v);
    void push_categorical(std::string v);
    void push_from(const AttributeColumn& src, size_t row);
};

// Per-employee month-end attribute states. Immutable after load.
struct SnapshotTable {
    std::vector<std::string> employee_ids;
    std::vector<Date> snapshot_dates;
    std::vector<AttributeColumn> columns;

    size_t n_rows() const { return employee_ids.size(); }
    const AttributeColumn* find_column(const std::string& name) const;
};

enum class EventType { termination_regretted, termination_unregretted, transfer };

const char* event_type_name(EventType t);
EventType parse_event_type(const std::string& s);

struct EventRecord {
    std::string employee_id;
    Date event_date;
    EventType type;
};

struct EventTable {
    std::vector<EventRecord> rows;
};

// Parse and validate the two input tables. Duplicate (employee, date) keys,
// non-month-end snapshot dates, unparseable cells and double terminations
// are rejected with the offending key named. Empty string and "NA" cells
// become missing markers.
SnapshotTable load_snapshots(const std::string& path, const Schema& schema);
EventTable load_events(const std::string& path);
std::pair<SnapshotTable, EventTable> load_tables(const std::string& snapshot_path,
                                                 const std::string& event_path,
                                                 const Schema& schema);

void write_snapshots_csv(const SnapshotTable& table, const std::string& path);
void write_events_csv(const EventTable& table, const std::string& path);

} // namespace attrition
