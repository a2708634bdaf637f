#include "attrition/ingest.hpp"

#include <charconv>
#include <map>
#include <set>

#include "attrition/csv.hpp"
#include "attrition/errors.hpp"
#include "attrition/matrix.hpp"

namespace attrition {

const ColumnType* Schema::type_of(const std::string& name) const {
    for (const auto& [col, type] : attributes) {
        if (col == name) return &type;
    }
    return nullptr;
}

void AttributeColumn::push_missing() {
    missing.push_back(1);
    if (type == ColumnType::numeric) {
        numeric.push_back(Matrix::missing());
    } else {
        categorical.emplace_back();
    }
}

void AttributeColumn::push_numeric(double v) {
    missing.push_back(0);
    numeric.push_back(v);
}

void AttributeColumn::push_categorical(std::string v) {
    missing.push_back(0);
    categorical.push_back(std::move(v));
}

void AttributeColumn::push_from(const AttributeColumn& src, size_t row) {
    if (src.missing[row]) {
        push_missing();
    } else if (src.type == ColumnType::numeric) {
        push_numeric(src.numeric[row]);
    } else {
        push_categorical(src.categorical[row]);
    }
}

const AttributeColumn* SnapshotTable::find_column(const std::string& name) const {
    for (const auto& col : columns) {
        if (col.name == name) return &col;
    }
    return nullptr;
}

const char* event_type_name(EventType t) {
    switch (t) {
        case EventType::termination_regretted: return "termination_regretted";
        case EventType::termination_unregretted: return "termination_unregretted";
        case EventType::transfer: return "transfer";
    }
    return "?";
}

EventType parse_event_type(const std::string& s) {
    if (s == "termination_regretted") return EventType::termination_regretted;
    if (s == "termination_unregretted") return EventType::termination_unregretted;
    if (s == "transfer") return EventType::transfer;
    throw DataError("unknown event_type '" + s + "'");
}

namespace {

bool is_missing_marker(const std::string& cell) {
    return cell.empty() || cell == "NA";
}

double parse_numeric_cell(const std::string& cell, size_t row, const std::string& column) {
    double v = 0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw DataError("unparseable numeric cell '" + cell + "' at row " +
                        std::to_string(row) + ", column '" + column + "'");
    }
    return v;
}

size_t require_column(const CsvTable& csv, const std::string& name, const std::string& origin) {
    for (size_t i = 0; i < csv.header.size(); ++i) {
        if (csv.header[i] == name) return i;
    }
    throw DataError(origin + ": missing required column '" + name + "'");
}

} // namespace

SnapshotTable load_snapshots(const std::string& path, const Schema& schema) {
    CsvTable csv = read_csv(path);
    size_t id_col = require_column(csv, "employee_id", path);
    size_t date_col = require_column(csv, "snapshot_date", path);

    SnapshotTable table;
    std::vector<size_t> attr_csv_cols;
    for (const auto& [name, type] : schema.attributes) {
        attr_csv_cols.push_back(require_column(csv, name, path));
        AttributeColumn col;
        col.name = name;
        col.type = type;
        table.columns.push_back(std::move(col));
    }

    std::set<std::pair<std::string, Date>> seen;
    for (size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        const std::string& id = row[id_col];
        if (id.empty()) {
            throw DataError(path + ": empty employee_id at row " + std::to_string(r + 2));
        }
        Date date = parse_date(row[date_col]);
        if (!is_month_end(date)) {
            throw DataError(path + ": snapshot_date " + format_date(date) + " for employee " +
                            id + " is not a month-end date");
        }
        if (!seen.insert({id, date}).second) {
            throw DataError(path + ": duplicate (employee_id, snapshot_date) key (" + id + ", " +
                            format_date(date) + ")");
        }
        table.employee_ids.push_back(id);
        table.snapshot_dates.push_back(date);
        for (size_t a = 0; a < attr_csv_cols.size(); ++a) {
            const std::string& cell = row[attr_csv_cols[a]];
            AttributeColumn& col = table.columns[a];
            if (is_missing_marker(cell)) {
                col.push_missing();
            } else if (col.type == ColumnType::numeric) {
                col.push_numeric(parse_numeric_cell(cell, r + 2, col.name));
            } else {
                col.push_categorical(cell);
            }
        }
    }
    return table;
}

EventTable load_events(const std::string& path) {
    CsvTable csv = read_csv(path);
    size_t id_col = require_column(csv, "employee_id", path);
    size_t date_col = require_column(csv, "event_date", path);
    size_t type_col = require_column(csv, "event_type", path);

    EventTable table;
    std::map<std::string, Date> termination_of;
    for (size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        EventRecord rec;
        rec.employee_id = row[id_col];
        if (rec.employee_id.empty()) {
            throw DataError(path + ": empty employee_id at row " + std::to_string(r + 2));
        }
        rec.event_date = parse_date(row[date_col]);
        rec.type = parse_event_type(row[type_col]);
        if (rec.type != EventType::transfer) {
            auto [it, inserted] = termination_of.insert({rec.employee_id, rec.event_date});
            if (!inserted) {
                throw DataError(path + ": employee " + rec.employee_id +
                                " has more than one termination event");
            }
        }
        table.rows.push_back(std::move(rec));
    }
    return table;
}

std::pair<SnapshotTable, EventTable> load_tables(const std::string& snapshot_path,
                                                 const std::string& event_path,
                                                 const Schema& schema) {
    return {load_snapshots(snapshot_path, schema), load_events(event_path)};
}

void write_snapshots_csv(const SnapshotTable& table, const std::string& path) {
    CsvTable csv;
    csv.header = {"employee_id", "snapshot_date"};
    for (const auto& col : table.columns) csv.header.push_back(col.name);
    for (size_t r = 0; r < table.n_rows(); ++r) {
        std::vector<std::string> row;
        row.push_back(table.employee_ids[r]);
        row.push_back(format_date(table.snapshot_dates[r]));
        for (const auto& col : table.columns) {
            if (col.missing[r]) {
                row.emplace_back();
            } else if (col.type == ColumnType::numeric) {
                row.push_back(format_double(col.numeric[r]));
            } else {
                row.push_back(col.categorical[r]);
            }
        }
        csv.rows.push_back(std::move(row));
    }
    write_csv(path, csv);
}

void write_events_csv(const EventTable& table, const std::string& path) {
    CsvTable csv;
    csv.header = {"employee_id", "event_date", "event_type"};
    for (const auto& rec : table.rows) {
        csv.rows.push_back({rec.employee_id, format_date(rec.event_date),
                            event_type_name(rec.type)});
    }
    write_csv(path, csv);
}

} // namespace attrition
