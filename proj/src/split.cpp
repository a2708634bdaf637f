#include "attrition/split.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "attrition/csv.hpp"
#include "attrition/errors.hpp"
#include "attrition/rng.hpp"

namespace attrition {

const char* fold_name(Fold f) {
    switch (f) {
        case Fold::train: return "train";
        case Fold::valid: return "valid";
        case Fold::test: return "test";
    }
    return "?";
}

Fold parse_fold(const std::string& s) {
    if (s == "train") return Fold::train;
    if (s == "valid") return Fold::valid;
    if (s == "test") return Fold::test;
    throw DataError("unknown fold '" + s + "'");
}

void SplitFractions::validate() const {
    if (train <= 0) throw ConfigError("train fraction must be positive");
    if (valid < 0 || test < 0) throw ConfigError("fold fractions must be non-negative");
    if (std::abs(train + valid + test - 1.0) > 1e-9) {
        throw ConfigError("fold fractions must sum to 1");
    }
}

Fold SplitAssignment::fold_of(const std::string& employee_id) const {
    auto it = fold_of_employee.find(employee_id);
    if (it == fold_of_employee.end()) {
        throw DataError("employee " + employee_id + " is not in the split assignment");
    }
    return it->second;
}

std::vector<size_t> SplitAssignment::rows_in_fold(const PanelDataset& panel, Fold f) const {
    std::vector<size_t> out;
    for (size_t r = 0; r < panel.n_rows(); ++r) {
        if (fold_of(panel.rows[r].employee_id) == f) out.push_back(r);
    }
    return out;
}

namespace {

constexpr const char* kMissingCategory = "\xE2\x90\x80MISSING";

struct EmployeeInfo {
    size_t latest_row = 0;
    bool any_positive = false;
};

// Counts per fold by largest remainder: exact totals, remainders broken by
// size descending then fold order (train, valid, test).
std::array<size_t, 3> largest_remainder_counts(size_t n, const SplitFractions& fractions) {
    const double frac[3] = {fractions.train, fractions.valid, fractions.test};
    std::array<size_t, 3> counts{};
    double remainder[3];
    size_t assigned = 0;
    for (int f = 0; f < 3; ++f) {
        double quota = static_cast<double>(n) * frac[f];
        counts[f] = static_cast<size_t>(std::floor(quota + 1e-12));
        remainder[f] = quota - static_cast<double>(counts[f]);
        assigned += counts[f];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return remainder[a] > remainder[b] + 1e-12; });
    for (size_t k = 0; assigned < n; ++k) {
        counts[order[k % 3]] += 1;
        ++assigned;
    }
    return counts;
}

} // namespace

SplitAssignment group_stratified_split(const PanelDataset& panel, const SplitFractions& fractions,
                                       const std::vector<std::string>& strata_keys,
                                       uint64_t seed) {
    fractions.validate();
    std::vector<const AttributeColumn*> strata_cols;
    for (const auto& key : strata_keys) {
        const AttributeColumn* col = panel.find_attribute(key);
        if (!col) throw ConfigError("strata key '" + key + "' is not a panel column");
        strata_cols.push_back(col);
    }

    // Latest snapshot row and any-positive flag per employee; the ordered
    // map makes everything downstream independent of row order.
    std::map<std::string, EmployeeInfo> employees;
    for (size_t r = 0; r < panel.n_rows(); ++r) {
        const std::string& id = panel.rows[r].employee_id;
        auto it = employees.find(id);
        if (it == employees.end()) {
            employees[id] = {r, panel.rows[r].label == 1};
            continue;
        }
        if (panel.rows[r].snapshot_date >= panel.rows[it->second.latest_row].snapshot_date) {
            it->second.latest_row = r;
        }
        if (panel.rows[r].label == 1) it->second.any_positive = true;
    }

    std::map<std::string, std::vector<const std::string*>> strata;
    for (const auto& [id, info] : employees) {
        std::string key;
        for (const auto* col : strata_cols) {
            key += col->missing[info.latest_row] ? kMissingCategory
                                                 : col->categorical[info.latest_row];
            key += '\x1f';
        }
        key += info.any_positive ? "pos" : "neg";
        strata[key].push_back(&id);
    }

    int required_folds = 1 + (fractions.valid > 0 ? 1 : 0) + (fractions.test > 0 ? 1 : 0);

    SplitAssignment out;
    out.fractions = fractions;
    out.strata_keys = strata_keys;
    out.seed = seed;
    for (const auto& [key, members] : strata) {
        std::vector<const std::string*> shuffled = members; // already sorted by id
        Rng rng(mix_seed(seed, fnv1a64(key)));
        rng.shuffle(shuffled);

        if (shuffled.size() < static_cast<size_t>(required_folds)) {
            for (const auto* id : shuffled) out.fold_of_employee[*id] = Fold::train;
            out.warnings.push_back("stratum '" + key + "' has only " +
                                   std::to_string(shuffled.size()) +
                                   " employee(s); assigned entirely to train");
            continue;
        }
        auto counts = largest_remainder_counts(shuffled.size(), fractions);
        size_t pos = 0;
        const Fold folds[3] = {Fold::train, Fold::valid, Fold::test};
        for (int f = 0; f < 3; ++f) {
            for (size_t k = 0; k < counts[f]; ++k) {
                out.fold_of_employee[*shuffled[pos++]] = folds[f];
            }
        }
    }
    return out;
}

void write_split_csv(const SplitAssignment& split, const std::string& path) {
    CsvTable csv;
    csv.header = {"employee_id", "fold"};
    for (const auto& [id, fold] : split.fold_of_employee) {
        csv.rows.push_back({id, fold_name(fold)});
    }
    write_csv(path, csv);
}

SplitAssignment read_split_csv(const std::string& path) {
    CsvTable csv = read_csv(path);
    if (csv.header.size() != 2 || csv.header[0] != "employee_id" || csv.header[1] != "fold") {
        throw DataError(path + ": expected header employee_id,fold");
    }
    SplitAssignment out;
    for (const auto& row : csv.rows) {
        out.fold_of_employee[row[0]] = parse_fold(row[1]);
    }
    return out;
}

} // namespace attrition
