#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "attrition/panel.hpp"

namespace attrition {

enum class Fold { train, valid, test };

const char* fold_name(Fold f);
Fold parse_fold(const std::string& s);

struct SplitFractions {
    double train = 0.75;
    double valid = 0.15;
    double test = 0.10;

    void validate() const; // non-negative, train > 0, sum to 1 within 1e-9
};

struct SplitAssignment {
    std::map<std::string, Fold> fold_of_employee;
    SplitFractions fractions;
    std::vector<std::string> strata_keys;
    uint64_t seed = 0;
    std::vector<std::string> warnings;

    Fold fold_of(const std::string& employee_id) const;
    std::vector<size_t> rows_in_fold(const PanelDataset& panel, Fold f) const;
};

// Employee-level stratified tripartition with no employee overlap.
// An employee's stratum is the tuple of strata values at their latest
// snapshot plus an any-positive-label flag. Within each stratum employees
// are shuffled by a stream keyed on (seed, stratum identity) and allocated
// by largest remainder, so the assignment is deterministic, independent of
// panel row order, and stable when unrelated strata appear or disappear.
// Strata too small to populate every nonzero fold go entirely to train and
// are reported in `warnings`.
SplitAssignment group_stratified_split(const PanelDataset& panel, const SplitFractions& fractions,
                                       const std::vector<std::string>& strata_keys, uint64_t seed);

void write_split_csv(const SplitAssignment& split, const std::string& path);
SplitAssignment read_split_csv(const std::string& path);

} // namespace attrition
