#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attrition/gbdt.hpp"
#include "attrition/matrix.hpp"

namespace attrition {

// Additive attribution in margin (log-odds) units:
// base_value + sum(phi) reconstructs the model margin of the row.
struct ShapExplanation {
    double base_value = 0.0;
    std::vector<double> phi; // one entry per model feature
    double reconstructed_margin = 0.0;
};

// Path-dependent TreeSHAP: conditional expectations weighted by the
// training cover recorded on each node. Exact, not sampled.
ShapExplanation tree_shap(const GBDTModel& model, const double* row);

// Brute-force Shapley values by enumerating every subset of the features
// the model actually uses, with the same cover-weighted expectation as
// tree_shap. Refuses models using more than 12 distinct features.
ShapExplanation shapley_oracle(const GBDTModel& model, const double* row);

std::vector<ShapExplanation> tree_shap_batch_serial(const GBDTModel& model, const Matrix& rows);
std::vector<ShapExplanation> tree_shap_batch_parallel(const GBDTModel& model, const Matrix& rows);

enum class ImportanceKind { gain, split_count };

ImportanceKind parse_importance_kind(const std::string& text);

struct ImportanceTable {
    std::vector<std::string> features;
    std::vector<double> gain_sum;
    std::vector<uint64_t> split_count;
    std::vector<double> share;  // normalized by the requested kind
    bool shares_defined = true; // false when every importance is zero
};

ImportanceTable feature_importance(const GBDTModel& model, ImportanceKind kind);

struct PartialDependence {
    int feature = -1;
    std::vector<double> grid;
    std::vector<double> mean_margin;
};

// Mean margin over the reference rows with `feature` overwritten by each
// grid value in turn.
PartialDependence partial_dependence(const GBDTModel& model, int feature,
                                     const std::vector<double>& grid, const Matrix& reference);

// CSV exports. The per-row explanation file carries one __base__ line per
// explained row followed by one line per feature.
void write_shap_csv(const std::string& path, const std::vector<std::string>& employee_ids,
                    const std::vector<std::string>& snapshot_dates,
                    const std::vector<std::string>& feature_names, const Matrix& rows,
                    const std::vector<ShapExplanation>& explanations);
void write_importance_csv(const std::string& path, const ImportanceTable& table);
void write_pdp_csv(const std::string& path, const std::vector<std::string>& feature_names,
                   const std::vector<PartialDependence>& curves);

} // namespace attrition
