#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attrition/calibrate.hpp"
#include "attrition/features.hpp"
#include "attrition/gbdt.hpp"
#include "attrition/ingest.hpp"
#include "attrition/panel.hpp"
#include "attrition/split.hpp"

namespace attrition {

struct ImbalancePlan {
    enum class Method { none, class_weights, downsample, smote };
    Method method = Method::class_weights;
    double positives_per_negative = 1.0; // downsample target ratio
    int smote_k = 5;
    double smote_multiplier = 1.0; // synthetic positives per real positive
};

struct CalibrationPlan {
    CalibratorKind kind = CalibratorKind::isotonic;
    std::string segment_key; // required for segment_mean
};

struct ExplainPlan {
    size_t sample_size = 200;
    std::vector<std::string> pdp_features; // empty = every numeric column
    int pdp_points = 9;
};

struct EvaluationPlan {
    double threshold = 0.5;
    std::vector<std::string> segment_keys;
    int ece_bins = 10;
};

// Everything one run needs, parsed from a single JSON file.
struct PipelineConfig {
    std::string snapshots_path;
    std::string events_path;
    Schema schema;
    PanelSpec panel;
    SplitFractions fractions;
    std::vector<std::string> strata_keys;
    FeaturePlan feature_plan;
    ImbalancePlan imbalance;
    GBDTParams gbdt;
    CalibrationPlan calibration;
    std::vector<std::string> baseline_features;
    EvaluationPlan evaluation;
    std::vector<std::string> cut_keys;
    ExplainPlan explain;
    std::string output_dir = "out";
    uint64_t seed = 0;
    std::optional<Date> extraction_date; // default: month_end(prediction_month)

    Date effective_extraction_date() const;
    void validate() const;

    static PipelineConfig from_json(const std::string& text, const std::string& origin);
    static PipelineConfig from_file(const std::string& path);
    std::string to_json() const; // canonical echo, also hashed into the manifest
};

struct RiskRow {
    std::vector<std::string> cut_values;
    size_t n_employees = 0;
    double expected_attrition = 0.0;
    double mean_risk = 0.0;
    std::optional<double> actual_rate;
};

struct RiskReport {
    std::vector<std::string> cut_keys;
    std::vector<RiskRow> rows;
};

// Groups the latest snapshot per employee by the cut-key tuple, so each
// employee contributes exactly one probability. `row_indices` and
// `probabilities` run in parallel.
RiskReport aggregate_risk(const PanelDataset& panel, const std::vector<size_t>& row_indices,
                          const std::vector<double>& probabilities,
                          const std::vector<std::string>& cut_keys);

void write_risk_report_csv(const RiskReport& report, const std::string& path);

struct PipelineResult {
    std::string manifest_json;
    std::optional<double> full_test_auc_pr;
    std::optional<double> baseline_test_auc_pr;
    std::vector<std::string> warnings;
};

// The whole experiment: ingest, panel, leakage audit, split, features,
// baseline+full training, calibration on validation, evaluation on test,
// explanations, risk aggregation, and all file artifacts. Any stage error
// aborts with the stage name prefixed and removes files written so far.
PipelineResult run_pipeline(const PipelineConfig& config);

// File-based building blocks behind the step-by-step CLI subcommands.
// Each reads its prerequisites from config.output_dir and writes its own
// artifacts there. Derived state (feature spaces, baseline calibrator) is
// refitted deterministically rather than persisted.
void stage_build_panel(const PipelineConfig& config);
void stage_split(const PipelineConfig& config);
void stage_train(const PipelineConfig& config);
void stage_calibrate(const PipelineConfig& config);
void stage_evaluate(const PipelineConfig& config);
void stage_explain(const PipelineConfig& config);
void stage_report(const PipelineConfig& config);

} // namespace attrition
