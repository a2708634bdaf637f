#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attrition/binning.hpp"
#include "attrition/features.hpp"
#include "attrition/matrix.hpp"

namespace attrition {

struct GBDTParams {
    int num_leaves = 31;
    int max_depth = 0; // 0 = unlimited
    double learning_rate = 0.1;
    int n_estimators = 500;
    int max_bins = 255;
    size_t bin_sample_size = 200000;
    int min_data_in_leaf = 20;
    double lambda_l2 = 1.0;
    double min_gain = 0.0;
    int early_stopping_rounds = 50;
    uint64_t seed = 0;
    ClassWeights class_weighting;

    void validate() const;
};

// Binary tree in array form; node 0 is the root. Internal nodes split on
// "bin(feature) <= threshold_bin goes left"; missing values take the
// learned default direction. `cover` is the weighted training sample count
// of the node, kept for SHAP attribution.
struct TreeNode {
    int feature = -1;
    int threshold_bin = -1;
    bool default_left = true;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;
    double gain = 0.0;
    double cover = 0.0;
    uint32_t count = 0;

    bool is_leaf() const { return left < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    // Evaluate on raw feature values, binning on the fly.
    double value_for(const double* row, const BinningMap& binning) const;
};

// Child index the row takes at an internal node: missing values follow the
// learned default direction, everything else compares bin indices.
int route_child(const TreeNode& node, const double* row, const BinningMap& binning);

struct TrainRound {
    double train_logloss = 0.0;
    double valid_auc_pr = 0.0; // NaN when no usable validation set
    double split_gain_sum = 0.0;
};

struct TrainingLog {
    std::vector<TrainRound> rounds; // one entry per retained boosting round
    int best_round = -1;            // index of the best validation round, -1 if no valid set
    bool early_stopped = false;
};

// Immutable after training. margin(x) = base_score +
// learning_rate * sum of per-tree leaf values.
struct GBDTModel {
    GBDTParams params;
    double base_score = 0.0;
    double learning_rate = 0.1;
    BinningMap binning;
    std::vector<Tree> trees;
    std::vector<std::string> feature_names;

    double margin_for(const double* row) const;
    std::string to_json() const;
    static GBDTModel from_json(const std::string& json_text);
    void save(const std::string& path) const;
    static GBDTModel load(const std::string& path);
};

struct Predictions {
    std::vector<double> margins;
    std::vector<double> probabilities;
};

Predictions predict_serial(const GBDTModel& model, const Matrix& rows);
Predictions predict_parallel(const GBDTModel& model, const Matrix& rows);
inline Predictions predict(const GBDTModel& model, const Matrix& rows) {
    return predict_parallel(model, rows);
}

struct TrainResult {
    GBDTModel model;
    TrainingLog log;
};

// Histogram-based leaf-wise boosting with weighted binary logistic loss and
// early stopping on validation ranking quality. `valid` may be empty, in
// which case all n_estimators rounds are kept.
TrainResult train_gbdt(const Matrix& train, const std::vector<int>& train_labels,
                       const std::vector<double>& sample_weights, const Matrix& valid,
                       const std::vector<int>& valid_labels, const GBDTParams& params,
                       const std::vector<std::string>& feature_names);

double sigmoid(double x);
double logit(double p);

} // namespace attrition
