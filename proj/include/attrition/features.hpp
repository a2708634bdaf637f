#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attrition/matrix.hpp"
#include "attrition/panel.hpp"
#include "attrition/split.hpp"

namespace attrition {

// Missing categorical values are handled as this explicit category
// everywhere, so missingness stays visible to the model.
extern const std::string kMissingCategory;

enum class EncoderMethod { one_hot, ordinal, hash, target };

const char* encoder_method_name(EncoderMethod m);
EncoderMethod parse_encoder_method(const std::string& s);

struct EncoderOptions {
    int n_buckets = 16;                      // hash
    double smoothing_m = 10.0;               // target
    std::vector<std::string> ordinal_order;  // ordinal; empty = lexicographic
};

// Categorical value -> numeric sub-vector. Fitted on training rows only;
// application is total (unseen categories and missing values always map to
// defined outputs).
struct Encoder {
    EncoderMethod method = EncoderMethod::one_hot;
    std::string source_column;
    std::vector<std::string> categories;       // one_hot
    std::map<std::string, int> rank_of;        // ordinal
    int n_buckets = 0;                         // hash
    std::map<std::string, double> target_mean; // target
    double prior = 0.0;                        // target
    double smoothing_m = 10.0;                 // target
    std::vector<std::string> output_feature_names;

    size_t output_width() const { return output_feature_names.size(); }
    // Writes output_width() values into out.
    void apply(const std::string& value, bool missing, double* out) const;
};

Encoder fit_encoder(const std::string& column, const std::vector<std::string>& values,
                    const std::vector<uint8_t>& missing, const std::vector<int>& labels,
                    EncoderMethod method, const EncoderOptions& options = {});

enum class ImputeStrategy { median, mean, mode, constant };

const char* impute_strategy_name(ImputeStrategy s);
ImputeStrategy parse_impute_strategy(const std::string& s);

// Missing numeric value -> training-derived fill plus a 0/1 indicator.
struct Imputer {
    std::string source_column;
    ImputeStrategy strategy = ImputeStrategy::median;
    double fill_value = 0.0;
    bool adds_indicator = true;

    // Returns (filled value, indicator).
    std::pair<double, int> apply(double value) const;
};

Imputer fit_imputer(const std::string& column, const std::vector<double>& values,
                    const std::vector<uint8_t>& missing, ImputeStrategy strategy,
                    double constant_fill = 0.0);

// Mode imputation for categorical columns; ties broken lexicographically.
struct CategoricalImputer {
    std::string source_column;
    std::string fill_value;

    std::pair<std::string, int> apply(const std::string& value, bool missing) const;
};

CategoricalImputer fit_categorical_imputer(const std::string& column,
                                           const std::vector<std::string>& values,
                                           const std::vector<uint8_t>& missing);

enum class WeightScheme { balanced, none, explicit_weights };

struct ClassWeights {
    double negative = 1.0;
    double positive = 1.0;

    double of(int label) const { return label == 1 ? positive : negative; }
};

ClassWeights compute_class_weights(const std::vector<int>& labels, WeightScheme scheme,
                                   double explicit_negative = 1.0, double explicit_positive = 1.0);

// Keeps all positives and a seeded sample of negatives until the requested
// positives-per-negative ratio is reached. Returns selected row indices in
// ascending order.
std::vector<size_t> downsample_majority(const std::vector<int>& labels,
                                        double positives_per_negative, uint64_t seed);

// Exact brute-force k nearest neighbours under Euclidean distance,
// excluding each point itself; ties broken by row index. The two variants
// return identical results; the parallel one distributes query rows.
std::vector<std::vector<size_t>> knn_neighbors_serial(const Matrix& points, int k);
std::vector<std::vector<size_t>> knn_neighbors_parallel(const Matrix& points, int k);

// Synthetic minority rows: seeded convex combinations between a random
// positive row and one of its k nearest positive neighbours.
Matrix smote_oversample(const Matrix& positives, int k, size_t n_synthetic, uint64_t seed);

// --- feature space assembly -------------------------------------------

struct ColumnPlan {
    // numeric columns
    ImputeStrategy impute = ImputeStrategy::median;
    double constant_fill = 0.0;
    bool add_indicator = true;
    // categorical columns
    EncoderMethod encode = EncoderMethod::one_hot;
    EncoderOptions encoder_options;
};

struct FeaturePlan {
    std::map<std::string, ColumnPlan> per_column; // unlisted columns use defaults
    ColumnPlan plan_for(const std::string& column) const;
};

// The fitted transformer set for one model: imputers and encoders in
// declared column order, fitted on training rows only.
struct FeatureSpace {
    std::vector<std::string> source_columns;
    std::vector<Imputer> imputers;   // parallel to numeric sources
    std::vector<Encoder> encoders;   // parallel to categorical sources
    std::vector<std::string> feature_names;

    Matrix transform(const PanelDataset& panel) const;
    Matrix transform_rows(const PanelDataset& panel, const std::vector<size_t>& rows) const;
    std::string manifest_json() const;
};

// `columns` selects and orders the panel attributes to use (the full model
// passes every declared column, the baseline its reduced list).
FeatureSpace fit_feature_space(const PanelDataset& panel, const std::vector<size_t>& train_rows,
                               const std::vector<std::string>& columns, const FeaturePlan& plan);

} // namespace attrition
