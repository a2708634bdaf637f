#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace attrition {

// Average precision over distinct-score blocks: tied scores are processed
// as one group, which makes the estimator invariant to input permutation.
// Throws DataError when there are no positive labels.
double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels);

// Mann-Whitney statistic: the fraction of (positive, negative) pairs ranked
// correctly, ties counting one half. Throws DataError on a single class.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ThresholdReport {
    double threshold = 0.5;
    uint64_t tp = 0;
    uint64_t fp = 0;
    uint64_t tn = 0;
    uint64_t fn = 0;
    double precision = 0.0; // 0 when no predicted positives
    double recall = 0.0;    // 0 when no actual positives
    double f1 = 0.0;        // 0 when precision + recall == 0
    double accuracy = 0.0;
};

// Predict positive iff score >= threshold.
ThresholdReport classification_report(const std::vector<double>& scores,
                                      const std::vector<int>& labels, double threshold);

struct ProbabilityDiagnostics {
    double brier = 0.0;
    double ece = 0.0;
    int n_bins = 10;
};

// Brier score plus expected calibration error over equal-width bins.
ProbabilityDiagnostics probability_diagnostics(const std::vector<double>& probabilities,
                                               const std::vector<int>& labels, int n_bins = 10);

// Mean of |predicted - actual| / actual over groups, as a fraction.
// Throws DataError when any actual rate is not strictly positive.
double rate_mape(const std::vector<double>& predicted, const std::vector<double>& actual);

// Full metric set for one slice of rows. Ranking metrics whose
// preconditions fail (no positives, or a single class) are left empty
// instead of erroring, so degenerate segments still report what they can.
struct MetricsReport {
    size_t n = 0;
    size_t n_pos = 0;
    double observed_rate = 0.0;
    double mean_predicted = 0.0;
    std::optional<double> auc_pr;
    std::optional<double> auc_roc;
    ThresholdReport at_threshold;
    ProbabilityDiagnostics diagnostics;
};

MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold = 0.5, int n_bins = 10);

// Partitions rows by segment value and evaluates each part independently.
std::map<std::string, MetricsReport> segment_metrics(const std::vector<double>& scores,
                                                     const std::vector<int>& labels,
                                                     const std::vector<std::string>& segments,
                                                     double threshold = 0.5, int n_bins = 10);

} // namespace attrition
