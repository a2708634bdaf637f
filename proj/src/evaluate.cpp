#include "attrition/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attrition/errors.hpp"

namespace attrition {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DataError("scores and labels must have the same length");
    for (double s : scores)
        if (std::isnan(s)) throw DataError("scores must not contain NaN");
    for (int y : labels)
        if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
}

size_t count_positives(const std::vector<int>& labels) {
    return static_cast<size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::vector<size_t> order_by_score(const std::vector<double>& scores, bool descending) {
    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        return descending ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    return idx;
}

} // namespace

double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const size_t n_pos = count_positives(labels);
    if (n_pos == 0) throw DataError("AUC-PR requires at least one positive label");
    const std::vector<size_t> idx = order_by_score(scores, true);
    const size_t n = scores.size();
    double ap = 0.0;
    double prev_recall = 0.0;
    uint64_t tp = 0;
    uint64_t fp = 0;
    size_t i = 0;
    while (i < n) {
        const double block_score = scores[idx[i]];
        size_t j = i;
        while (j < n && scores[idx[j]] == block_score) {
            if (labels[idx[j]] == 1)
                ++tp;
            else
                ++fp;
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const size_t n_pos = count_positives(labels);
    const size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("AUC-ROC requires both classes");
    const std::vector<size_t> idx = order_by_score(scores, false);
    const size_t n = scores.size();
    double u = 0.0;
    uint64_t neg_below = 0;
    size_t i = 0;
    while (i < n) {
        const double block_score = scores[idx[i]];
        uint64_t block_pos = 0;
        uint64_t block_neg = 0;
        size_t j = i;
        while (j < n && scores[idx[j]] == block_score) {
            if (labels[idx[j]] == 1)
                ++block_pos;
            else
                ++block_neg;
            ++j;
        }
        u += static_cast<double>(block_pos) *
             (static_cast<double>(neg_below) + 0.5 * static_cast<double>(block_neg));
        neg_below += block_neg;
        i = j;
    }
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ThresholdReport classification_report(const std::vector<double>& scores,
                                      const std::vector<int>& labels, double threshold) {
    check_inputs(scores, labels);
    ThresholdReport r;
    r.threshold = threshold;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (predicted && labels[i] == 1)
            ++r.tp;
        else if (predicted)
            ++r.fp;
        else if (labels[i] == 1)
            ++r.fn;
        else
            ++r.tn;
    }
    const uint64_t predicted_pos = r.tp + r.fp;
    const uint64_t actual_pos = r.tp + r.fn;
    r.precision = predicted_pos > 0 ? static_cast<double>(r.tp) / predicted_pos : 0.0;
    r.recall = actual_pos > 0 ? static_cast<double>(r.tp) / actual_pos : 0.0;
    r.f1 = r.precision + r.recall > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    r.accuracy = scores.empty() ? 0.0
                                : static_cast<double>(r.tp + r.tn) / static_cast<double>(scores.size());
    return r;
}

ProbabilityDiagnostics probability_diagnostics(const std::vector<double>& probabilities,
                                               const std::vector<int>& labels, int n_bins) {
    check_inputs(probabilities, labels);
    if (n_bins < 1) throw DataError("calibration diagnostics need at least one bin");
    ProbabilityDiagnostics d;
    d.n_bins = n_bins;
    if (probabilities.empty()) return d;
    const size_t n = probabilities.size();
    std::vector<double> bin_p(static_cast<size_t>(n_bins), 0.0);
    std::vector<double> bin_y(static_cast<size_t>(n_bins), 0.0);
    std::vector<size_t> bin_n(static_cast<size_t>(n_bins), 0);
    double brier = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p = probabilities[i];
        const double diff = p - labels[i];
        brier += diff * diff;
        const int b = std::min(static_cast<int>(p * n_bins), n_bins - 1);
        const int bin = std::max(b, 0);
        bin_p[bin] += p;
        bin_y[bin] += labels[i];
        ++bin_n[bin];
    }
    d.brier = brier / static_cast<double>(n);
    double ece = 0.0;
    for (int b = 0; b < n_bins; ++b) {
        if (bin_n[b] == 0) continue;
        const double conf = bin_p[b] / static_cast<double>(bin_n[b]);
        const double acc = bin_y[b] / static_cast<double>(bin_n[b]);
        ece += (static_cast<double>(bin_n[b]) / static_cast<double>(n)) * std::abs(conf - acc);
    }
    d.ece = ece;
    return d;
}

double rate_mape(const std::vector<double>& predicted, const std::vector<double>& actual) {
    if (predicted.size() != actual.size())
        throw DataError("predicted and actual rate lists must have the same length");
    if (predicted.empty()) throw DataError("rate MAPE needs at least one group");
    double sum = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        if (!(actual[i] > 0.0)) throw DataError("actual rates must be strictly positive");
        sum += std::abs(predicted[i] - actual[i]) / actual[i];
    }
    return sum / static_cast<double>(predicted.size());
}

MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold, int n_bins) {
    check_inputs(scores, labels);
    MetricsReport r;
    r.n = scores.size();
    r.n_pos = count_positives(labels);
    if (r.n > 0) {
        r.observed_rate = static_cast<double>(r.n_pos) / static_cast<double>(r.n);
        r.mean_predicted =
            std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(r.n);
    }
    if (r.n_pos > 0) r.auc_pr = auc_pr(scores, labels);
    if (r.n_pos > 0 && r.n_pos < r.n) r.auc_roc = auc_roc(scores, labels);
    r.at_threshold = classification_report(scores, labels, threshold);
    r.diagnostics = probability_diagnostics(scores, labels, n_bins);
    return r;
}

std::map<std::string, MetricsReport> segment_metrics(const std::vector<double>& scores,
                                                     const std::vector<int>& labels,
                                                     const std::vector<std::string>& segments,
                                                     double threshold, int n_bins) {
    check_inputs(scores, labels);
    if (segments.size() != scores.size())
        throw DataError("segment list must have one entry per row");
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < segments.size(); ++i) groups[segments[i]].push_back(i);
    std::map<std::string, MetricsReport> out;
    for (const auto& [key, rows] : groups) {
        std::vector<double> s;
        std::vector<int> y;
        s.reserve(rows.size());
        y.reserve(rows.size());
        for (size_t i : rows) {
            s.push_back(scores[i]);
            y.push_back(labels[i]);
        }
        out.emplace(key, compute_metrics(s, y, threshold, n_bins));
    }
    return out;
}

} // namespace attrition
