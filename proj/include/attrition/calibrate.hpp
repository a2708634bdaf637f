#pragma once

#include <map>
#include <string>
#include <vector>

namespace attrition {

enum class CalibratorKind { identity, isotonic, sigmoid, segment_mean };

CalibratorKind parse_calibrator_kind(const std::string& text);
std::string calibrator_kind_name(CalibratorKind kind);

struct IsotonicKnot {
    double score = 0.0; // midpoint of the source block's score range
    double value = 0.0;
};

// Fitted score-to-probability map. Only the fields for `kind` are
// meaningful; the rest stay at their defaults.
struct Calibrator {
    CalibratorKind kind = CalibratorKind::identity;
    std::vector<IsotonicKnot> knots;          // isotonic
    double sigmoid_a = 0.0;                   // sigmoid: 1/(1+exp(a*s+b))
    double sigmoid_b = 0.0;
    std::map<std::string, double> segment_scales;
    double global_scale = 1.0;                // fallback for unseen segments
    std::string fit_fold;                     // provenance tag

    std::string to_json() const;
    static Calibrator from_json(const std::string& json_text);
    void save(const std::string& path) const;
    static Calibrator load(const std::string& path);
};

// Pool-adjacent-violators over score-sorted labels, with tied scores
// pre-pooled into one block. Needs at least two rows.
Calibrator fit_isotonic(const std::vector<double>& scores, const std::vector<int>& labels);

// Maximum-likelihood fit of 1/(1+exp(a*s+b)) by damped Newton iteration.
// Needs both classes present.
Calibrator fit_sigmoid(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-segment ratio of observed rate to mean raw score; rows from segments
// unseen during fitting fall back to the overall ratio.
Calibrator fit_segment_mean(const std::vector<double>& scores, const std::vector<int>& labels,
                            const std::vector<std::string>& segments);

// `segments` is only consulted by segment_mean calibrators and may be left
// empty otherwise.
std::vector<double> apply_calibration(const Calibrator& cal, const std::vector<double>& scores,
                                      const std::vector<std::string>& segments = {});

} // namespace attrition
