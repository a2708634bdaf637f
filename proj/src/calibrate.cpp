#include "attrition/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "attrition/errors.hpp"
#include "json.hpp"

namespace attrition {

CalibratorKind parse_calibrator_kind(const std::string& text) {
    if (text == "identity") return CalibratorKind::identity;
    if (text == "isotonic") return CalibratorKind::isotonic;
    if (text == "sigmoid") return CalibratorKind::sigmoid;
    if (text == "segment_mean") return CalibratorKind::segment_mean;
    throw ConfigError("unknown calibrator kind: " + text);
}

std::string calibrator_kind_name(CalibratorKind kind) {
    switch (kind) {
        case CalibratorKind::identity: return "identity";
        case CalibratorKind::isotonic: return "isotonic";
        case CalibratorKind::sigmoid: return "sigmoid";
        case CalibratorKind::segment_mean: return "segment_mean";
    }
    throw ConfigError("unknown calibrator kind");
}

namespace {

void check_fit_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DataError("scores and labels must have the same length");
    for (double s : scores)
        if (std::isnan(s)) throw DataError("scores must not contain NaN");
    for (int y : labels)
        if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
}

struct PavaBlock {
    double min_score;
    double max_score;
    double label_sum;
    double weight;

    double mean() const { return label_sum / weight; }
};

} // namespace

Calibrator fit_isotonic(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_fit_inputs(scores, labels);
    if (scores.size() < 2) throw DataError("isotonic calibration needs at least two rows");

    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Tied scores collapse into one block up front, then PAVA merges any
    // adjacent pair whose means decrease.
    std::vector<PavaBlock> blocks;
    size_t i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        PavaBlock b{s, s, 0.0, 0.0};
        while (i < idx.size() && scores[idx[i]] == s) {
            b.label_sum += labels[idx[i]];
            b.weight += 1.0;
            ++i;
        }
        blocks.push_back(b);
        while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
            PavaBlock top = blocks.back();
            blocks.pop_back();
            PavaBlock& prev = blocks.back();
            prev.max_score = top.max_score;
            prev.label_sum += top.label_sum;
            prev.weight += top.weight;
        }
    }

    Calibrator cal;
    cal.kind = CalibratorKind::isotonic;
    for (const PavaBlock& b : blocks)
        cal.knots.push_back({0.5 * (b.min_score + b.max_score), b.mean()});
    return cal;
}

Calibrator fit_sigmoid(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_fit_inputs(scores, labels);
    if (scores.size() < 2) throw DataError("sigmoid calibration needs at least two rows");
    const size_t n_pos = static_cast<size_t>(std::count(labels.begin(), labels.end(), 1));
    const size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("sigmoid calibration requires both classes");

    const auto nll = [&](double a, double b) {
        double f = 0.0;
        for (size_t i = 0; i < scores.size(); ++i) {
            const double t = a * scores[i] + b;
            // -log p for y=1 is log(1+exp(t)); for y=0 it is log(1+exp(-t)).
            const double z = labels[i] == 1 ? t : -t;
            f += z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        }
        return f;
    };

    double a = 0.0;
    double b = std::log(static_cast<double>(n_neg) / static_cast<double>(n_pos));
    double f = nll(a, b);
    for (int iter = 0; iter < 100; ++iter) {
        double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
        for (size_t i = 0; i < scores.size(); ++i) {
            const double s = scores[i];
            const double p = 1.0 / (1.0 + std::exp(a * s + b));
            const double d = labels[i] - p;
            const double w = p * (1.0 - p);
            ga += d * s;
            gb += d;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        if (std::max(std::abs(ga), std::abs(gb)) < 1e-10) break;
        const double ridge = 1e-12 * (1.0 + haa + hbb);
        haa += ridge;
        hbb += ridge;
        const double det = haa * hbb - hab * hab;
        const double step_a = (hbb * ga - hab * gb) / det;
        const double step_b = (haa * gb - hab * ga) / det;
        double alpha = 1.0;
        for (int halvings = 0; halvings < 50; ++halvings) {
            const double na = a - alpha * step_a;
            const double nb = b - alpha * step_b;
            const double nf = nll(na, nb);
            if (nf <= f) {
                a = na;
                b = nb;
                f = nf;
                break;
            }
            alpha *= 0.5;
        }
    }

    Calibrator cal;
    cal.kind = CalibratorKind::sigmoid;
    cal.sigmoid_a = a;
    cal.sigmoid_b = b;
    return cal;
}

Calibrator fit_segment_mean(const std::vector<double>& scores, const std::vector<int>& labels,
                            const std::vector<std::string>& segments) {
    check_fit_inputs(scores, labels);
    if (segments.size() != scores.size())
        throw DataError("segment list must have one entry per row");
    if (scores.empty()) throw DataError("segment calibration needs at least one row");

    struct Sums {
        double score = 0.0;
        double label = 0.0;
        double n = 0.0;
    };
    std::map<std::string, Sums> per_segment;
    Sums overall;
    for (size_t i = 0; i < scores.size(); ++i) {
        Sums& s = per_segment[segments[i]];
        s.score += scores[i];
        s.label += labels[i];
        s.n += 1.0;
        overall.score += scores[i];
        overall.label += labels[i];
        overall.n += 1.0;
    }

    Calibrator cal;
    cal.kind = CalibratorKind::segment_mean;
    for (const auto& [key, s] : per_segment) {
        const double score_mean = s.score / s.n;
        if (score_mean == 0.0)
            throw DataError("segment '" + key + "' has zero mean raw score, cannot scale");
        cal.segment_scales[key] = (s.label / s.n) / score_mean;
    }
    const double overall_score_mean = overall.score / overall.n;
    if (overall_score_mean == 0.0) throw DataError("overall mean raw score is zero, cannot scale");
    cal.global_scale = (overall.label / overall.n) / overall_score_mean;
    return cal;
}

namespace {

double apply_isotonic(const Calibrator& cal, double s) {
    const auto& k = cal.knots;
    if (k.empty()) return s;
    if (s <= k.front().score) return k.front().value;
    if (s >= k.back().score) return k.back().value;
    const auto it = std::lower_bound(k.begin(), k.end(), s,
                                     [](const IsotonicKnot& a, double v) { return a.score < v; });
    const IsotonicKnot& hi = *it;
    const IsotonicKnot& lo = *(it - 1);
    const double t = (s - lo.score) / (hi.score - lo.score);
    return lo.value + t * (hi.value - lo.value);
}

} // namespace

std::vector<double> apply_calibration(const Calibrator& cal, const std::vector<double>& scores,
                                      const std::vector<std::string>& segments) {
    if (cal.kind == CalibratorKind::segment_mean && segments.size() != scores.size())
        throw DataError("segment_mean calibration needs one segment value per row");
    std::vector<double> out(scores.size());
    switch (cal.kind) {
        case CalibratorKind::identity:
            out = scores;
            break;
        case CalibratorKind::isotonic:
            for (size_t i = 0; i < scores.size(); ++i) out[i] = apply_isotonic(cal, scores[i]);
            break;
        case CalibratorKind::sigmoid:
            for (size_t i = 0; i < scores.size(); ++i)
                out[i] = 1.0 / (1.0 + std::exp(cal.sigmoid_a * scores[i] + cal.sigmoid_b));
            break;
        case CalibratorKind::segment_mean:
            for (size_t i = 0; i < scores.size(); ++i) {
                const auto it = cal.segment_scales.find(segments[i]);
                const double scale =
                    it != cal.segment_scales.end() ? it->second : cal.global_scale;
                out[i] = std::clamp(scores[i] * scale, 0.0, 1.0);
            }
            break;
    }
    return out;
}

using nlohmann::json;

std::string Calibrator::to_json() const {
    json j;
    j["kind"] = calibrator_kind_name(kind);
    j["fit_fold"] = fit_fold;
    switch (kind) {
        case CalibratorKind::identity:
            break;
        case CalibratorKind::isotonic: {
            json jk = json::array();
            for (const IsotonicKnot& k : knots) jk.push_back(json{{"score", k.score}, {"value", k.value}});
            j["knots"] = std::move(jk);
            break;
        }
        case CalibratorKind::sigmoid:
            j["params"] = json{{"a", sigmoid_a}, {"b", sigmoid_b}};
            break;
        case CalibratorKind::segment_mean:
            j["scales"] = segment_scales;
            j["global_scale"] = global_scale;
            break;
    }
    return j.dump(2);
}

Calibrator Calibrator::from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("calibrator file is not valid JSON: ") + e.what());
    }
    try {
        Calibrator cal;
        cal.kind = parse_calibrator_kind(j.at("kind").get<std::string>());
        cal.fit_fold = j.value("fit_fold", std::string{});
        switch (cal.kind) {
            case CalibratorKind::identity:
                break;
            case CalibratorKind::isotonic:
                for (const json& jk : j.at("knots"))
                    cal.knots.push_back(
                        {jk.at("score").get<double>(), jk.at("value").get<double>()});
                break;
            case CalibratorKind::sigmoid:
                cal.sigmoid_a = j.at("params").at("a").get<double>();
                cal.sigmoid_b = j.at("params").at("b").get<double>();
                break;
            case CalibratorKind::segment_mean:
                cal.segment_scales =
                    j.at("scales").get<std::map<std::string, double>>();
                cal.global_scale = j.at("global_scale").get<double>();
                break;
        }
        return cal;
    } catch (const json::exception& e) {
        throw DataError(std::string("calibrator file is missing required fields: ") + e.what());
    }
}

void Calibrator::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << to_json() << '\n';
    if (!out) throw DataError("failed writing " + path);
}

Calibrator Calibrator::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open calibrator file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

} // namespace attrition
