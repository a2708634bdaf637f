#include "attrition/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "attrition/errors.hpp"
#include "attrition/parallel.hpp"
#include "attrition/rng.hpp"

#include <json.hpp>

namespace attrition {

const std::string kMissingCategory = "\xE2\x90\x80MISSING";

const char* encoder_method_name(EncoderMethod m) {
    switch (m) {
        case EncoderMethod::one_hot: return "one_hot";
        case EncoderMethod::ordinal: return "ordinal";
        case EncoderMethod::hash: return "hash";
        case EncoderMethod::target: return "target";
    }
    return "?";
}

EncoderMethod parse_encoder_method(const std::string& s) {
    if (s == "one_hot") return EncoderMethod::one_hot;
    if (s == "ordinal") return EncoderMethod::ordinal;
    if (s == "hash") return EncoderMethod::hash;
    if (s == "target") return EncoderMethod::target;
    throw ConfigError("unknown encoder method '" + s + "'");
}

namespace {

const std::string& canonical_value(const std::string& value, bool missing) {
    return missing ? kMissingCategory : value;
}

} // namespace

void Encoder::apply(const std::string& value, bool missing, double* out) const {
    const std::string& v = canonical_value(value, missing);
    switch (method) {
        case EncoderMethod::one_hot: {
            for (size_t i = 0; i < categories.size(); ++i) out[i] = 0.0;
            auto it = std::lower_bound(categories.begin(), categories.end(), v);
            if (it != categories.end() && *it == v) {
                out[it - categories.begin()] = 1.0;
            }
            return;
        }
        case EncoderMethod::ordinal: {
            auto it = rank_of.find(v);
            out[0] = it == rank_of.end() ? -1.0 : static_cast<double>(it->second);
            return;
        }
        case EncoderMethod::hash: {
            for (int i = 0; i < n_buckets; ++i) out[i] = 0.0;
            out[fnv1a64(v) % static_cast<uint64_t>(n_buckets)] = 1.0;
            return;
        }
        case EncoderMethod::target: {
            auto it = target_mean.find(v);
            out[0] = it == target_mean.end() ? prior : it->second;
            return;
        }
    }
}

Encoder fit_encoder(const std::string& column, const std::vector<std::string>& values,
                    const std::vector<uint8_t>& missing, const std::vector<int>& labels,
                    EncoderMethod method, const EncoderOptions& options) {
    Encoder enc;
    enc.method = method;
    enc.source_column = column;
    switch (method) {
        case EncoderMethod::one_hot: {
            std::set<std::string> distinct;
            for (size_t i = 0; i < values.size(); ++i) {
                distinct.insert(canonical_value(values[i], missing[i] != 0));
            }
            enc.categories.assign(distinct.begin(), distinct.end());
            for (const auto& cat : enc.categories) {
                enc.output_feature_names.push_back(column + "=" + cat);
            }
            return enc;
        }
        case EncoderMethod::ordinal: {
            if (!options.ordinal_order.empty()) {
                int rank = 0;
                for (const auto& cat : options.ordinal_order) enc.rank_of[cat] = rank++;
            } else {
                std::set<std::string> distinct;
                for (size_t i = 0; i < values.size(); ++i) {
                    distinct.insert(canonical_value(values[i], missing[i] != 0));
                }
                int rank = 0;
                for (const auto& cat : distinct) enc.rank_of[cat] = rank++;
            }
            enc.output_feature_names.push_back(column + "__ordinal");
            return enc;
        }
        case EncoderMethod::hash: {
            if (options.n_buckets < 1) throw ConfigError("hash encoder needs n_buckets >= 1");
            enc.n_buckets = options.n_buckets;
            for (int i = 0; i < enc.n_buckets; ++i) {
                enc.output_feature_names.push_back(column + "#" + std::to_string(i));
            }
            return enc;
        }
        case EncoderMethod::target: {
            if (labels.size() != values.size()) {
                throw ConfigError("target encoder for '" + column + "' requires labels");
            }
            enc.smoothing_m = options.smoothing_m;
            double label_sum = 0;
            std::map<std::string, std::pair<double, double>> stats; // value -> (sum_y, count)
            for (size_t i = 0; i < values.size(); ++i) {
                auto& [sum_y, count] = stats[canonical_value(values[i], missing[i] != 0)];
                sum_y += labels[i];
                count += 1;
                label_sum += labels[i];
            }
            enc.prior = values.empty() ? 0.0 : label_sum / static_cast<double>(values.size());
            for (const auto& [cat, sc] : stats) {
                enc.target_mean[cat] =
                    (sc.first + enc.smoothing_m * enc.prior) / (sc.second + enc.smoothing_m);
            }
            enc.output_feature_names.push_back(column + "__target");
            return enc;
        }
    }
    throw ConfigError("unknown encoder method");
}

const char* impute_strategy_name(ImputeStrategy s) {
    switch (s) {
        case ImputeStrategy::median: return "median";
        case ImputeStrategy::mean: return "mean";
        case ImputeStrategy::mode: return "mode";
        case ImputeStrategy::constant: return "constant";
    }
    return "?";
}

ImputeStrategy parse_impute_strategy(const std::string& s) {
    if (s == "median") return ImputeStrategy::median;
    if (s == "mean") return ImputeStrategy::mean;
    if (s == "mode") return ImputeStrategy::mode;
    if (s == "constant") return ImputeStrategy::constant;
    throw ConfigError("unknown impute strategy '" + s + "'");
}

std::pair<double, int> Imputer::apply(double value) const {
    if (Matrix::is_missing(value)) return {fill_value, 1};
    return {value, 0};
}

Imputer fit_imputer(const std::string& column, const std::vector<double>& values,
                    const std::vector<uint8_t>& missing, ImputeStrategy strategy,
                    double constant_fill) {
    Imputer imp;
    imp.source_column = column;
    imp.strategy = strategy;
    if (strategy == ImputeStrategy::constant) {
        imp.fill_value = constant_fill;
        return imp;
    }
    std::vector<double> present;
    for (size_t i = 0; i < values.size(); ++i) {
        if (!missing[i]) present.push_back(values[i]);
    }
    if (present.empty()) {
        throw DataError("column '" + column + "' has no non-missing training values");
    }
    std::sort(present.begin(), present.end());
    switch (strategy) {
        case ImputeStrategy::median: {
            size_t n = present.size();
            imp.fill_value = n % 2 == 1 ? present[n / 2]
                                        : 0.5 * (present[n / 2 - 1] + present[n / 2]);
            break;
        }
        case ImputeStrategy::mean: {
            double sum = 0;
            for (double v : present) sum += v;
            imp.fill_value = sum / static_cast<double>(present.size());
            break;
        }
        case ImputeStrategy::mode: {
            double best = present[0];
            size_t best_count = 0;
            size_t i = 0;
            while (i < present.size()) {
                size_t j = i;
                while (j < present.size() && present[j] == present[i]) ++j;
                if (j - i > best_count) {
                    best_count = j - i;
                    best = present[i];
                }
                i = j;
            }
            imp.fill_value = best;
            break;
        }
        case ImputeStrategy::constant: break;
    }
    return imp;
}

std::pair<std::string, int> CategoricalImputer::apply(const std::string& value,
                                                      bool missing) const {
    if (missing) return {fill_value, 1};
    return {value, 0};
}

CategoricalImputer fit_categorical_imputer(const std::string& column,
                                           const std::vector<std::string>& values,
                                           const std::vector<uint8_t>& missing) {
    std::map<std::string, size_t> counts;
    for (size_t i = 0; i < values.size(); ++i) {
        if (!missing[i]) counts[values[i]] += 1;
    }
    if (counts.empty()) {
        throw DataError("column '" + column + "' has no non-missing training values");
    }
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) best = it; // map order breaks ties lexicographically
    }
    return {column, best->first};
}

ClassWeights compute_class_weights(const std::vector<int>& labels, WeightScheme scheme,
                                   double explicit_negative, double explicit_positive) {
    if (scheme == WeightScheme::none) return {1.0, 1.0};
    if (scheme == WeightScheme::explicit_weights) {
        if (explicit_negative <= 0 || explicit_positive <= 0) {
            throw ConfigError("explicit class weights must be strictly positive");
        }
        return {explicit_negative, explicit_positive};
    }
    size_t n_pos = 0;
    for (int y : labels) n_pos += y == 1;
    size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DataError("balanced class weights need both classes present");
    }
    double n = static_cast<double>(labels.size());
    return {n / (2.0 * static_cast<double>(n_neg)), n / (2.0 * static_cast<double>(n_pos))};
}

std::vector<size_t> downsample_majority(const std::vector<int>& labels,
                                        double positives_per_negative, uint64_t seed) {
    std::vector<size_t> positives, negatives;
    for (size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == 1 ? positives : negatives).push_back(i);
    }
    if (positives.empty() || negatives.empty()) {
        throw DataError("downsampling needs both classes present");
    }
    if (positives_per_negative <= 0) throw ConfigError("target ratio must be positive");
    double current = static_cast<double>(positives.size()) / static_cast<double>(negatives.size());
    if (positives_per_negative <= current) {
        throw DataError("target ratio must exceed the current positive:negative ratio");
    }
    size_t keep = static_cast<size_t>(
        std::llround(static_cast<double>(positives.size()) / positives_per_negative));

    Rng rng(mix_seed(seed, fnv1a64("downsample")));
    rng.shuffle(negatives);
    negatives.resize(keep);

    std::vector<size_t> selected = positives;
    selected.insert(selected.end(), negatives.begin(), negatives.end());
    std::sort(selected.begin(), selected.end());
    return selected;
}

namespace {

std::vector<size_t> knn_for_row(const Matrix& points, size_t i, int k) {
    std::vector<std::pair<double, size_t>> dist;
    dist.reserve(points.rows - 1);
    const double* xi = points.row(i);
    for (size_t j = 0; j < points.rows; ++j) {
        if (j == i) continue;
        const double* xj = points.row(j);
        double d2 = 0;
        for (size_t c = 0; c < points.cols; ++c) {
            double diff = xi[c] - xj[c];
            d2 += diff * diff;
        }
        dist.push_back({d2, j});
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::vector<size_t> out(k);
    for (int m = 0; m < k; ++m) out[m] = dist[m].second;
    return out;
}

void validate_knn_input(const Matrix& points, int k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (points.rows < static_cast<size_t>(k) + 1) {
        throw DataError("need at least k+1 rows for k nearest neighbours");
    }
}

} // namespace

std::vector<std::vector<size_t>> knn_neighbors_serial(const Matrix& points, int k) {
    validate_knn_input(points, k);
    std::vector<std::vector<size_t>> out(points.rows);
    serial_for(points.rows, [&](size_t i) { out[i] = knn_for_row(points, i, k); });
    return out;
}

std::vector<std::vector<size_t>> knn_neighbors_parallel(const Matrix& points, int k) {
    validate_knn_input(points, k);
    std::vector<std::vector<size_t>> out(points.rows);
    parallel_for(points.rows, [&](size_t i) { out[i] = knn_for_row(points, i, k); });
    return out;
}

Matrix smote_oversample(const Matrix& positives, int k, size_t n_synthetic, uint64_t seed) {
    for (double v : positives.data) {
        if (Matrix::is_missing(v)) {
            throw DataError("SMOTE requires fully numeric rows with no missing values");
        }
    }
    auto neighbors = knn_neighbors_parallel(positives, k);

    Matrix synth(n_synthetic, positives.cols);
    Rng rng(mix_seed(seed, fnv1a64("smote")));
    for (size_t s = 0; s < n_synthetic; ++s) {
        size_t i = static_cast<size_t>(rng.below(positives.rows));
        size_t nn = neighbors[i][rng.below(static_cast<uint64_t>(k))];
        double lambda = rng.uniform01();
        const double* xi = positives.row(i);
        const double* xn = positives.row(nn);
        double* out = synth.row(s);
        for (size_t c = 0; c < positives.cols; ++c) {
            out[c] = xi[c] + lambda * (xn[c] - xi[c]);
        }
    }
    return synth;
}

ColumnPlan FeaturePlan::plan_for(const std::string& column) const {
    auto it = per_column.find(column);
    return it == per_column.end() ? ColumnPlan{} : it->second;
}

Matrix FeatureSpace::transform(const PanelDataset& panel) const {
    std::vector<size_t> all(panel.n_rows());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return transform_rows(panel, all);
}

Matrix FeatureSpace::transform_rows(const PanelDataset& panel,
                                    const std::vector<size_t>& rows) const {
    Matrix out(rows.size(), feature_names.size());
    size_t imp_idx = 0, enc_idx = 0, col_offset = 0;
    for (const auto& name : source_columns) {
        const AttributeColumn* col = panel.find_attribute(name);
        if (!col) throw DataError("panel is missing attribute column '" + name + "'");
        if (col->type == ColumnType::numeric) {
            const Imputer& imp = imputers[imp_idx++];
            for (size_t r = 0; r < rows.size(); ++r) {
                auto [filled, indicator] = imp.apply(col->numeric[rows[r]]);
                out.at(r, col_offset) = filled;
                if (imp.adds_indicator) out.at(r, col_offset + 1) = indicator;
            }
            col_offset += imp.adds_indicator ? 2 : 1;
        } else {
            const Encoder& enc = encoders[enc_idx++];
            for (size_t r = 0; r < rows.size(); ++r) {
                enc.apply(col->categorical[rows[r]], col->missing[rows[r]] != 0,
                          out.row(r) + col_offset);
            }
            col_offset += enc.output_width();
        }
    }
    return out;
}

FeatureSpace fit_feature_space(const PanelDataset& panel, const std::vector<size_t>& train_rows,
                               const std::vector<std::string>& columns, const FeaturePlan& plan) {
    FeatureSpace space;
    space.source_columns = columns;
    for (const auto& name : columns) {
        const AttributeColumn* col = panel.find_attribute(name);
        if (!col) throw ConfigError("feature column '" + name + "' is not a declared column");
        ColumnPlan cp = plan.plan_for(name);
        if (col->type == ColumnType::numeric) {
            std::vector<double> values;
            std::vector<uint8_t> missing;
            values.reserve(train_rows.size());
            for (size_t r : train_rows) {
                values.push_back(col->numeric[r]);
                missing.push_back(col->missing[r]);
            }
            Imputer imp = fit_imputer(name, values, missing, cp.impute, cp.constant_fill);
            imp.adds_indicator = cp.add_indicator;
            space.feature_names.push_back(name);
            if (imp.adds_indicator) space.feature_names.push_back(name + "__missing");
            space.imputers.push_back(std::move(imp));
        } else {
            std::vector<std::string> values;
            std::vector<uint8_t> missing;
            std::vector<int> labels;
            for (size_t r : train_rows) {
                values.push_back(col->categorical[r]);
                missing.push_back(col->missing[r]);
                labels.push_back(panel.rows[r].label);
            }
            Encoder enc = fit_encoder(name, values, missing, labels, cp.encode,
                                      cp.encoder_options);
            for (const auto& f : enc.output_feature_names) space.feature_names.push_back(f);
            space.encoders.push_back(std::move(enc));
        }
    }
    return space;
}

std::string FeatureSpace::manifest_json() const {
    nlohmann::json j;
    j["source_columns"] = source_columns;
    j["feature_names"] = feature_names;
    j["imputers"] = nlohmann::json::array();
    for (const auto& imp : imputers) {
        j["imputers"].push_back({{"column", imp.source_column},
                                 {"strategy", impute_strategy_name(imp.strategy)},
                                 {"fill_value", imp.fill_value},
                                 {"adds_indicator", imp.adds_indicator}});
    }
    j["encoders"] = nlohmann::json::array();
    for (const auto& enc : encoders) {
        nlohmann::json e;
        e["column"] = enc.source_column;
        e["method"] = encoder_method_name(enc.method);
        switch (enc.method) {
            case EncoderMethod::one_hot: e["categories"] = enc.categories; break;
            case EncoderMethod::ordinal: e["rank_of"] = enc.rank_of; break;
            case EncoderMethod::hash: e["n_buckets"] = enc.n_buckets; break;
            case EncoderMethod::target:
                e["target_mean"] = enc.target_mean;
                e["prior"] = enc.prior;
                e["smoothing_m"] = enc.smoothing_m;
                break;
        }
        j["encoders"].push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

} // namespace attrition
