#include "attrition/gbdt.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "attrition/errors.hpp"
#include "attrition/parallel.hpp"
#include "json.hpp"

namespace attrition {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

void GBDTParams::validate() const {
    if (num_leaves < 2) throw ConfigError("num_leaves must be at least 2");
    if (max_depth < 0) throw ConfigError("max_depth must be 0 (unlimited) or positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (n_estimators < 1) throw ConfigError("n_estimators must be at least 1");
    if (max_bins < 2 || max_bins > 65535) throw ConfigError("max_bins must be in [2, 65535]");
    if (bin_sample_size < 2) throw ConfigError("bin_sample_size must be at least 2");
    if (min_data_in_leaf < 1) throw ConfigError("min_data_in_leaf must be at least 1");
    if (lambda_l2 < 0.0) throw ConfigError("lambda_l2 must be non-negative");
    if (min_gain < 0.0) throw ConfigError("min_gain must be non-negative");
    if (early_stopping_rounds < 0)
        throw ConfigError("early_stopping_rounds must be 0 (disabled) or positive");
}

int route_child(const TreeNode& node, const double* row, const BinningMap& binning) {
    const double v = row[node.feature];
    if (std::isnan(v)) return node.default_left ? node.left : node.right;
    const int b = binning.features[node.feature].bin_of(v);
    return b <= node.threshold_bin ? node.left : node.right;
}

double Tree::value_for(const double* row, const BinningMap& binning) const {
    int idx = 0;
    while (!nodes[idx].is_leaf()) idx = route_child(nodes[idx], row, binning);
    return nodes[idx].leaf_value;
}

double GBDTModel::margin_for(const double* row) const {
    double m = base_score;
    for (const Tree& t : trees) m += learning_rate * t.value_for(row, binning);
    return m;
}

namespace {

Predictions predict_impl(const GBDTModel& model, const Matrix& rows, bool parallel) {
    if (rows.cols != model.feature_names.size())
        throw DataError("prediction matrix has " + std::to_string(rows.cols) +
                        " columns, model expects " + std::to_string(model.feature_names.size()));
    Predictions out;
    out.margins.resize(rows.rows);
    out.probabilities.resize(rows.rows);
    auto body = [&](size_t r) {
        const double m = model.margin_for(rows.row(r));
        out.margins[r] = m;
        out.probabilities[r] = sigmoid(m);
    };
    if (parallel)
        parallel_for(rows.rows, body);
    else
        serial_for(rows.rows, body);
    return out;
}

} // namespace

Predictions predict_serial(const GBDTModel& model, const Matrix& rows) {
    return predict_impl(model, rows, false);
}

Predictions predict_parallel(const GBDTModel& model, const Matrix& rows) {
    return predict_impl(model, rows, true);
}

namespace {

using nlohmann::json;

json params_to_json(const GBDTParams& p) {
    return json{{"num_leaves", p.num_leaves},
                {"max_depth", p.max_depth},
                {"learning_rate", p.learning_rate},
                {"n_estimators", p.n_estimators},
                {"max_bins", p.max_bins},
                {"bin_sample_size", p.bin_sample_size},
                {"min_data_in_leaf", p.min_data_in_leaf},
                {"lambda_l2", p.lambda_l2},
                {"min_gain", p.min_gain},
                {"early_stopping_rounds", p.early_stopping_rounds},
                {"seed", p.seed},
                {"class_weight_negative", p.class_weighting.negative},
                {"class_weight_positive", p.class_weighting.positive}};
}

GBDTParams params_from_json(const json& j) {
    GBDTParams p;
    p.num_leaves = j.at("num_leaves").get<int>();
    p.max_depth = j.at("max_depth").get<int>();
    p.learning_rate = j.at("learning_rate").get<double>();
    p.n_estimators = j.at("n_estimators").get<int>();
    p.max_bins = j.at("max_bins").get<int>();
    p.bin_sample_size = j.at("bin_sample_size").get<size_t>();
    p.min_data_in_leaf = j.at("min_data_in_leaf").get<int>();
    p.lambda_l2 = j.at("lambda_l2").get<double>();
    p.min_gain = j.at("min_gain").get<double>();
    p.early_stopping_rounds = j.at("early_stopping_rounds").get<int>();
    p.seed = j.at("seed").get<uint64_t>();
    p.class_weighting.negative = j.at("class_weight_negative").get<double>();
    p.class_weighting.positive = j.at("class_weight_positive").get<double>();
    return p;
}

} // namespace

std::string GBDTModel::to_json() const {
    json j;
    j["format"] = "attrition-gbdt";
    j["version"] = 1;
    j["params"] = params_to_json(params);
    j["base_score"] = base_score;
    j["learning_rate"] = learning_rate;
    j["feature_names"] = feature_names;
    json bins = json::array();
    for (const FeatureBins& fb : binning.features) bins.push_back(fb.boundaries);
    j["bin_boundaries"] = std::move(bins);
    json jtrees = json::array();
    for (const Tree& t : trees) {
        json jnodes = json::array();
        for (const TreeNode& n : t.nodes) {
            jnodes.push_back(json{{"feature", n.feature},
                                  {"threshold_bin", n.threshold_bin},
                                  {"default_left", n.default_left},
                                  {"left", n.left},
                                  {"right", n.right},
                                  {"leaf_value", n.leaf_value},
                                  {"gain", n.gain},
                                  {"cover", n.cover},
                                  {"count", n.count}});
        }
        jtrees.push_back(json{{"nodes", std::move(jnodes)}});
    }
    j["trees"] = std::move(jtrees);
    return j.dump(2);
}

GBDTModel GBDTModel::from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "attrition-gbdt")
            throw DataError("unrecognised model format tag");
        GBDTModel m;
        m.params = params_from_json(j.at("params"));
        m.base_score = j.at("base_score").get<double>();
        m.learning_rate = j.at("learning_rate").get<double>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        for (const json& b : j.at("bin_boundaries")) {
            FeatureBins fb;
            fb.boundaries = b.get<std::vector<double>>();
            m.binning.features.push_back(std::move(fb));
        }
        if (m.binning.features.size() != m.feature_names.size())
            throw DataError("model bin boundaries do not match feature list");
        for (const json& jt : j.at("trees")) {
            Tree t;
            for (const json& jn : jt.at("nodes")) {
                TreeNode n;
                n.feature = jn.at("feature").get<int>();
                n.threshold_bin = jn.at("threshold_bin").get<int>();
                n.default_left = jn.at("default_left").get<bool>();
                n.left = jn.at("left").get<int>();
                n.right = jn.at("right").get<int>();
                n.leaf_value = jn.at("leaf_value").get<double>();
                n.gain = jn.at("gain").get<double>();
                n.cover = jn.at("cover").get<double>();
                n.count = jn.at("count").get<uint32_t>();
                if (n.feature >= static_cast<int>(m.feature_names.size()))
                    throw DataError("tree node references unknown feature index");
                t.nodes.push_back(n);
            }
            if (t.nodes.empty()) throw DataError("model contains an empty tree");
            m.trees.push_back(std::move(t));
        }
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model file is missing required fields: ") + e.what());
    }
}

void GBDTModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << to_json() << '\n';
    if (!out) throw DataError("failed writing " + path);
}

GBDTModel GBDTModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

} // namespace attrition
