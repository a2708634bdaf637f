#include "attrition/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "attrition/csv.hpp"
#include "attrition/errors.hpp"
#include "attrition/evaluate.hpp"
#include "attrition/explain.hpp"
#include "attrition/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace attrition {

namespace {

using nlohmann::json;

// ---- config parsing ----------------------------------------------------

const char* imbalance_method_name(ImbalancePlan::Method m) {
    switch (m) {
        case ImbalancePlan::Method::none: return "none";
        case ImbalancePlan::Method::class_weights: return "class_weights";
        case ImbalancePlan::Method::downsample: return "downsample";
        case ImbalancePlan::Method::smote: return "smote";
    }
    throw ConfigError("unknown imbalance method");
}

ImbalancePlan::Method parse_imbalance_method(const std::string& s) {
    if (s == "none") return ImbalancePlan::Method::none;
    if (s == "class_weights") return ImbalancePlan::Method::class_weights;
    if (s == "downsample") return ImbalancePlan::Method::downsample;
    if (s == "smote") return ImbalancePlan::Method::smote;
    throw ConfigError("unknown imbalance method '" + s + "'");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
T jget(const json& j, const char* key, T fallback) {
    const auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

Schema parse_schema(const json& j) {
    check_keys(j, {"columns"}, "schema");
    Schema schema;
    std::set<std::string> seen;
    for (const json& jc : j.at("columns")) {
        check_keys(jc, {"name", "type"}, "schema column");
        const std::string name = jc.at("name").get<std::string>();
        const std::string type = jc.at("type").get<std::string>();
        if (!seen.insert(name).second)
            throw ConfigError("duplicate column '" + name + "' in schema");
        if (type == "numeric")
            schema.attributes.emplace_back(name, ColumnType::numeric);
        else if (type == "categorical")
            schema.attributes.emplace_back(name, ColumnType::categorical);
        else
            throw ConfigError("column '" + name + "' has unknown type '" + type + "'");
    }
    if (schema.attributes.empty()) throw ConfigError("schema declares no columns");
    return schema;
}

ColumnPlan parse_column_plan(const json& j, const std::string& column) {
    check_keys(j,
               {"impute", "constant_fill", "add_indicator", "encode", "n_buckets", "smoothing_m",
                "ordinal_order"},
               "feature plan for '" + column + "'");
    ColumnPlan plan;
    if (j.contains("impute")) plan.impute = parse_impute_strategy(j.at("impute").get<std::string>());
    plan.constant_fill = jget(j, "constant_fill", plan.constant_fill);
    plan.add_indicator = jget(j, "add_indicator", plan.add_indicator);
    if (j.contains("encode")) plan.encode = parse_encoder_method(j.at("encode").get<std::string>());
    plan.encoder_options.n_buckets = jget(j, "n_buckets", plan.encoder_options.n_buckets);
    plan.encoder_options.smoothing_m = jget(j, "smoothing_m", plan.encoder_options.smoothing_m);
    plan.encoder_options.ordinal_order =
        jget(j, "ordinal_order", plan.encoder_options.ordinal_order);
    return plan;
}

} // namespace

Date PipelineConfig::effective_extraction_date() const {
    return extraction_date ? *extraction_date : month_end(panel.prediction_month);
}

void PipelineConfig::validate() const {
    if (snapshots_path.empty() || events_path.empty())
        throw ConfigError("inputs.snapshots and inputs.events are required");
    if (schema.attributes.empty()) throw ConfigError("schema declares no columns");
    panel.validate();
    fractions.validate();
    gbdt.validate();
    if (baseline_features.empty()) throw ConfigError("baseline_features must not be empty");
    if (!(evaluation.threshold >= 0.0 && evaluation.threshold <= 1.0))
        throw ConfigError("evaluation.threshold must be in [0,1]");
    if (evaluation.ece_bins < 1) throw ConfigError("evaluation.ece_bins must be at least 1");
    if (explain.pdp_points < 1) throw ConfigError("explain.pdp_points must be at least 1");
    if (!(imbalance.positives_per_negative > 0.0))
        throw ConfigError("imbalance.positives_per_negative must be positive");
    if (imbalance.smote_k < 1) throw ConfigError("imbalance.smote_k must be at least 1");
    if (imbalance.smote_multiplier < 0.0)
        throw ConfigError("imbalance.smote_multiplier must be non-negative");
    if (calibration.kind == CalibratorKind::segment_mean && calibration.segment_key.empty())
        throw ConfigError("segment_mean calibration requires calibration.segment_key");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

PipelineConfig PipelineConfig::from_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + " is not valid JSON: " + e.what());
    }
    try {
        check_keys(j,
                   {"inputs", "schema", "panel", "split", "features", "gbdt", "calibration",
                    "baseline_features", "evaluation", "report", "explain", "output_dir", "seed",
                    "extraction_date"},
                   "config");
        PipelineConfig cfg;

        const json& inputs = j.at("inputs");
        check_keys(inputs, {"snapshots", "events"}, "inputs");
        cfg.snapshots_path = inputs.at("snapshots").get<std::string>();
        cfg.events_path = inputs.at("events").get<std::string>();

        cfg.schema = parse_schema(j.at("schema"));

        const json& jp = j.at("panel");
        check_keys(jp, {"prediction_month", "horizon_months", "lookback_months", "outcome_type"},
                   "panel");
        cfg.panel.prediction_month = parse_year_month(jp.at("prediction_month").get<std::string>());
        cfg.panel.horizon_months = jget(jp, "horizon_months", cfg.panel.horizon_months);
        cfg.panel.lookback_months = jget(jp, "lookback_months", cfg.panel.lookback_months);
        if (jp.contains("outcome_type"))
            cfg.panel.outcome_type = parse_outcome_type(jp.at("outcome_type").get<std::string>());

        if (j.contains("split")) {
            const json& js = j.at("split");
            check_keys(js, {"train", "valid", "test", "strata_keys"}, "split");
            cfg.fractions.train = jget(js, "train", cfg.fractions.train);
            cfg.fractions.valid = jget(js, "valid", cfg.fractions.valid);
            cfg.fractions.test = jget(js, "test", cfg.fractions.test);
            cfg.strata_keys = jget(js, "strata_keys", cfg.strata_keys);
        }

        if (j.contains("features")) {
            const json& jf = j.at("features");
            check_keys(jf, {"columns", "imbalance"}, "features");
            if (jf.contains("columns")) {
                for (const auto& item : jf.at("columns").items())
                    cfg.feature_plan.per_column[item.key()] =
                        parse_column_plan(item.value(), item.key());
            }
            if (jf.contains("imbalance")) {
                const json& ji = jf.at("imbalance");
                check_keys(ji, {"method", "positives_per_negative", "smote_k", "smote_multiplier"},
                           "features.imbalance");
                if (ji.contains("method"))
                    cfg.imbalance.method =
                        parse_imbalance_method(ji.at("method").get<std::string>());
                cfg.imbalance.positives_per_negative =
                    jget(ji, "positives_per_negative", cfg.imbalance.positives_per_negative);
                cfg.imbalance.smote_k = jget(ji, "smote_k", cfg.imbalance.smote_k);
                cfg.imbalance.smote_multiplier =
                    jget(ji, "smote_multiplier", cfg.imbalance.smote_multiplier);
            }
        }

        if (j.contains("gbdt")) {
            const json& jg = j.at("gbdt");
            check_keys(jg,
                       {"num_leaves", "max_depth", "learning_rate", "n_estimators", "max_bins",
                        "bin_sample_size", "min_data_in_leaf", "lambda_l2", "min_gain",
                        "early_stopping_rounds"},
                       "gbdt");
            cfg.gbdt.num_leaves = jget(jg, "num_leaves", cfg.gbdt.num_leaves);
            cfg.gbdt.max_depth = jget(jg, "max_depth", cfg.gbdt.max_depth);
            cfg.gbdt.learning_rate = jget(jg, "learning_rate", cfg.gbdt.learning_rate);
            cfg.gbdt.n_estimators = jget(jg, "n_estimators", cfg.gbdt.n_estimators);
            cfg.gbdt.max_bins = jget(jg, "max_bins", cfg.gbdt.max_bins);
            cfg.gbdt.bin_sample_size = jget(jg, "bin_sample_size", cfg.gbdt.bin_sample_size);
            cfg.gbdt.min_data_in_leaf = jget(jg, "min_data_in_leaf", cfg.gbdt.min_data_in_leaf);
            cfg.gbdt.lambda_l2 = jget(jg, "lambda_l2", cfg.gbdt.lambda_l2);
            cfg.gbdt.min_gain = jget(jg, "min_gain", cfg.gbdt.min_gain);
            cfg.gbdt.early_stopping_rounds =
                jget(jg, "early_stopping_rounds", cfg.gbdt.early_stopping_rounds);
        }

        if (j.contains("calibration")) {
            const json& jc = j.at("calibration");
            check_keys(jc, {"kind", "segment_key"}, "calibration");
            if (jc.contains("kind"))
                cfg.calibration.kind = parse_calibrator_kind(jc.at("kind").get<std::string>());
            cfg.calibration.segment_key = jget(jc, "segment_key", cfg.calibration.segment_key);
        }

        cfg.baseline_features = j.at("baseline_features").get<std::vector<std::string>>();

        if (j.contains("evaluation")) {
            const json& je = j.at("evaluation");
            check_keys(je, {"threshold", "segment_keys", "ece_bins"}, "evaluation");
            cfg.evaluation.threshold = jget(je, "threshold", cfg.evaluation.threshold);
            cfg.evaluation.segment_keys = jget(je, "segment_keys", cfg.evaluation.segment_keys);
            cfg.evaluation.ece_bins = jget(je, "ece_bins", cfg.evaluation.ece_bins);
        }

        if (j.contains("report")) {
            const json& jr = j.at("report");
            check_keys(jr, {"cut_keys"}, "report");
            cfg.cut_keys = jget(jr, "cut_keys", cfg.cut_keys);
        }

        if (j.contains("explain")) {
            const json& je = j.at("explain");
            check_keys(je, {"sample_size", "pdp_features", "pdp_points"}, "explain");
            cfg.explain.sample_size = jget(je, "sample_size", cfg.explain.sample_size);
            cfg.explain.pdp_features = jget(je, "pdp_features", cfg.explain.pdp_features);
            cfg.explain.pdp_points = jget(je, "pdp_points", cfg.explain.pdp_points);
        }

        cfg.output_dir = jget(j, "output_dir", cfg.output_dir);
        cfg.seed = jget(j, "seed", cfg.seed);
        if (j.contains("extraction_date")) {
            try {
                cfg.extraction_date = parse_date(j.at("extraction_date").get<std::string>());
            } catch (const DataError& e) {
                throw ConfigError(std::string("extraction_date: ") + e.what());
            }
        }
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str(), path);
}

std::string PipelineConfig::to_json() const {
    json j;
    j["inputs"] = json{{"snapshots", snapshots_path}, {"events", events_path}};
    json cols = json::array();
    for (const auto& [name, type] : schema.attributes)
        cols.push_back(json{{"name", name},
                            {"type", type == ColumnType::numeric ? "numeric" : "categorical"}});
    j["schema"] = json{{"columns", std::move(cols)}};
    j["panel"] = json{{"prediction_month", format_year_month(panel.prediction_month)},
                      {"horizon_months", panel.horizon_months},
                      {"lookback_months", panel.lookback_months},
                      {"outcome_type", outcome_type_name(panel.outcome_type)}};
    j["split"] = json{{"train", fractions.train},
                      {"valid", fractions.valid},
                      {"test", fractions.test},
                      {"strata_keys", strata_keys}};
    json plans = json::object();
    for (const auto& [name, plan] : feature_plan.per_column) {
        json jp;
        jp["impute"] = impute_strategy_name(plan.impute);
        jp["constant_fill"] = plan.constant_fill;
        jp["add_indicator"] = plan.add_indicator;
        jp["encode"] = encoder_method_name(plan.encode);
        jp["n_buckets"] = plan.encoder_options.n_buckets;
        jp["smoothing_m"] = plan.encoder_options.smoothing_m;
        jp["ordinal_order"] = plan.encoder_options.ordinal_order;
        plans[name] = std::move(jp);
    }
    j["features"] =
        json{{"columns", std::move(plans)},
             {"imbalance", json{{"method", imbalance_method_name(imbalance.method)},
                                {"positives_per_negative", imbalance.positives_per_negative},
                                {"smote_k", imbalance.smote_k},
                                {"smote_multiplier", imbalance.smote_multiplier}}}};
    j["gbdt"] = json{{"num_leaves", gbdt.num_leaves},
                     {"max_depth", gbdt.max_depth},
                     {"learning_rate", gbdt.learning_rate},
                     {"n_estimators", gbdt.n_estimators},
                     {"max_bins", gbdt.max_bins},
                     {"bin_sample_size", gbdt.bin_sample_size},
                     {"min_data_in_leaf", gbdt.min_data_in_leaf},
                     {"lambda_l2", gbdt.lambda_l2},
                     {"min_gain", gbdt.min_gain},
                     {"early_stopping_rounds", gbdt.early_stopping_rounds}};
    j["calibration"] = json{{"kind", calibrator_kind_name(calibration.kind)},
                            {"segment_key", calibration.segment_key}};
    j["baseline_features"] = baseline_features;
    j["evaluation"] = json{{"threshold", evaluation.threshold},
                           {"segment_keys", evaluation.segment_keys},
                           {"ece_bins", evaluation.ece_bins}};
    j["report"] = json{{"cut_keys", cut_keys}};
    j["explain"] = json{{"sample_size", explain.sample_size},
                        {"pdp_features", explain.pdp_features},
                        {"pdp_points", explain.pdp_points}};
    j["output_dir"] = output_dir;
    j["seed"] = seed;
    if (extraction_date) j["extraction_date"] = format_date(*extraction_date);
    return j.dump(2);
}

// ---- risk aggregation ----------------------------------------------------

RiskReport aggregate_risk(const PanelDataset& panel, const std::vector<size_t>& row_indices,
                          const std::vector<double>& probabilities,
                          const std::vector<std::string>& cut_keys) {
    if (row_indices.size() != probabilities.size())
        throw DataError("risk aggregation needs one probability per row");
    std::vector<const AttributeColumn*> cols;
    for (const std::string& key : cut_keys) {
        const AttributeColumn* col = panel.find_attribute(key);
        if (!col) throw DataError("panel is missing attribute column '" + key + "'");
        if (col->type != ColumnType::categorical)
            throw DataError("cut key '" + key + "' must be a categorical column");
        cols.push_back(col);
    }

    // Latest snapshot per employee, so headcount-style numbers stay sane.
    std::map<std::string, size_t> latest; // employee -> position in row_indices
    for (size_t i = 0; i < row_indices.size(); ++i) {
        const PanelRow& row = panel.rows[row_indices[i]];
        auto [it, inserted] = latest.try_emplace(row.employee_id, i);
        if (!inserted &&
            panel.rows[row_indices[it->second]].snapshot_date < row.snapshot_date)
            it->second = i;
    }

    struct Agg {
        size_t n = 0;
        double sum_p = 0.0;
        double sum_label = 0.0;
    };
    std::map<std::vector<std::string>, Agg> groups;
    for (const auto& [employee, i] : latest) {
        const size_t r = row_indices[i];
        std::vector<std::string> tuple;
        tuple.reserve(cols.size());
        for (const AttributeColumn* col : cols)
            tuple.push_back(col->missing[r] ? kMissingCategory : col->categorical[r]);
        Agg& a = groups[tuple];
        a.n += 1;
        a.sum_p += probabilities[i];
        a.sum_label += panel.rows[r].label;
    }

    RiskReport report;
    report.cut_keys = cut_keys;
    for (const auto& [tuple, a] : groups) {
        RiskRow row;
        row.cut_values = tuple;
        row.n_employees = a.n;
        row.expected_attrition = a.sum_p;
        row.mean_risk = a.sum_p / static_cast<double>(a.n);
        row.actual_rate = a.sum_label / static_cast<double>(a.n);
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_risk_report_csv(const RiskReport& report, const std::string& path) {
    CsvTable table;
    table.header = report.cut_keys;
    table.header.insert(table.header.end(),
                        {"n_employees", "expected_attrition", "mean_risk", "actual_rate"});
    for (const RiskRow& row : report.rows) {
        std::vector<std::string> out = row.cut_values;
        out.push_back(std::to_string(row.n_employees));
        out.push_back(format_double(row.expected_attrition));
        out.push_back(format_double(row.mean_risk));
        out.push_back(row.actual_rate ? format_double(*row.actual_rate) : "");
        table.rows.push_back(std::move(out));
    }
    write_csv(path, table);
}

// ---- shared run steps ------------------------------------------------------

namespace {

template <typename Fn>
decltype(auto) stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("stage ") + name + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(std::string("stage ") + name + ": " + e.what());
    }
}

std::string artifact_path(const PipelineConfig& cfg, const char* name) {
    return (fs::path(cfg.output_dir) / name).string();
}

std::vector<int> labels_at(const PanelDataset& panel, const std::vector<size_t>& rows) {
    std::vector<int> y;
    y.reserve(rows.size());
    for (size_t r : rows) y.push_back(panel.rows[r].label);
    return y;
}

std::vector<std::string> categorical_values(const PanelDataset& panel,
                                            const std::vector<size_t>& rows,
                                            const std::string& key, const char* what) {
    const AttributeColumn* col = panel.find_attribute(key);
    if (!col) throw DataError("panel is missing attribute column '" + key + "'");
    if (col->type != ColumnType::categorical)
        throw DataError(std::string(what) + " key '" + key + "' must be a categorical column");
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (size_t r : rows) out.push_back(col->missing[r] ? kMissingCategory : col->categorical[r]);
    return out;
}

std::vector<std::string> all_column_names(const Schema& schema) {
    std::vector<std::string> names;
    for (const auto& [name, type] : schema.attributes) names.push_back(name);
    return names;
}

void check_declared_columns(const PipelineConfig& cfg) {
    for (const auto& [name, plan] : cfg.feature_plan.per_column)
        if (!cfg.schema.type_of(name))
            throw DataError("feature plan references unknown column '" + name + "'");
    for (const std::string& name : cfg.baseline_features)
        if (!cfg.schema.type_of(name))
            throw DataError("baseline_features references unknown column '" + name + "'");
}

struct TrainData {
    Matrix x;
    std::vector<int> y;
    std::vector<double> w;
    ClassWeights class_weights; // identity unless the class_weights method ran
};

TrainData assemble_training(const PipelineConfig& cfg, const PanelDataset& panel,
                            const FeatureSpace& space, const std::vector<size_t>& train_rows) {
    TrainData td;
    std::vector<int> labels = labels_at(panel, train_rows);
    switch (cfg.imbalance.method) {
        case ImbalancePlan::Method::none: {
            td.x = space.transform_rows(panel, train_rows);
            td.y = std::move(labels);
            td.w.assign(td.y.size(), 1.0);
            break;
        }
        case ImbalancePlan::Method::class_weights: {
            td.x = space.transform_rows(panel, train_rows);
            td.y = std::move(labels);
            td.class_weights = compute_class_weights(td.y, WeightScheme::balanced);
            td.w.reserve(td.y.size());
            for (int y : td.y) td.w.push_back(td.class_weights.of(y));
            break;
        }
        case ImbalancePlan::Method::downsample: {
            const std::vector<size_t> keep =
                downsample_majority(labels, cfg.imbalance.positives_per_negative,
                                    mix_seed(cfg.seed, fnv1a64("downsample")));
            std::vector<size_t> rows;
            rows.reserve(keep.size());
            for (size_t i : keep) rows.push_back(train_rows[i]);
            td.x = space.transform_rows(panel, rows);
            td.y.reserve(keep.size());
            for (size_t i : keep) td.y.push_back(labels[i]);
            td.w.assign(td.y.size(), 1.0);
            break;
        }
        case ImbalancePlan::Method::smote: {
            td.x = space.transform_rows(panel, train_rows);
            td.y = labels;
            std::vector<size_t> pos_rows;
            for (size_t i = 0; i < td.y.size(); ++i)
                if (td.y[i] == 1) pos_rows.push_back(i);
            const size_t n_synth = static_cast<size_t>(
                std::llround(cfg.imbalance.smote_multiplier * pos_rows.size()));
            if (n_synth > 0) {
                const Matrix positives = td.x.select_rows(pos_rows);
                const Matrix synth =
                    smote_oversample(positives, cfg.imbalance.smote_k, n_synth,
                                     mix_seed(cfg.seed, fnv1a64("smote")));
                Matrix combined(td.x.rows + synth.rows, td.x.cols);
                std::copy(td.x.data.begin(), td.x.data.end(), combined.data.begin());
                std::copy(synth.data.begin(), synth.data.end(),
                          combined.data.begin() + static_cast<long>(td.x.data.size()));
                td.x = std::move(combined);
                td.y.insert(td.y.end(), n_synth, 1);
            }
            td.w.assign(td.y.size(), 1.0);
            break;
        }
    }
    return td;
}

struct ModelBundle {
    FeatureSpace space;
    GBDTModel model;
    TrainingLog log;
};

ModelBundle train_bundle(const PipelineConfig& cfg, const PanelDataset& panel,
                         const SplitAssignment& split, const std::vector<std::string>& columns) {
    ModelBundle bundle;
    const std::vector<size_t> train_rows = split.rows_in_fold(panel, Fold::train);
    const std::vector<size_t> valid_rows = split.rows_in_fold(panel, Fold::valid);
    bundle.space = fit_feature_space(panel, train_rows, columns, cfg.feature_plan);
    TrainData td = assemble_training(cfg, panel, bundle.space, train_rows);
    const Matrix valid_x = bundle.space.transform_rows(panel, valid_rows);
    const std::vector<int> valid_y = labels_at(panel, valid_rows);
    GBDTParams params = cfg.gbdt;
    params.seed = mix_seed(cfg.seed, fnv1a64("gbdt"));
    params.class_weighting = td.class_weights;
    TrainResult result =
        train_gbdt(td.x, td.y, td.w, valid_x, valid_y, params, bundle.space.feature_names);
    bundle.model = std::move(result.model);
    bundle.log = std::move(result.log);
    return bundle;
}

Calibrator fit_pipeline_calibrator(const PipelineConfig& cfg, const PanelDataset& panel,
                                   const SplitAssignment& split, const FeatureSpace& space,
                                   const GBDTModel& model) {
    const std::vector<size_t> valid_rows = split.rows_in_fold(panel, Fold::valid);
    const Matrix valid_x = space.transform_rows(panel, valid_rows);
    const std::vector<int> valid_y = labels_at(panel, valid_rows);
    const Predictions pred = predict(model, valid_x);
    Calibrator cal;
    switch (cfg.calibration.kind) {
        case CalibratorKind::identity:
            cal.kind = CalibratorKind::identity;
            break;
        case CalibratorKind::isotonic:
            cal = fit_isotonic(pred.probabilities, valid_y);
            break;
        case CalibratorKind::sigmoid:
            cal = fit_sigmoid(pred.probabilities, valid_y);
            break;
        case CalibratorKind::segment_mean: {
            const std::vector<std::string> segs = categorical_values(
                panel, valid_rows, cfg.calibration.segment_key, "calibration segment");
            cal = fit_segment_mean(pred.probabilities, valid_y, segs);
            break;
        }
    }
    cal.fit_fold = "valid";
    return cal;
}

std::vector<double> calibrated_probabilities(const PipelineConfig& cfg, const PanelDataset& panel,
                                             const std::vector<size_t>& rows,
                                             const Calibrator& cal,
                                             const std::vector<double>& raw) {
    if (cal.kind == CalibratorKind::segment_mean) {
        const std::vector<std::string> segs =
            categorical_values(panel, rows, cfg.calibration.segment_key, "calibration segment");
        return apply_calibration(cal, raw, segs);
    }
    return apply_calibration(cal, raw);
}

json metrics_to_json(const MetricsReport& m) {
    json j;
    j["n"] = m.n;
    j["n_pos"] = m.n_pos;
    j["observed_rate"] = m.observed_rate;
    j["mean_predicted"] = m.mean_predicted;
    j["auc_pr"] = m.auc_pr ? json(*m.auc_pr) : json(nullptr);
    j["auc_roc"] = m.auc_roc ? json(*m.auc_roc) : json(nullptr);
    j["at_threshold"] = json{{"threshold", m.at_threshold.threshold},
                             {"tp", m.at_threshold.tp},
                             {"fp", m.at_threshold.fp},
                             {"tn", m.at_threshold.tn},
                             {"fn", m.at_threshold.fn},
                             {"precision", m.at_threshold.precision},
                             {"recall", m.at_threshold.recall},
                             {"f1", m.at_threshold.f1},
                             {"accuracy", m.at_threshold.accuracy}};
    j["brier"] = m.diagnostics.brier;
    j["ece"] = m.diagnostics.ece;
    j["ece_bins"] = m.diagnostics.n_bins;
    return j;
}

struct ModelEvaluation {
    MetricsReport valid_raw;
    MetricsReport test_raw;
    MetricsReport test_calibrated;
    std::map<std::string, std::map<std::string, MetricsReport>> test_segments;
    std::vector<double> test_calibrated_probs; // row order = test rows
};

ModelEvaluation evaluate_model(const PipelineConfig& cfg, const PanelDataset& panel,
                               const SplitAssignment& split, const FeatureSpace& space,
                               const GBDTModel& model, const Calibrator& cal) {
    const std::vector<size_t> valid_rows = split.rows_in_fold(panel, Fold::valid);
    const std::vector<size_t> test_rows = split.rows_in_fold(panel, Fold::test);
    const std::vector<int> valid_y = labels_at(panel, valid_rows);
    const std::vector<int> test_y = labels_at(panel, test_rows);
    const Matrix valid_x = space.transform_rows(panel, valid_rows);
    const Matrix test_x = space.transform_rows(panel, test_rows);
    const double thr = cfg.evaluation.threshold;
    const int bins = cfg.evaluation.ece_bins;

    ModelEvaluation ev;
    ev.valid_raw =
        compute_metrics(predict(model, valid_x).probabilities, valid_y, thr, bins);
    const std::vector<double> test_raw = predict(model, test_x).probabilities;
    ev.test_raw = compute_metrics(test_raw, test_y, thr, bins);
    ev.test_calibrated_probs = calibrated_probabilities(cfg, panel, test_rows, cal, test_raw);
    ev.test_calibrated = compute_metrics(ev.test_calibrated_probs, test_y, thr, bins);
    for (const std::string& key : cfg.evaluation.segment_keys) {
        const std::vector<std::string> segs = categorical_values(panel, test_rows, key, "segment");
        ev.test_segments[key] = segment_metrics(ev.test_calibrated_probs, test_y, segs, thr, bins);
    }
    return ev;
}

json evaluation_to_json(const ModelEvaluation& ev) {
    json j;
    j["valid_raw"] = metrics_to_json(ev.valid_raw);
    j["test_raw"] = metrics_to_json(ev.test_raw);
    j["test_calibrated"] = metrics_to_json(ev.test_calibrated);
    json segs = json::object();
    for (const auto& [key, by_value] : ev.test_segments) {
        json jk = json::object();
        for (const auto& [value, report] : by_value) jk[value] = metrics_to_json(report);
        segs[key] = std::move(jk);
    }
    j["test_segments"] = std::move(segs);
    return j;
}

std::vector<size_t> sample_rows(const std::vector<size_t>& rows, size_t n, uint64_t seed) {
    if (rows.size() <= n) return rows;
    std::vector<size_t> pick = rows;
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(pick.size() - i));
        std::swap(pick[i], pick[j]);
    }
    pick.resize(n);
    std::sort(pick.begin(), pick.end());
    return pick;
}

struct ExplainArtifacts {
    std::vector<size_t> sample;
    Matrix sample_x;
    std::vector<ShapExplanation> explanations;
    ImportanceTable importance;
    std::vector<PartialDependence> curves;
};

ExplainArtifacts explain_model(const PipelineConfig& cfg, const PanelDataset& panel,
                               const SplitAssignment& split, const FeatureSpace& space,
                               const GBDTModel& model) {
    ExplainArtifacts out;
    const std::vector<size_t> test_rows = split.rows_in_fold(panel, Fold::test);
    out.sample =
        sample_rows(test_rows, cfg.explain.sample_size, mix_seed(cfg.seed, fnv1a64("explain")));
    out.sample_x = space.transform_rows(panel, out.sample);
    out.explanations = tree_shap_batch_parallel(model, out.sample_x);
    const Predictions margins = predict(model, out.sample_x);
    for (size_t i = 0; i < out.explanations.size(); ++i) {
        if (std::abs(out.explanations[i].reconstructed_margin - margins.margins[i]) > 1e-9)
            throw std::runtime_error("attribution does not reconstruct the model margin");
    }
    out.importance = feature_importance(model, ImportanceKind::gain);

    std::vector<std::string> pdp_features = cfg.explain.pdp_features;
    if (pdp_features.empty()) {
        for (const auto& [name, type] : cfg.schema.attributes)
            if (type == ColumnType::numeric &&
                std::find(space.source_columns.begin(), space.source_columns.end(), name) !=
                    space.source_columns.end())
                pdp_features.push_back(name);
    }
    if (out.sample.empty()) return out; // nothing to anchor the curves on
    for (const std::string& name : pdp_features) {
        const auto it = std::find(space.feature_names.begin(), space.feature_names.end(), name);
        if (it == space.feature_names.end())
            throw DataError("pdp feature '" + name + "' is not a model feature");
        const int f = static_cast<int>(it - space.feature_names.begin());
        double lo = out.sample_x.at(0, f);
        double hi = lo;
        for (size_t r = 1; r < out.sample_x.rows; ++r) {
            lo = std::min(lo, out.sample_x.at(r, f));
            hi = std::max(hi, out.sample_x.at(r, f));
        }
        std::vector<double> grid;
        if (hi == lo || cfg.explain.pdp_points == 1) {
            grid.push_back(lo);
        } else {
            for (int i = 0; i < cfg.explain.pdp_points; ++i)
                grid.push_back(lo + (hi - lo) * i / (cfg.explain.pdp_points - 1));
        }
        out.curves.push_back(partial_dependence(model, f, grid, out.sample_x));
    }
    return out;
}

void write_explain_artifacts(const PipelineConfig& cfg, const PanelDataset& panel,
                             const FeatureSpace& space, const ExplainArtifacts& ex,
                             std::vector<std::string>& written) {
    std::vector<std::string> ids;
    std::vector<std::string> dates;
    for (size_t r : ex.sample) {
        ids.push_back(panel.rows[r].employee_id);
        dates.push_back(format_date(panel.rows[r].snapshot_date));
    }
    const std::string shap_path = artifact_path(cfg, "shap.csv");
    write_shap_csv(shap_path, ids, dates, space.feature_names, ex.sample_x, ex.explanations);
    written.push_back(shap_path);
    const std::string imp_path = artifact_path(cfg, "importance.csv");
    write_importance_csv(imp_path, ex.importance);
    written.push_back(imp_path);
    const std::string pdp_path = artifact_path(cfg, "pdp.csv");
    write_pdp_csv(pdp_path, space.feature_names, ex.curves);
    written.push_back(pdp_path);
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << content;
    if (!content.empty() && content.back() != '\n') out << '\n';
    if (!out) throw DataError("failed writing " + path);
}

} // namespace

// ---- full run -------------------------------------------------------------

PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);
    std::vector<std::string> written;
    try {
        auto [snapshots, events] = stage("ingest", [&] {
            return load_tables(config.snapshots_path, config.events_path, config.schema);
        });

        PanelDataset panel = stage("panel", [&] {
            return build_panel(snapshots, events, config.panel, config.strata_keys);
        });

        stage("audit", [&] {
            const std::vector<AuditViolation> violations =
                leakage_audit(panel, events, config.effective_extraction_date());
            if (!violations.empty())
                throw DataError("temporal leakage detected: " + audit_report_json(violations));
        });
        const std::string panel_path = artifact_path(config, "panel.csv");
        write_panel_csv(panel, panel_path);
        written.push_back(panel_path);

        SplitAssignment split = stage("split", [&] {
            return group_stratified_split(panel, config.fractions, config.strata_keys,
                                          config.seed);
        });
        const std::string split_path = artifact_path(config, "split.csv");
        write_split_csv(split, split_path);
        written.push_back(split_path);

        stage("features", [&] { check_declared_columns(config); });

        ModelBundle full = stage("train", [&] {
            return train_bundle(config, panel, split, all_column_names(config.schema));
        });
        ModelBundle baseline = stage("train", [&] {
            return train_bundle(config, panel, split, config.baseline_features);
        });
        const std::string full_path = artifact_path(config, "model_full.json");
        full.model.save(full_path);
        written.push_back(full_path);
        const std::string baseline_path = artifact_path(config, "model_baseline.json");
        baseline.model.save(baseline_path);
        written.push_back(baseline_path);

        Calibrator full_cal = stage("calibrate", [&] {
            return fit_pipeline_calibrator(config, panel, split, full.space, full.model);
        });
        Calibrator baseline_cal = stage("calibrate", [&] {
            return fit_pipeline_calibrator(config, panel, split, baseline.space, baseline.model);
        });
        const std::string cal_path = artifact_path(config, "calibrator.json");
        full_cal.save(cal_path);
        written.push_back(cal_path);

        ModelEvaluation full_ev = stage("evaluate", [&] {
            return evaluate_model(config, panel, split, full.space, full.model, full_cal);
        });
        ModelEvaluation baseline_ev = stage("evaluate", [&] {
            return evaluate_model(config, panel, split, baseline.space, baseline.model,
                                  baseline_cal);
        });
        json metrics;
        metrics["threshold"] = config.evaluation.threshold;
        metrics["ece_bins"] = config.evaluation.ece_bins;
        metrics["models"] =
            json{{"full", evaluation_to_json(full_ev)}, {"baseline", evaluation_to_json(baseline_ev)}};
        const std::string metrics_path = artifact_path(config, "metrics.json");
        write_text_file(metrics_path, metrics.dump(2));
        written.push_back(metrics_path);

        ExplainArtifacts ex = stage("explain", [&] {
            return explain_model(config, panel, split, full.space, full.model);
        });
        stage("explain",
              [&] { write_explain_artifacts(config, panel, full.space, ex, written); });

        RiskReport risk = stage("report", [&] {
            const std::vector<size_t> test_rows = split.rows_in_fold(panel, Fold::test);
            return aggregate_risk(panel, test_rows, full_ev.test_calibrated_probs,
                                  config.cut_keys);
        });
        const std::string risk_path = artifact_path(config, "risk_report.csv");
        write_risk_report_csv(risk, risk_path);
        written.push_back(risk_path);

        PipelineResult result;
        result.full_test_auc_pr = full_ev.test_calibrated.auc_pr;
        result.baseline_test_auc_pr = baseline_ev.test_calibrated.auc_pr;
        result.warnings = split.warnings;

        const std::string config_echo = config.to_json();
        json manifest;
        manifest["config"] = json::parse(config_echo);
        manifest["config_hash"] = hex64(fnv1a64(config_echo));
        manifest["seed"] = config.seed;
        manifest["extraction_date"] = format_date(config.effective_extraction_date());
        manifest["artifacts"] = json{{"panel", "panel.csv"},
                                     {"split", "split.csv"},
                                     {"model_full", "model_full.json"},
                                     {"model_baseline", "model_baseline.json"},
                                     {"calibrator", "calibrator.json"},
                                     {"metrics", "metrics.json"},
                                     {"shap", "shap.csv"},
                                     {"importance", "importance.csv"},
                                     {"pdp", "pdp.csv"},
                                     {"risk_report", "risk_report.csv"}};
        size_t n_pos = 0;
        for (const PanelRow& row : panel.rows) n_pos += static_cast<size_t>(row.label);
        manifest["panel_summary"] =
            json{{"rows", panel.n_rows()},
                 {"positives", n_pos},
                 {"employees", split.fold_of_employee.size()},
                 {"window_start", format_year_month(config.panel.window_start())},
                 {"window_end", format_year_month(config.panel.window_end())}};
        manifest["split_summary"] =
            json{{"train_rows", split.rows_in_fold(panel, Fold::train).size()},
                 {"valid_rows", split.rows_in_fold(panel, Fold::valid).size()},
                 {"test_rows", split.rows_in_fold(panel, Fold::test).size()},
                 {"warnings", split.warnings}};
        manifest["training"] =
            json{{"full", json{{"trees", full.model.trees.size()},
                               {"best_round", full.log.best_round},
                               {"early_stopped", full.log.early_stopped}}},
                 {"baseline", json{{"trees", baseline.model.trees.size()},
                                   {"best_round", baseline.log.best_round},
                                   {"early_stopped", baseline.log.early_stopped}}}};
        json headline;
        headline["test_auc_pr_full"] =
            result.full_test_auc_pr ? json(*result.full_test_auc_pr) : json(nullptr);
        headline["test_auc_pr_baseline"] =
            result.baseline_test_auc_pr ? json(*result.baseline_test_auc_pr) : json(nullptr);
        headline["auc_pr_improvement"] =
            result.full_test_auc_pr && result.baseline_test_auc_pr
                ? json(*result.full_test_auc_pr - *result.baseline_test_auc_pr)
                : json(nullptr);
        headline["test_auc_roc_full"] =
            full_ev.test_calibrated.auc_roc ? json(*full_ev.test_calibrated.auc_roc) : json(nullptr);
        headline["test_brier_full"] = full_ev.test_calibrated.diagnostics.brier;
        manifest["headline"] = std::move(headline);
        result.manifest_json = manifest.dump(2);
        const std::string manifest_path = artifact_path(config, "manifest.json");
        write_text_file(manifest_path, result.manifest_json);
        return result;
    } catch (...) {
        for (const std::string& path : written) {
            std::error_code ec;
            fs::remove(path, ec);
        }
        throw;
    }
}

// ---- file-based stage wrappers ---------------------------------------------

namespace {

PanelDataset load_panel_artifact(const PipelineConfig& cfg) {
    return read_panel_csv(artifact_path(cfg, "panel.csv"), cfg.schema, cfg.panel,
                          cfg.strata_keys);
}

SplitAssignment load_split_artifact(const PipelineConfig& cfg) {
    return read_split_csv(artifact_path(cfg, "split.csv"));
}

} // namespace

void stage_build_panel(const PipelineConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);
    auto [snapshots, events] = stage("ingest", [&] {
        return load_tables(config.snapshots_path, config.events_path, config.schema);
    });
    PanelDataset panel = stage("panel", [&] {
        return build_panel(snapshots, events, config.panel, config.strata_keys);
    });
    stage("audit", [&] {
        const std::vector<AuditViolation> violations =
            leakage_audit(panel, events, config.effective_extraction_date());
        if (!violations.empty())
            throw DataError("temporal leakage detected: " + audit_report_json(violations));
    });
    write_panel_csv(panel, artifact_path(config, "panel.csv"));
}

void stage_split(const PipelineConfig& config) {
    config.validate();
    const PanelDataset panel = load_panel_artifact(config);
    const SplitAssignment split = stage("split", [&] {
        return group_stratified_split(panel, config.fractions, config.strata_keys, config.seed);
    });
    write_split_csv(split, artifact_path(config, "split.csv"));
}

void stage_train(const PipelineConfig& config) {
    config.validate();
    const PanelDataset panel = load_panel_artifact(config);
    const SplitAssignment split = load_split_artifact(config);
    stage("features", [&] { check_declared_columns(config); });
    const ModelBundle full = stage("train", [&] {
        return train_bundle(config, panel, split, all_column_names(config.schema));
    });
    const ModelBundle baseline = stage("train", [&] {
        return train_bundle(config, panel, split, config.baseline_features);
    });
    full.model.save(artifact_path(config, "model_full.json"));
    baseline.model.save(artifact_path(config, "model_baseline.json"));
}

void stage_calibrate(const PipelineConfig& config) {
    config.validate();
    const PanelDataset panel = load_panel_artifact(config);
    const SplitAssignment split = load_split_artifact(config);
    const GBDTModel model = GBDTModel::load(artifact_path(config, "model_full.json"));
    const FeatureSpace space = stage("features", [&] {
        return fit_feature_space(panel, split.rows_in_fold(panel, Fold::train),
                                 all_column_names(config.schema), config.feature_plan);
    });
    const Calibrator cal = stage("calibrate", [&] {
        return fit_pipeline_calibrator(config, panel, split, space, model);
    });
    cal.save(artifact_path(config, "calibrator.json"));
}

void stage_evaluate(const PipelineConfig& config) {
    config.validate();
    const PanelDataset panel = load_panel_artifact(config);
    const SplitAssignment split = load_split_artifact(config);
    const std::vector<size_t> train_rows = split.rows_in_fold(panel, Fold::train);
    const GBDTModel full_model = GBDTModel::load(artifact_path(config, "model_full.json"));
    const GBDTModel baseline_model =
        GBDTModel::load(artifact_path(config, "model_baseline.json"));
    const FeatureSpace full_space = stage("features", [&] {
        return fit_feature_space(panel, train_rows, all_column_names(config.schema),
                                 config.feature_plan);
    });
    const FeatureSpace baseline_space = stage("features", [&] {
        return fit_feature_space(panel, train_rows, config.baseline_features,
                                 config.feature_plan);
    });
    const Calibrator full_cal = Calibrator::load(artifact_path(config, "calibrator.json"));
    const Calibrator baseline_cal = stage("calibrate", [&] {
        return fit_pipeline_calibrator(config, panel, split, baseline_space, baseline_model);
    });
    const ModelEvaluation full_ev = stage("evaluate", [&] {
        return evaluate_model(config, panel, split, full_space, full_model, full_cal);
    });
    const ModelEvaluation baseline_ev = stage("evaluate", [&] {
        return evaluate_model(config, panel, split, baseline_space, baseline_model, baseline_cal);
    });
    json metrics;
    metrics["threshold"] = config.evaluation.threshold;
    metrics["ece_bins"] = config.evaluation.ece_bins;
    metrics["models"] =
        json{{"full", evaluation_to_json(full_ev)}, {"baseline", evaluation_to_json(baseline_ev)}};
    write_text_file(artifact_path(config, "metrics.json"), metrics.dump(2));
}

void stage_explain(const PipelineConfig& config) {
    config.validate();
    const PanelDataset panel = load_panel_artifact(config);
    const SplitAssignment split = load_split_artifact(config);
    const GBDTModel model = GBDTModel::load(artifact_path(config, "model_full.json"));
    const FeatureSpace space = stage("features", [&] {
        return fit_feature_space(panel, split.rows_in_fold(panel, Fold::train),
                                 all_column_names(config.schema), config.feature_plan);
    });
    const ExplainArtifacts ex =
        stage("explain", [&] { return explain_model(config, panel, split, space, model); });
    std::vector<std::string> written;
    stage("explain", [&] { write_explain_artifacts(config, panel, space, ex, written); });
}

void stage_report(const PipelineConfig& config) {
    config.validate();
    const PanelDataset panel = load_panel_artifact(config);
    const SplitAssignment split = load_split_artifact(config);
    const GBDTModel model = GBDTModel::load(artifact_path(config, "model_full.json"));
    const FeatureSpace space = stage("features", [&] {
        return fit_feature_space(panel, split.rows_in_fold(panel, Fold::train),
                                 all_column_names(config.schema), config.feature_plan);
    });
    const Calibrator cal = Calibrator::load(artifact_path(config, "calibrator.json"));
    const RiskReport risk = stage("report", [&] {
        const std::vector<size_t> test_rows = split.rows_in_fold(panel, Fold::test);
        const Matrix test_x = space.transform_rows(panel, test_rows);
        const std::vector<double> raw = predict(model, test_x).probabilities;
        const std::vector<double> calibrated =
            calibrated_probabilities(config, panel, test_rows, cal, raw);
        return aggregate_risk(panel, test_rows, calibrated, config.cut_keys);
    });
    write_risk_report_csv(risk, artifact_path(config, "risk_report.csv"));
}

} // namespace attrition
