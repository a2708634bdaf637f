#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "attrition/csv.hpp"
#include "attrition/errors.hpp"
#include "attrition/features.hpp"
#include "attrition/gbdt.hpp"
#include "attrition/pipeline.hpp"
#include "attrition/rng.hpp"
#include "attrition/synth.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using namespace attrition;
using doctest::Approx;
using nlohmann::json;

namespace {

PanelDataset risk_panel(const std::vector<std::string>& ids, const std::vector<Date>& dates,
                        const std::vector<int>& labels, const std::vector<std::string>& teams) {
    PanelDataset panel;
    AttributeColumn team;
    team.name = "team";
    team.type = ColumnType::categorical;
    for (size_t i = 0; i < ids.size(); ++i) {
        panel.rows.push_back({ids[i], dates[i], labels[i]});
        if (teams[i].empty())
            team.push_missing();
        else
            team.push_categorical(teams[i]);
    }
    panel.attributes.push_back(std::move(team));
    return panel;
}

std::vector<size_t> iota_rows(size_t n) {
    std::vector<size_t> rows(n);
    for (size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

json schema_json() {
    json columns = json::array();
    for (const auto& [name, type] : synth_schema().attributes)
        columns.push_back(json{{"name", name},
                               {"type", type == ColumnType::numeric ? "numeric" : "categorical"}});
    return json{{"columns", columns}};
}

json org_config(const std::string& snapshots, const std::string& events,
                const std::string& out_dir) {
    json j;
    j["inputs"] = json{{"snapshots", snapshots}, {"events", events}};
    j["schema"] = schema_json();
    j["panel"] = json{{"prediction_month", "2023-10"},
                      {"horizon_months", 3},
                      {"lookback_months", 12},
                      {"outcome_type", "total_attrition"}};
    j["split"] = json{{"train", 0.6}, {"valid", 0.2}, {"test", 0.2},
                      {"strata_keys", json::array({"job_family"})}};
    json plans;
    for (const char* col : {"sentiment_favorable_ratio", "sentiment_unfavorable_ratio"})
        plans[col] = json{{"impute", "median"}, {"add_indicator", true}};
    for (const char* col : {"job_family", "location", "quarter"})
        plans[col] = json{{"encode", "one_hot"}};
    j["features"] = json{{"columns", plans}, {"imbalance", json{{"method", "class_weights"}}}};
    j["gbdt"] = json{{"n_estimators", 40}, {"num_leaves", 15},    {"learning_rate", 0.15},
                     {"min_data_in_leaf", 20}, {"max_bins", 32},  {"early_stopping_rounds", 10},
                     {"lambda_l2", 1.0}};
    j["calibration"] = json{{"kind", "isotonic"}};
    j["baseline_features"] =
        json::array({"tenure_months", "job_level", "job_family", "location", "quarter"});
    j["evaluation"] =
        json{{"threshold", 0.5}, {"segment_keys", json::array({"location"})}, {"ece_bins", 10}};
    j["report"] = json{{"cut_keys", json::array({"job_family", "location"})}};
    j["explain"] = json{{"sample_size", 25},
                        {"pdp_features", json::array({"comp_ratio"})},
                        {"pdp_points", 5}};
    j["seed"] = 11;
    j["output_dir"] = out_dir;
    return j;
}

void write_org_inputs(const TempDir& tmp, size_t n_employees) {
    SynthConfig sc;
    sc.n_employees = n_employees;
    sc.n_months = 24;
    sc.start_month = YearMonth{2022, 1};
    sc.base_rate = 0.07;
    sc.drivers = {{"sentiment_favorable_ratio", -2.5}, {"manager_team_churn", 3.0}};
    sc.seed = 7;
    SynthResult org = generate_synthetic_org(sc);
    write_snapshots_csv(org.snapshots, tmp.file("snapshots.csv"));
    write_events_csv(org.events, tmp.file("events.csv"));
}

} // namespace

TEST_CASE("risk aggregation sums probabilities within a group") {
    PanelDataset panel = risk_panel({"e1", "e2"}, {Date{2023, 1, 31}, Date{2023, 1, 31}},
                                    {1, 0}, {"x", "x"});
    RiskReport report = aggregate_risk(panel, iota_rows(2), {0.1, 0.3}, {"team"});
    REQUIRE(report.rows.size() == 1);
    const RiskRow& row = report.rows[0];
    CHECK(row.cut_values == std::vector<std::string>{"x"});
    CHECK(row.n_employees == 2);
    CHECK(row.expected_attrition == Approx(0.4).epsilon(1e-12));
    CHECK(row.mean_risk == Approx(0.2).epsilon(1e-12));
    REQUIRE(row.actual_rate.has_value());
    CHECK(*row.actual_rate == Approx(0.5).epsilon(1e-12));

    RiskReport ungrouped = aggregate_risk(panel, iota_rows(2), {0.1, 0.3}, {});
    REQUIRE(ungrouped.rows.size() == 1);
    CHECK(ungrouped.rows[0].cut_values.empty());
    CHECK(ungrouped.rows[0].expected_attrition == Approx(0.4).epsilon(1e-12));
}

TEST_CASE("risk aggregation keeps the latest snapshot per employee") {
    PanelDataset panel = risk_panel(
        {"e1", "e1", "e1", "e2"},
        {Date{2023, 1, 31}, Date{2023, 3, 31}, Date{2023, 2, 28}, Date{2023, 1, 31}},
        {0, 1, 0, 0}, {"x", "x", "x", "x"});
    // e1's March snapshot carries probability 0.2; earlier months carry 0.9.
    RiskReport report = aggregate_risk(panel, {0, 1, 2, 3}, {0.9, 0.2, 0.9, 0.4}, {"team"});
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].n_employees == 2);
    CHECK(report.rows[0].expected_attrition == Approx(0.6).epsilon(1e-12));

    // Same answer when the rows arrive in a different order.
    RiskReport shuffled = aggregate_risk(panel, {3, 1, 0, 2}, {0.4, 0.2, 0.9, 0.9}, {"team"});
    CHECK(shuffled.rows[0].expected_attrition == Approx(0.6).epsilon(1e-12));
}

TEST_CASE("risk aggregation partitions employees across groups") {
    std::vector<std::string> ids, teams;
    std::vector<Date> dates;
    std::vector<int> labels;
    std::vector<double> probs;
    Rng rng(99);
    for (int i = 0; i < 60; ++i) {
        ids.push_back("e" + std::to_string(i));
        dates.push_back(Date{2023, 5, 31});
        labels.push_back(i % 5 == 0 ? 1 : 0);
        teams.push_back(i % 7 == 0 ? "" : (i % 2 == 0 ? "a" : "b"));
        probs.push_back(rng.uniform01());
    }
    PanelDataset panel = risk_panel(ids, dates, labels, teams);
    RiskReport grouped = aggregate_risk(panel, iota_rows(60), probs, {"team"});
    RiskReport total = aggregate_risk(panel, iota_rows(60), probs, {});

    double group_sum = 0.0;
    size_t group_n = 0;
    bool saw_missing_group = false;
    for (const RiskRow& row : grouped.rows) {
        group_sum += row.expected_attrition;
        group_n += row.n_employees;
        if (row.cut_values[0] == kMissingCategory) saw_missing_group = true;
    }
    CHECK(grouped.rows.size() == 3);
    CHECK(saw_missing_group);
    CHECK(group_n == 60);
    CHECK(group_sum == Approx(total.rows[0].expected_attrition).epsilon(1e-9));
}

TEST_CASE("risk aggregation validates its inputs") {
    PanelDataset panel = risk_panel({"e1"}, {Date{2023, 1, 31}}, {0}, {"x"});
    CHECK_THROWS_AS(aggregate_risk(panel, iota_rows(1), {0.1, 0.2}, {}), DataError);
    CHECK_THROWS_AS(aggregate_risk(panel, iota_rows(1), {0.1}, {"nosuch"}), DataError);
}

TEST_CASE("risk report csv has one row per group") {
    PanelDataset panel = risk_panel({"e1", "e2", "e3"},
                                    {Date{2023, 1, 31}, Date{2023, 1, 31}, Date{2023, 1, 31}},
                                    {1, 0, 0}, {"a", "a", "b"});
    RiskReport report = aggregate_risk(panel, iota_rows(3), {0.2, 0.4, 0.5}, {"team"});
    TempDir tmp("riskcsv");
    write_risk_report_csv(report, tmp.file("risk.csv"));
    CsvTable table = read_csv(tmp.file("risk.csv"));
    CHECK(table.header == std::vector<std::string>{"team", "n_employees", "expected_attrition",
                                                   "mean_risk", "actual_rate"});
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0][0] == "a");
    CHECK(table.rows[0][1] == "2");
    CHECK(std::stod(table.rows[0][2]) == Approx(0.6).epsilon(1e-12));
    CHECK(table.rows[1][0] == "b");
}

TEST_CASE("pipeline config parses and echoes canonically") {
    json j;
    j["inputs"] = json{{"snapshots", "s.csv"}, {"events", "e.csv"}};
    j["schema"] = json{{"columns", json::array({json{{"name", "x"}, {"type", "numeric"}},
                                                json{{"name", "team"}, {"type", "categorical"}}})}};
    j["panel"] = json{{"prediction_month", "2023-10"}};
    j["baseline_features"] = json::array({"x"});
    j["output_dir"] = "out";

    PipelineConfig cfg = PipelineConfig::from_json(j.dump(), "inline");
    CHECK(cfg.snapshots_path == "s.csv");
    CHECK(cfg.panel.prediction_month == YearMonth{2023, 10});
    CHECK(cfg.panel.horizon_months == 3);
    CHECK(cfg.evaluation.threshold == 0.5);
    CHECK(cfg.effective_extraction_date() == Date{2023, 10, 31});

    // Round-tripping the canonical echo is a fixed point.
    const std::string echo = cfg.to_json();
    PipelineConfig again = PipelineConfig::from_json(echo, "echo");
    CHECK(again.to_json() == echo);
}

TEST_CASE("pipeline config rejects malformed input") {
    auto parse = [](const json& j) {
        return PipelineConfig::from_json(j.dump(), "test.json");
    };
    json base;
    base["inputs"] = json{{"snapshots", "s.csv"}, {"events", "e.csv"}};
    base["schema"] = json{{"columns", json::array({json{{"name", "x"}, {"type", "numeric"}}})}};
    base["panel"] = json{{"prediction_month", "2023-10"}};
    base["baseline_features"] = json::array({"x"});
    base["output_dir"] = "out";
    CHECK_NOTHROW(parse(base));

    CHECK_THROWS_WITH_AS(PipelineConfig::from_json("{ not json", "broken.json"),
                         doctest::Contains("broken.json"), ConfigError);

    json unknown = base;
    unknown["surprise"] = 1;
    CHECK_THROWS_WITH_AS(parse(unknown), doctest::Contains("unknown key"), ConfigError);

    json no_baseline = base;
    no_baseline.erase("baseline_features");
    CHECK_THROWS_AS(parse(no_baseline), ConfigError);

    json empty_baseline = base;
    empty_baseline["baseline_features"] = json::array();
    CHECK_THROWS_WITH_AS(parse(empty_baseline), doctest::Contains("baseline_features"),
                         ConfigError);

    json bad_threshold = base;
    bad_threshold["evaluation"] = json{{"threshold", 1.5}};
    CHECK_THROWS_AS(parse(bad_threshold), ConfigError);

    json bad_date = base;
    bad_date["extraction_date"] = "2023-13-01";
    CHECK_THROWS_WITH_AS(parse(bad_date), doctest::Contains("extraction_date"), ConfigError);

    json seg_mean = base;
    seg_mean["calibration"] = json{{"kind", "segment_mean"}};
    CHECK_THROWS_WITH_AS(parse(seg_mean), doctest::Contains("segment_key"), ConfigError);

    json bad_kind = base;
    bad_kind["calibration"] = json{{"kind", "sorcery"}};
    CHECK_THROWS_AS(parse(bad_kind), ConfigError);

    CHECK_THROWS_WITH_AS(PipelineConfig::from_file("/nonexistent/config.json"),
                         doctest::Contains("cannot open config file"), ConfigError);
}

TEST_CASE("full pipeline run produces every artifact and is deterministic") {
    TempDir tmp("pipeline_run");
    write_org_inputs(tmp, 260);
    const std::string out = tmp.file("out");
    json cj = org_config(tmp.file("snapshots.csv"), tmp.file("events.csv"), out);
    PipelineConfig cfg = PipelineConfig::from_json(cj.dump(), "run.json");

    PipelineResult result = run_pipeline(cfg);
    REQUIRE(result.full_test_auc_pr.has_value());
    REQUIRE(result.baseline_test_auc_pr.has_value());
    CHECK(*result.full_test_auc_pr > 0.0);
    CHECK(*result.full_test_auc_pr <= 1.0);

    const char* artifacts[] = {"panel.csv",      "split.csv",   "model_full.json",
                               "model_baseline.json", "calibrator.json", "metrics.json",
                               "shap.csv",       "importance.csv", "pdp.csv",
                               "risk_report.csv", "manifest.json"};
    for (const char* name : artifacts) {
        CAPTURE(name);
        CHECK(std::filesystem::exists(std::filesystem::path(out) / name));
    }

    json manifest = json::parse(result.manifest_json);
    CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
    CHECK(manifest.at("seed").get<uint64_t>() == 11);
    CHECK(manifest.at("extraction_date") == "2023-10-31");
    CHECK(manifest.at("artifacts").size() == 10);
    CHECK(manifest.at("panel_summary").at("rows").get<size_t>() > 0);
    CHECK(manifest.at("headline").contains("auc_pr_improvement"));
    CHECK(manifest.at("config") == json::parse(cfg.to_json()));
    CHECK(read_file((std::filesystem::path(out) / "manifest.json").string()) ==
          result.manifest_json + "\n");

    json metrics = json::parse(read_file((std::filesystem::path(out) / "metrics.json").string()));
    CHECK(metrics.at("models").contains("full"));
    CHECK(metrics.at("models").contains("baseline"));
    CHECK(metrics.at("models").at("full").at("test_calibrated").contains("brier"));
    CHECK(metrics.at("models").at("full").at("test_segments").contains("location"));

    GBDTModel model = GBDTModel::load((std::filesystem::path(out) / "model_full.json").string());
    CHECK(!model.trees.empty());
    CHECK(!model.feature_names.empty());

    // The explanation sample covers 25 rows, one block per row plus a base row.
    CsvTable shap = read_csv((std::filesystem::path(out) / "shap.csv").string());
    CsvTable importance = read_csv((std::filesystem::path(out) / "importance.csv").string());
    CHECK(importance.rows.size() == model.feature_names.size());
    CHECK(shap.rows.size() == 25 * (1 + model.feature_names.size()));

    CsvTable risk = read_csv((std::filesystem::path(out) / "risk_report.csv").string());
    CHECK(risk.header[0] == "job_family");
    CHECK(risk.header[1] == "location");
    CHECK(!risk.rows.empty());

    // Same config, same seed, same directory: byte-identical numeric artifacts.
    const std::string metrics_before = read_file((std::filesystem::path(out) / "metrics.json").string());
    const std::string model_before = read_file((std::filesystem::path(out) / "model_full.json").string());
    const std::string baseline_before =
        read_file((std::filesystem::path(out) / "model_baseline.json").string());
    PipelineResult rerun = run_pipeline(cfg);
    CHECK(read_file((std::filesystem::path(out) / "metrics.json").string()) == metrics_before);
    CHECK(read_file((std::filesystem::path(out) / "model_full.json").string()) == model_before);
    CHECK(read_file((std::filesystem::path(out) / "model_baseline.json").string()) ==
          baseline_before);
    CHECK(rerun.manifest_json == result.manifest_json);

    // Stage-by-stage execution reproduces the one-shot artifacts.
    const std::string out2 = tmp.file("out2");
    json cj2 = org_config(tmp.file("snapshots.csv"), tmp.file("events.csv"), out2);
    PipelineConfig cfg2 = PipelineConfig::from_json(cj2.dump(), "run2.json");
    stage_build_panel(cfg2);
    stage_split(cfg2);
    stage_train(cfg2);
    stage_calibrate(cfg2);
    stage_evaluate(cfg2);
    stage_explain(cfg2);
    stage_report(cfg2);
    CHECK(read_file((std::filesystem::path(out2) / "metrics.json").string()) == metrics_before);
    CHECK(read_file((std::filesystem::path(out2) / "model_full.json").string()) == model_before);
    CHECK(read_file((std::filesystem::path(out2) / "risk_report.csv").string()) ==
          read_file((std::filesystem::path(out) / "risk_report.csv").string()));
}

TEST_CASE("pipeline aborts in the features stage on an unknown column") {
    TempDir tmp("pipeline_badcol");
    write_org_inputs(tmp, 80);
    const std::string out = tmp.file("out");
    json cj = org_config(tmp.file("snapshots.csv"), tmp.file("events.csv"), out);
    cj["baseline_features"].push_back("nosuch_column");
    PipelineConfig cfg = PipelineConfig::from_json(cj.dump(), "bad.json");

    CHECK_THROWS_WITH_AS(run_pipeline(cfg),
                         doctest::Contains("stage features"), DataError);
    try {
        run_pipeline(cfg);
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("nosuch_column") != std::string::npos);
    }
    // Artifacts written before the failing stage are cleaned up.
    CHECK(!std::filesystem::exists(std::filesystem::path(out) / "panel.csv"));
    CHECK(!std::filesystem::exists(std::filesystem::path(out) / "split.csv"));
    CHECK(!std::filesystem::exists(std::filesystem::path(out) / "manifest.json"));
}

TEST_CASE("pipeline aborts in the audit stage when labels are not resolvable") {
    TempDir tmp("pipeline_leak");
    write_org_inputs(tmp, 80);
    const std::string out = tmp.file("out");
    json cj = org_config(tmp.file("snapshots.csv"), tmp.file("events.csv"), out);
    cj["extraction_date"] = "2023-08-15";
    PipelineConfig cfg = PipelineConfig::from_json(cj.dump(), "leak.json");

    CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("stage audit"), DataError);
    try {
        run_pipeline(cfg);
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("temporal leakage detected") != std::string::npos);
    }
    CHECK(!std::filesystem::exists(std::filesystem::path(out) / "panel.csv"));
    CHECK(!std::filesystem::exists(std::filesystem::path(out) / "manifest.json"));
}
