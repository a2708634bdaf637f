#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "attrition/errors.hpp"
#include "attrition/pipeline.hpp"
#include "attrition/synth.hpp"
#include "json.hpp"

namespace {

using attrition::ConfigError;
using nlohmann::json;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
    auto* opt = cmd->add_option("--config", args.config_path, "JSON config file");
    if (config_required) opt->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed, "seed (overrides config)");
}

attrition::PipelineConfig load_config(const CommonArgs& args) {
    attrition::PipelineConfig cfg = attrition::PipelineConfig::from_file(args.config_path);
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

attrition::SynthConfig load_synth_config(const CommonArgs& args) {
    attrition::SynthConfig cfg;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path, std::ios::binary);
        if (!in) throw ConfigError("cannot open config file " + args.config_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        json j;
        try {
            j = json::parse(ss.str());
        } catch (const json::parse_error& e) {
            throw ConfigError(args.config_path + " is not valid JSON: " + e.what());
        }
        try {
            for (const auto& item : j.items()) {
                const std::string& key = item.key();
                const json& v = item.value();
                if (key == "n_employees")
                    cfg.n_employees = v.get<size_t>();
                else if (key == "n_months")
                    cfg.n_months = v.get<int>();
                else if (key == "start_month")
                    cfg.start_month = attrition::parse_year_month(v.get<std::string>());
                else if (key == "base_rate")
                    cfg.base_rate = v.get<double>();
                else if (key == "seasonality_amplitude")
                    cfg.seasonality_amplitude = v.get<double>();
                else if (key == "regretted_fraction")
                    cfg.regretted_fraction = v.get<double>();
                else if (key == "transfer_rate")
                    cfg.transfer_rate = v.get<double>();
                else if (key == "drivers")
                    cfg.drivers = v.get<std::map<std::string, double>>();
                else if (key == "seed")
                    cfg.seed = v.get<uint64_t>();
                else
                    throw ConfigError("unknown key '" + key + "' in synth config");
            }
        } catch (const json::exception& e) {
            throw ConfigError(args.config_path + ": " + e.what());
        }
    }
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw attrition::DataError("cannot open " + path + " for writing");
    out << content;
    if (!content.empty() && content.back() != '\n') out << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"attrition risk modeling pipeline"};
    app.require_subcommand(1);

    CommonArgs synth_args;
    synth_args.out_dir = "out";
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic organization");
    add_common(synth, synth_args, false);
    std::optional<size_t> synth_employees;
    std::optional<int> synth_months;
    std::optional<double> synth_base_rate;
    synth->add_option("--employees", synth_employees, "number of employees at start");
    synth->add_option("--months", synth_months, "number of snapshot months");
    synth->add_option("--base-rate", synth_base_rate, "monthly termination probability");

    CommonArgs run_args;
    CLI::App* build_panel =
        app.add_subcommand("build-panel", "ingest inputs, build and audit the panel");
    CLI::App* split = app.add_subcommand("split", "assign employees to folds");
    CLI::App* train = app.add_subcommand("train", "fit the baseline and full models");
    CLI::App* calibrate = app.add_subcommand("calibrate", "fit the calibrator on validation");
    CLI::App* evaluate = app.add_subcommand("evaluate", "score both models on test");
    CLI::App* explain = app.add_subcommand("explain", "attribute and profile the full model");
    CLI::App* report = app.add_subcommand("report", "aggregate risk by the configured cuts");
    CLI::App* run = app.add_subcommand("run", "execute the whole pipeline");
    for (CLI::App* cmd : {build_panel, split, train, calibrate, evaluate, explain, report, run})
        add_common(cmd, run_args, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            attrition::SynthConfig cfg = load_synth_config(synth_args);
            if (synth_employees) cfg.n_employees = *synth_employees;
            if (synth_months) cfg.n_months = *synth_months;
            if (synth_base_rate) cfg.base_rate = *synth_base_rate;
            const attrition::SynthResult result = attrition::generate_synthetic_org(cfg);
            std::filesystem::create_directories(synth_args.out_dir);
            const std::filesystem::path dir(synth_args.out_dir);
            attrition::write_snapshots_csv(result.snapshots, (dir / "snapshots.csv").string());
            attrition::write_events_csv(result.events, (dir / "events.csv").string());
            write_file((dir / "synth_manifest.json").string(), result.manifest_json);
            std::cout << "wrote " << result.snapshots.n_rows() << " snapshots and "
                      << result.events.rows.size() << " events to " << synth_args.out_dir << "\n";
        } else if (build_panel->parsed()) {
            attrition::stage_build_panel(load_config(run_args));
        } else if (split->parsed()) {
            attrition::stage_split(load_config(run_args));
        } else if (train->parsed()) {
            attrition::stage_train(load_config(run_args));
        } else if (calibrate->parsed()) {
            attrition::stage_calibrate(load_config(run_args));
        } else if (evaluate->parsed()) {
            attrition::stage_evaluate(load_config(run_args));
        } else if (explain->parsed()) {
            attrition::stage_explain(load_config(run_args));
        } else if (report->parsed()) {
            attrition::stage_report(load_config(run_args));
        } else if (run->parsed()) {
            const attrition::PipelineConfig cfg = load_config(run_args);
            const attrition::PipelineResult result = attrition::run_pipeline(cfg);
            for (const std::string& warning : result.warnings)
                std::cerr << "warning: " << warning << "\n";
            std::cout << "run complete, artifacts in " << cfg.output_dir << "\n";
            if (result.full_test_auc_pr && result.baseline_test_auc_pr)
                std::cout << "test auc_pr: full " << *result.full_test_auc_pr << ", baseline "
                          << *result.baseline_test_auc_pr << "\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const attrition::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
