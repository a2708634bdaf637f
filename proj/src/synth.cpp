#include "attrition/synth.hpp"

#include <algorithm>
#include <cmath>

#include "attrition/errors.hpp"
#include "attrition/gbdt.hpp"
#include "attrition/rng.hpp"
#include "json.hpp"

namespace attrition {

namespace {

const std::vector<std::string> kJobFamilies = {"engineering", "finance",   "marketing",
                                               "operations",  "people",    "sales"};
const std::vector<std::string> kLocations = {"austin", "bangalore", "dublin", "newyork",
                                             "singapore"};

const std::map<std::string, double> kCenters = {
    {"tenure_months", 30.0},          {"job_level", 3.5},
    {"comp_ratio", 1.0},              {"sentiment_favorable_ratio", 0.65},
    {"sentiment_unfavorable_ratio", 0.2}, {"manager_team_churn", 0.12}};

const std::map<std::string, double> kScales = {
    {"tenure_months", 30.0},          {"job_level", 1.0},
    {"comp_ratio", 1.0},              {"sentiment_favorable_ratio", 1.0},
    {"sentiment_unfavorable_ratio", 1.0}, {"manager_team_churn", 1.0}};

struct Person {
    std::string id;
    int tenure_months; // true tenure as of the current month's snapshot
    int job_level;
    std::string job_family;
    std::string location;
    double comp_ratio;
    double sent_fav;
    double sent_unfav;
    double mgr_churn;
    bool fresh; // hired this month; skip the first evolution step
};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Person hire(Rng& rng, uint64_t counter, bool initial_cohort) {
    Person p;
    char buf[16];
    std::snprintf(buf, sizeof buf, "E%06llu", static_cast<unsigned long long>(counter));
    p.id = buf;
    p.tenure_months = initial_cohort ? static_cast<int>(rng.below(121)) : 0;
    p.job_level = 1 + static_cast<int>(rng.below(7));
    p.job_family = kJobFamilies[rng.below(kJobFamilies.size())];
    p.location = kLocations[rng.below(kLocations.size())];
    p.comp_ratio = 0.8 + 0.4 * rng.uniform01();
    p.sent_fav = clamp01(0.65 + 0.12 * rng.normal());
    p.sent_unfav = clamp01(0.20 + 0.08 * rng.normal());
    p.mgr_churn = clamp01(0.12 + 0.06 * rng.normal());
    p.fresh = true;
    return p;
}

void evolve(Person& p, Rng& rng) {
    p.tenure_months += 1;
    p.comp_ratio = std::clamp(p.comp_ratio + 0.01 * rng.normal(), 0.5, 2.0);
    p.sent_fav = clamp01(0.65 + 0.9 * (p.sent_fav - 0.65) + 0.05 * rng.normal());
    p.sent_unfav = clamp01(0.20 + 0.9 * (p.sent_unfav - 0.20) + 0.04 * rng.normal());
    p.mgr_churn = clamp01(0.12 + 0.8 * (p.mgr_churn - 0.12) + 0.05 * rng.normal());
}

} // namespace

Schema synth_schema() {
    Schema s;
    s.attributes = {{"tenure_months", ColumnType::numeric},
                    {"job_level", ColumnType::numeric},
                    {"comp_ratio", ColumnType::numeric},
                    {"sentiment_favorable_ratio", ColumnType::numeric},
                    {"sentiment_unfavorable_ratio", ColumnType::numeric},
                    {"manager_team_churn", ColumnType::numeric},
                    {"job_family", ColumnType::categorical},
                    {"location", ColumnType::categorical},
                    {"quarter", ColumnType::categorical}};
    return s;
}

const std::map<std::string, double>& synth_driver_centers() { return kCenters; }
const std::map<std::string, double>& synth_driver_scales() { return kScales; }

void SynthConfig::validate() const {
    if (n_employees < 1) throw ConfigError("n_employees must be at least 1");
    if (n_months < 1) throw ConfigError("n_months must be at least 1");
    if (!(base_rate > 0.0 && base_rate < 1.0)) throw ConfigError("base_rate must be in (0,1)");
    if (!(regretted_fraction >= 0.0 && regretted_fraction <= 1.0))
        throw ConfigError("regretted_fraction must be in [0,1]");
    if (!(transfer_rate >= 0.0 && transfer_rate < 1.0))
        throw ConfigError("transfer_rate must be in [0,1)");
    for (const auto& [name, coef] : drivers) {
        if (kCenters.find(name) == kCenters.end())
            throw ConfigError("unknown driver feature: " + name);
        if (std::isnan(coef)) throw ConfigError("driver coefficient for " + name + " is NaN");
    }
}

SynthResult generate_synthetic_org(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);

    SynthResult result;
    SnapshotTable& snap = result.snapshots;
    const Schema schema = synth_schema();
    for (const auto& [name, type] : schema.attributes) {
        AttributeColumn col;
        col.name = name;
        col.type = type;
        snap.columns.push_back(std::move(col));
    }

    std::vector<Person> active;
    uint64_t hire_counter = 0;
    for (size_t i = 0; i < config.n_employees; ++i)
        active.push_back(hire(rng, ++hire_counter, true));

    const double base_logit = logit(config.base_rate);
    for (int m = 0; m < config.n_months; ++m) {
        const YearMonth month = add_months(config.start_month, m);
        const Date snapshot_date = month_end(month);
        const YearMonth next = add_months(month, 1);
        const char* quarter = month.month <= 3   ? "Q1"
                              : month.month <= 6 ? "Q2"
                              : month.month <= 9 ? "Q3"
                                                 : "Q4";
        const double seasonal =
            config.seasonality_amplitude * std::sin(2.0 * 3.141592653589793 * (m % 12) / 12.0);

        std::vector<Person> survivors;
        survivors.reserve(active.size());
        std::vector<Person> hired_this_month;
        for (Person& p : active) {
            if (p.fresh)
                p.fresh = false;
            else
                evolve(p, rng);

            const bool fav_missing = rng.uniform01() < 0.05;
            const bool unfav_missing = rng.uniform01() < 0.05;

            snap.employee_ids.push_back(p.id);
            snap.snapshot_dates.push_back(snapshot_date);
            snap.columns[0].push_numeric(p.tenure_months);
            snap.columns[1].push_numeric(p.job_level);
            snap.columns[2].push_numeric(p.comp_ratio);
            if (fav_missing)
                snap.columns[3].push_missing();
            else
                snap.columns[3].push_numeric(p.sent_fav);
            if (unfav_missing)
                snap.columns[4].push_missing();
            else
                snap.columns[4].push_numeric(p.sent_unfav);
            snap.columns[5].push_numeric(p.mgr_churn);
            snap.columns[6].push_categorical(p.job_family);
            snap.columns[7].push_categorical(p.location);
            snap.columns[8].push_categorical(quarter);

            // The hazard always sees the true values; missingness only
            // masks what gets recorded.
            const std::map<std::string, double> values = {
                {"tenure_months", static_cast<double>(p.tenure_months)},
                {"job_level", static_cast<double>(p.job_level)},
                {"comp_ratio", p.comp_ratio},
                {"sentiment_favorable_ratio", p.sent_fav},
                {"sentiment_unfavorable_ratio", p.sent_unfav},
                {"manager_team_churn", p.mgr_churn}};
            double score = base_logit + seasonal;
            for (const auto& [name, coef] : config.drivers)
                score += coef * (values.at(name) - kCenters.at(name)) / kScales.at(name);
            const double hazard = sigmoid(score);

            if (rng.uniform01() < hazard) {
                const int day = 1 + static_cast<int>(rng.below(
                                        static_cast<uint64_t>(days_in_month(next.year, next.month))));
                EventRecord ev;
                ev.employee_id = p.id;
                ev.event_date = Date{next.year, next.month, day};
                ev.type = rng.uniform01() < config.regretted_fraction
                              ? EventType::termination_regretted
                              : EventType::termination_unregretted;
                result.events.rows.push_back(std::move(ev));
                hired_this_month.push_back(hire(rng, ++hire_counter, false));
            } else {
                if (rng.uniform01() < config.transfer_rate) {
                    const int day = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(
                                            days_in_month(next.year, next.month))));
                    result.events.rows.push_back(
                        {p.id, Date{next.year, next.month, day}, EventType::transfer});
                }
                survivors.push_back(std::move(p));
            }
        }
        for (Person& p : hired_this_month) survivors.push_back(std::move(p));
        active = std::move(survivors);
    }

    nlohmann::json manifest;
    manifest["generator"] = "synthetic-org";
    manifest["n_employees"] = config.n_employees;
    manifest["n_months"] = config.n_months;
    manifest["start_month"] = format_year_month(config.start_month);
    manifest["base_rate"] = config.base_rate;
    manifest["seasonality_amplitude"] = config.seasonality_amplitude;
    manifest["regretted_fraction"] = config.regretted_fraction;
    manifest["transfer_rate"] = config.transfer_rate;
    manifest["seed"] = config.seed;
    manifest["drivers"] = config.drivers;
    nlohmann::json centers;
    nlohmann::json scales;
    for (const auto& [name, coef] : config.drivers) {
        centers[name] = kCenters.at(name);
        scales[name] = kScales.at(name);
    }
    manifest["driver_centers"] = std::move(centers);
    manifest["driver_scales"] = std::move(scales);
    result.manifest_json = manifest.dump(2);
    return result;
}

} // namespace attrition
