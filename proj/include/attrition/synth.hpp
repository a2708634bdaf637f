#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "attrition/dates.hpp"
#include "attrition/ingest.hpp"

namespace attrition {

// Desk-scale synthetic organization. Each employee-month draws a
// termination from a hazard built from a base rate, linear effects of the
// configured driver features (centered so the base rate stays the
// operating point), and a sinusoidal seasonal term. Terminated employees
// are replaced by new hires the following month.
struct SynthConfig {
    size_t n_employees = 1000;
    int n_months = 24;
    YearMonth start_month{2022, 1};
    double base_rate = 0.08;           // monthly termination probability at the center
    double seasonality_amplitude = 0.0; // logit-scale amplitude of the yearly cycle
    double regretted_fraction = 0.5;   // share of terminations marked regretted
    double transfer_rate = 0.005;      // monthly probability of a transfer event
    std::map<std::string, double> drivers; // feature name -> logit coefficient
    uint64_t seed = 0;

    void validate() const;
};

struct SynthResult {
    SnapshotTable snapshots;
    EventTable events;
    std::string manifest_json; // true coefficients, centers, and config echo
};

SynthResult generate_synthetic_org(const SynthConfig& config);

// The column layout the generator emits.
Schema synth_schema();

// Centering constants applied to each driver feature inside the hazard.
const std::map<std::string, double>& synth_driver_centers();

// Per-feature scale divisors (tenure runs in months, so it is rescaled).
const std::map<std::string, double>& synth_driver_scales();

} // namespace attrition
