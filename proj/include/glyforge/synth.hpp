#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glyforge/population.hpp"
#include "glyforge/segments.hpp"

namespace glyforge::synth {

struct CohortSpec {
    int n_patients = 20;
    int days = 14;
    std::uint64_t seed = 1;

    double meals_per_day = 3.0;   // mean; actual count varies per day
    double carbs_mean_g = 60.0;
    double carbs_sd_g = 20.0;
    double meal_duration_min = 30.0;

    // Bolus policy: dose = carbs / ratio, sampled per patient. Large ratios
    // keep the boluses deliberately weak.
    double carb_ratio_lo = 15.0;
    double carb_ratio_hi = 25.0;

    // Bounds on the per-patient basal rate. The rate itself is solved so the
    // patient's fasting equilibrium lands at a sampled target glucose.
    double basal_lo_uhr = 0.0;
    double basal_hi_uhr = 2.0;

    double cgm_noise_sd = 2.0;  // mg/dL
    double dropout_rate = 0.02; // i.i.d. probability a CGM sample is dropped

    // Hidden hypoglycemia treatment: carbs taken whenever true glucose falls
    // below the threshold (never recorded). Threshold 0 disables it.
    double rescue_threshold_mgdl = 70.0;
    double rescue_carbs_g = 15.0;

    void validate() const;
};

struct CohortResult {
    std::vector<segments::RawPatientRecord> records;
    std::map<std::string, int> true_twin; // patient_id -> generating twin_id
    std::vector<std::string> log;         // resample notes etc.
};

/// Simulate n_patients lives on twins drawn from pop. Meals (and the hidden
/// rescue carbs taken under 70 mg/dL) drive the simulator but never appear
/// in the emitted record; boluses and basal rates do. CGM is true glucose
/// plus Gaussian noise, clamped to [40, 400], with i.i.d. sample dropout.
/// Deterministic in spec.seed; per-patient sub-streams are disjoint, and a
/// blown-up simulation is resampled under an incremented sub-seed and logged.
CohortResult generate_cohort(const CohortSpec& spec,
                             const population::TwinPopulation& pop);

void save_truth(const std::map<std::string, int>& true_twin, const std::string& path);
std::map<std::string, int> load_truth(const std::string& path);

} // namespace glyforge::synth
