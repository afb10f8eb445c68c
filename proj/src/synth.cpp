#include "glyforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "glyforge/common.hpp"
#include "glyforge/hovorka.hpp"
#include "glyforge/iob.hpp"

namespace glyforge::synth {

void CohortSpec::validate() const {
    if (n_patients < 1) throw ConfigError("cohort: n_patients must be >= 1");
    if (days < 1) throw ConfigError("cohort: days must be >= 1");
    if (meals_per_day < 0.0) throw ConfigError("cohort: meals_per_day must be >= 0");
    if (carbs_mean_g <= 0.0 || carbs_sd_g < 0.0) {
        throw ConfigError("cohort: carb distribution must be positive");
    }
    if (meal_duration_min < hovorka::kSampleMinutes) {
        throw ConfigError("cohort: meal_duration_min must be >= 5");
    }
    if (carb_ratio_lo <= 0.0 || carb_ratio_hi < carb_ratio_lo) {
        throw ConfigError("cohort: carb ratio bounds out of order");
    }
    if (basal_lo_uhr < 0.0 || basal_hi_uhr < basal_lo_uhr) {
        throw ConfigError("cohort: basal bounds out of order");
    }
    if (cgm_noise_sd < 0.0) throw ConfigError("cohort: cgm_noise_sd must be >= 0");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("cohort: dropout_rate must be in [0, 1)");
    }
    if (rescue_threshold_mgdl < 0.0 || rescue_carbs_g < 0.0) {
        throw ConfigError("cohort: rescue settings must be >= 0");
    }
}

namespace {

constexpr double kRescueDurationMin = 15.0;
// Hypo treatment follows the "rule of 15": 15 g of fast carbs, recheck after
// roughly 15-20 minutes, repeat while still low. A long refractory here lets
// over-bolused patients sit pinned at the sensor floor for an hour.
constexpr double kRescueRefractoryMin = 20.0;

double uhr_to_rate(double uhr, double bw) { return uhr * 1000.0 / 60.0 / bw; }

double eq_glucose_or_nan(double u, const hovorka::TwinParameters& p) {
    try {
        return hovorka::equilibrium_glucose(u, p);
    } catch (const NumericError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

/// Basal rate (mU/kg/min) whose fasting equilibrium equals g_target, found
/// by bisection on the (monotonically decreasing) equilibrium curve. NaN
/// when the target is above the twin's zero-insulin ceiling.
double solve_basal_for_equilibrium(double g_target, const hovorka::TwinParameters& p) {
    const double eq0 = eq_glucose_or_nan(0.0, p);
    if (std::isnan(eq0) || eq0 < g_target) return std::numeric_limits<double>::quiet_NaN();
    double lo = 0.0, hi = 0.01;
    for (int i = 0; i < 40; ++i) {
        const double eq = eq_glucose_or_nan(hi, p);
        if (std::isnan(eq) || eq < g_target) break;
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double eq = eq_glucose_or_nan(mid, p);
        if (!std::isnan(eq) && eq >= g_target) lo = mid;
        else hi = mid;
    }
    return lo;
}

struct PatientLife {
    segments::RawPatientRecord record;
    int twin_id = 0;
    bool ok = false;
    std::string note;
};

PatientLife simulate_patient(const CohortSpec& spec, const population::TwinPopulation& pop,
                             const std::string& patient_id, std::uint64_t sub_seed) {
    Rng rng(sub_seed);
    PatientLife life;
    life.record.patient_id = patient_id;

    const std::size_t pick = static_cast<std::size_t>(rng.below(pop.twins.size()));
    const auto& twin = pop.twins[pick];
    life.twin_id = twin.twin_id;
    const hovorka::TwinParameters& p = twin.params;

    // Pick a fasting target under the twin's zero-insulin glucose ceiling,
    // then solve the basal rate that holds the patient there. Meals (and the
    // hidden rescue carbs) supply all the upside.
    const double eq0 = eq_glucose_or_nan(0.0, p);
    if (std::isnan(eq0) || eq0 < 50.0) {
        life.note = "fasting ceiling below 50 mg/dL";
        return life;
    }
    // Fasting targets follow clinical titration practice (roughly the
    // 90-130 mg/dL range); aiming lower parks much of the cohort against
    // the 40 mg/dL sensor floor once boluses land.
    const double target_hi = std::min(eq0, 140.0);
    const double g_target = target_hi <= 90.0 ? eq0 : rng.uniform(90.0, target_hi);
    double u_basal = solve_basal_for_equilibrium(g_target, p);
    if (std::isnan(u_basal)) {
        life.note = "no feasible basal rate";
        return life;
    }
    double basal_uhr = std::clamp(u_basal * 60.0 * p.BW / 1000.0, spec.basal_lo_uhr,
                                  spec.basal_hi_uhr);
    u_basal = uhr_to_rate(basal_uhr, p.BW);
    hovorka::TwinState x;
    try {
        x = hovorka::equilibrium_state(u_basal, p);
    } catch (const NumericError&) {
        life.note = "no equilibrium at the clamped basal rate";
        return life;
    }

    const int total_min = spec.days * 1440;
    const int n_steps = total_min / static_cast<int>(hovorka::kSampleMinutes);
    // Carb ratio titrated to the patient's insulin need ("500 rule":
    // ratio = 500 / total daily dose, with basal taken as roughly half of
    // it), then perturbed for titration imprecision and clamped to the
    // configured policy range. A ratio drawn independently of sensitivity
    // systematically over-boluses insulin-sensitive patients.
    const double tdd_u = basal_uhr * 24.0 * 2.0;
    const double carb_ratio =
        std::clamp((500.0 / std::max(tdd_u, 1.0)) * rng.uniform(0.85, 1.18),
                   spec.carb_ratio_lo, spec.carb_ratio_hi);

    // Per-slot exogenous inputs assembled up front: scheduled meals with a
    // matching (weak) bolus; rescue carbs are injected reactively below.
    std::vector<double> carbs_gmin(static_cast<std::size_t>(n_steps), 0.0);
    std::vector<double> bolus_u(static_cast<std::size_t>(n_steps), 0.0);
    const int meal_slots =
        static_cast<int>(spec.meal_duration_min / hovorka::kSampleMinutes);
    for (int day = 0; day < spec.days; ++day) {
        // Meal count per day: floor(mean) plus a Bernoulli for the remainder.
        int n_meals = static_cast<int>(std::floor(spec.meals_per_day));
        if (rng.uniform() < spec.meals_per_day - std::floor(spec.meals_per_day)) ++n_meals;
        for (int m = 0; m < n_meals; ++m) {
            // Meal times are drawn uniformly over the whole day. Any regular
            // spacing (fixed centers, or one meal per 1/n-day window) imprints
            // a periodic comb on the CGM autocovariance, and multi-hour
            // forecast horizons alias against it.
            const double when = day * 1440.0 + rng.uniform(0.0, 1435.0);
            const int slot = static_cast<int>(when / hovorka::kSampleMinutes);
            double carbs = rng.gaussian(spec.carbs_mean_g, spec.carbs_sd_g);
            carbs = std::clamp(carbs, 15.0, 150.0);
            for (int k = 0; k < meal_slots && slot + k < n_steps; ++k) {
                carbs_gmin[static_cast<std::size_t>(slot + k)] +=
                    carbs / spec.meal_duration_min;
            }
            if (slot < n_steps) {
                bolus_u[static_cast<std::size_t>(slot)] += carbs / carb_ratio;
            }
        }
    }

    life.record.insulin.push_back({iob::EventKind::BasalRate, 0.0, basal_uhr, 0.0});

    std::vector<double> true_cgm(static_cast<std::size_t>(n_steps) + 1);
    true_cgm[0] = hovorka::cgm_output(x, p);
    double last_rescue = -1e9;
    const int rescue_slots =
        static_cast<int>(kRescueDurationMin / hovorka::kSampleMinutes);
    std::vector<double> rescue_gmin(static_cast<std::size_t>(n_steps), 0.0);

    for (int k = 0; k < n_steps; ++k) {
        const double t = k * hovorka::kSampleMinutes;
        const double g = hovorka::cgm_output(x, p);
        if (spec.rescue_threshold_mgdl > 0.0 && g < spec.rescue_threshold_mgdl &&
            t - last_rescue >= kRescueRefractoryMin) {
            last_rescue = t;
            for (int j = 0; j < rescue_slots && k + j < n_steps; ++j) {
                rescue_gmin[static_cast<std::size_t>(k + j)] +=
                    spec.rescue_carbs_g / kRescueDurationMin;
            }
        }

        hovorka::ControlInput u;
        u.u_I = u_basal + bolus_u[static_cast<std::size_t>(k)] * 1000.0 /
                              (hovorka::kSampleMinutes * p.BW);
        u.u_G = carbs_gmin[static_cast<std::size_t>(k)] +
                rescue_gmin[static_cast<std::size_t>(k)];
        x = hovorka::step(x, p, u);
        const double g_next = hovorka::cgm_output(x, p);
        if (!x.finite() || g_next > 1000.0) {
            life.note = "simulation blow-up at t=" + std::to_string(t);
            return life;
        }
        true_cgm[static_cast<std::size_t>(k) + 1] = g_next;

        if (bolus_u[static_cast<std::size_t>(k)] > 0.0) {
            life.record.insulin.push_back({iob::EventKind::Bolus, t,
                                           bolus_u[static_cast<std::size_t>(k)], 0.0});
        }
    }

    for (int k = 0; k <= n_steps; ++k) {
        if (rng.uniform() < spec.dropout_rate) continue;
        double sample = true_cgm[static_cast<std::size_t>(k)];
        if (spec.cgm_noise_sd > 0.0) sample += rng.gaussian(0.0, spec.cgm_noise_sd);
        sample = std::clamp(sample, segments::kCgmLo, segments::kCgmHi);
        life.record.cgm.push_back({k * hovorka::kSampleMinutes, sample});
    }
    if (life.record.cgm.empty()) {
        life.note = "all CGM samples dropped";
        return life;
    }

    life.ok = true;
    return life;
}

} // namespace

CohortResult generate_cohort(const CohortSpec& spec, const population::TwinPopulation& pop) {
    spec.validate();
    if (pop.twins.empty()) throw DataError("cohort: empty twin population");

    CohortResult result;
    for (int i = 0; i < spec.n_patients; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth-%03d", i + 1);
        const std::string pid = buf;

        PatientLife life;
        bool done = false;
        for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
            const std::uint64_t sub_seed = spec.seed * 0x9E3779B97F4A7C15ULL +
                                           static_cast<std::uint64_t>(i) * 0x100000001B3ULL +
                                           attempt;
            life = simulate_patient(spec, pop, pid, sub_seed);
            if (life.ok) {
                done = true;
                break;
            }
            result.log.push_back(pid + ": resampled (attempt " +
                                 std::to_string(attempt + 1) + "): " + life.note);
        }
        if (!done) {
            throw NumericError("cohort: patient " + pid +
                               " failed to simulate after 32 resamples");
        }
        result.true_twin[pid] = life.twin_id;
        result.records.push_back(std::move(life.record));
    }
    return result;
}

void save_truth(const std::map<std::string, int>& true_twin, const std::string& path) {
    std::ostringstream out;
    out << "# glyforge truth v1\n";
    out << "patient_id\ttwin_id\n";
    for (const auto& [pid, twin] : true_twin) out << pid << '\t' << twin << '\n';
    write_text_file(path, out.str());
}

std::map<std::string, int> load_truth(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "# glyforge truth v1") {
        throw DataError("truth file: unrecognized header in " + path);
    }
    std::getline(in, line);
    std::map<std::string, int> m;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cols = split_line(line, '\t');
        if (cols.size() != 2) throw DataError("truth file: bad row: " + line);
        m[cols[0]] = std::stoi(cols[1]);
    }
    return m;
}

} // namespace glyforge::synth
