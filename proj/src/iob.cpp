#include "glyforge/iob.hpp"

#include <algorithm>
#include <cmath>

#include "glyforge/common.hpp"

namespace glyforge::iob {

namespace {
// Beyond this age the summed activity tail is < 1e-11 of a basal slot;
// older doses are ignored.
constexpr double kLookbackMin = 2400.0;
} // namespace

std::vector<MicroDose> decompose_events(std::vector<InsulinEvent> events,
                                        double t_start, double t_end) {
    std::stable_sort(events.begin(), events.end(),
                     [](const InsulinEvent& a, const InsulinEvent& b) { return a.t < b.t; });

    std::vector<MicroDose> doses;

    // Basal: piecewise-constant rate, last record wins from its start time.
    std::vector<const InsulinEvent*> basal;
    for (const InsulinEvent& e : events) {
        if (e.kind == EventKind::BasalRate) basal.push_back(&e);
    }
    for (double slot = t_start; slot < t_end - 1e-9; slot += 5.0) {
        double rate = 0.0;
        for (const InsulinEvent* b : basal) {
            if (b->t <= slot + 1e-9) rate = b->dose_or_rate;
            else break;
        }
        if (rate > 0.0) doses.push_back({slot, rate / 12.0});
    }

    for (const InsulinEvent& e : events) {
        if (e.kind == EventKind::Bolus) {
            if (e.dose_or_rate < 0.0) throw DataError("decompose_events: negative bolus dose");
            if (e.dose_or_rate > 0.0 && e.t >= t_start && e.t < t_end) {
                doses.push_back({e.t, e.dose_or_rate});
            }
        } else if (e.kind == EventKind::ExtendedBolus) {
            if (e.duration <= 5.0) {
                throw DataError("decompose_events: extended bolus duration must exceed 5 min");
            }
            const int n = static_cast<int>(std::floor(e.duration / 5.0));
            const double amount = e.dose_or_rate / n;
            for (int k = 0; k < n; ++k) {
                const double t = e.t + 5.0 * k;
                if (amount > 0.0 && t >= t_start && t < t_end) doses.push_back({t, amount});
            }
        }
    }

    std::stable_sort(doses.begin(), doses.end(),
                     [](const MicroDose& a, const MicroDose& b) { return a.t < b.t; });
    return doses;
}

double activity(double delta_min) {
    if (delta_min <= 0.0) return 0.0;
    if (delta_min <= 30.0) return delta_min / 30.0;
    if (delta_min <= 90.0) return 1.0;
    return std::exp(-0.012 * (delta_min - 90.0));
}

double iob_at(double t, const std::vector<MicroDose>& doses) {
    const double t_ref = t - kCirculationLagMin;
    double total = 0.0;
    for (const MicroDose& d : doses) {
        if (d.t > t_ref) break; // sorted; later doses have not circulated yet
        total += d.amount * activity(t_ref - d.t);
    }
    return total;
}

double normalize_iob(double iob_units) {
    if (iob_units < 0.0) throw NumericError("normalize_iob: negative IOB");
    return 2.0 * std::min(iob_units, kIobCapUnits) / kIobCapUnits - 1.0;
}

std::vector<double> iob_series(const std::vector<InsulinEvent>& events,
                               const std::vector<double>& grid,
                               double decision_time) {
    if (grid.empty()) return {};

    // Future insulin is unknown at decision time: drop later events and let
    // the last active basal rate run on through the remaining grid.
    std::vector<InsulinEvent> known;
    known.reserve(events.size());
    for (const InsulinEvent& e : events) {
        if (e.t <= decision_time + 1e-9) known.push_back(e);
    }

    const std::vector<MicroDose> doses =
        decompose_events(std::move(known), grid.front() - kLookbackMin, grid.back() + 1e-9);

    std::vector<double> out;
    out.reserve(grid.size());
    for (double t : grid) out.push_back(normalize_iob(iob_at(t, doses)));
    return out;
}

double basal_rate_at(const std::vector<InsulinEvent>& events, double t) {
    double rate = 0.0;
    double best_t = -1e300;
    for (const InsulinEvent& e : events) {
        if (e.kind == EventKind::BasalRate && e.t <= t + 1e-9 && e.t >= best_t) {
            best_t = e.t;
            rate = e.dose_or_rate;
        }
    }
    return rate;
}

} // namespace glyforge::iob
