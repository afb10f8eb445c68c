#pragma once

#include <string>
#include <vector>

namespace glyforge::iob {

inline constexpr double kIobCapUnits = 4.53;       // fixed reference range [0, 4.53] U
inline constexpr double kCirculationLagMin = 60.0; // insulin younger than this is excluded

enum class EventKind { BasalRate, Bolus, ExtendedBolus };

struct InsulinEvent {
    EventKind kind = EventKind::Bolus;
    double t = 0.0;            // min
    double dose_or_rate = 0.0; // U for bolus kinds, U/hr for basal
    double duration = 0.0;     // min, extended_bolus only
};

struct MicroDose {
    double t = 0.0;      // min
    double amount = 0.0; // U
};

/// Expand events into 5-minute micro-doses over [t_start, t_end).
/// Basal at r U/hr produces r/12 U per slot (rate 0 produces nothing),
/// extended boluses are spread uniformly over floor(duration/5) slots, and
/// manual boluses stay single instantaneous doses. Basal slots align to the
/// 5-minute grid anchored at t_start; overlapping basal records resolve
/// last-write-wins from each record's own start time.
std::vector<MicroDose> decompose_events(std::vector<InsulinEvent> events,
                                        double t_start, double t_end);

/// Three-phase absorption curve: linear ramp to 30 min, unit plateau to
/// 90 min, exponential tail beyond. Zero for non-positive delta.
double activity(double delta_min);

/// Insulin still active at t; doses within the past 60 min contribute zero.
double iob_at(double t, const std::vector<MicroDose>& doses);

/// Map raw IOB into [-1, 1] against the fixed [0, 4.53] U reference range.
double normalize_iob(double iob_units);

/// Normalized IOB on a time grid. Only events stamped at or before
/// decision_time contribute; the last active basal rate at decision_time is
/// extended through any later grid points (no future boluses are assumed).
std::vector<double> iob_series(const std::vector<InsulinEvent>& events,
                               const std::vector<double>& grid,
                               double decision_time);

/// Piecewise basal rate (U/hr) in effect at time t: the most recent basal
/// record at or before t, zero if none.
double basal_rate_at(const std::vector<InsulinEvent>& events, double t);

} // namespace glyforge::iob
