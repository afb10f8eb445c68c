#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glyforge/iob.hpp"

namespace glyforge::segments {

inline constexpr int kHistoryLen = 37; // 36 history steps + decision step
inline constexpr int kHorizon = 48;    // 4 h of 5-min steps
inline constexpr double kGridMin = 5.0;
inline constexpr double kCgmLo = 40.0;
inline constexpr double kCgmHi = 400.0;

struct CgmSample {
    double t = 0.0;    // min
    double mgdl = 0.0;
};

struct RawPatientRecord {
    std::string patient_id;
    std::vector<CgmSample> cgm; // strictly increasing timestamps
    std::vector<iob::InsulinEvent> insulin;
};

/// 5-minute gridded CGM; unobserved slots hold NaN.
struct GriddedCgm {
    double t0 = 0.0;
    std::vector<double> values;
    std::vector<bool> observed; // true where a real sample landed (not interpolated)

    double time_at(int i) const { return t0 + kGridMin * i; }
    bool has(int i) const { return !std::isnan(values[i]); }
};

enum class QcCriterion {
    None = 0,        // accepted
    MinDensity = 1,  // fewer than 18 CGM points in the history
    RateOfChange = 2,
    StaleDecision = 3,
    ResidualGap = 4,
    FutureJump = 5,
    MatchFailure = 6,
};

const char* qc_name(QcCriterion c);

// qc_flags bits (diagnostics, not rejection)
inline constexpr unsigned kFlagClampedCgm = 1u;
inline constexpr unsigned kFlagPaddedHistory = 2u;

struct Segment {
    std::int64_t id = 0;
    std::string patient_id;
    double decision_time = 0.0; // min
    int hist_first = 0;         // first valid history row; rows before are zero-padded
    std::array<double, kHistoryLen> history_cgm{};  // mg/dL, 0 in padded rows
    std::array<bool, kHistoryLen> history_mask{};   // true on valid rows
    std::array<bool, kHistoryLen> history_observed{}; // true where not interpolated
    std::array<double, kHorizon> future_cgm{};      // mg/dL
    unsigned qc_flags = 0;

    double history_time(int k) const {
        return decision_time - kGridMin * (kHistoryLen - 1 - k);
    }
    double future_time(int i) const { return decision_time + kGridMin * (i + 1); }
    double g_t() const { return history_cgm[kHistoryLen - 1]; }
};

/// Extracted segments plus the per-patient insulin logs they reference.
struct SegmentSet {
    std::vector<Segment> segments;
    std::map<std::string, std::vector<iob::InsulinEvent>> insulin_by_patient;

    const std::vector<iob::InsulinEvent>& events_for(const Segment& s) const;
};

struct ExtractionStats {
    std::int64_t candidates = 0;
    std::int64_t accepted = 0;
    std::array<std::int64_t, 7> rejected_by{}; // indexed by QcCriterion
};

/// Nearest observation within +-2.5 min per slot, ties toward the earlier
/// timestamp. Slots run from t0 to t_end inclusive.
GriddedCgm resample_to_grid(const std::vector<CgmSample>& cgm, double t0, double t_end);

/// Fill interior gaps of <= 3 slots linearly; longer and boundary gaps stay.
void interpolate_gaps(GriddedCgm& g);

struct QcCandidate {
    const GriddedCgm* window = nullptr; // 85 slots: 37 history + 48 future
    const std::vector<CgmSample>* raw_cgm = nullptr;
    double decision_time = 0.0;
};

/// First triggered criterion in list order, or None when accepted.
/// (Criterion 6, twin-matching failure, is checked by the matching stage.)
QcCriterion qc_filter(const QcCandidate& c);

std::vector<Segment> extract_segments(const RawPatientRecord& record,
                                      double stride_min,
                                      ExtractionStats* stats = nullptr);

SegmentSet extract_all(const std::vector<RawPatientRecord>& records,
                       double stride_min, ExtractionStats* stats = nullptr);

enum class Split { Train, Validation, Test };

struct SplitAssignment {
    std::map<std::string, Split> by_patient;
    std::uint64_t seed = 0;
};

/// Deterministic shuffle then a 70/15/15 cut by patient count
/// (floor(0.70 n) train, floor(0.15 n) validation, remainder test).
SplitAssignment split_patients(std::vector<std::string> patient_ids, std::uint64_t seed);

double scale_cgm(double mgdl);    // log-scale [40, 400] onto [-1, 1]
double unscale_cgm(double scaled);

using EncoderTensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>; // L x 12
using DecoderTensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>; // H x 11

struct TensorTriple {
    EncoderTensor encoder;                // 37 x 12: [scaled CGM, scaled IOB, 10 states]
    DecoderTensor decoder;                // 48 x 11: [scaled future IOB, 10 states]
    Eigen::VectorXd target;               // 48 scaled future CGM values
};

/// Assemble model inputs from a segment, the matched-state trajectories and
/// the normalized IOB series. Padded history rows are all-zero.
TensorTriple build_tensors(const Segment& seg,
                           const Eigen::MatrixXd& x_hist, // 37 x 10, zero-padded head
                           const Eigen::MatrixXd& x_fut,  // 48 x 10
                           const std::vector<double>& iob_hist, // 37 normalized
                           const std::vector<double>& iob_fut); // 48 normalized

// --- file formats -----------------------------------------------------------

void save_cgm(const std::vector<RawPatientRecord>& records, const std::string& path);
void save_insulin(const std::vector<RawPatientRecord>& records, const std::string& path);
std::vector<RawPatientRecord> load_records(const std::string& cgm_path,
                                           const std::string& insulin_path);

void save_segments(const SegmentSet& set, const std::string& dir);
SegmentSet load_segments(const std::string& dir);

} // namespace glyforge::segments
