#include "glyforge/segments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <sstream>

#include "glyforge/common.hpp"

namespace glyforge::segments {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr int kWindowLen = kHistoryLen + kHorizon; // 85 slots
const double kLogLo = std::log(kCgmLo);
const double kLogHi = std::log(kCgmHi);
} // namespace

const char* qc_name(QcCriterion c) {
    switch (c) {
        case QcCriterion::None: return "accepted";
        case QcCriterion::MinDensity: return "min_density";
        case QcCriterion::RateOfChange: return "rate_of_change";
        case QcCriterion::StaleDecision: return "stale_decision";
        case QcCriterion::ResidualGap: return "residual_gap";
        case QcCriterion::FutureJump: return "future_jump";
        case QcCriterion::MatchFailure: return "match_failure";
    }
    return "?";
}

const std::vector<iob::InsulinEvent>& SegmentSet::events_for(const Segment& s) const {
    auto it = insulin_by_patient.find(s.patient_id);
    if (it == insulin_by_patient.end()) {
        static const std::vector<iob::InsulinEvent> empty;
        return empty;
    }
    return it->second;
}

GriddedCgm resample_to_grid(const std::vector<CgmSample>& cgm, double t0, double t_end) {
    const double span = t_end - t0;
    const double slots_f = span / kGridMin;
    const int n = static_cast<int>(std::llround(slots_f)) + 1;
    if (std::abs(slots_f - std::round(slots_f)) > 1e-9) {
        throw DataError("resample_to_grid: window is not a multiple of 5 min");
    }

    GriddedCgm g;
    g.t0 = t0;
    g.values.assign(n, kNan);
    g.observed.assign(n, false);

    std::vector<double> best_dist(n, 1e300);
    for (const CgmSample& s : cgm) {
        const int slot = static_cast<int>(std::llround((s.t - t0) / kGridMin));
        if (slot < 0 || slot >= n) continue;
        const double d = std::abs(s.t - g.time_at(slot));
        if (d > 2.5 + 1e-9) continue;
        // ties broken toward the earlier timestamp: strict improvement only,
        // samples are visited in time order
        if (d < best_dist[slot] - 1e-12) {
            best_dist[slot] = d;
            g.values[slot] = s.mgdl;
            g.observed[slot] = true;
        }
    }
    return g;
}

void interpolate_gaps(GriddedCgm& g) {
    const int n = static_cast<int>(g.values.size());
    int i = 0;
    while (i < n) {
        if (g.has(i)) { ++i; continue; }
        int j = i;
        while (j < n && !g.has(j)) ++j;
        const int len = j - i;
        const bool interior = (i > 0) && (j < n);
        if (interior && len <= 3) {
            const double left = g.values[i - 1];
            const double right = g.values[j];
            for (int k = 0; k < len; ++k) {
                g.values[i + k] = left + (right - left) * (k + 1) / (len + 1);
            }
        }
        i = j;
    }
}

QcCriterion qc_filter(const QcCandidate& c) {
    const GriddedCgm& w = *c.window;
    if (static_cast<int>(w.values.size()) != kWindowLen) {
        throw DataError("qc_filter: window must span 37 + 48 slots");
    }

    // 1. minimum history density
    int observed = 0;
    for (int k = 0; k < kHistoryLen; ++k) observed += w.observed[k] ? 1 : 0;
    if (observed < 18) return QcCriterion::MinDensity;

    // 2. history rate of change between adjacent observations
    for (int k = 1; k < kHistoryLen; ++k) {
        if (w.observed[k - 1] && w.observed[k] &&
            std::abs(w.values[k] - w.values[k - 1]) > 40.0) {
            return QcCriterion::RateOfChange;
        }
    }

    // 3. stale sensor at decision time, measured on the raw series
    double closest = 1e300;
    for (const CgmSample& s : *c.raw_cgm) {
        if (s.t <= c.decision_time + 1e-9) {
            closest = std::min(closest, std::abs(c.decision_time - s.t));
        }
    }
    if (closest > 5.0 + 1e-9) return QcCriterion::StaleDecision;

    // 4. residual gaps after interpolation: anywhere from the first filled
    //    history slot through the decision step, and anywhere in the future
    int first = 0;
    while (first < kHistoryLen && !w.has(first)) ++first;
    for (int k = first; k < kHistoryLen; ++k) {
        if (!w.has(k)) return QcCriterion::ResidualGap;
    }
    for (int k = kHistoryLen; k < kWindowLen; ++k) {
        if (!w.has(k)) return QcCriterion::ResidualGap;
    }

    // 5. future jump between adjacent observations (decision boundary included)
    for (int k = kHistoryLen; k < kWindowLen; ++k) {
        if (w.observed[k - 1] && w.observed[k] &&
            std::abs(w.values[k] - w.values[k - 1]) > 40.0) {
            return QcCriterion::FutureJump;
        }
    }

    return QcCriterion::None;
}

std::vector<Segment> extract_segments(const RawPatientRecord& record,
                                      double stride_min, ExtractionStats* stats) {
    std::vector<Segment> out;
    if (record.cgm.empty()) return out;

    const double t_first = record.cgm.front().t;
    const double t_last = record.cgm.back().t;

    for (double t = t_first + kGridMin * (kHistoryLen - 1);
         t <= t_last - kGridMin * kHorizon + 1e-9; t += stride_min) {
        if (stats) ++stats->candidates;

        GriddedCgm w = resample_to_grid(record.cgm, t - kGridMin * (kHistoryLen - 1),
                                        t + kGridMin * kHorizon);
        bool clamped = false;
        for (double& v : w.values) {
            if (std::isnan(v)) continue;
            if (v < kCgmLo) { v = kCgmLo; clamped = true; }
            if (v > kCgmHi) { v = kCgmHi; clamped = true; }
        }
        interpolate_gaps(w);

        QcCandidate cand{&w, &record.cgm, t};
        const QcCriterion qc = qc_filter(cand);
        if (qc != QcCriterion::None) {
            if (stats) ++stats->rejected_by[static_cast<int>(qc)];
            continue;
        }

        Segment s;
        s.patient_id = record.patient_id;
        s.decision_time = t;
        int first = 0;
        while (first < kHistoryLen && !w.has(first)) ++first;
        s.hist_first = first;
        for (int k = 0; k < kHistoryLen; ++k) {
            s.history_mask[k] = k >= first;
            s.history_observed[k] = w.observed[k];
            s.history_cgm[k] = s.history_mask[k] ? w.values[k] : 0.0;
        }
        for (int i = 0; i < kHorizon; ++i) s.future_cgm[i] = w.values[kHistoryLen + i];
        if (clamped) s.qc_flags |= kFlagClampedCgm;
        if (first > 0) s.qc_flags |= kFlagPaddedHistory;
        out.push_back(std::move(s));
        if (stats) ++stats->accepted;
    }
    return out;
}

SegmentSet extract_all(const std::vector<RawPatientRecord>& records,
                       double stride_min, ExtractionStats* stats) {
    SegmentSet set;
    std::int64_t next_id = 1;
    for (const RawPatientRecord& r : records) {
        std::vector<Segment> segs = extract_segments(r, stride_min, stats);
        for (Segment& s : segs) {
            s.id = next_id++;
            set.segments.push_back(std::move(s));
        }
        set.insulin_by_patient[r.patient_id] = r.insulin;
    }
    return set;
}

SplitAssignment split_patients(std::vector<std::string> patient_ids, std::uint64_t seed) {
    std::sort(patient_ids.begin(), patient_ids.end());
    patient_ids.erase(std::unique(patient_ids.begin(), patient_ids.end()),
                      patient_ids.end());
    Rng rng(seed);
    rng.shuffle(patient_ids);

    const std::size_t n = patient_ids.size();
    const std::size_t n_train = static_cast<std::size_t>(0.70 * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(0.15 * static_cast<double>(n));

    SplitAssignment a;
    a.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        Split s = Split::Test;
        if (i < n_train) s = Split::Train;
        else if (i < n_train + n_val) s = Split::Validation;
        a.by_patient[patient_ids[i]] = s;
    }
    return a;
}

double scale_cgm(double mgdl) {
    if (!(mgdl >= kCgmLo && mgdl <= kCgmHi)) {
        throw NumericError("scale_cgm: value outside [40, 400]");
    }
    return 2.0 * (std::log(mgdl) - kLogLo) / (kLogHi - kLogLo) - 1.0;
}

double unscale_cgm(double scaled) {
    return std::exp((scaled + 1.0) / 2.0 * (kLogHi - kLogLo) + kLogLo);
}

TensorTriple build_tensors(const Segment& seg, const Eigen::MatrixXd& x_hist,
                           const Eigen::MatrixXd& x_fut,
                           const std::vector<double>& iob_hist,
                           const std::vector<double>& iob_fut) {
    if (x_hist.rows() != kHistoryLen || x_hist.cols() != 10 ||
        x_fut.rows() != kHorizon || x_fut.cols() != 10 ||
        static_cast<int>(iob_hist.size()) != kHistoryLen ||
        static_cast<int>(iob_fut.size()) != kHorizon) {
        throw DataError("build_tensors: shape mismatch");
    }

    TensorTriple t;
    t.encoder = EncoderTensor::Zero(kHistoryLen, 12);
    for (int k = 0; k < kHistoryLen; ++k) {
        if (!seg.history_mask[k]) continue; // padded rows stay all-zero
        t.encoder(k, 0) = scale_cgm(seg.history_cgm[k]);
        t.encoder(k, 1) = iob_hist[k];
        t.encoder.row(k).segment(2, 10) = x_hist.row(k);
    }
    t.decoder = DecoderTensor::Zero(kHorizon, 11);
    for (int i = 0; i < kHorizon; ++i) {
        t.decoder(i, 0) = iob_fut[i];
        t.decoder.row(i).segment(1, 10) = x_fut.row(i);
    }
    t.target.resize(kHorizon);
    for (int i = 0; i < kHorizon; ++i) t.target[i] = scale_cgm(seg.future_cgm[i]);
    return t;
}

// --- file formats ------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

const char* kind_name(iob::EventKind k) {
    switch (k) {
        case iob::EventKind::BasalRate: return "basal_rate";
        case iob::EventKind::Bolus: return "bolus";
        case iob::EventKind::ExtendedBolus: return "extended_bolus";
    }
    return "?";
}

iob::EventKind kind_from(const std::string& s, const std::string& where) {
    if (s == "basal_rate") return iob::EventKind::BasalRate;
    if (s == "bolus") return iob::EventKind::Bolus;
    if (s == "extended_bolus") return iob::EventKind::ExtendedBolus;
    throw DataError(where + ": unknown insulin event kind \"" + s + "\"");
}

} // namespace

void save_cgm(const std::vector<RawPatientRecord>& records, const std::string& path) {
    std::ostringstream out;
    out << "# glyforge cgm v1\npatient_id\ttimestamp_min\tmgdl\n";
    for (const auto& r : records) {
        for (const CgmSample& s : r.cgm) {
            out << r.patient_id << '\t' << fmt(s.t) << '\t' << fmt(s.mgdl) << '\n';
        }
    }
    write_text_file(path, out.str());
}

void save_insulin(const std::vector<RawPatientRecord>& records, const std::string& path) {
    std::ostringstream out;
    out << "# glyforge insulin v1\npatient_id\tkind\ttimestamp_min\tdose_or_rate\tduration_min\n";
    for (const auto& r : records) {
        for (const iob::InsulinEvent& e : r.insulin) {
            out << r.patient_id << '\t' << kind_name(e.kind) << '\t' << fmt(e.t) << '\t'
                << fmt(e.dose_or_rate) << '\t' << fmt(e.duration) << '\n';
        }
    }
    write_text_file(path, out.str());
}

std::vector<RawPatientRecord> load_records(const std::string& cgm_path,
                                           const std::string& insulin_path) {
    std::map<std::string, RawPatientRecord> by_id;

    {
        std::istringstream in(read_text_file(cgm_path));
        std::string line;
        int lineno = 0;
        std::getline(in, line);
        ++lineno;
        if (line.rfind("# glyforge cgm v1", 0) != 0) {
            throw DataError(cgm_path + ":1: unsupported CGM header");
        }
        std::getline(in, line); // column header
        ++lineno;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto f = split_line(line, '\t');
            if (f.size() != 3) {
                throw DataError(cgm_path + ":" + std::to_string(lineno) + ": bad CGM row");
            }
            auto& rec = by_id[f[0]];
            rec.patient_id = f[0];
            rec.cgm.push_back({std::atof(f[1].c_str()), std::atof(f[2].c_str())});
        }
    }
    {
        std::istringstream in(read_text_file(insulin_path));
        std::string line;
        int lineno = 0;
        std::getline(in, line);
        ++lineno;
        if (line.rfind("# glyforge insulin v1", 0) != 0) {
            throw DataError(insulin_path + ":1: unsupported insulin header");
        }
        std::getline(in, line);
        ++lineno;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto f = split_line(line, '\t');
            if (f.size() != 5) {
                throw DataError(insulin_path + ":" + std::to_string(lineno) +
                                ": bad insulin row");
            }
            auto& rec = by_id[f[0]];
            rec.patient_id = f[0];
            iob::InsulinEvent e;
            e.kind = kind_from(f[1], insulin_path + ":" + std::to_string(lineno));
            e.t = std::atof(f[2].c_str());
            e.dose_or_rate = std::atof(f[3].c_str());
            e.duration = std::atof(f[4].c_str());
            rec.insulin.push_back(e);
        }
    }

    std::vector<RawPatientRecord> out;
    out.reserve(by_id.size());
    for (auto& [id, rec] : by_id) out.push_back(std::move(rec));
    return out;
}

void save_segments(const SegmentSet& set, const std::string& dir) {
    std::filesystem::create_directories(dir);

    std::ostringstream out;
    out << "# glyforge segments v1\n"
        << "id\tpatient_id\tdecision_time\thist_first\tqc_flags\thistory\tobserved\tfuture\n";
    for (const Segment& s : set.segments) {
        out << s.id << '\t' << s.patient_id << '\t' << fmt(s.decision_time) << '\t'
            << s.hist_first << '\t' << s.qc_flags << '\t';
        for (int k = 0; k < kHistoryLen; ++k) out << (k ? "," : "") << fmt(s.history_cgm[k]);
        out << '\t';
        for (int k = 0; k < kHistoryLen; ++k) out << (s.history_observed[k] ? '1' : '0');
        out << '\t';
        for (int i = 0; i < kHorizon; ++i) out << (i ? "," : "") << fmt(s.future_cgm[i]);
        out << '\n';
    }
    write_text_file(dir + "/segments.tsv", out.str());

    std::vector<RawPatientRecord> recs;
    for (const auto& [id, events] : set.insulin_by_patient) {
        RawPatientRecord r;
        r.patient_id = id;
        r.insulin = events;
        recs.push_back(std::move(r));
    }
    save_insulin(recs, dir + "/insulin.tsv");
}

SegmentSet load_segments(const std::string& dir) {
    SegmentSet set;
    const std::string path = dir + "/segments.tsv";
    std::istringstream in(read_text_file(path));
    std::string line;
    int lineno = 0;
    std::getline(in, line);
    ++lineno;
    if (line.rfind("# glyforge segments v1", 0) != 0) {
        throw DataError(path + ":1: unsupported segments header");
    }
    std::getline(in, line);
    ++lineno;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_line(line, '\t');
        if (f.size() != 8) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad segment row");
        }
        Segment s;
        s.id = std::atoll(f[0].c_str());
        s.patient_id = f[1];
        s.decision_time = std::atof(f[2].c_str());
        s.hist_first = std::atoi(f[3].c_str());
        s.qc_flags = static_cast<unsigned>(std::atoi(f[4].c_str()));
        const auto hist = split_line(f[5], ',');
        const auto fut = split_line(f[7], ',');
        if (static_cast<int>(hist.size()) != kHistoryLen ||
            static_cast<int>(f[6].size()) != kHistoryLen ||
            static_cast<int>(fut.size()) != kHorizon) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad segment shape");
        }
        for (int k = 0; k < kHistoryLen; ++k) {
            s.history_cgm[k] = std::atof(hist[k].c_str());
            s.history_observed[k] = f[6][k] == '1';
            s.history_mask[k] = k >= s.hist_first;
        }
        for (int i = 0; i < kHorizon; ++i) s.future_cgm[i] = std::atof(fut[i].c_str());
        set.segments.push_back(std::move(s));
    }

    const std::string ins_path = dir + "/insulin.tsv";
    if (std::filesystem::exists(ins_path)) {
        // reuse the record loader for the event side only
        std::filesystem::path tmp_cgm = std::filesystem::path(dir) / ".empty_cgm.tsv";
        write_text_file(tmp_cgm.string(), "# glyforge cgm v1\npatient_id\ttimestamp_min\tmgdl\n");
        for (auto& rec : load_records(tmp_cgm.string(), ins_path)) {
            set.insulin_by_patient[rec.patient_id] = std::move(rec.insulin);
        }
        std::filesystem::remove(tmp_cgm);
    }
    return set;
}

} // namespace glyforge::segments
