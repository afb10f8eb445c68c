#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "glyforge/common.hpp"
#include "glyforge/segments.hpp"

using namespace glyforge;
using namespace glyforge::segments;

namespace {

constexpr int kWindowLen = kHistoryLen + kHorizon; // 85

// A fully observed flat window plus matching raw samples.
struct Fixture {
    GriddedCgm window;
    std::vector<CgmSample> raw;
    double decision_time = 180.0;

    Fixture() {
        window.t0 = 0.0;
        window.values.assign(kWindowLen, 120.0);
        window.observed.assign(kWindowLen, true);
        for (int k = 0; k < kWindowLen; ++k) raw.push_back({5.0 * k, 120.0});
    }

    QcCriterion qc() const { return qc_filter({&window, &raw, decision_time}); }
};

std::string temp_dir(const char* name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::create_directories(p);
    return p.string();
}

} // namespace

TEST_CASE("resampling: nearest sample within 2.5 min, ties to the earlier") {
    std::vector<CgmSample> cgm = {{0.0, 100.0}, {7.51, 110.0}, {12.49, 120.0}, {26.0, 130.0}};
    const GriddedCgm g = resample_to_grid(cgm, 0.0, 30.0);
    REQUIRE(g.values.size() == 7);
    CHECK(g.values[0] == 100.0);
    CHECK(g.values[2] == 110.0); // slot at 10: both samples 2.49 min away, earlier wins
    CHECK(!g.has(1));
    CHECK(g.values[5] == 130.0); // 26 -> slot at 25 (distance 1)
    CHECK(!g.has(6));
    CHECK(g.observed[0]);
    CHECK(!g.observed[6]);
}

TEST_CASE("each sample lands only in its nearest slot") {
    std::vector<CgmSample> cgm = {{12.6, 99.0}};
    const GriddedCgm g = resample_to_grid(cgm, 0.0, 20.0);
    CHECK(!g.has(2));            // 2.6 min from the slot at 10
    CHECK(g.values[3] == 99.0);  // 2.4 min from the slot at 15
    CHECK_THROWS_AS(resample_to_grid(cgm, 0.0, 22.0), DataError);
}

TEST_CASE("interior gaps up to 3 slots are linearly interpolated") {
    GriddedCgm g;
    g.t0 = 0.0;
    g.values = {100.0, NAN, NAN, NAN, 140.0, NAN, 150.0};
    g.observed = {true, false, false, false, true, false, true};
    interpolate_gaps(g);
    CHECK(g.values[1] == doctest::Approx(110.0));
    CHECK(g.values[2] == doctest::Approx(120.0));
    CHECK(g.values[3] == doctest::Approx(130.0));
    CHECK(g.values[5] == doctest::Approx(145.0));
    // interpolated slots are filled but not "observed"
    CHECK(!g.observed[1]);
}

TEST_CASE("gaps longer than 3 slots and boundary gaps stay open") {
    GriddedCgm g;
    g.t0 = 0.0;
    g.values = {NAN, 100.0, NAN, NAN, NAN, NAN, 150.0, NAN};
    g.observed = {false, true, false, false, false, false, true, false};
    interpolate_gaps(g);
    CHECK(!g.has(0)); // leading boundary gap
    CHECK(!g.has(2)); // 4-slot interior gap
    CHECK(!g.has(5));
    CHECK(!g.has(7)); // trailing boundary gap
}

TEST_CASE("qc: clean window passes every criterion") {
    Fixture f;
    CHECK(f.qc() == QcCriterion::None);
}

TEST_CASE("qc: sparse history triggers min_density") {
    Fixture f;
    // leave exactly 17 observed history slots
    for (int k = 17; k < kHistoryLen; ++k) {
        f.window.observed[k] = false;
        f.window.values[k] = NAN;
    }
    CHECK(f.qc() == QcCriterion::MinDensity);
    // 18 observed slots pass this criterion (and fail a later one instead)
    f.window.observed[17] = true;
    f.window.values[17] = 120.0;
    CHECK(f.qc() != QcCriterion::MinDensity);
}

TEST_CASE("qc: implausible history rate of change") {
    Fixture f;
    f.window.values[10] = 120.0;
    f.window.values[11] = 161.0; // 41 mg/dL in 5 min
    CHECK(f.qc() == QcCriterion::RateOfChange);
    f.window.values[11] = 159.0; // 39 is plausible
    CHECK(f.qc() == QcCriterion::None);
}

TEST_CASE("qc: stale sensor at the decision time") {
    Fixture f;
    // drop the raw samples in the 10 minutes before the decision
    f.raw.clear();
    for (int k = 0; k < kWindowLen; ++k) {
        const double t = 5.0 * k;
        if (t <= 180.0 && t > 174.0) continue;
        f.raw.push_back({t, 120.0});
    }
    CHECK(f.qc() == QcCriterion::StaleDecision);
}

TEST_CASE("qc: residual gap after interpolation") {
    Fixture f;
    for (int k = 20; k < 24; ++k) { // 4-slot hole stays open
        f.window.values[k] = NAN;
        f.window.observed[k] = false;
    }
    CHECK(f.qc() == QcCriterion::ResidualGap);

    Fixture fut;
    fut.window.values[kHistoryLen + 10] = NAN;
    fut.window.observed[kHistoryLen + 10] = false;
    CHECK(fut.qc() == QcCriterion::ResidualGap);
}

TEST_CASE("qc: leading history gap is padding, not a residual gap") {
    Fixture f;
    for (int k = 0; k < 10; ++k) {
        f.window.values[k] = NAN;
        f.window.observed[k] = false;
    }
    CHECK(f.qc() == QcCriterion::None);
}

TEST_CASE("qc: future jump, including the decision boundary") {
    Fixture f;
    f.window.values[kHistoryLen + 20] = 175.0; // adjacent future slots differ by 55
    CHECK(f.qc() == QcCriterion::FutureJump);

    Fixture g;
    g.window.values[kHistoryLen] = 165.0; // first future step vs decision step
    CHECK(g.qc() == QcCriterion::FutureJump);
}

TEST_CASE("extraction honours margins, stride, ids and clamping") {
    RawPatientRecord rec;
    rec.patient_id = "p1";
    for (int k = 0; k <= 144; ++k) { // 12 hours of 5-min samples
        // smooth trace that dips below 40 mg/dL: clamped, never rejected
        const double v = 80.0 + 50.0 * std::sin(k * 0.15);
        rec.cgm.push_back({5.0 * k, v});
    }
    ExtractionStats stats;
    const auto segs = extract_segments(rec, 30.0, &stats);
    REQUIRE(!segs.empty());
    // decision times: first at t0+180, last <= t_end-240, stride 30
    CHECK(segs.front().decision_time == 180.0);
    CHECK(segs.back().decision_time <= 720.0 - 240.0);
    for (std::size_t i = 1; i < segs.size(); ++i) {
        CHECK(segs[i].decision_time - segs[i - 1].decision_time == 30.0);
    }
    CHECK(stats.candidates == static_cast<std::int64_t>(segs.size()));
    bool saw_clamped = false;
    for (const auto& s : segs) {
        for (int k = 0; k < kHistoryLen; ++k) {
            if (s.history_mask[k]) CHECK(s.history_cgm[k] >= 40.0);
        }
        if (s.qc_flags & kFlagClampedCgm) saw_clamped = true;
    }
    CHECK(saw_clamped);

    SegmentSet set = extract_all({rec}, 30.0);
    for (std::size_t i = 0; i < set.segments.size(); ++i) {
        CHECK(set.segments[i].id == static_cast<std::int64_t>(i) + 1);
    }
}

TEST_CASE("patient splits: 70/15/15 by count, deterministic in seed") {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back("p" + std::to_string(i));
    const auto a = split_patients(ids, 11);
    const auto b = split_patients(ids, 11);
    int train = 0, val = 0, test = 0;
    for (const auto& [pid, s] : a.by_patient) {
        if (s == Split::Train) ++train;
        else if (s == Split::Validation) ++val;
        else ++test;
        CHECK(b.by_patient.at(pid) == s);
    }
    CHECK(train == 14);
    CHECK(val == 3);
    CHECK(test == 3);

    // duplicated ids are collapsed before splitting
    std::vector<std::string> dup = ids;
    dup.insert(dup.end(), ids.begin(), ids.end());
    CHECK(split_patients(dup, 11).by_patient == a.by_patient);
}

TEST_CASE("log scaling: exact endpoints and round trip") {
    CHECK(scale_cgm(40.0) == -1.0);
    CHECK(scale_cgm(400.0) == 1.0);
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double g = rng.uniform(40.0, 400.0);
        CHECK(std::abs(unscale_cgm(scale_cgm(g)) - g) < 1e-10);
    }
    CHECK_THROWS_AS(scale_cgm(39.9), NumericError);
    CHECK_THROWS_AS(scale_cgm(400.1), NumericError);
}

TEST_CASE("tensor assembly layout") {
    Segment seg;
    seg.hist_first = 2;
    for (int k = 0; k < kHistoryLen; ++k) {
        seg.history_mask[k] = k >= 2;
        seg.history_cgm[k] = k >= 2 ? 100.0 + k : 0.0;
        seg.history_observed[k] = k >= 2;
    }
    for (int i = 0; i < kHorizon; ++i) seg.future_cgm[i] = 150.0 + i;

    Eigen::MatrixXd x_hist = Eigen::MatrixXd::Constant(kHistoryLen, 10, 0.25);
    x_hist.topRows(2).setZero();
    const Eigen::MatrixXd x_fut = Eigen::MatrixXd::Constant(kHorizon, 10, 0.5);
    std::vector<double> iob_hist(kHistoryLen, 0.1), iob_fut(kHorizon, 0.2);

    const TensorTriple t = build_tensors(seg, x_hist, x_fut, iob_hist, iob_fut);
    CHECK(t.encoder.rows() == kHistoryLen);
    CHECK(t.encoder.cols() == 12);
    CHECK(t.encoder.row(0).cwiseAbs().sum() == 0.0); // padded rows all-zero
    CHECK(t.encoder.row(1).cwiseAbs().sum() == 0.0);
    CHECK(t.encoder(2, 0) == doctest::Approx(scale_cgm(102.0)));
    CHECK(t.encoder(2, 1) == 0.1);
    CHECK(t.encoder(2, 5) == 0.25);
    CHECK(t.decoder.rows() == kHorizon);
    CHECK(t.decoder.cols() == 11);
    CHECK(t.decoder(0, 0) == 0.2);
    CHECK(t.decoder(0, 4) == 0.5);
    CHECK(t.target.size() == kHorizon);
    CHECK(t.target(0) == doctest::Approx(scale_cgm(150.0)));

    std::vector<double> bad(kHistoryLen - 1, 0.0);
    CHECK_THROWS_AS(build_tensors(seg, x_hist, x_fut, bad, iob_fut), DataError);
}

TEST_CASE("raw record files round trip") {
    RawPatientRecord a;
    a.patient_id = "alpha";
    a.cgm = {{0.0, 101.5}, {5.0, 103.25}};
    a.insulin = {{iob::EventKind::BasalRate, 0.0, 0.85, 0.0},
                 {iob::EventKind::Bolus, 30.0, 4.5, 0.0},
                 {iob::EventKind::ExtendedBolus, 60.0, 3.0, 45.0}};
    RawPatientRecord b;
    b.patient_id = "beta";
    b.cgm = {{0.0, 250.0}};

    const std::string dir = temp_dir("glyforge_records");
    save_cgm({a, b}, dir + "/cgm.tsv");
    save_insulin({a, b}, dir + "/insulin.tsv");
    const auto back = load_records(dir + "/cgm.tsv", dir + "/insulin.tsv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].patient_id == "alpha");
    CHECK(back[0].cgm.size() == 2);
    CHECK(back[0].cgm[1].mgdl == doctest::Approx(103.25));
    REQUIRE(back[0].insulin.size() == 3);
    CHECK(back[0].insulin[2].kind == iob::EventKind::ExtendedBolus);
    CHECK(back[0].insulin[2].duration == doctest::Approx(45.0));
    CHECK(back[1].insulin.empty());
    std::filesystem::remove_all(dir);
}

TEST_CASE("segment set round trip") {
    RawPatientRecord rec;
    rec.patient_id = "p1";
    for (int k = 0; k <= 144; ++k) rec.cgm.push_back({5.0 * k, 120.0 + 0.2 * k});
    rec.insulin = {{iob::EventKind::BasalRate, 0.0, 0.5, 0.0}};
    SegmentSet set = extract_all({rec}, 60.0);
    REQUIRE(!set.segments.empty());

    const std::string dir = temp_dir("glyforge_segset");
    save_segments(set, dir);
    const SegmentSet back = load_segments(dir);
    REQUIRE(back.segments.size() == set.segments.size());
    for (std::size_t i = 0; i < set.segments.size(); ++i) {
        const auto& x = set.segments[i];
        const auto& y = back.segments[i];
        CHECK(y.id == x.id);
        CHECK(y.patient_id == x.patient_id);
        CHECK(y.decision_time == x.decision_time);
        CHECK(y.hist_first == x.hist_first);
        for (int k = 0; k < kHistoryLen; ++k) {
            CHECK(y.history_cgm[k] == doctest::Approx(x.history_cgm[k]).epsilon(1e-9));
            CHECK(y.history_observed[k] == x.history_observed[k]);
            CHECK(y.history_mask[k] == x.history_mask[k]);
        }
        for (int j = 0; j < kHorizon; ++j) {
            CHECK(y.future_cgm[j] == doctest::Approx(x.future_cgm[j]).epsilon(1e-9));
        }
    }
    CHECK(back.events_for(back.segments[0]).size() == 1);
    std::filesystem::remove_all(dir);
}
