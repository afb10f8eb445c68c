#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "glyforge/baselines.hpp"
#include "glyforge/common.hpp"

using namespace glyforge;
using namespace glyforge::baselines;
using segments::kHistoryLen;
using segments::kHorizon;

namespace {

segments::Segment flat_segment(double g) {
    segments::Segment seg;
    seg.id = 1;
    seg.patient_id = "p";
    seg.decision_time = 1000.0;
    for (int k = 0; k < kHistoryLen; ++k) {
        seg.history_mask[k] = true;
        seg.history_observed[k] = true;
        seg.history_cgm[k] = g;
    }
    for (int i = 0; i < kHorizon; ++i) seg.future_cgm[i] = g;
    return seg;
}

segments::TensorTriple numbered_tensors() {
    // every entry encodes (row, column) so slices are easy to verify
    segments::TensorTriple t;
    t.encoder.resize(kHistoryLen, 12);
    t.decoder.resize(kHorizon, 11);
    t.target.resize(kHorizon);
    for (int r = 0; r < kHistoryLen; ++r) {
        for (int c = 0; c < 12; ++c) t.encoder(r, c) = 100.0 * r + c;
    }
    for (int r = 0; r < kHorizon; ++r) {
        for (int c = 0; c < 11; ++c) t.decoder(r, c) = -(100.0 * r + c);
        t.target(r) = 0.01 * r;
    }
    return t;
}

RecursiveSample toy_sample(Rng& rng, int hist_first = 0) {
    RecursiveSample s;
    s.cgm_scaled.resize(kHistoryLen + kHorizon);
    s.iob.resize(kHistoryLen + kHorizon);
    for (int k = 0; k < s.cgm_scaled.size(); ++k) {
        s.cgm_scaled(k) = k < hist_first ? 0.0 : rng.uniform(-0.5, 0.5);
        s.iob(k) = rng.uniform(-1.0, 1.0);
    }
    s.hist_first = hist_first;
    return s;
}

} // namespace

TEST_CASE("carry-forward repeats the decision-time value") {
    segments::Segment seg = flat_segment(100.0);
    seg.history_cgm[kHistoryLen - 1] = 173.5;
    const Eigen::VectorXd y = naive_forecast(seg);
    REQUIRE(y.size() == kHorizon);
    for (int i = 0; i < kHorizon; ++i) CHECK(y(i) == 173.5);
}

TEST_CASE("twin forecast reads CGM off the rolled-out states") {
    const auto twin = hovorka::nominal_parameters();
    Eigen::MatrixXd x_fut = Eigen::MatrixXd::Zero(kHorizon, hovorka::kStateDim);
    for (int i = 0; i < kHorizon; ++i) x_fut(i, 0) = 0.5 + 0.01 * i; // Q1 ramp
    const Eigen::VectorXd y = twin_forecast(x_fut, twin);
    REQUIRE(y.size() == kHorizon);
    for (int i = 0; i < kHorizon; ++i) {
        CHECK(y(i) == doctest::Approx(18.0 * x_fut(i, 0) / twin.V_G).epsilon(1e-14));
    }
}

TEST_CASE("variant names round trip and widths match the ablation") {
    for (Variant v : {Variant::Full, Variant::MinusOde, Variant::MinusIob}) {
        CHECK(variant_from_name(variant_name(v)) == v);
    }
    CHECK(encoder_width(Variant::Full) == 12);
    CHECK(decoder_width(Variant::Full) == 11);
    CHECK(encoder_width(Variant::MinusOde) == 2);
    CHECK(decoder_width(Variant::MinusOde) == 1);
    CHECK(encoder_width(Variant::MinusIob) == 11);
    CHECK(decoder_width(Variant::MinusIob) == 10);
    CHECK_THROWS_AS(variant_from_name("bogus"), ConfigError);
}

TEST_CASE("variant slicing keeps the right columns") {
    const segments::TensorTriple t = numbered_tensors();

    const neural::Sample full = make_sample(t, Variant::Full);
    CHECK(full.enc == t.encoder);
    CHECK(full.dec == t.decoder);
    CHECK(full.target == t.target);

    // without twin states: encoder keeps [CGM, IOB], decoder keeps [IOB]
    const neural::Sample ode = make_sample(t, Variant::MinusOde);
    REQUIRE(ode.enc.cols() == 2);
    REQUIRE(ode.dec.cols() == 1);
    CHECK(ode.enc(3, 0) == 300.0);
    CHECK(ode.enc(3, 1) == 301.0);
    CHECK(ode.dec(4, 0) == -400.0);

    // without IOB: encoder keeps [CGM, states], decoder keeps [states]
    const neural::Sample iobless = make_sample(t, Variant::MinusIob);
    REQUIRE(iobless.enc.cols() == 11);
    REQUIRE(iobless.dec.cols() == 10);
    CHECK(iobless.enc(3, 0) == 300.0);  // CGM column survives
    CHECK(iobless.enc(3, 1) == 302.0);  // IOB column (301) is gone
    CHECK(iobless.enc(3, 10) == 311.0);
    CHECK(iobless.dec(4, 0) == -401.0); // decoder IOB (-400) is gone
    CHECK(iobless.dec(4, 9) == -410.0);
}

TEST_CASE("recursive loss gradient matches central differences") {
    Rng rng(13);
    const RecursiveParams p = init_recursive(6, rng);
    const RecursiveSample s = toy_sample(rng, 3);

    Eigen::VectorXd analytic;
    recursive_loss(p, s, 1.0, &analytic);
    const Eigen::VectorXd flat0 = p.to_flat();
    REQUIRE(analytic.size() == flat0.size());

    Rng pick(99);
    for (int probe = 0; probe < 50; ++probe) {
        const int idx = static_cast<int>(pick.below(flat0.size()));
        const double h = 1e-5;
        RecursiveParams q = p;
        Eigen::VectorXd f = flat0;
        f(idx) += h;
        q.from_flat(f);
        const double lp = recursive_loss(q, s, 1.0);
        f(idx) -= 2 * h;
        q.from_flat(f);
        const double lm = recursive_loss(q, s, 1.0);
        const double fd = (lp - lm) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic(idx)), 1e-5});
        CHECK(std::abs(fd - analytic(idx)) / denom < 1e-5);
    }
}

TEST_CASE("padded positions carry no gradient") {
    Rng rng(29);
    const RecursiveParams p = init_recursive(5, rng);
    RecursiveSample s = toy_sample(rng, 6);

    Eigen::VectorXd g1;
    const double l1 = recursive_loss(p, s, 1.0, &g1);
    // positions before hist_first are skipped entirely
    s.cgm_scaled.head(6).array() += 0.3;
    s.iob.head(6).array() -= 0.4;
    Eigen::VectorXd g2;
    const double l2 = recursive_loss(p, s, 1.0, &g2);
    CHECK(l1 == l2);
    CHECK((g1 - g2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inference feeds its own predictions back") {
    Rng rng(41);
    const RecursiveParams p = init_recursive(8, rng);
    RecursiveSample s = toy_sample(rng);

    const Eigen::VectorXd base = recursive_forecast(p, s);
    REQUIRE(base.size() == kHorizon);

    // manual rollout: warm up over the history teacher-forced, then replace
    // the model's first rolled-out prediction and watch step 2 move.
    const int d = p.cell.d;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(d), c = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd x(2);
    double next = 0.0;
    for (int k = 0; k < kHistoryLen; ++k) {
        x << s.cgm_scaled(k), s.iob(k);
        neural::lstm_cell(p.cell, x, h, c, h, c);
        next = std::clamp(p.W_out.dot(h) + p.b_out, -1.0, 1.0);
    }
    // step 1 uses the last warm-up prediction
    CHECK(base(0) == doctest::Approx(segments::unscale_cgm(next)).epsilon(1e-12));

    // perturb the fed-back value: step 2 must change even though all real
    // inputs are identical
    Eigen::VectorXd h2 = h, c2 = c;
    x << next + 0.05, s.iob(kHistoryLen);
    neural::lstm_cell(p.cell, x, h2, c2, h2, c2);
    const double perturbed_step2 = p.W_out.dot(h2) + p.b_out;

    x << next, s.iob(kHistoryLen);
    neural::lstm_cell(p.cell, x, h, c, h, c);
    const double true_step2 = std::clamp(p.W_out.dot(h) + p.b_out, -1.0, 1.0);
    CHECK(base(1) == doctest::Approx(segments::unscale_cgm(true_step2)).epsilon(1e-12));
    CHECK(std::abs(perturbed_step2 - true_step2) > 0.0);
}

TEST_CASE("input jitter touches inputs only, never targets") {
    Rng rng(53);
    const RecursiveParams p = init_recursive(6, rng);
    const RecursiveSample s = toy_sample(rng, 2);
    const double base = recursive_loss(p, s, 1.0);

    Eigen::VectorXd jit = Eigen::VectorXd::Zero(s.cgm_scaled.size());
    CHECK(recursive_loss(p, s, 1.0, nullptr, &jit) == base);

    // position 84 is only ever a target; jitter there must be invisible,
    // as must jitter before hist_first
    jit(84) = 5.0;
    jit(0) = 5.0;
    CHECK(recursive_loss(p, s, 1.0, nullptr, &jit) == base);

    jit(10) = 0.05;
    CHECK(recursive_loss(p, s, 1.0, nullptr, &jit) != base);
}

TEST_CASE("recursive training reduces the loss on a learnable series") {
    // AR(1)-style target: next value is 0.8 * current
    Rng rng(17);
    std::vector<RecursiveSample> train_set, val_set;
    for (int n = 0; n < 40; ++n) {
        RecursiveSample s;
        s.cgm_scaled.resize(kHistoryLen + kHorizon);
        s.iob = Eigen::VectorXd::Zero(kHistoryLen + kHorizon);
        double v = rng.uniform(-0.8, 0.8);
        for (int k = 0; k < s.cgm_scaled.size(); ++k) {
            s.cgm_scaled(k) = v;
            v *= 0.8;
        }
        (n < 30 ? train_set : val_set).push_back(std::move(s));
    }
    neural::TrainingConfig cfg;
    cfg.max_epochs = 15;
    cfg.batch = 8;
    cfg.dropout_p = 0.0;
    cfg.patience = 15;
    cfg.seed = 5;
    cfg.parallel = false;

    Rng init_rng(6);
    const RecursiveParams initial = init_recursive(8, init_rng);
    const RecursiveTrainingResult res = train_recursive(initial, train_set, val_set, cfg);
    REQUIRE(!res.log.empty());
    CHECK(!res.aborted_non_finite);
    CHECK(res.log.back().val_loss < res.log.front().val_loss);
}

TEST_CASE("recursive checkpoint round trip") {
    Rng rng(61);
    const RecursiveParams p = init_recursive(12, rng);
    const auto path =
        (std::filesystem::temp_directory_path() / "glyforge_recursive_rt.model").string();
    save_recursive(p, path);
    const RecursiveParams q = load_recursive(path);
    CHECK((p.to_flat() - q.to_flat()).cwiseAbs().maxCoeff() == 0.0);
    std::filesystem::remove(path);
}

TEST_CASE("prediction files round trip") {
    PredictionMap preds;
    Rng rng(8);
    for (std::int64_t id : {3LL, 17LL, 101LL}) {
        Eigen::VectorXd v(kHorizon);
        for (int i = 0; i < kHorizon; ++i) v(i) = rng.uniform(40.0, 400.0);
        preds[id] = v;
    }
    const auto path =
        (std::filesystem::temp_directory_path() / "glyforge_preds_rt.tsv").string();
    save_predictions(preds, path);
    const PredictionMap back = load_predictions(path);
    REQUIRE(back.size() == preds.size());
    for (const auto& [id, v] : preds) {
        REQUIRE(back.count(id) == 1);
        CHECK((back.at(id) - v).cwiseAbs().maxCoeff() == 0.0); // %.17g is lossless
    }
    std::filesystem::remove(path);
}
