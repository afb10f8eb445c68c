#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "glyforge/common.hpp"
#include "glyforge/neural.hpp"

using namespace glyforge;
using namespace glyforge::neural;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::VectorXd random_vec(int n, Rng& rng, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.uniform(-scale, scale);
    return v;
}

Eigen::MatrixXd random_mat(int r, int c, Rng& rng, double scale = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
    }
    return m;
}

/// Scalar-loop oracle for one cell step, written from the gate equations
/// with the [input, forget, cell, output] stacking convention.
void oracle_cell(const LstmCellParams& p, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev,
                 Eigen::VectorXd& h, Eigen::VectorXd& c) {
    const int d = p.d;
    Eigen::VectorXd xh(p.input_dim + d);
    xh << x, h_prev;
    h.resize(d);
    c.resize(d);
    for (int j = 0; j < d; ++j) {
        double zi = p.b(j), zf = p.b(d + j), zg = p.b(2 * d + j), zo = p.b(3 * d + j);
        for (int k = 0; k < xh.size(); ++k) {
            zi += p.W(j, k) * xh(k);
            zf += p.W(d + j, k) * xh(k);
            zg += p.W(2 * d + j, k) * xh(k);
            zo += p.W(3 * d + j, k) * xh(k);
        }
        c(j) = sigmoid(zf) * c_prev(j) + sigmoid(zi) * std::tanh(zg);
        h(j) = sigmoid(zo) * std::tanh(c(j));
    }
}

struct Problem {
    Seq2SeqParams params;
    Eigen::MatrixXd enc_in;
    Eigen::MatrixXd dec_in;
    Eigen::VectorXd target;
};

Problem make_problem(int enc_in_dim, int dec_in_dim, int d, int L, int H,
                     std::uint64_t seed) {
    Rng rng(seed);
    Problem p;
    p.params = init_seq2seq(enc_in_dim, dec_in_dim, d, rng);
    p.enc_in = random_mat(L, enc_in_dim, rng);
    p.dec_in = random_mat(H, dec_in_dim, rng);
    p.target = random_vec(H, rng, 0.5);
    return p;
}

double loss_at(const Seq2SeqParams& shape, const Eigen::VectorXd& flat,
               const Problem& prob) {
    Seq2SeqParams p = shape;
    p.from_flat(flat);
    const Eigen::VectorXd y = forward(p, prob.enc_in, prob.dec_in, nullptr, 0.0);
    return huber_loss(y, prob.target, 1.0);
}

} // namespace

TEST_CASE("cell step matches the scalar gate-equation oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const int in = 3 + static_cast<int>(rng.below(4));
        const int d = 2 + static_cast<int>(rng.below(6));
        const LstmCellParams p = init_lstm(in, d, rng);
        const Eigen::VectorXd x = random_vec(in, rng);
        const Eigen::VectorXd h0 = random_vec(d, rng, 0.5);
        const Eigen::VectorXd c0 = random_vec(d, rng, 0.5);
        Eigen::VectorXd h, c, oh, oc;
        lstm_cell(p, x, h0, c0, h, c);
        oracle_cell(p, x, h0, c0, oh, oc);
        CHECK((h - oh).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((c - oc).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("initialization: forget bias one, uniform fan-in scaling") {
    Rng rng(3);
    const int in = 5, d = 7;
    const LstmCellParams p = init_lstm(in, d, rng);
    REQUIRE(p.W.rows() == 4 * d);
    REQUIRE(p.W.cols() == in + d);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in + d));
    CHECK(p.W.cwiseAbs().maxCoeff() <= bound);
    for (int j = 0; j < d; ++j) {
        CHECK(p.b(d + j) == 1.0);                 // forget block
        CHECK(std::abs(p.b(j)) <= bound);         // others stay small
        CHECK(std::abs(p.b(2 * d + j)) <= bound);
        CHECK(std::abs(p.b(3 * d + j)) <= bound);
    }
}

TEST_CASE("analytic gradient matches central differences") {
    // ten random instances; relative error against h = 1e-5 stencils
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Problem prob = make_problem(4, 3, 8, 5, 6, seed);
        const Eigen::VectorXd flat0 = prob.params.to_flat();

        ForwardCache cache;
        const Eigen::VectorXd y =
            forward(prob.params, prob.enc_in, prob.dec_in, nullptr, 0.0, &cache);
        Eigen::VectorXd dloss;
        huber_loss(y, prob.target, 1.0, &dloss);
        const Eigen::VectorXd analytic =
            backward(prob.params, cache, dloss).to_flat();
        REQUIRE(analytic.size() == flat0.size());

        Rng pick(seed * 101);
        double worst = 0.0;
        for (int probe = 0; probe < 60; ++probe) {
            const int idx = static_cast<int>(pick.below(flat0.size()));
            const double h = 1e-5;
            Eigen::VectorXd plus = flat0, minus = flat0;
            plus(idx) += h;
            minus(idx) -= h;
            const double fd =
                (loss_at(prob.params, plus, prob) - loss_at(prob.params, minus, prob)) /
                (2.0 * h);
            // coordinates below 1e-5 sit at the central-difference noise
            // floor (~1e-13 absolute) and are compared absolutely instead
            const double denom = std::max({std::abs(fd), std::abs(analytic(idx)), 1e-5});
            worst = std::max(worst, std::abs(fd - analytic(idx)) / denom);
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("huber loss: quadratic core, linear tails, correct gradient") {
    Eigen::VectorXd pred(4), target(4);
    pred << 0.0, 0.5, 3.0, -4.0;
    target << 0.0, 0.0, 0.0, 0.0;
    Eigen::VectorXd grad;
    const double loss = huber_loss(pred, target, 1.0, &grad);
    // (0 + 0.125 + (3 - 0.5) + (4 - 0.5)) / 4
    CHECK(loss == doctest::Approx((0.0 + 0.125 + 2.5 + 3.5) / 4.0).epsilon(1e-14));
    CHECK(grad(0) == 0.0);
    CHECK(grad(1) == doctest::Approx(0.5 / 4.0).epsilon(1e-14));
    CHECK(grad(2) == doctest::Approx(1.0 / 4.0).epsilon(1e-14));
    CHECK(grad(3) == doctest::Approx(-1.0 / 4.0).epsilon(1e-14));

    // delta scales the crossover point
    Eigen::VectorXd p2(1), t2(1);
    p2 << 1.5;
    t2 << 0.0;
    CHECK(huber_loss(p2, t2, 2.0) == doctest::Approx(0.5 * 1.5 * 1.5).epsilon(1e-14));
}

TEST_CASE("adam: first step moves every coordinate by ~lr") {
    Eigen::VectorXd params = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd grads(3);
    grads << 0.5, -2.0, 1e-3;
    AdamState st;
    st.init(3);
    adam_step(params, grads, st, 0.01);
    // bias correction makes m_hat = g, v_hat = g^2 => step = lr * sign(g) approx
    CHECK(params(0) == doctest::Approx(-0.01).epsilon(1e-4));
    CHECK(params(1) == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(params(2) < 0.0);
    CHECK(st.t == 1);
}

TEST_CASE("inference is bit-deterministic") {
    const Problem prob = make_problem(12, 11, 16, 37, 48, 9);
    const Eigen::VectorXd a = forward(prob.params, prob.enc_in, prob.dec_in, nullptr, 0.0);
    const Eigen::VectorXd b = forward(prob.params, prob.enc_in, prob.dec_in, nullptr, 0.0);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("no output feedback: step t ignores later decoder inputs") {
    Problem prob = make_problem(4, 3, 8, 5, 6, 21);
    const Eigen::VectorXd base = forward(prob.params, prob.enc_in, prob.dec_in, nullptr, 0.0);
    // perturbing the last decoder input row leaves earlier outputs untouched
    prob.dec_in.row(5).array() += 10.0;
    const Eigen::VectorXd bumped = forward(prob.params, prob.enc_in, prob.dec_in, nullptr, 0.0);
    CHECK((base.head(5) - bumped.head(5)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::abs(base(5) - bumped(5)) > 0.0);
}

TEST_CASE("dropout scales only decoder hiddens and vanishes at inference") {
    const Problem prob = make_problem(4, 3, 8, 5, 6, 33);
    Rng drng(7);
    ForwardCache cache;
    const Eigen::VectorXd with =
        forward(prob.params, prob.enc_in, prob.dec_in, &drng, 0.2, &cache);
    CHECK(cache.dropout_used);
    // mask entries are exactly 0 or 1/(1-p)
    bool saw_zero = false;
    for (int i = 0; i < cache.dropout_scale.rows(); ++i) {
        for (int j = 0; j < cache.dropout_scale.cols(); ++j) {
            const double s = cache.dropout_scale(i, j);
            const bool valid = s == 0.0 || std::abs(s - 1.25) < 1e-12;
            CHECK(valid);
            if (s == 0.0) saw_zero = true;
        }
    }
    CHECK(saw_zero); // 48 coordinates at p = 0.2: zero-free masks are astronomically rare
}

TEST_CASE("checkpoint round trip is exact") {
    Rng rng(55);
    const Seq2SeqParams p = init_seq2seq(12, 11, 10, rng);
    const auto path =
        (std::filesystem::temp_directory_path() / "glyforge_model_rt.model").string();
    save_seq2seq(p, "seq2seq_full", path);
    std::string kind;
    const Seq2SeqParams q = load_seq2seq(path, &kind);
    CHECK(kind == "seq2seq_full");
    CHECK((p.to_flat() - q.to_flat()).cwiseAbs().maxCoeff() == 0.0);
    std::filesystem::remove(path);
}

TEST_CASE("training fits a toy mapping and logs a falling loss") {
    // target: mean of the encoder input's first channel, repeated
    Rng rng(2);
    std::vector<Sample> train_set, val_set;
    for (int n = 0; n < 80; ++n) {
        Sample s;
        s.enc = random_mat(6, 2, rng, 0.8);
        s.dec = random_mat(4, 1, rng, 0.8);
        s.target = Eigen::VectorXd::Constant(4, s.enc.col(0).mean());
        (n < 60 ? train_set : val_set).push_back(std::move(s));
    }
    TrainingConfig cfg;
    cfg.max_epochs = 40;
    cfg.batch = 16;
    cfg.dropout_p = 0.0;
    cfg.patience = 40;
    cfg.seed = 3;
    cfg.parallel = false;

    Rng init_rng(4);
    const Seq2SeqParams initial = init_seq2seq(2, 1, 12, init_rng);
    const TrainingResult res = train(initial, train_set, val_set, cfg);
    REQUIRE(!res.log.empty());
    CHECK(!res.aborted_non_finite);
    CHECK(res.log.back().val_loss < 0.5 * res.log.front().val_loss);

    // the returned checkpoint is the best-validation one
    double best = 1e300;
    for (const auto& r : res.log) best = std::min(best, r.val_loss);
    double chk = 0.0;
    for (const auto& s : val_set) {
        const Eigen::VectorXd y = forward(res.params, s.enc, s.dec, nullptr, 0.0);
        chk += huber_loss(y, s.target, cfg.huber_delta);
    }
    chk /= static_cast<double>(val_set.size());
    CHECK(chk == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("training config validation") {
    TrainingConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    TrainingConfig bad = cfg;
    bad.lr0 = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.batch = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.dropout_p = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.huber_delta = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
